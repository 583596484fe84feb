use dae_sdc::analysis::{iteration_matrix_linear, stiff_limit_matrix, Formulation};
use dae_sdc::linalg::{eigenvalues, DenseMatrix};
use dae_sdc::prelude::*;
use dae_sdc::sdc::{sweep, SweepContext, SweepState};
use dae_sdc::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Monic characteristic polynomial coefficients, highest power first,
/// by Faddeev-LeVerrier.
fn char_poly(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![1.0];
    let mut m = DenseMatrix::zeros(n, n);
    for k in 1..=n {
        let prev = *coeffs.last().unwrap();
        m = a.matmul(&m).add(&DenseMatrix::identity(n).scaled(prev));
        let am = a.matmul(&m);
        let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
        coeffs.push(-trace / k as f64);
    }
    coeffs
}

fn horner(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// All roots of a monic polynomial by Durand-Kerner.
fn durand_kerner(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = horner(coeffs, roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

fn node_major(state: &SweepState) -> Vec<f64> {
    let mut u = Vec::new();
    for m in 0..state.num_nodes() {
        u.extend_from_slice(&state.y[m]);
        u.extend_from_slice(&state.z[m]);
    }
    u
}

fn random_state<P: SemiExplicitDae>(problem: &P, scheme: &CollocationScheme, rng: &mut ChaCha8Rng) -> SweepState {
    let m = scheme.num_nodes();
    let y: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..problem.n_diff()).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let z: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..problem.n_alg()).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let f = (0..m)
        .map(|i| problem.eval_f(&y[i], &z[i], scheme.nodes()[i]))
        .collect();
    SweepState {
        variant: SweepVariant::Constrained,
        k: 1,
        y,
        z,
        derivatives: Vec::new(),
        f,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalues_match_characteristic_polynomial_roots(
        n in 1usize..=4,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let a = DenseMatrix::from_fn(n, n, |i, j| entries[i * 4 + j]);
        let spec = eigenvalues(&a).unwrap();
        let mut oracle = durand_kerner(&char_poly(&a));
        prop_assert_eq!(spec.eigenvalues.len(), n);
        for lam in &spec.eigenvalues {
            let (idx, dist) = oracle
                .iter()
                .enumerate()
                .map(|(i, r)| (i, (r - lam).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            // close eigenvalue pairs are only determined to sqrt(eps)
            prop_assert!(dist <= 1e-6, "{lam} has no partner in {oracle:?}");
            oracle.remove(idx);
        }
        let rho = spec.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
        prop_assert_eq!(spec.spectral_radius, rho);
    }

    #[test]
    fn spectrum_is_invariant_under_node_relabelling(
        m in 2usize..=5,
        dt in 1e-3f64..1.0,
        kind_idx in 0usize..6,
        perm_seed in any::<u64>(),
    ) {
        let kind = QDeltaKind::ALL[kind_idx];
        let scheme = CollocationScheme::radau_right(m, 0.0, dt).unwrap();
        let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
        let k = iteration_matrix_linear(&LinearDae::new(), &scheme, &qd, Formulation::Constrained).unwrap();
        let size = k.matrix.rows();
        let mut perm: Vec<usize> = (0..size).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..size).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let permuted = DenseMatrix::from_fn(size, size, |i, j| k.matrix[(perm[i], perm[j])]);
        let spec = eigenvalues(&permuted).unwrap();
        let scale = 1e-10 * (1.0 + k.spectral_radius());
        prop_assert!((spec.spectral_radius - k.spectral_radius()).abs() <= scale);
        for lam in &spec.eigenvalues {
            let dist = k.spectrum.eigenvalues.iter().map(|r| (r - lam).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(dist <= 1e-7 * (1.0 + k.spectral_radius()));
        }
    }

    #[test]
    fn iteration_matrix_reproduces_one_constrained_sweep(
        m in 1usize..=5,
        dt in 1e-2f64..1.0,
        kind_idx in 0usize..6,
        seed in any::<u64>(),
    ) {
        let kind = QDeltaKind::ALL[kind_idx];
        let problem = LinearDae::new();
        let scheme = CollocationScheme::radau_right(m, 0.0, dt).unwrap();
        let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
        let report = iteration_matrix_linear(&problem, &scheme, &qd, Formulation::Constrained).unwrap();
        let ctx = SweepContext::new(&problem, &scheme, &qd);
        let (y0, z0) = problem.initial_values();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_state(&problem, &scheme, &mut rng);
        let (next, _) = sweep(&ctx, &state, &y0, &z0).unwrap();
        let predicted = report.apply(&node_major(&state));
        let actual = node_major(&next);
        for (p, a) in predicted.iter().zip(&actual) {
            prop_assert!((p - a).abs() <= 1e-12 * (1.0 + a.abs()), "{p} vs {a}");
        }
    }
}

#[test]
fn algebraic_scalar_mass_matrix_form_is_the_stiff_limit() {
    let problem = StiffScalar::new(0.0).unwrap();
    for m in 1..=6 {
        for kind in [
            QDeltaKind::ImplicitEuler,
            QDeltaKind::Lu,
            QDeltaKind::MinSrS,
            QDeltaKind::MinSrNs,
        ] {
            let scheme = CollocationScheme::radau_right(m, 0.0, 0.1).unwrap();
            let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
            let k = iteration_matrix_linear(&problem, &scheme, &qd, Formulation::MassMatrix).unwrap();
            let limit = stiff_limit_matrix(&scheme, &qd).unwrap();
            let diff = k.matrix.sub(&limit.matrix).max_abs();
            assert!(diff <= 1e-13, "M={m} {}: {diff:e}", kind.label());
            // the constrained sweep solves 0 = z outright
            let c = iteration_matrix_linear(&problem, &scheme, &qd, Formulation::Constrained).unwrap();
            assert_eq!(c.matrix.max_abs(), 0.0);
        }
    }
}

#[test]
fn fixed_point_of_the_matrix_is_the_collocation_solution() {
    use dae_sdc::sdc::{provisional_state, solve_collocation_direct, NewtonOptions};
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(4, 0.0, 0.2).unwrap();
    let qd = QDeltaMatrix::new(QDeltaKind::MinSrS, &scheme).unwrap();
    let k = iteration_matrix_linear(&problem, &scheme, &qd, Formulation::Constrained).unwrap();
    let ctx = SweepContext::new(&problem, &scheme, &qd);
    let (y0, z0) = problem.initial_values();
    let guess = provisional_state(&ctx, SweepVariant::Constrained, &y0, &z0).unwrap();
    let direct = solve_collocation_direct(&problem, &scheme, &y0, &guess, &NewtonOptions::with_tol(1e-15)).unwrap();
    let u = node_major(&direct);
    let ku = k.apply(&u);
    for (a, b) in ku.iter().zip(&u) {
        assert!((a - b).abs() <= 1e-13);
    }
}

#[test]
fn nonlinear_problems_have_no_iteration_matrix() {
    let problem = ReactionDiffusion::new(8).unwrap();
    let scheme = CollocationScheme::radau_right(2, 0.0, 0.1).unwrap();
    let qd = QDeltaMatrix::new(QDeltaKind::Lu, &scheme).unwrap();
    assert!(matches!(
        iteration_matrix_linear(&problem, &scheme, &qd, Formulation::Constrained),
        Err(SdcError::InvalidArgument(_))
    ));
}
