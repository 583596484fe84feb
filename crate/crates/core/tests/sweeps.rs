use dae_sdc::prelude::*;
use dae_sdc::sdc::{
    max_constraint_residual, provisional_state, residual, solve_collocation_direct, sweep, NewtonOptions, SweepContext,
    SweepState,
};

/// `y' = 0`, `0 = z`.
struct Frozen;

impl SemiExplicitDae for Frozen {
    fn name(&self) -> &str {
        "frozen"
    }
    fn n_diff(&self) -> usize {
        1
    }
    fn n_alg(&self) -> usize {
        1
    }
    fn initial_values(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.7], vec![0.0])
    }
    fn f(&self, _y: &[f64], _z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn g(&self, _y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = z[0];
    }
}

/// `y' = 3`, `0 = z - y`.
struct Drift;

impl SemiExplicitDae for Drift {
    fn name(&self) -> &str {
        "drift"
    }
    fn n_diff(&self) -> usize {
        1
    }
    fn n_alg(&self) -> usize {
        1
    }
    fn initial_values(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![1.0])
    }
    fn f(&self, _y: &[f64], _z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = 3.0;
    }
    fn g(&self, y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = z[0] - y[0];
    }
}

fn sweeps<P: SemiExplicitDae>(
    problem: &P,
    scheme: &CollocationScheme,
    kind: QDeltaKind,
    variant: SweepVariant,
    count: usize,
) -> Result<Vec<SweepState>> {
    let qd = QDeltaMatrix::new(kind, scheme)?;
    let ctx = SweepContext::new(problem, scheme, &qd);
    let (y0, z0) = problem.initial_values();
    let mut states = vec![provisional_state(&ctx, variant, &y0, &z0)?];
    for _ in 0..count {
        let next = sweep(&ctx, states.last().unwrap(), &y0, &z0)?.0;
        states.push(next);
    }
    Ok(states)
}

#[test]
fn frozen_state_is_a_fixed_point_of_every_sweep() {
    let scheme = CollocationScheme::radau_right(3, 0.0, 0.5).unwrap();
    for variant in [SweepVariant::Constrained, SweepVariant::SemiIntegrating] {
        for kind in QDeltaKind::ALL {
            let states = sweeps(&Frozen, &scheme, kind, variant, 3).unwrap();
            for s in &states[1..] {
                assert_eq!(s.increment(&states[0]), 0.0, "{variant} {}", kind.label());
                assert!(s.y.iter().all(|y| y[0] == 0.7));
                assert!(s.z.iter().all(|z| z[0] == 0.0));
            }
        }
    }
}

#[test]
fn semi_integrating_sweep_integrates_a_constant_rate_exactly() {
    let scheme = CollocationScheme::radau_right(4, 0.5, 1.0).unwrap();
    for kind in [QDeltaKind::ImplicitEuler, QDeltaKind::Lu, QDeltaKind::MinSrNs] {
        let states = sweeps(&Drift, &scheme, kind, SweepVariant::SemiIntegrating, 2).unwrap();
        for (m, tau) in scheme.nodes().iter().enumerate() {
            let expected = 1.0 + 3.0 * (tau - 0.5);
            let s = &states[1];
            assert!((s.y[m][0] - expected).abs() <= 1e-14);
            assert!((s.derivatives[m][0] - 3.0).abs() <= 1e-14);
            // z is solved against y rebuilt from the previous Y, so it
            // lags one sweep
            let s = &states[2];
            assert!((s.z[m][0] - expected).abs() <= 1e-14);
        }
    }
}

#[test]
fn constrained_sweep_satisfies_the_constraint_at_every_iterate() {
    let problem = ReactionDiffusion::new(16).unwrap();
    let scheme = CollocationScheme::radau_right(3, 0.0, 0.1).unwrap();
    let states = sweeps(&problem, &scheme, QDeltaKind::MinSrS, SweepVariant::Constrained, 4).unwrap();
    for s in &states {
        assert!(max_constraint_residual(&problem, &scheme, s) <= 1e-11);
    }
    let si = sweeps(&problem, &scheme, QDeltaKind::MinSrS, SweepVariant::SemiIntegrating, 1).unwrap();
    assert!(max_constraint_residual(&problem, &scheme, &si[1]) > 1e-6);
}

#[test]
fn fully_integrating_picard_has_a_singular_node_system() {
    let scheme = CollocationScheme::radau_right(3, 0.0, 0.1).unwrap();
    let err = sweeps(
        &LinearDae::new(),
        &scheme,
        QDeltaKind::Picard,
        SweepVariant::FullyIntegrating,
        1,
    )
    .unwrap_err();
    assert!(matches!(err, SdcError::SingularMatrix { .. }), "{err:?}");
}

#[test]
fn fully_integrating_lu_converges_on_small_steps() {
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(6, 0.0, 1e-3).unwrap();
    let qd = QDeltaMatrix::new(QDeltaKind::Lu, &scheme).unwrap();
    let controller = StepController::new(1e-10, 12);
    let (y0, z0) = problem.initial_values();
    let rec = run_step(
        &problem,
        &scheme,
        &qd,
        SweepVariant::FullyIntegrating,
        &controller,
        &y0,
        &z0,
    )
    .unwrap();
    assert!(rec.converged, "{:?}", rec.increments);
    assert!(rec.sweeps <= 12);
    assert!(rec.err_y.unwrap() <= 1e-10 && rec.err_z.unwrap() <= 1e-10);
}

/// Sweeps from the spread start with a small offset on every `z'` node value.
fn perturbed_increments(kind: QDeltaKind) -> Vec<f64> {
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(6, 0.0, 1e-3).unwrap();
    let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
    let ctx = SweepContext::new(&problem, &scheme, &qd);
    let (y0, z0) = problem.initial_values();
    let mut state = provisional_state(&ctx, SweepVariant::FullyIntegrating, &y0, &z0).unwrap();
    for d in &mut state.derivatives {
        d[1] += 1e-6;
    }
    let mut incs = Vec::new();
    for _ in 0..10 {
        let next = sweep(&ctx, &state, &y0, &z0).unwrap().0;
        incs.push(next.increment(&state));
        state = next;
    }
    incs
}

#[test]
fn fully_integrating_min_sr_ns_diverges() {
    // The spread start has the exact constraint rate 2y' + z' = 0 and so no
    // component along the unstable mode; any other start exposes it.
    let incs = perturbed_increments(QDeltaKind::MinSrNs);
    let low = incs.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(incs[9] > 1e4 * low, "{incs:?}");
    // growth factor is the spectral radius of the stiff limit, M - 1 = 5
    for w in incs.windows(2).skip(4) {
        assert!((w[1] / w[0] - 5.0).abs() < 0.1, "{incs:?}");
    }
    let lu = perturbed_increments(QDeltaKind::Lu);
    assert!(lu[9] < 1e-12, "{lu:?}");
}

#[test]
fn residual_vanishes_at_the_collocation_solution() {
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(3, 0.0, 0.2).unwrap();
    let qd = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &scheme).unwrap();
    let ctx = SweepContext::new(&problem, &scheme, &qd);
    let (y0, z0) = problem.initial_values();
    let guess = provisional_state(&ctx, SweepVariant::Constrained, &y0, &z0).unwrap();
    let before = residual(&problem, &scheme, &guess, &y0);
    assert_eq!(before.len(), 3);
    assert!(before.iter().all(|r| *r > 1e-3));
    let solved = solve_collocation_direct(&problem, &scheme, &y0, &guess, &NewtonOptions::with_tol(1e-15)).unwrap();
    assert!(residual(&problem, &scheme, &solved, &y0).iter().all(|r| *r <= 1e-14));
}

#[test]
fn one_sweep_does_not_converge_on_a_large_step() {
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(3, 0.0, 0.5).unwrap();
    let qd = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &scheme).unwrap();
    let (y0, z0) = problem.initial_values();
    let rec = run_step(
        &problem,
        &scheme,
        &qd,
        SweepVariant::Constrained,
        &StepController::new(1e-12, 1),
        &y0,
        &z0,
    )
    .unwrap();
    assert_eq!(rec.sweeps, 1);
    assert!(!rec.converged);
    assert_eq!(rec.increments.len(), 1);
}

#[test]
fn zero_length_step_returns_the_initial_values() {
    let problem = LinearDae::new();
    let scheme = CollocationScheme::radau_right(3, 0.0, 1.0).unwrap().remap(0.25, 0.25);
    let qd = QDeltaMatrix::new(QDeltaKind::Lu, &scheme).unwrap();
    let (y0, z0) = (vec![0.3], vec![-0.6]);
    let rec = run_step(
        &problem,
        &scheme,
        &qd,
        SweepVariant::Constrained,
        &StepController::default(),
        &y0,
        &z0,
    )
    .unwrap();
    assert_eq!(rec.sweeps, 1);
    assert!(rec.converged);
    assert_eq!((rec.y, rec.z), (y0, z0));
}
