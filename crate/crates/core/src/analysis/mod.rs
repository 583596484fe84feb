//! Iteration matrices of linear problems, stiff limits and order studies.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::collocation::{CollocationScheme, MinSrOptions, QDeltaKind, QDeltaMatrix};
use crate::error::{Result, SdcError};
use crate::linalg::{eigenvalues, DenseMatrix, LuFactorization, Spectrum};
use crate::problems::{Part, SemiExplicitDae, VariableGroup};
use crate::sdc::{
    provisional_state, solve_collocation_direct, sweep, NewtonTolerance, StepController, SweepContext, SweepState,
    SweepVariant,
};

/// How the algebraic rows enter the linear sweep `L u^{k+1} = R u^k + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `A_g u_m^{k+1} = 0` at every node, as the constrained sweep does.
    /// `K` then maps any iterate exactly like one SDC-C sweep.
    Constrained,
    /// The algebraic rows are treated like stiff differential rows with a
    /// zero mass: `L = I~ - (Q_Delta x I) A`, `R = ((Q - Q_Delta) x I) A`,
    /// `I~` keeping only the differential identity per node. For `0 = z`
    /// this gives `I - Q_Delta^{-1} Q`. The left factor is singular for
    /// explicit `Q_Delta`.
    MassMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    Full,
    StiffLimit,
}

#[derive(Debug, Clone)]
pub struct IterationMatrixReport {
    pub num_nodes: usize,
    pub dt: f64,
    pub kind: QDeltaKind,
    pub limit: LimitKind,
    /// `K`, acting on node-major stacks `(y_1, z_1, ..., y_M, z_M)`.
    pub matrix: DenseMatrix,
    /// `c` in `u^{k+1} = K u^k + c`; empty for stiff limits.
    pub constant: Vec<f64>,
    pub spectrum: Spectrum,
}

impl IterationMatrixReport {
    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.spectral_radius
    }

    /// `K u + c` for a node-major stack `u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.matrix.matvec(u);
        for (o, c) in out.iter_mut().zip(&self.constant) {
            *o += c;
        }
        out
    }
}

/// Iteration matrix `K` of a sweep on a linear problem, with the initial
/// value `y0` of the problem in the constant term.
pub fn iteration_matrix_linear<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    qdelta: &QDeltaMatrix,
    formulation: Formulation,
) -> Result<IterationMatrixReport> {
    let coeffs = problem
        .linear_coefficients()
        .ok_or_else(|| SdcError::InvalidArgument(format!("problem '{}' is not linear", problem.name())))?;
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    let n = nd + na;
    let big_m = scheme.num_nodes();
    let q = scheme.q();
    let qd = qdelta.matrix();
    let size = big_m * n;

    let mut left = DenseMatrix::zeros(size, size);
    let mut right = DenseMatrix::zeros(size, size);
    for m in 0..big_m {
        for i in 0..nd {
            left[(m * n + i, m * n + i)] = 1.0;
        }
        for j in 0..big_m {
            let (a, b) = (qd[(m, j)], q[(m, j)] - qd[(m, j)]);
            left.add_block(m * n, j * n, &coeffs.a_f, -a);
            right.add_block(m * n, j * n, &coeffs.a_f, b);
            if formulation == Formulation::MassMatrix {
                left.add_block(m * n + nd, j * n, &coeffs.a_g, -a);
                right.add_block(m * n + nd, j * n, &coeffs.a_g, b);
            }
        }
        if formulation == Formulation::Constrained {
            left.add_block(m * n + nd, m * n, &coeffs.a_g, 1.0);
        }
    }
    let lu = LuFactorization::new(&left)?;
    let matrix = lu.solve_matrix(&right)?;
    let (y0, _) = problem.initial_values();
    let mut c = vec![0.0; size];
    for m in 0..big_m {
        c[m * n..m * n + nd].copy_from_slice(&y0);
    }
    let constant = lu.solve(&c)?;
    let spectrum = eigenvalues(&matrix)?;
    Ok(IterationMatrixReport {
        num_nodes: big_m,
        dt: scheme.dt(),
        kind: qdelta.kind(),
        limit: LimitKind::Full,
        matrix,
        constant,
        spectrum,
    })
}

/// `I - Q_Delta^{-1} Q`, the sweep matrix of `0 = z`.
pub fn stiff_limit_matrix(scheme: &CollocationScheme, qdelta: &QDeltaMatrix) -> Result<IterationMatrixReport> {
    let qd = qdelta.unit_matrix();
    if qd.diagonal().contains(&0.0) {
        return Err(SdcError::InvalidArgument(format!(
            "{} has a zero diagonal, the stiff limit needs an invertible Q_Delta",
            qdelta.kind().label()
        )));
    }
    let m = scheme.num_nodes();
    let inv_q = LuFactorization::new(qd)?.solve_matrix(scheme.unit_q())?;
    let matrix = DenseMatrix::identity(m).sub(&inv_q);
    let spectrum = eigenvalues(&matrix)?;
    Ok(IterationMatrixReport {
        num_nodes: m,
        dt: scheme.dt(),
        kind: qdelta.kind(),
        limit: LimitKind::StiffLimit,
        matrix,
        constant: Vec::new(),
        spectrum,
    })
}

/// Unweighted least-squares line through `(log10 dt, log10 err)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation from the line, in decades.
    pub residual: f64,
}

pub const ERROR_FLOOR: f64 = 1e-15;

/// Fits a slope to the samples with `err >= ERROR_FLOOR`. Needs at least
/// three of them.
pub fn fit_slope(dts: &[f64], errors: &[f64]) -> Result<LogLogFit> {
    if dts.len() != errors.len() {
        return Err(SdcError::InvalidArgument("dt and error lists differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors)
        .filter(|(d, e)| **e >= ERROR_FLOOR && e.is_finite() && **d > 0.0)
        .map(|(d, e)| (d.log10(), e.log10()))
        .collect();
    if pts.len() < 3 {
        return Err(SdcError::InvalidArgument(format!(
            "need at least 3 samples above {ERROR_FLOOR:e}, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(SdcError::InvalidArgument("all dt samples are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub variable: String,
    pub k: usize,
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when fewer than three samples clear the error floor.
    pub fit: Option<LogLogFit>,
}

impl OrderEstimate {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

#[derive(Debug, Clone)]
pub struct OrderStudy {
    pub problem: String,
    pub variant: SweepVariant,
    pub kind: QDeltaKind,
    pub num_nodes: usize,
    pub estimates: Vec<OrderEstimate>,
}

impl OrderStudy {
    pub fn estimate(&self, variable: &str, k: usize) -> Option<&OrderEstimate> {
        self.estimates.iter().find(|e| e.variable == variable && e.k == k)
    }
}

/// Settings of an order study.
#[derive(Debug, Clone)]
pub struct OrderStudyConfig {
    pub variant: SweepVariant,
    pub kind: QDeltaKind,
    pub num_nodes: usize,
    pub dts: Vec<f64>,
    pub ks: Vec<usize>,
    pub newton: NewtonTolerance,
    pub minsr: MinSrOptions,
    /// Diagonal coefficients to load instead of running the optimizer.
    pub coefficients: Option<PathBuf>,
}

impl OrderStudyConfig {
    pub fn new(variant: SweepVariant, kind: QDeltaKind, num_nodes: usize, dts: Vec<f64>, ks: Vec<usize>) -> Self {
        Self {
            variant,
            kind,
            num_nodes,
            dts,
            ks,
            newton: NewtonTolerance::Fixed { tol: 1e-13 },
            minsr: MinSrOptions::default(),
            coefficients: None,
        }
    }
}

fn group_error(group: &VariableGroup, state: &SweepState, exact: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (y, z) = state.last();
    let (num, ex) = match group.part {
        Part::Differential => (y, &exact.0),
        Part::Algebraic => (z, &exact.1),
    };
    group.range.clone().map(|i| (num[i] - ex[i]).abs()).fold(0.0, f64::max)
}

/// Local error after exactly `k` sweeps of one step from the exact initial
/// values, per variable group, for every `k` and `dt`; slopes fitted per
/// `(variable, k)`.
pub fn order_study<P: SemiExplicitDae + ?Sized>(problem: &P, config: &OrderStudyConfig) -> Result<OrderStudy> {
    if config.dts.is_empty() || config.ks.is_empty() {
        return Err(SdcError::InvalidArgument("order study needs dt and k values".into()));
    }
    if config.dts.iter().any(|&d| !(d > 0.0)) {
        return Err(SdcError::InvalidArgument("dt values must be positive".into()));
    }
    let t0 = problem.t0();
    let (y0, z0) = problem.initial_values();
    let groups = problem.variable_groups();
    let k_top = *config.ks.iter().max().unwrap();
    let base = CollocationScheme::radau_right(config.num_nodes, t0, t0 + config.dts[0])?;
    let qd_base = match &config.coefficients {
        Some(path) => {
            let qd = QDeltaMatrix::from_file(path, &base)?;
            if qd.kind() != config.kind {
                return Err(SdcError::Coefficients(format!(
                    "file holds {} coefficients, study asks for {}",
                    qd.kind().label(),
                    config.kind.label()
                )));
            }
            qd
        }
        None => QDeltaMatrix::with_options(config.kind, &base, &config.minsr)?,
    };
    let controller = StepController::default().with_newton(config.newton);

    // errors[dt][k][group]
    let per_dt: Vec<Vec<Vec<f64>>> = config
        .dts
        .par_iter()
        .map(|&dt| -> Result<Vec<Vec<f64>>> {
            let scheme = base.remap(t0, t0 + dt);
            let qd = qd_base.for_scheme(&scheme);
            let exact = problem.exact_solution(scheme.t1()).ok_or_else(|| {
                SdcError::InvalidArgument(format!("problem '{}' has no exact solution", problem.name()))
            })?;
            let mut ctx = SweepContext::new(problem, &scheme, &qd);
            ctx.newton = controller.newton_options(dt);
            ctx.accept_unconverged = config.newton.accepts_unconverged();
            let errs = |s: &SweepState| groups.iter().map(|g| group_error(g, s, &exact)).collect::<Vec<_>>();

            if config.variant == SweepVariant::CollocationDirect {
                let guess = provisional_state(&ctx, config.variant, &y0, &z0)?;
                let solved = solve_collocation_direct(problem, &scheme, &y0, &guess, &ctx.newton)?;
                return Ok(vec![errs(&solved); k_top + 1]);
            }
            let mut state = provisional_state(&ctx, config.variant, &y0, &z0)?;
            let mut out = vec![errs(&state)];
            for _ in 0..k_top {
                state = sweep(&ctx, &state, &y0, &z0)?.0;
                out.push(errs(&state));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut estimates = Vec::new();
    for &k in &config.ks {
        for (gi, group) in groups.iter().enumerate() {
            let errors: Vec<f64> = per_dt.iter().map(|e| e[k][gi]).collect();
            estimates.push(OrderEstimate {
                variable: group.name.clone(),
                k,
                dts: config.dts.clone(),
                fit: fit_slope(&config.dts, &errors).ok(),
                errors,
            });
        }
    }
    Ok(OrderStudy {
        problem: problem.name().to_string(),
        variant: config.variant,
        kind: config.kind,
        num_nodes: config.num_nodes,
        estimates,
    })
}

/// `dt_base * 2^{-p}` for `p` in `from..=to`.
pub fn halving_grid(dt_base: f64, from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|p| dt_base * 2f64.powi(-p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearDae, StiffScalar};

    #[test]
    fn qdelta_equal_to_q_gives_zero_matrix() {
        // K = L^{-1} (Q - Q_Delta) A vanishes identically when Q_Delta = Q
        let scheme = CollocationScheme::radau_right(3, 0.0, 0.1).unwrap();
        let p = LinearDae::new();
        let mut qd = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &scheme).unwrap();
        qd = qd.with_matrix_for_tests(scheme.q().clone());
        let rep = iteration_matrix_linear(&p, &scheme, &qd, Formulation::Constrained).unwrap();
        assert_eq!(rep.matrix.max_abs(), 0.0);
    }

    #[test]
    fn scalar_stiff_limit() {
        let scheme = CollocationScheme::radau_right(1, 0.0, 1.0).unwrap();
        let qd = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &scheme).unwrap();
        let rep = stiff_limit_matrix(&scheme, &qd).unwrap();
        // Q = [1], Q_Delta = [1]
        assert!(rep.matrix[(0, 0)].abs() < 1e-15);
        let p = StiffScalar::new(0.0).unwrap();
        let k = iteration_matrix_linear(&p, &scheme, &qd, Formulation::MassMatrix).unwrap();
        assert!((k.matrix[(0, 0)] - rep.matrix[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn picard_has_no_stiff_limit() {
        let scheme = CollocationScheme::radau_right(3, 0.0, 1.0).unwrap();
        let qd = QDeltaMatrix::new(QDeltaKind::Picard, &scheme).unwrap();
        let err = stiff_limit_matrix(&scheme, &qd).unwrap_err();
        assert!(err.to_string().contains("Picard"));
    }

    #[test]
    fn fit_recovers_a_power_law() {
        let dts = halving_grid(1.0, 1, 5);
        let errs: Vec<f64> = dts.iter().map(|d| 3.0 * d.powi(4)).collect();
        let fit = fit_slope(&dts, &errs).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log10()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn fit_drops_floor_samples() {
        let dts = [0.1, 0.05, 0.025, 0.0125];
        assert!(fit_slope(&dts, &[1e-3, 1e-4, 1e-16, 1e-17]).is_err());
        let fit = fit_slope(&dts, &[1e-3, 1e-4, 1e-5, 1e-17]).unwrap();
        assert!((fit.slope - 1.0 / 2f64.log10()).abs() < 1e-9);
    }
}
