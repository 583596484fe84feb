use std::path::PathBuf;
use std::time::Instant;

use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::direct::solve_collocation_direct;
use super::newton::{NewtonOptions, NewtonTolerance};
use super::sweep::{
    max_constraint_residual, provisional_state, residual, sweep, SweepContext, SweepState, SweepVariant,
};
use crate::collocation::{CollocationScheme, MinSrOptions, QDeltaKind, QDeltaMatrix};
use crate::error::{Result, SdcError};
use crate::linalg::{diff_norm_inf, norm_inf};
use crate::problems::SemiExplicitDae;

/// Stopping rule for the sweeps of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    /// Stop once `||u^{k+1} - u^k||_inf < e_tol`.
    pub e_tol: f64,
    pub k_max: usize,
    pub newton: NewtonTolerance,
    pub newton_max_iterations: usize,
}

impl StepController {
    pub fn new(e_tol: f64, k_max: usize) -> Self {
        Self {
            e_tol,
            k_max,
            newton: NewtonTolerance::default(),
            newton_max_iterations: NewtonOptions::default().max_iterations,
        }
    }

    pub fn with_newton(mut self, newton: NewtonTolerance) -> Self {
        self.newton = newton;
        self
    }

    pub fn newton_options(&self, dt: f64) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton.tolerance(dt),
            max_iterations: self.newton_max_iterations,
            ..NewtonOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.e_tol > 0.0) || !self.e_tol.is_finite() {
            return Err(SdcError::InvalidArgument(format!(
                "e_tol must be positive, got {}",
                self.e_tol
            )));
        }
        if self.k_max == 0 {
            return Err(SdcError::InvalidArgument("k_max must be at least 1".into()));
        }
        self.newton.validate()
    }
}

impl Default for StepController {
    fn default() -> Self {
        Self::new(1e-12, 100)
    }
}

/// Outcome of one time step, with one history entry per sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    /// Node-`M` values, which are the step solution.
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub increments: Vec<f64>,
    /// Largest `||g||_inf` over the nodes after each sweep.
    pub constraint_residuals: Vec<f64>,
    /// Largest collocation residual over the nodes after each sweep.
    pub collocation_residuals: Vec<f64>,
    /// Errors at `t1` after each sweep, if the exact solution is known.
    pub errors_y: Vec<f64>,
    pub errors_z: Vec<f64>,
    pub err_y: Option<f64>,
    pub err_z: Option<f64>,
    pub newton_tol: f64,
    pub newton_iterations: usize,
    pub newton_warnings: usize,
    pub wallclock_s: f64,
}

impl StepRecord {
    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// All steps of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    pub wallclock_s: f64,
}

impl RunRecord {
    /// Largest error over the time grid, `None` without an exact solution
    /// or without steps.
    pub fn linf_error(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for s in &self.steps {
            let e = s.err_y?.max(s.err_z?);
            worst = Some(worst.map_or(e, |w: f64| w.max(e)));
        }
        worst
    }

    pub fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }

    /// Copy with every timing field set to zero, for comparisons.
    pub fn without_timing(&self) -> RunRecord {
        let mut out = self.clone();
        out.wallclock_s = 0.0;
        for s in &mut out.steps {
            s.wallclock_s = 0.0;
        }
        out
    }
}

enum Stop {
    Tolerance,
    Fixed(usize),
}

struct History<'a, P: SemiExplicitDae + ?Sized> {
    problem: &'a P,
    scheme: &'a CollocationScheme,
    y0: &'a [f64],
    exact: Option<(Vec<f64>, Vec<f64>)>,
    record: StepRecord,
}

impl<'a, P: SemiExplicitDae + ?Sized> History<'a, P> {
    fn push(&mut self, prev: &SweepState, next: &SweepState) {
        let r = &mut self.record;
        r.increments.push(next.increment(prev));
        r.constraint_residuals
            .push(max_constraint_residual(self.problem, self.scheme, next));
        r.collocation_residuals.push(
            residual(self.problem, self.scheme, next, self.y0)
                .into_iter()
                .fold(0.0, f64::max),
        );
        if let Some((ye, ze)) = &self.exact {
            let (y, z) = next.last();
            r.errors_y.push(diff_norm_inf(y, ye));
            r.errors_z.push(diff_norm_inf(z, ze));
        }
        r.sweeps += 1;
    }

    fn finish(mut self, state: &SweepState, started: Instant) -> StepRecord {
        let (y, z) = state.last();
        self.record.y = y.to_vec();
        self.record.z = z.to_vec();
        if let Some((ye, ze)) = &self.exact {
            self.record.err_y = Some(diff_norm_inf(y, ye));
            self.record.err_z = Some(diff_norm_inf(z, ze));
        }
        self.record.wallclock_s = started.elapsed().as_secs_f64();
        self.record
    }
}

#[allow(clippy::too_many_arguments)]
fn drive<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    qdelta: &QDeltaMatrix,
    variant: SweepVariant,
    controller: &StepController,
    y0: &[f64],
    z0: &[f64],
    pool: Option<&ThreadPool>,
    stop: Stop,
) -> Result<StepRecord> {
    let started = Instant::now();
    let newton = controller.newton_options(scheme.dt());
    let mut history = History {
        problem,
        scheme,
        y0,
        exact: problem.exact_solution(scheme.t1()),
        record: StepRecord {
            index: 0,
            t0: scheme.t0(),
            t1: scheme.t1(),
            y: Vec::new(),
            z: Vec::new(),
            sweeps: 0,
            converged: false,
            increments: Vec::new(),
            constraint_residuals: Vec::new(),
            collocation_residuals: Vec::new(),
            errors_y: Vec::new(),
            errors_z: Vec::new(),
            err_y: None,
            err_z: None,
            newton_tol: newton.tol,
            newton_iterations: 0,
            newton_warnings: 0,
            wallclock_s: 0.0,
        },
    };

    if scheme.dt() == 0.0 {
        let g = norm_inf(&problem.eval_g(y0, z0, scheme.t0()));
        let r = &mut history.record;
        r.sweeps = 1;
        r.converged = true;
        r.increments.push(0.0);
        r.constraint_residuals.push(g);
        r.collocation_residuals.push(0.0);
        let state = SweepState {
            variant,
            k: 1,
            y: vec![y0.to_vec()],
            z: vec![z0.to_vec()],
            derivatives: Vec::new(),
            f: Vec::new(),
        };
        if let Some((ye, ze)) = &history.exact {
            history.record.errors_y.push(diff_norm_inf(y0, ye));
            history.record.errors_z.push(diff_norm_inf(z0, ze));
        }
        return Ok(history.finish(&state, started));
    }

    let ctx = SweepContext {
        problem,
        scheme,
        qdelta,
        newton,
        accept_unconverged: controller.newton.accepts_unconverged(),
        pool,
    };
    let mut state = provisional_state(&ctx, variant, y0, z0)?;

    if variant == SweepVariant::CollocationDirect {
        let solved = solve_collocation_direct(problem, scheme, y0, &state, &newton)?;
        history.push(&state, &solved);
        history.record.converged = true;
        return Ok(history.finish(&solved, started));
    }

    let limit = match stop {
        Stop::Tolerance => controller.k_max,
        Stop::Fixed(k) => k,
    };
    if let Stop::Fixed(0) = stop {
        history.record.converged = true;
    }
    for _ in 0..limit {
        let (next, rep) = sweep(&ctx, &state, y0, z0)?;
        history.record.newton_iterations += rep.newton_iterations;
        history.record.newton_warnings += rep.newton_warnings;
        history.push(&state, &next);
        state = next;
        if !state.is_finite() {
            break;
        }
        let inc = *history.record.increments.last().unwrap();
        match stop {
            Stop::Tolerance if inc < controller.e_tol => {
                history.record.converged = true;
                break;
            }
            Stop::Fixed(_) => history.record.converged = inc < controller.e_tol,
            _ => {}
        }
    }
    Ok(history.finish(&state, started))
}

/// Sweeps from the provisional iterate until the increment drops below
/// `e_tol` or `k_max` sweeps are done. Not converging is reported in the
/// record, not as an error.
pub fn run_step<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    qdelta: &QDeltaMatrix,
    variant: SweepVariant,
    controller: &StepController,
    y0: &[f64],
    z0: &[f64],
) -> Result<StepRecord> {
    run_step_with_pool(problem, scheme, qdelta, variant, controller, y0, z0, None)
}

#[allow(clippy::too_many_arguments)]
pub fn run_step_with_pool<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    qdelta: &QDeltaMatrix,
    variant: SweepVariant,
    controller: &StepController,
    y0: &[f64],
    z0: &[f64],
    pool: Option<&ThreadPool>,
) -> Result<StepRecord> {
    controller.validate()?;
    drive(
        problem,
        scheme,
        qdelta,
        variant,
        controller,
        y0,
        z0,
        pool,
        Stop::Tolerance,
    )
}

/// Exactly `k` sweeps, ignoring the increment. `k = 0` returns the
/// provisional iterate.
#[allow(clippy::too_many_arguments)]
pub fn run_fixed_sweeps<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    qdelta: &QDeltaMatrix,
    variant: SweepVariant,
    k: usize,
    newton: NewtonTolerance,
    y0: &[f64],
    z0: &[f64],
) -> Result<StepRecord> {
    newton.validate()?;
    let controller = StepController::new(f64::MIN_POSITIVE, k.max(1)).with_newton(newton);
    drive(
        problem,
        scheme,
        qdelta,
        variant,
        &controller,
        y0,
        z0,
        None,
        Stop::Fixed(k),
    )
}

/// Settings of a run over `[t0, t_end]` with constant step size.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub num_nodes: usize,
    pub qdelta: QDeltaKind,
    pub variant: SweepVariant,
    pub dt: f64,
    pub t_end: f64,
    pub controller: StepController,
    /// Worker threads for node-parallel sweeps; 1 runs everything inline.
    pub threads: usize,
    pub minsr: MinSrOptions,
    /// MIN-SR coefficients to load instead of optimizing.
    pub coefficients: Option<PathBuf>,
}

impl IntegrationConfig {
    pub fn new(num_nodes: usize, qdelta: QDeltaKind, variant: SweepVariant, dt: f64, t_end: f64) -> Self {
        Self {
            num_nodes,
            qdelta,
            variant,
            dt,
            t_end,
            controller: StepController::default(),
            threads: 1,
            minsr: MinSrOptions::default(),
            coefficients: None,
        }
    }

    pub fn with_controller(mut self, controller: StepController) -> Self {
        self.controller = controller;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_minsr(mut self, minsr: MinSrOptions) -> Self {
        self.minsr = minsr;
        self
    }

    pub fn with_coefficients(mut self, path: impl Into<PathBuf>) -> Self {
        self.coefficients = Some(path.into());
        self
    }

    /// Number of steps from `t0` to `t_end`.
    pub fn num_steps(&self, t0: f64) -> Result<usize> {
        let span = self.t_end - t0;
        if self.t_end == t0 {
            return Ok(0);
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SdcError::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(span > 0.0) {
            return Err(SdcError::InvalidArgument(format!(
                "t_end = {} must not precede t0 = {t0}",
                self.t_end
            )));
        }
        let n = (span / self.dt).round();
        if n < 1.0 || (n * self.dt - span).abs() > 1e-12 * span.max(1.0) {
            return Err(SdcError::InvalidArgument(format!(
                "dt = {} does not divide the interval [{t0}, {}]",
                self.dt, self.t_end
            )));
        }
        Ok(n as usize)
    }

    /// The preconditioner on a scheme of this run's step size.
    pub fn build_qdelta(&self, scheme: &CollocationScheme) -> Result<QDeltaMatrix> {
        match &self.coefficients {
            Some(path) => {
                let qd = QDeltaMatrix::from_file(path, scheme)?;
                if qd.kind() != self.qdelta {
                    return Err(SdcError::Coefficients(format!(
                        "file holds {} coefficients, run asks for {}",
                        qd.kind().label(),
                        self.qdelta.label()
                    )));
                }
                Ok(qd)
            }
            None => QDeltaMatrix::with_options(self.qdelta, scheme, &self.minsr),
        }
    }
}

/// Advances the problem from its initial values to `t_end`.
pub fn integrate<P: SemiExplicitDae + ?Sized>(problem: &P, config: &IntegrationConfig) -> Result<RunRecord> {
    config.controller.validate()?;
    if config.num_nodes == 0 {
        return Err(SdcError::InvalidArgument("need at least one node".into()));
    }
    let t0 = problem.t0();
    let steps = config.num_steps(t0)?;
    if steps == 0 {
        return Ok(RunRecord {
            steps: Vec::new(),
            wallclock_s: 0.0,
        });
    }
    let base = CollocationScheme::radau_right(config.num_nodes, t0, t0 + config.dt)?;
    let qd_base = config.build_qdelta(&base)?;
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| SdcError::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let started = Instant::now();
    let (mut y, mut z) = problem.initial_values();
    let mut records = Vec::with_capacity(steps);
    for n in 0..steps {
        let ta = t0 + n as f64 * config.dt;
        let tb = if n + 1 == steps {
            config.t_end
        } else {
            t0 + (n + 1) as f64 * config.dt
        };
        let scheme = base.remap(ta, tb);
        let qd = qd_base.for_scheme(&scheme);
        let mut rec = run_step_with_pool(
            problem,
            &scheme,
            &qd,
            config.variant,
            &config.controller,
            &y,
            &z,
            pool.as_ref(),
        )
        .map_err(|e| SdcError::IntegrationFailure {
            step: n,
            source: Box::new(e),
        })?;
        rec.index = n;
        y.clone_from(&rec.y);
        z.clone_from(&rec.z);
        records.push(rec);
    }
    Ok(RunRecord {
        steps: records,
        wallclock_s: started.elapsed().as_secs_f64(),
    })
}
