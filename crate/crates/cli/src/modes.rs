use std::time::Instant;

use dae_sdc::analysis::{iteration_matrix_linear, order_study, OrderStudyConfig};
use dae_sdc::prelude::*;
use serde_json::{json, Value};

use crate::config::{Mode, Resolved};
use crate::output::{self, num, opt_num};

/// CSV rows plus mode-specific summary fields for the sidecar.
pub struct ModeOutput {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    pub wallclock_s: f64,
}

pub fn execute(r: &Resolved) -> Result<ModeOutput> {
    match r.config.mode {
        Mode::Run => run(r),
        Mode::OrderStudy => order(r),
        Mode::Spectrum => spectrum(r),
        Mode::ConstraintHistory => history(r),
    }
}

fn controller(r: &Resolved) -> StepController {
    let c = StepController::new(r.config.e_tol, r.config.k_max);
    match r.newton {
        Some(p) => c.with_newton(p),
        None => c,
    }
}

fn integration_config(r: &Resolved, t_end: f64) -> IntegrationConfig {
    let mut cfg = IntegrationConfig::new(r.config.m, r.kind, r.variant, r.dt(), t_end)
        .with_controller(controller(r))
        .with_threads(r.threads)
        .with_minsr(r.minsr());
    if let Some(path) = &r.config.coeffs {
        cfg = cfg.with_coefficients(path);
    }
    cfg
}

fn run(r: &Resolved) -> Result<ModeOutput> {
    let t_end = r.config.t_end.expect("checked in resolve");
    let cfg = integration_config(r, t_end);
    let started = Instant::now();
    let rec = integrate(r.problem.as_ref(), &cfg)?;
    let wallclock_s = started.elapsed().as_secs_f64();
    let no_timing = r.config.no_timing;

    let rows = rec
        .steps
        .iter()
        .map(|s| {
            vec![
                (s.index + 1).to_string(),
                num(s.t1),
                opt_num(s.err_y),
                opt_num(s.err_z),
                s.sweeps.to_string(),
                num(s.max_constraint_residual()),
                num(if no_timing { 0.0 } else { s.wallclock_s }),
            ]
        })
        .collect();
    let summary = json!({
        "steps": rec.steps.len(),
        "converged": rec.converged(),
        "linf_error": rec.linf_error(),
        "total_sweeps": rec.steps.iter().map(|s| s.sweeps).sum::<usize>(),
        "newton_warnings": rec.steps.iter().map(|s| s.newton_warnings).sum::<usize>(),
    });
    Ok(ModeOutput {
        columns: output::RUN_COLUMNS,
        rows,
        summary,
        wallclock_s,
    })
}

fn history(r: &Resolved) -> Result<ModeOutput> {
    // only the first step; t_end is not used
    let t0 = r.problem.t0();
    let cfg = integration_config(r, t0 + r.dt());
    let started = Instant::now();
    let rec = integrate(r.problem.as_ref(), &cfg)?;
    let wallclock_s = started.elapsed().as_secs_f64();
    let step = &rec.steps[0];
    let at = |v: &[f64], i: usize| v.get(i).copied();
    let rows = (0..step.sweeps)
        .map(|i| {
            vec![
                (i + 1).to_string(),
                num(step.increments[i]),
                num(step.constraint_residuals[i]),
                opt_num(at(&step.errors_y, i)),
                opt_num(at(&step.errors_z, i)),
            ]
        })
        .collect();
    let summary = json!({
        "t0": step.t0,
        "t1": step.t1,
        "sweeps": step.sweeps,
        "converged": step.converged,
        "newton_tol": step.newton_tol,
    });
    Ok(ModeOutput {
        columns: output::HISTORY_COLUMNS,
        rows,
        summary,
        wallclock_s,
    })
}

fn order(r: &Resolved) -> Result<ModeOutput> {
    let k_top = r.config.k.unwrap_or(2 * r.config.m - 1);
    let mut cfg = OrderStudyConfig::new(
        r.variant,
        r.kind,
        r.config.m,
        r.config.dt.clone(),
        (0..=k_top).collect(),
    );
    if let Some(p) = r.newton {
        cfg.newton = p;
    }
    cfg.minsr = r.minsr();
    cfg.coefficients = r.config.coeffs.clone();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.threads)
        .build()
        .map_err(|e| SdcError::InvalidArgument(format!("thread pool: {e}")))?;
    let started = Instant::now();
    let study = pool.install(|| order_study(r.problem.as_ref(), &cfg))?;
    let wallclock_s = started.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for est in &study.estimates {
        let slope = opt_num(est.slope());
        for (dt, err) in est.dts.iter().zip(&est.errors) {
            rows.push(vec![
                est.variable.clone(),
                est.k.to_string(),
                num(*dt),
                num(*err),
                slope.clone(),
            ]);
        }
        slopes.push(json!({ "variable": est.variable, "k": est.k, "slope": est.slope() }));
    }
    Ok(ModeOutput {
        columns: output::ORDER_COLUMNS,
        rows,
        summary: json!({ "slopes": slopes }),
        wallclock_s,
    })
}

fn spectrum(r: &Resolved) -> Result<ModeOutput> {
    let t0 = r.problem.t0();
    let scheme = CollocationScheme::radau_right(r.config.m, t0, t0 + r.dt())?;
    let qd = integration_config(r, t0 + r.dt()).build_qdelta(&scheme)?;
    let started = Instant::now();
    let report = iteration_matrix_linear(r.problem.as_ref(), &scheme, &qd, r.formulation)?;
    let wallclock_s = started.elapsed().as_secs_f64();
    let rho = report.spectral_radius();
    let rows = report
        .spectrum
        .eigenvalues
        .iter()
        .map(|l| vec![num(l.re), num(l.im), num(l.norm()), num(rho)])
        .collect();
    Ok(ModeOutput {
        columns: output::SPECTRUM_COLUMNS,
        rows,
        summary: json!({ "spectral_radius": rho, "dimension": report.matrix.rows() }),
        wallclock_s,
    })
}
