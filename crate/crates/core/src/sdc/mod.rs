//! Sweeps, the per-node Newton solver and the time loop.

mod direct;
pub mod newton;
mod step;
mod sweep;

pub use direct::solve_collocation_direct;
pub use newton::{newton_solve, NewtonOptions, NewtonOutcome, NewtonTolerance};
pub use step::{
    integrate, run_fixed_sweeps, run_step, run_step_with_pool, IntegrationConfig, RunRecord, StepController, StepRecord,
};
pub use sweep::{
    max_constraint_residual, provisional_state, residual, sweep, sweep_fi_sdc, sweep_sdc_c, sweep_si_sdc, SweepContext,
    SweepReport, SweepState, SweepVariant,
};
