//! Spectral deferred corrections for semi-explicit index-1
//! differential-algebraic equations.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense LU solves and eigenvalues for small matrices.
//! - [`collocation`]: Radau nodes, the spectral integration matrix `Q` and
//!   the preconditioners `Q_Delta` (IE, EE, Picard, LU, MIN-SR-S, MIN-SR-NS).
//! - [`problems`]: the semi-explicit DAE interface and the shipped test
//!   problems.
//! - [`sdc`]: the constrained sweep (SDC-C), the semi- and fully-integrating
//!   sweeps, the direct collocation solve and the time loop.
//! - [`analysis`]: iteration matrices, stiff limits and order studies.
//!
//! ```
//! use dae_sdc::prelude::*;
//!
//! let problem = LinearDae::new();
//! let config = IntegrationConfig::new(6, QDeltaKind::Lu, SweepVariant::Constrained, 0.5, 1.0)
//!     .with_controller(StepController::new(1e-12, 100));
//! let record = integrate(&problem, &config).unwrap();
//! assert!(record.linf_error().unwrap() < 1e-8);
//! ```

pub mod analysis;
pub mod collocation;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod sdc;

pub use error::{Result, SdcError};

/// Crate version, echoed into run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use rustfft::num_complex::Complex64;

pub mod prelude {
    pub use crate::analysis::{
        iteration_matrix_linear, order_study, stiff_limit_matrix, Formulation, IterationMatrixReport, OrderEstimate,
        OrderStudyConfig,
    };
    pub use crate::collocation::{CollocationScheme, QDeltaKind, QDeltaMatrix};
    pub use crate::error::{Result, SdcError};
    pub use crate::problems::{LinearDae, ReactionDiffusion, SemiExplicitDae, StiffScalar};
    pub use crate::sdc::{
        integrate, run_step, IntegrationConfig, NewtonTolerance, RunRecord, StepController, StepRecord, SweepVariant,
    };
}
