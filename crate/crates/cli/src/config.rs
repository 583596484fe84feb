use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use dae_sdc::analysis::Formulation;
use dae_sdc::collocation::MinSrOptions;
use dae_sdc::prelude::{NewtonTolerance, QDeltaKind, ReactionDiffusion, SdcError, SemiExplicitDae, SweepVariant};
use dae_sdc::problems::{self, PROBLEM_NAMES};
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "DAE_SDC_THREADS";
pub const MAX_NODES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Run,
    OrderStudy,
    Spectrum,
    ConstraintHistory,
}

/// Spectral deferred corrections for semi-explicit index-1 DAEs.
///
/// Writes one CSV (to `--out`, or stdout) and, next to it, a JSON sidecar
/// with the resolved configuration.
#[derive(Debug, Parser)]
#[command(name = "dae-sdc", version)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub problem: Option<String>,
    /// sdc-c, si-sdc, fi-sdc or collocation.
    #[arg(long)]
    pub variant: Option<String>,
    /// ie, ee, picard, lu, min-sr-s or min-sr-ns.
    #[arg(long)]
    pub qdelta: Option<String>,
    /// Number of collocation nodes.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Step size; a comma-separated list in order-study mode.
    #[arg(long, value_delimiter = ',')]
    pub dt: Option<Vec<f64>>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub e_tol: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Largest sweep count in order-study mode (studies k = 0..=K).
    #[arg(long)]
    pub k: Option<usize>,
    /// Fixed absolute Newton tolerance.
    #[arg(long)]
    pub newton_tol: Option<f64>,
    /// Step-coupled Newton tolerance `ref_tol,ref_dt`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub newton_coupled: Option<Vec<f64>>,
    /// Worker threads for diagonal sweeps; falls back to DAE_SDC_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// MIN-SR coefficients file to use instead of the optimizer.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    /// Seed for the MIN-SR optimizer starts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points of the reaction-diffusion problem.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Stiffness parameter of the stiff-scalar problem.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// constrained or mass-matrix (spectrum mode).
    #[arg(long)]
    pub formulation: Option<String>,
    /// Write zeros for all timings so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// Read the whole configuration from a JSON file; no other flags allowed.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Everything a run needs, as given on the command line or in `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: String,
    pub variant: String,
    pub qdelta: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub dt: Vec<f64>,
    pub t_end: Option<f64>,
    pub e_tol: f64,
    pub k_max: usize,
    pub k: Option<usize>,
    pub newton_tol: Option<f64>,
    pub newton_coupled: Option<[f64; 2]>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub coeffs: Option<PathBuf>,
    pub seed: u64,
    pub grid_size: usize,
    pub epsilon: f64,
    pub formulation: String,
    pub no_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Run,
            problem: "linear".into(),
            variant: "sdc-c".into(),
            qdelta: "lu".into(),
            m: 3,
            dt: Vec::new(),
            t_end: None,
            e_tol: 1e-12,
            k_max: 100,
            k: None,
            newton_tol: None,
            newton_coupled: None,
            threads: None,
            out: None,
            coeffs: None,
            seed: MinSrOptions::default().seed,
            grid_size: ReactionDiffusion::DEFAULT_GRID,
            epsilon: 0.0,
            formulation: "constrained".into(),
            no_timing: false,
        }
    }
}

/// Problem with the configuration: exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, ConfigError> {
        let d = RunConfig::default();
        let newton_coupled = match cli.newton_coupled {
            None => None,
            Some(v) if v.len() == 2 => Some([v[0], v[1]]),
            Some(v) => {
                return Err(bad(format!(
                    "--newton-coupled takes ref_tol,ref_dt, got {} values",
                    v.len()
                )))
            }
        };
        Ok(Self {
            mode: cli.mode.unwrap_or(d.mode),
            problem: cli.problem.unwrap_or(d.problem),
            variant: cli.variant.unwrap_or(d.variant),
            qdelta: cli.qdelta.unwrap_or(d.qdelta),
            m: cli.m.unwrap_or(d.m),
            dt: cli.dt.unwrap_or_default(),
            t_end: cli.t_end,
            e_tol: cli.e_tol.unwrap_or(d.e_tol),
            k_max: cli.k_max.unwrap_or(d.k_max),
            k: cli.k,
            newton_tol: cli.newton_tol,
            newton_coupled,
            threads: cli.threads,
            out: cli.out,
            coeffs: cli.coeffs,
            seed: cli.seed.unwrap_or(d.seed),
            grid_size: cli.grid_size.unwrap_or(d.grid_size),
            epsilon: cli.epsilon.unwrap_or(d.epsilon),
            formulation: cli.formulation.unwrap_or(d.formulation),
            no_timing: cli.no_timing,
        })
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// Checks every field and parses the named choices.
    pub fn resolve(mut self) -> Result<Resolved, ConfigError> {
        if !PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(bad(format!(
                "unknown problem '{}', expected one of: {}",
                self.problem,
                PROBLEM_NAMES.join(", ")
            )));
        }
        let variant: SweepVariant = self.variant.parse().map_err(|e: SdcError| bad(e.to_string()))?;
        let kind: QDeltaKind = self.qdelta.parse().map_err(|e: SdcError| bad(e.to_string()))?;
        let formulation = match self.formulation.as_str() {
            "constrained" => Formulation::Constrained,
            "mass-matrix" => Formulation::MassMatrix,
            other => {
                return Err(bad(format!(
                    "unknown formulation '{other}', expected one of: constrained, mass-matrix"
                )))
            }
        };
        if !(1..=MAX_NODES).contains(&self.m) {
            return Err(bad(format!("--M must be in 1..={MAX_NODES}, got {}", self.m)));
        }
        if self.dt.is_empty() {
            return Err(bad("--dt is required"));
        }
        if let Some(bad_dt) = self.dt.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(bad(format!("--dt values must be positive, got {bad_dt}")));
        }
        if self.mode != Mode::OrderStudy && self.dt.len() != 1 {
            return Err(bad("a list of --dt values is only accepted in order-study mode"));
        }
        if self.mode == Mode::Run && self.t_end.is_none() {
            return Err(bad("--t-end is required in run mode"));
        }
        if !(self.e_tol > 0.0) {
            return Err(bad(format!("--e-tol must be positive, got {}", self.e_tol)));
        }
        if self.k_max == 0 {
            return Err(bad("--k-max must be at least 1"));
        }

        let newton = match (self.newton_tol, self.newton_coupled) {
            (Some(_), Some(_)) => return Err(bad("--newton-tol and --newton-coupled are mutually exclusive")),
            (Some(tol), None) => Some(NewtonTolerance::Fixed { tol }),
            (None, Some([tol_ref, dt_ref])) => Some(NewtonTolerance::Coupled { tol_ref, dt_ref }),
            (None, None) => None,
        };
        if let Some(p) = &newton {
            p.validate().map_err(|e| bad(e.to_string()))?;
        }

        let threads = match self.threads {
            Some(t) => t,
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
                Err(_) => 1,
            },
        };
        if threads == 0 {
            return Err(bad("--threads must be at least 1"));
        }
        self.threads = Some(threads);

        if let Some(out) = &self.out {
            if out.extension().is_some_and(|e| e == "json") {
                return Err(bad(
                    "--out must not end in .json, that name is used for the metadata sidecar",
                ));
            }
        }

        let problem = problems::by_name(&self.problem, self.grid_size, self.epsilon).map_err(|e| bad(e.to_string()))?;
        Ok(Resolved {
            variant,
            kind,
            formulation,
            newton,
            threads,
            problem,
            config: self,
        })
    }
}

/// A validated configuration with its choices parsed.
pub struct Resolved {
    pub config: RunConfig,
    pub variant: SweepVariant,
    pub kind: QDeltaKind,
    pub formulation: Formulation,
    pub newton: Option<NewtonTolerance>,
    pub threads: usize,
    pub problem: Box<dyn SemiExplicitDae>,
}

impl Resolved {
    pub fn minsr(&self) -> MinSrOptions {
        MinSrOptions {
            seed: self.config.seed,
            ..MinSrOptions::default()
        }
    }

    pub fn dt(&self) -> f64 {
        self.config.dt[0]
    }
}
