mod config;
mod modes;
mod output;

use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches};
use dae_sdc::SdcError;
use serde_json::json;

use config::{Cli, ConfigError, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn parse_args() -> Result<RunConfig, ConfigError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| ConfigError(e.to_string()))?;
    match &cli.config {
        Some(path) => {
            let command = Cli::command();
            let extra: Vec<String> = command
                .get_arguments()
                .filter(|a| a.get_id() != "config")
                .filter(|a| matches.value_source(a.get_id().as_str()) == Some(ValueSource::CommandLine))
                .map(|a| format!("--{}", a.get_long().unwrap_or(a.get_id().as_str())))
                .collect();
            if !extra.is_empty() {
                return Err(ConfigError(format!(
                    "--config cannot be combined with {}",
                    extra.join(", ")
                )));
            }
            RunConfig::from_json_file(path)
        }
        None => RunConfig::from_cli(cli),
    }
}

fn exit_code_for(err: &SdcError) -> u8 {
    match err {
        SdcError::InvalidArgument(_) | SdcError::Coefficients(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let resolved = match parse_args().and_then(RunConfig::resolve) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let out = match modes::execute(&resolved) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    let cfg = &resolved.config;
    if let Err(e) = output::write_csv(cfg.out.as_deref(), out.columns, &out.rows) {
        eprintln!("error: writing CSV: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    if let Some(path) = &cfg.out {
        let meta = json!({
            "config": cfg,
            "newton": resolved.newton,
            "library_version": dae_sdc::VERSION,
            "cli_version": env!("CARGO_PKG_VERSION"),
            "columns": out.columns,
            "rows": out.rows.len(),
            "wallclock_s": if cfg.no_timing { 0.0 } else { out.wallclock_s },
            "summary": out.summary,
        });
        let sidecar = output::sidecar_path(path);
        if let Err(e) = output::write_json(&sidecar, &meta) {
            eprintln!("error: writing {}: {e}", sidecar.display());
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    ExitCode::SUCCESS
}
