use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub const RUN_COLUMNS: &[&str] = &[
    "step",
    "t",
    "err_y",
    "err_z",
    "iterations",
    "max_g_residual",
    "wallclock_s",
];
pub const ORDER_COLUMNS: &[&str] = &["variable", "k", "dt", "error", "slope"];
pub const SPECTRUM_COLUMNS: &[&str] = &["re", "im", "modulus", "spectral_radius"];
pub const HISTORY_COLUMNS: &[&str] = &["iteration", "increment", "max_g_residual", "err_y", "err_z"];

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Header plus rows, comma separated, `\n` line ends.
pub fn render_csv(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: Option<&Path>, columns: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let text = render_csv(columns, rows);
    match path {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(render_csv(ORDER_COLUMNS, &[]), "variable,k,dt,error,slope\n");
    }

    #[test]
    fn missing_values_are_empty_cells() {
        let rows = vec![vec!["1".into(), opt_num(None)]];
        assert_eq!(render_csv(&["a", "b"], &rows), "a,b\n1,\n");
    }
}
