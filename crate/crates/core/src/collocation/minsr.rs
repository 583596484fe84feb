//! Diagonal preconditioners that minimize the spectral radius of a limit
//! matrix of the sweep.
//!
//! The search runs a deterministic Nelder-Mead simplex from a fixed set of
//! starting points (analytic candidates plus seeded perturbations), in
//! log-coordinates so every coefficient stays positive. The best simplex
//! results are then polished by Newton's method on the characteristic
//! polynomial of the limit matrix, whose roots all vanish exactly when the
//! limit matrix is nilpotent. A polished point replaces the simplex result
//! only if its spectral radius is lower.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qdelta::{lu_trick, QDeltaKind};
use super::{CollocationScheme, NodeFamily};
use crate::error::{Result, SdcError};
use crate::linalg::{eigenvalues, DenseMatrix, LuFactorization};

/// Settings of the MIN-SR coefficient search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinSrOptions {
    pub seed: u64,
    /// Total number of simplex starts, analytic candidates included.
    pub starts: usize,
    /// Stop when the best objective changed by less than this ...
    pub objective_tol: f64,
    /// ... over this many consecutive iterations.
    pub stall_window: usize,
    pub max_iterations: usize,
}

impl Default for MinSrOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            starts: 32,
            objective_tol: 1e-12,
            stall_window: 50,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MinSrResult {
    pub diagonal: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    /// The analytic candidate was not beaten.
    pub analytic: bool,
}

/// Spectral radius of the limit matrix the kind is designed for.
pub(crate) fn objective(kind: QDeltaKind, q: &DenseMatrix, d: &[f64]) -> f64 {
    match limit_matrix(kind, q, d) {
        Some(a) => eigenvalues(&a).map(|s| s.spectral_radius).unwrap_or(f64::INFINITY),
        None => f64::INFINITY,
    }
}

fn limit_matrix(kind: QDeltaKind, q: &DenseMatrix, d: &[f64]) -> Option<DenseMatrix> {
    let m = q.rows();
    if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return None;
    }
    Some(match kind {
        QDeltaKind::MinSrS => DenseMatrix::from_fn(m, m, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - q[(i, j)] / d[i]
        }),
        QDeltaKind::MinSrNs => DenseMatrix::from_fn(m, m, |i, j| q[(i, j)] - if i == j { d[i] } else { 0.0 }),
        _ => unreachable!("limit matrix requested for {kind}"),
    })
}

type CacheKey = (QDeltaKind, usize, u64, usize, usize);

fn cache() -> &'static Mutex<HashMap<CacheKey, MinSrResult>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, MinSrResult>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Finds the diagonal for `kind` on the unit interval with nodes `c`.
pub(crate) fn optimize(kind: QDeltaKind, c: &[f64], q: &DenseMatrix, opts: &MinSrOptions) -> Result<MinSrResult> {
    let m = c.len();
    let key = (kind, m, opts.seed, opts.starts, opts.max_iterations);
    if let Some(hit) = cache().lock().expect("MIN-SR cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let result = search(kind, c, q, opts)?;
    cache()
        .lock()
        .expect("MIN-SR cache poisoned")
        .insert(key, result.clone());
    Ok(result)
}

fn search(kind: QDeltaKind, c: &[f64], q: &DenseMatrix, opts: &MinSrOptions) -> Result<MinSrResult> {
    let m = c.len();
    let analytic: Vec<f64> = c.iter().map(|t| t / m as f64).collect();
    let mut bases: Vec<Vec<f64>> = vec![
        analytic.clone(),
        c.iter().enumerate().map(|(i, t)| t / (i + 1) as f64).collect(),
        lu_trick(q)?.diagonal(),
        {
            let mut prev = 0.0;
            c.iter()
                .map(|&x| {
                    let d = x - prev;
                    prev = x;
                    d
                })
                .collect()
        },
        c.to_vec(),
    ];
    bases.retain(|b| b.iter().all(|v| *v > 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = bases.clone();
    let mut i = 0;
    while starts.len() < opts.starts.max(1) {
        let base = &bases[i % bases.len()];
        starts.push(base.iter().map(|v| v * rng.gen_range(-1.0f64..1.0).exp()).collect());
        i += 1;
    }
    starts.truncate(opts.starts.max(1));

    let f = |x: &[f64]| {
        let d: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        objective(kind, q, &d)
    };

    let mut runs: Vec<(Vec<f64>, f64, bool)> = starts
        .iter()
        .map(|s| {
            let x0: Vec<f64> = s.iter().map(|v| v.ln()).collect();
            nelder_mead(&f, &x0, opts)
        })
        .collect();
    runs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

    let (best_x, mut best_obj, mut converged) = runs[0].clone();
    let mut best: Vec<f64> = best_x.iter().map(|v| v.exp()).collect();

    let mut candidates: Vec<Vec<f64>> = runs
        .iter()
        .take(8)
        .map(|r| r.0.iter().map(|v| v.exp()).collect())
        .collect();
    candidates.push(analytic.clone());
    for cand in candidates {
        if let Some(p) = polish(kind, q, &cand) {
            let obj = objective(kind, q, &p);
            if obj < best_obj {
                best_obj = obj;
                best = p;
                converged = true;
            }
        }
    }

    let analytic_obj = objective(kind, q, &analytic);
    if kind == QDeltaKind::MinSrNs && analytic_obj <= best_obj {
        return Ok(MinSrResult {
            diagonal: analytic,
            objective: analytic_obj,
            converged: true,
            analytic: true,
        });
    }
    Ok(MinSrResult {
        diagonal: best,
        objective: best_obj,
        converged,
        analytic: false,
    })
}

/// Minimizes `f` from `x0`. Returns (point, value, converged).
fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], opts: &MinSrOptions) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += 0.1;
        let v = f(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    order(&mut simplex);

    let mut history = vec![simplex[0].1];
    for iter in 0..opts.max_iterations {
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = f(&x);
                    *p = (x, v);
                }
            }
        }
        order(&mut simplex);
        history.push(simplex[0].1);
        if iter >= opts.stall_window {
            let old = history[history.len() - 1 - opts.stall_window];
            if (old - simplex[0].1).abs() < opts.objective_tol {
                return (simplex[0].0.clone(), simplex[0].1, true);
            }
        }
    }
    (simplex[0].0.clone(), simplex[0].1, false)
}

/// Coefficients `c_{n-1}, ..., c_0` of the characteristic polynomial
/// (Faddeev-LeVerrier).
fn char_poly_tail(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = DenseMatrix::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        let mut next = a.matmul(&mk);
        for i in 0..n {
            next[(i, i)] += c_prev;
        }
        let amk = a.matmul(&next);
        let tr: f64 = (0..n).map(|i| amk[(i, i)]).sum();
        let ck = -tr / k as f64;
        coeffs.push(ck);
        mk = next;
        c_prev = ck;
    }
    coeffs
}

/// Newton on the nilpotency conditions, in log-coordinates.
fn polish(kind: QDeltaKind, q: &DenseMatrix, d0: &[f64]) -> Option<Vec<f64>> {
    let n = d0.len();
    let residual = |x: &[f64]| -> Option<Vec<f64>> {
        let d: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        limit_matrix(kind, q, &d).map(|a| char_poly_tail(&a))
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x: Vec<f64> = d0.iter().map(|v| v.ln()).collect();
    let mut r = residual(&x)?;
    for _ in 0..60 {
        if norm(&r) < 1e-15 {
            break;
        }
        let h = 1e-7;
        let mut jac = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let rp = residual(&xp)?;
            let rm = residual(&xm)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = LuFactorization::new(&jac).ok()?.solve(&r).ok()?;
        let mut lambda = 1.0;
        let current = norm(&r);
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
            if let Some(rt) = residual(&trial) {
                if norm(&rt) < current {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(&r) < 1e-10 {
        Some(x.iter().map(|v| v.exp()).collect())
    } else {
        None
    }
}

/// JSON sidecar holding unit-interval MIN-SR coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsFile {
    #[serde(rename = "M")]
    pub m: usize,
    pub family: NodeFamily,
    pub kind: String,
    pub diagonal: Vec<f64>,
}

impl CoefficientsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| SdcError::Coefficients(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SdcError::Coefficients(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| SdcError::Coefficients(e.to_string()))?;
        fs::write(path, text).map_err(|e| SdcError::Coefficients(format!("cannot write {}: {e}", path.display())))
    }

    /// Checks the file against a scheme and returns its kind.
    pub fn validate_for(&self, scheme: &CollocationScheme) -> Result<QDeltaKind> {
        let kind: QDeltaKind = self
            .kind
            .parse()
            .map_err(|_| SdcError::Coefficients(format!("unknown kind '{}'", self.kind)))?;
        if !matches!(kind, QDeltaKind::MinSrS | QDeltaKind::MinSrNs) {
            return Err(SdcError::Coefficients(format!(
                "kind must be MIN-SR-S or MIN-SR-NS, got {}",
                self.kind
            )));
        }
        if self.family != scheme.family() {
            return Err(SdcError::Coefficients("node family mismatch".into()));
        }
        if self.m != scheme.num_nodes() || self.diagonal.len() != self.m {
            return Err(SdcError::Coefficients(format!(
                "file holds M = {} with {} entries, scheme has {} nodes",
                self.m,
                self.diagonal.len(),
                scheme.num_nodes()
            )));
        }
        if self.diagonal.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SdcError::Coefficients("diagonal entries must be positive".into()));
        }
        Ok(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{CoefficientSource, QDeltaMatrix};

    #[test]
    fn non_stiff_analytic_candidate_is_nilpotent_for_two_nodes() {
        let s = CollocationScheme::radau_right(2, 0.0, 1.0).unwrap();
        let d = [1.0 / 6.0, 0.5];
        let tail = char_poly_tail(&limit_matrix(QDeltaKind::MinSrNs, s.unit_q(), &d).unwrap());
        assert!(tail.iter().all(|c| c.abs() < 1e-15), "{tail:?}");
    }

    #[test]
    fn char_poly_of_diagonal() {
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let c = char_poly_tail(&a);
        let want = [-6.0, 11.0, -6.0];
        for (x, y) in c.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn optimizer_is_deterministic() {
        let s = CollocationScheme::radau_right(4, 0.0, 1.0).unwrap();
        let opts = MinSrOptions {
            seed: 99,
            starts: 8,
            ..MinSrOptions::default()
        };
        let a = search(QDeltaKind::MinSrS, s.unit_nodes(), s.unit_q(), &opts).unwrap();
        let b = search(QDeltaKind::MinSrS, s.unit_nodes(), s.unit_q(), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.diagonal.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn nelder_mead_on_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let (x, v, conv) = nelder_mead(&f, &[0.0, 0.0], &MinSrOptions::default());
        assert!(conv);
        assert!(v < 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn coefficient_file_round_trip_and_validation() {
        let s = CollocationScheme::radau_right(3, 0.0, 0.1).unwrap();
        let qd = QDeltaMatrix::new(QDeltaKind::MinSrNs, &s).unwrap();
        let file = qd.to_coefficients_file().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.json");
        file.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"M\": 3") && text.contains("radau-right") && text.contains("MIN-SR-NS"));
        let loaded = QDeltaMatrix::from_file(&path, &s).unwrap();
        assert_eq!(loaded.matrix(), qd.matrix());
        assert_eq!(loaded.source(), &CoefficientSource::LoadedFromFile);

        let s4 = CollocationScheme::radau_right(4, 0.0, 0.1).unwrap();
        assert!(QDeltaMatrix::from_file(&path, &s4).is_err());
        let bad = CoefficientsFile {
            kind: "LU".into(),
            ..file.clone()
        };
        assert!(bad.validate_for(&s).is_err());
        let neg = CoefficientsFile {
            diagonal: vec![0.1, -0.2, 0.3],
            ..file
        };
        assert!(neg.validate_for(&s).is_err());
    }
}
