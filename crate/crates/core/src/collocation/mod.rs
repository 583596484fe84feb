//! Collocation nodes, the spectral integration matrix and the family of
//! low-order preconditioner matrices used by the sweeps.
//!
//! All weights are computed on the unit interval first and then scaled by the
//! step size, so rescaling a scheme never changes anything but the factor.

mod minsr;
mod qdelta;

pub use minsr::{CoefficientsFile, MinSrOptions};
pub use qdelta::{CoefficientSource, QDeltaKind, QDeltaMatrix};

use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;

/// Node family of a collocation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NodeFamily {
    /// Right Radau points: the last node coincides with the step end.
    #[serde(rename = "radau-right")]
    RadauRight,
}

/// Collocation rule mapped onto a step interval `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationScheme {
    family: NodeFamily,
    t0: f64,
    t1: f64,
    /// Nodes on the unit interval, last one exactly 1.
    unit_nodes: Vec<f64>,
    unit_q: DenseMatrix,
    unit_weights: Vec<f64>,
    nodes: Vec<f64>,
    substeps: Vec<f64>,
    q: DenseMatrix,
    weights: Vec<f64>,
}

impl CollocationScheme {
    /// Right-Radau collocation with `m` nodes on `[t0, t1]`.
    pub fn radau_right(m: usize, t0: f64, t1: f64) -> Result<Self> {
        check_interval(m, t0, t1)?;
        Ok(Self::radau_right_unit(m)?.remap(t0, t1))
    }

    fn radau_right_unit(m: usize) -> Result<Self> {
        let unit_nodes = radau_right_unit_nodes(m)?;
        let unit_q = integration_matrix(&unit_nodes, 0.0)?;
        let unit_weights = unit_q.row(m - 1).to_vec();
        Ok(Self {
            family: NodeFamily::RadauRight,
            t0: 0.0,
            t1: 1.0,
            nodes: unit_nodes.clone(),
            substeps: substeps(&unit_nodes, 0.0),
            q: unit_q.clone(),
            weights: unit_weights.clone(),
            unit_nodes,
            unit_q,
            unit_weights,
        })
    }

    /// Maps the same rule onto `[t0, t1]`. A zero-length interval is allowed
    /// and yields all-zero weights.
    pub fn remap(&self, t0: f64, t1: f64) -> Self {
        let dt = t1 - t0;
        let m = self.unit_nodes.len();
        let mut nodes: Vec<f64> = self.unit_nodes.iter().map(|c| t0 + c * dt).collect();
        nodes[m - 1] = t1;
        Self {
            family: self.family,
            t0,
            t1,
            substeps: self
                .unit_nodes
                .iter()
                .scan(0.0, |prev, &c| {
                    let d = (c - *prev) * dt;
                    *prev = c;
                    Some(d)
                })
                .collect(),
            nodes,
            q: self.unit_q.scaled(dt),
            weights: self.unit_weights.iter().map(|w| w * dt).collect(),
            unit_nodes: self.unit_nodes.clone(),
            unit_q: self.unit_q.clone(),
            unit_weights: self.unit_weights.clone(),
        }
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodes on the reference interval `(0, 1]`.
    pub fn unit_nodes(&self) -> &[f64] {
        &self.unit_nodes
    }

    /// `tau_m - tau_{m-1}` with `tau_0 = t0`.
    pub fn substeps(&self) -> &[f64] {
        &self.substeps
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn unit_q(&self) -> &DenseMatrix {
        &self.unit_q
    }

    /// End-point quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `u0 + sum_j b_j f_j`.
    pub fn collocation_update(&self, u0: &[f64], f_values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if f_values.len() != self.num_nodes() {
            return Err(SdcError::InvalidArgument(format!(
                "expected {} node values, got {}",
                self.num_nodes(),
                f_values.len()
            )));
        }
        let mut out = u0.to_vec();
        for (b, f) in self.weights.iter().zip(f_values) {
            if f.len() != u0.len() {
                return Err(SdcError::InvalidArgument(format!(
                    "node value has length {}, state has {}",
                    f.len(),
                    u0.len()
                )));
            }
            for (o, v) in out.iter_mut().zip(f) {
                *o += b * v;
            }
        }
        Ok(out)
    }
}

fn check_interval(m: usize, t0: f64, t1: f64) -> Result<()> {
    if m == 0 {
        return Err(SdcError::InvalidArgument("node count must be at least 1".into()));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(SdcError::InvalidArgument(format!(
            "interval [{t0}, {t1}] must satisfy t1 > t0"
        )));
    }
    Ok(())
}

fn substeps(nodes: &[f64], t0: f64) -> Vec<f64> {
    let mut prev = t0;
    nodes
        .iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

/// Legendre polynomials `P_n(x)` and `P_{n-1}(x)`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Right-Radau points on `(0, 1]`: roots of `P_m(x) - P_{m-1}(x)` on
/// `[-1, 1]` mapped by `c = (x + 1) / 2`.
fn radau_right_unit_nodes(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(SdcError::InvalidArgument("node count must be at least 1".into()));
    }
    // x = 1 is always a root; the other m-1 roots are those of
    // (P_m - P_{m-1}) / (x - 1), which is nonzero at the right end.
    let reduced = |x: f64| {
        let (p, q) = legendre_pair(m, x);
        (p - q) / (x - 1.0)
    };
    let samples = 400 * m;
    let right = 1.0 - 1e-3 / (m as f64);
    let mut roots = Vec::with_capacity(m);
    let mut x_prev = -1.0;
    let mut f_prev = reduced(x_prev);
    for i in 1..=samples {
        let x = -1.0 + (right + 1.0) * i as f64 / samples as f64;
        let fx = reduced(x);
        if fx == 0.0 {
            roots.push(x);
        } else if (fx < 0.0) != (f_prev < 0.0) && f_prev != 0.0 {
            roots.push(bisect(reduced, x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    if roots.len() != m - 1 {
        return Err(SdcError::InvalidArgument(format!(
            "found {} interior Radau roots for m = {m}, expected {}",
            roots.len(),
            m - 1
        )));
    }
    let mut nodes: Vec<f64> = roots.into_iter().map(|x| 0.5 * (x + 1.0)).collect();
    nodes.push(1.0);
    Ok(nodes)
}

/// The `m` right-Radau nodes on `(t0, t1]`.
pub fn radau_right_nodes(m: usize, t0: f64, t1: f64) -> Result<Vec<f64>> {
    check_interval(m, t0, t1)?;
    let dt = t1 - t0;
    let mut nodes: Vec<f64> = radau_right_unit_nodes(m)?.into_iter().map(|c| t0 + c * dt).collect();
    nodes[m - 1] = t1;
    Ok(nodes)
}

/// Gauss-Legendre points and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, q) = legendre_pair(n, z);
            let dp = n as f64 * (z * p - q) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (p, q) = legendre_pair(n, z);
        let dp = n as f64 * (z * p - q) / (z * z - 1.0);
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Lagrange basis polynomial `l_j` for `nodes`, evaluated at `s`.
fn lagrange(nodes: &[f64], j: usize, s: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, &ti)| (s - ti) / (nodes[j] - ti))
        .product()
}

/// Spectral integration matrix `q_{m,j} = int_{t0}^{tau_m} l_j(s) ds`.
///
/// Computed in coordinates normalized by `tau_M - t0` with Gauss-Legendre
/// quadrature that is exact for the polynomial degree involved.
pub fn integration_matrix(nodes: &[f64], t0: f64) -> Result<DenseMatrix> {
    let m = nodes.len();
    if m == 0 {
        return Err(SdcError::InvalidArgument("no nodes".into()));
    }
    for w in nodes.windows(2) {
        if w[1] == w[0] {
            return Err(SdcError::InvalidArgument(format!("duplicate node {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(SdcError::InvalidArgument("nodes must be increasing".into()));
        }
    }
    let h = nodes[m - 1] - t0;
    if !(h > 0.0) {
        return Err(SdcError::InvalidArgument("last node must lie right of t0".into()));
    }
    let unit: Vec<f64> = nodes.iter().map(|t| (t - t0) / h).collect();
    let (gx, gw) = gauss_legendre(m.max(2));
    let mut q = DenseMatrix::zeros(m, m);
    for (row, &upper) in unit.iter().enumerate() {
        for j in 0..m {
            let half = 0.5 * upper;
            let integral: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(&x, &w)| w * lagrange(&unit, j, half * (x + 1.0)))
                .sum::<f64>()
                * half;
            q[(row, j)] = integral * h;
        }
    }
    Ok(q)
}

/// End-point weights `b_j = int_{t0}^{t1} l_j(s) ds`.
pub fn end_point_weights(nodes: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
    let m = nodes.len();
    if nodes.last().copied() == Some(t1) {
        return Ok(integration_matrix(nodes, t0)?.row(m - 1).to_vec());
    }
    let scale = t1 - t0;
    let (gx, gw) = gauss_legendre(m.max(2));
    Ok((0..m)
        .map(|j| {
            gx.iter()
                .zip(&gw)
                .map(|(&x, &w)| w * lagrange(nodes, j, t0 + 0.5 * scale * (x + 1.0)))
                .sum::<f64>()
                * 0.5
                * scale
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_is_right_endpoint() {
        assert_eq!(radau_right_nodes(1, 0.0, 1.0).unwrap(), vec![1.0]);
        let q = integration_matrix(&[1.0], 0.0).unwrap();
        assert_eq!(q.as_slice().len(), 1);
        assert!((q[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_nodes() {
        let n = radau_right_nodes(2, 0.0, 1.0).unwrap();
        assert!((n[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(n[1], 1.0);
        let n2 = radau_right_nodes(2, 0.0, 2.0).unwrap();
        assert!((n2[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(n2[1], 2.0);
    }

    #[test]
    fn two_node_matrix_matches_butcher_table() {
        let q = integration_matrix(&[1.0 / 3.0, 1.0], 0.0).unwrap();
        let want = [5.0 / 12.0, -1.0 / 12.0, 3.0 / 4.0, 1.0 / 4.0];
        for (g, w) in q.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn three_node_radau_matches_closed_form() {
        let s6 = 6f64.sqrt();
        let n = radau_right_nodes(3, 0.0, 1.0).unwrap();
        let want = [0.4 - s6 / 10.0, 0.4 + s6 / 10.0, 1.0];
        for (g, w) in n.iter().zip(want) {
            assert!((g - w).abs() < 1e-14);
        }
        let q = integration_matrix(&n, 0.0).unwrap();
        assert!((q[(0, 0)] - (11.0 / 45.0 - 7.0 * s6 / 360.0)).abs() < 1e-14);
        assert!((q[(2, 2)] - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_arguments() {
        assert!(radau_right_nodes(0, 0.0, 1.0).is_err());
        assert!(radau_right_nodes(3, 1.0, 1.0).is_err());
        assert!(CollocationScheme::radau_right(2, 1.0, 0.5).is_err());
        assert!(integration_matrix(&[0.5, 0.5, 1.0], 0.0).is_err());
    }

    #[test]
    fn row_sums_equal_node_offsets() {
        for m in 1..=8 {
            let s = CollocationScheme::radau_right(m, 0.5, 1.75).unwrap();
            for (i, tau) in s.nodes().iter().enumerate() {
                let sum: f64 = s.q().row(i).iter().sum();
                assert!((sum - (tau - 0.5)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn end_weights_equal_last_row() {
        let s = CollocationScheme::radau_right(4, 0.0, 0.3).unwrap();
        assert_eq!(s.weights(), s.q().row(3));
        let b = end_point_weights(s.nodes(), 0.0, 0.3).unwrap();
        for (x, y) in b.iter().zip(s.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
        // interior nodes only: weights still integrate constants exactly
        let b = end_point_weights(&[0.1, 0.2], 0.0, 0.3).unwrap();
        assert!((b.iter().sum::<f64>() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn collocation_update_edge_cases() {
        let s = CollocationScheme::radau_right(3, 0.0, 1.0).unwrap();
        let zero = vec![vec![0.0, 0.0]; 3];
        assert_eq!(s.collocation_update(&[1.0, 2.0], &zero).unwrap(), vec![1.0, 2.0]);
        let c = vec![vec![0.5]; 3];
        let u = s.collocation_update(&[1.0], &c).unwrap();
        assert!((u[0] - 1.5).abs() < 1e-14);
        assert!(s.collocation_update(&[1.0], &c[..2]).is_err());
        assert!(s.collocation_update(&[1.0, 1.0], &c).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i - 2.0 / 9.0).abs() < 1e-14);
    }
}
