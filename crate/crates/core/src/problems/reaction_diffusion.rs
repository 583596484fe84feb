use std::f64::consts::PI;

use super::fourier::SpectralOperators;
use super::{JacobianBlocks, Part, SemiExplicitDae, VariableGroup};
use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;

const AMP_U: f64 = -1.0;
const AMP_V: f64 = -1.0;

/// Periodic reaction-diffusion PDAE on `[0, 1)`:
///
/// ```text
/// u_t = u_xx + u w_x + s_u
/// v_t = v_xx - v w_x + s_v
///   0 = -u - v - w_xx
/// ```
///
/// with sources manufactured from `u = A sin(2 pi x) e^t`,
/// `v = B sin(2 pi x) e^t`, `w = (A + B)/(4 pi^2) sin(2 pi x) e^t`, `A = B = -1`.
///
/// `w` is only fixed up to a constant by the Laplacian, so the constraint
/// handed to the solvers also pins the mean: the zero mode of
/// `-u - v - w_xx` is replaced by `mean(w)`. Both forms agree whenever
/// `mean(u + v) = 0` and `mean(w) = 0`, which holds for the exact solution.
#[derive(Debug, Clone)]
pub struct ReactionDiffusion {
    n: usize,
    x: Vec<f64>,
    ops: SpectralOperators,
    d1: DenseMatrix,
    d2: DenseMatrix,
}

impl ReactionDiffusion {
    pub const DEFAULT_GRID: usize = 256;

    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(SdcError::InvalidArgument(format!(
                "grid size must be a power of two >= 2, got {n}"
            )));
        }
        let ops = SpectralOperators::new(n)?;
        let d1 = ops.d1_matrix();
        let d2 = ops.d2_matrix();
        let x = (0..n).map(|i| i as f64 / n as f64).collect();
        Ok(Self { n, x, ops, d1, d2 })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn operators(&self) -> &SpectralOperators {
        &self.ops
    }

    pub fn w_amplitude() -> f64 {
        (AMP_U + AMP_V) / (4.0 * PI * PI)
    }

    /// `-u - v - w_xx` without the zero-mode replacement.
    pub fn raw_constraint(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let mut wxx = vec![0.0; self.n];
        self.ops.d2(w, &mut wxx);
        (0..self.n).map(|i| -u[i] - v[i] - wxx[i]).collect()
    }

    /// Solves the raw constraint for the zero-mean `w`.
    pub fn solve_constraint(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = u.iter().zip(v).map(|(a, b)| -(a + b)).collect();
        self.ops.inverse_laplacian(&rhs)
    }

    fn sources(&self, t: f64, su: &mut [f64], sv: &mut [f64]) {
        let (e1, e2) = (t.exp(), (2.0 * t).exp());
        let lap = 1.0 + 4.0 * PI * PI;
        let c = (AMP_U + AMP_V) / (2.0 * PI);
        for (i, &x) in self.x.iter().enumerate() {
            let s = (2.0 * PI * x).sin();
            let co = (2.0 * PI * x).cos();
            su[i] = AMP_U * lap * s * e1 - AMP_U * c * s * co * e2;
            sv[i] = AMP_V * lap * s * e1 + AMP_V * c * s * co * e2;
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

impl SemiExplicitDae for ReactionDiffusion {
    fn name(&self) -> &str {
        "reaction-diffusion"
    }

    fn n_diff(&self) -> usize {
        2 * self.n
    }

    fn n_alg(&self) -> usize {
        self.n
    }

    fn initial_values(&self) -> (Vec<f64>, Vec<f64>) {
        self.exact_solution(0.0).unwrap()
    }

    fn f(&self, y: &[f64], z: &[f64], t: f64, out: &mut [f64]) {
        let n = self.n;
        let (u, v) = y.split_at(n);
        let (fu, fv) = out.split_at_mut(n);
        let mut wx = vec![0.0; n];
        let mut uxx = vec![0.0; n];
        let mut vxx = vec![0.0; n];
        self.ops.d1(z, &mut wx);
        self.ops.d2(u, &mut uxx);
        self.ops.d2(v, &mut vxx);
        self.sources(t, fu, fv);
        for i in 0..n {
            fu[i] += uxx[i] + u[i] * wx[i];
            fv[i] += vxx[i] - v[i] * wx[i];
        }
    }

    fn g(&self, y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        let n = self.n;
        let (u, v) = y.split_at(n);
        let mut wxx = vec![0.0; n];
        self.ops.d2(z, &mut wxx);
        let shift = mean(u) + mean(v) + mean(z);
        for i in 0..n {
            out[i] = -u[i] - v[i] - wxx[i] + shift;
        }
    }

    fn jacobian(&self, y: &[f64], z: &[f64], _t: f64) -> JacobianBlocks {
        let n = self.n;
        let (u, v) = y.split_at(n);
        let wx = self.d1.matvec(z);
        let inv_n = 1.0 / n as f64;

        let mut fy = DenseMatrix::zeros(2 * n, 2 * n);
        fy.set_block(0, 0, &self.d2);
        fy.set_block(n, n, &self.d2);
        for i in 0..n {
            fy[(i, i)] += wx[i];
            fy[(n + i, n + i)] -= wx[i];
        }

        let mut fz = DenseMatrix::zeros(2 * n, n);
        for i in 0..n {
            let row = self.d1.row(i);
            for j in 0..n {
                fz[(i, j)] = u[i] * row[j];
                fz[(n + i, j)] = -v[i] * row[j];
            }
        }

        let centering = DenseMatrix::from_fn(n, n, |i, j| if i == j { inv_n - 1.0 } else { inv_n });
        let mut gy = DenseMatrix::zeros(n, 2 * n);
        gy.set_block(0, 0, &centering);
        gy.set_block(0, n, &centering);

        let gz = DenseMatrix::from_fn(n, n, |i, j| inv_n - self.d2[(i, j)]);
        JacobianBlocks { fy, fz, gy, gz }
    }

    fn exact_solution(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let e = t.exp();
        let s: Vec<f64> = self.x.iter().map(|&x| (2.0 * PI * x).sin() * e).collect();
        let mut y: Vec<f64> = s.iter().map(|v| AMP_U * v).collect();
        y.extend(s.iter().map(|v| AMP_V * v));
        let z = s.iter().map(|v| Self::w_amplitude() * v).collect();
        Some((y, z))
    }

    fn variable_groups(&self) -> Vec<VariableGroup> {
        let n = self.n;
        vec![
            VariableGroup::new("u", Part::Differential, 0..n),
            VariableGroup::new("v", Part::Differential, n..2 * n),
            VariableGroup::new("w", Part::Algebraic, 0..n),
        ]
    }
}
