use super::{JacobianBlocks, LinearCoefficients, SemiExplicitDae};
use crate::linalg::DenseMatrix;

/// `y' = -2y + z`, `0 = -2y - z` with `y(0) = 1`, `z(0) = -2`.
///
/// On the constraint manifold this is `y' = -4y`, so `y = e^{-4t}` and
/// `z = -2 e^{-4t}`.
#[derive(Debug, Clone, Default)]
pub struct LinearDae;

impl LinearDae {
    pub fn new() -> Self {
        Self
    }
}

impl SemiExplicitDae for LinearDae {
    fn name(&self) -> &str {
        "linear"
    }

    fn n_diff(&self) -> usize {
        1
    }

    fn n_alg(&self) -> usize {
        1
    }

    fn initial_values(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![-2.0])
    }

    fn f(&self, y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = -2.0 * y[0] + z[0];
    }

    fn g(&self, y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = -2.0 * y[0] - z[0];
    }

    fn jacobian(&self, _y: &[f64], _z: &[f64], _t: f64) -> JacobianBlocks {
        let one = |v: f64| DenseMatrix::from_diagonal(&[v]);
        JacobianBlocks {
            fy: one(-2.0),
            fz: one(1.0),
            gy: one(-2.0),
            gz: one(-1.0),
        }
    }

    fn exact_solution(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let e = (-4.0 * t).exp();
        Some((vec![e], vec![-2.0 * e]))
    }

    fn linear_coefficients(&self) -> Option<LinearCoefficients> {
        Some(LinearCoefficients {
            a_f: DenseMatrix::from_rows(&[vec![-2.0, 1.0]]).unwrap(),
            a_g: DenseMatrix::from_rows(&[vec![-2.0, -1.0]]).unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_values() {
        let p = LinearDae::new();
        assert_eq!(p.exact_solution(0.0).unwrap(), (vec![1.0], vec![-2.0]));
        let (y, z) = p.exact_solution(1.0).unwrap();
        assert!((y[0] - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert!((z[0] + 0.036_631_277_777_468_36).abs() < 1e-15);
        assert_eq!(p.eval_g(&[1.0], &[-2.0], 0.0), vec![0.0]);
    }
}
