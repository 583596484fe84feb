use super::{JacobianBlocks, LinearCoefficients, Part, SemiExplicitDae, VariableGroup};
use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;

/// `eps z' = z`. For `eps > 0` the unknown is differential; at `eps = 0`
/// only the algebraic equation `0 = z` remains.
#[derive(Debug, Clone)]
pub struct StiffScalar {
    epsilon: f64,
    z0: f64,
}

impl StiffScalar {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(SdcError::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        let z0 = if epsilon > 0.0 { 1.0 } else { 0.0 };
        Ok(Self { epsilon, z0 })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_algebraic(&self) -> bool {
        self.epsilon == 0.0
    }
}

impl SemiExplicitDae for StiffScalar {
    fn name(&self) -> &str {
        "stiff-scalar"
    }

    fn n_diff(&self) -> usize {
        usize::from(!self.is_algebraic())
    }

    fn n_alg(&self) -> usize {
        usize::from(self.is_algebraic())
    }

    fn initial_values(&self) -> (Vec<f64>, Vec<f64>) {
        if self.is_algebraic() {
            (vec![], vec![self.z0])
        } else {
            (vec![self.z0], vec![])
        }
    }

    fn f(&self, y: &[f64], _z: &[f64], _t: f64, out: &mut [f64]) {
        if !self.is_algebraic() {
            out[0] = y[0] / self.epsilon;
        }
    }

    fn g(&self, _y: &[f64], z: &[f64], _t: f64, out: &mut [f64]) {
        if self.is_algebraic() {
            out[0] = z[0];
        }
    }

    fn jacobian(&self, _y: &[f64], _z: &[f64], _t: f64) -> JacobianBlocks {
        let (nd, na) = (self.n_diff(), self.n_alg());
        let mut blocks = JacobianBlocks {
            fy: DenseMatrix::zeros(nd, nd),
            fz: DenseMatrix::zeros(nd, na),
            gy: DenseMatrix::zeros(na, nd),
            gz: DenseMatrix::zeros(na, na),
        };
        if self.is_algebraic() {
            blocks.gz[(0, 0)] = 1.0;
        } else {
            blocks.fy[(0, 0)] = 1.0 / self.epsilon;
        }
        blocks
    }

    fn exact_solution(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_algebraic() {
            Some((vec![], vec![0.0]))
        } else {
            Some((vec![self.z0 * (t / self.epsilon).exp()], vec![]))
        }
    }

    fn linear_coefficients(&self) -> Option<LinearCoefficients> {
        let (nd, na) = (self.n_diff(), self.n_alg());
        let mut a_f = DenseMatrix::zeros(nd, 1);
        let mut a_g = DenseMatrix::zeros(na, 1);
        if self.is_algebraic() {
            a_g[(0, 0)] = 1.0;
        } else {
            a_f[(0, 0)] = 1.0 / self.epsilon;
        }
        Some(LinearCoefficients { a_f, a_g })
    }

    fn variable_groups(&self) -> Vec<VariableGroup> {
        let part = if self.is_algebraic() {
            Part::Algebraic
        } else {
            Part::Differential
        };
        vec![VariableGroup::new("z", part, 0..1)]
    }
}
