//! Semi-explicit DAEs `y' = f(y, z, t)`, `0 = g(y, z, t)` and the shipped
//! test problems.

mod fourier;
mod linear;
mod reaction_diffusion;
mod stiff;

use std::ops::Range;

use crate::error::{Result, SdcError};
use crate::linalg::{DenseMatrix, LuFactorization};
use crate::sdc::newton::{newton_solve, NewtonOptions};

pub use fourier::{dft, idft, SpectralOperators};
pub use linear::LinearDae;
pub use reaction_diffusion::ReactionDiffusion;
pub use stiff::StiffScalar;

/// Names accepted by [`by_name`].
pub const PROBLEM_NAMES: [&str; 3] = ["linear", "stiff-scalar", "reaction-diffusion"];

/// Whether a variable group lives in `y` or `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Differential,
    Algebraic,
}

/// A named slice of the differential or algebraic unknowns, used for
/// per-variable error reporting (`u`, `v`, `w` for the PDAE).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableGroup {
    pub name: String,
    pub part: Part,
    pub range: Range<usize>,
}

impl VariableGroup {
    pub fn new(name: &str, part: Part, range: Range<usize>) -> Self {
        Self {
            name: name.to_string(),
            part,
            range,
        }
    }
}

/// The four Jacobian blocks `df/dy`, `df/dz`, `dg/dy`, `dg/dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub fy: DenseMatrix,
    pub fz: DenseMatrix,
    pub gy: DenseMatrix,
    pub gz: DenseMatrix,
}

/// Constant matrices of a linear problem acting on `u = (y, z)`:
/// `f = a_f u`, `g = a_g u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficients {
    pub a_f: DenseMatrix,
    pub a_g: DenseMatrix,
}

pub trait SemiExplicitDae: Send + Sync {
    fn name(&self) -> &str;

    fn n_diff(&self) -> usize;

    fn n_alg(&self) -> usize;

    fn t0(&self) -> f64 {
        0.0
    }

    fn initial_values(&self) -> (Vec<f64>, Vec<f64>);

    fn f(&self, y: &[f64], z: &[f64], t: f64, out: &mut [f64]);

    fn g(&self, y: &[f64], z: &[f64], t: f64, out: &mut [f64]);

    fn jacobian(&self, y: &[f64], z: &[f64], t: f64) -> JacobianBlocks {
        finite_difference_jacobian(self, y, z, t)
    }

    fn exact_solution(&self, _t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn linear_coefficients(&self) -> Option<LinearCoefficients> {
        None
    }

    fn variable_groups(&self) -> Vec<VariableGroup> {
        let mut groups = Vec::new();
        if self.n_diff() > 0 {
            groups.push(VariableGroup::new("y", Part::Differential, 0..self.n_diff()));
        }
        if self.n_alg() > 0 {
            groups.push(VariableGroup::new("z", Part::Algebraic, 0..self.n_alg()));
        }
        groups
    }

    fn eval_f(&self, y: &[f64], z: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_diff()];
        self.f(y, z, t, &mut out);
        out
    }

    fn eval_g(&self, y: &[f64], z: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_alg()];
        self.g(y, z, t, &mut out);
        out
    }
}

/// Central differences with step `1e-7 * (1 + ||(y, z)||_inf)`.
pub fn finite_difference_jacobian<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    y: &[f64],
    z: &[f64],
    t: f64,
) -> JacobianBlocks {
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    let scale = y.iter().chain(z).fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-7 * (1.0 + scale);

    let mut fy = DenseMatrix::zeros(nd, nd);
    let mut fz = DenseMatrix::zeros(nd, na);
    let mut gy = DenseMatrix::zeros(na, nd);
    let mut gz = DenseMatrix::zeros(na, na);

    let mut fp = vec![0.0; nd];
    let mut fm = vec![0.0; nd];
    let mut gp = vec![0.0; na];
    let mut gm = vec![0.0; na];

    let mut yy = y.to_vec();
    for j in 0..nd {
        yy[j] = y[j] + h;
        problem.f(&yy, z, t, &mut fp);
        problem.g(&yy, z, t, &mut gp);
        yy[j] = y[j] - h;
        problem.f(&yy, z, t, &mut fm);
        problem.g(&yy, z, t, &mut gm);
        yy[j] = y[j];
        for i in 0..nd {
            fy[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        for i in 0..na {
            gy[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let mut zz = z.to_vec();
    for j in 0..na {
        zz[j] = z[j] + h;
        problem.f(y, &zz, t, &mut fp);
        problem.g(y, &zz, t, &mut gp);
        zz[j] = z[j] - h;
        problem.f(y, &zz, t, &mut fm);
        problem.g(y, &zz, t, &mut gm);
        zz[j] = z[j];
        for i in 0..nd {
            fz[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        for i in 0..na {
            gz[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    JacobianBlocks { fy, fz, gy, gz }
}

/// `z = G(y, t)` defined implicitly by `g(y, G(y, t), t) = 0`.
pub struct ImplicitFunctionMap<'a, P: SemiExplicitDae + ?Sized> {
    problem: &'a P,
    options: NewtonOptions,
}

impl<'a, P: SemiExplicitDae + ?Sized> ImplicitFunctionMap<'a, P> {
    pub fn new(problem: &'a P) -> Self {
        Self {
            problem,
            options: NewtonOptions::default(),
        }
    }

    pub fn with_options(problem: &'a P, options: NewtonOptions) -> Self {
        Self { problem, options }
    }

    /// Solves for `z` by damped Newton starting from `guess`.
    pub fn solve(&self, y: &[f64], t: f64, guess: &[f64]) -> Result<Vec<f64>> {
        let mut z = guess.to_vec();
        let outcome = newton_solve(
            &mut z,
            |z, out| self.problem.g(y, z, t, out),
            |z| Ok(self.problem.jacobian(y, z, t).gz),
            &self.options,
        )?;
        if !outcome.converged {
            return Err(SdcError::NodeSolveFailure {
                node: 0,
                iteration: outcome.iterations,
                residual: outcome.residual,
            });
        }
        Ok(z)
    }

    /// `J_G = -(dg/dz)^{-1} dg/dy` at `(y, z)`.
    pub fn jacobian(&self, y: &[f64], z: &[f64], t: f64) -> Result<DenseMatrix> {
        let jac = self.problem.jacobian(y, z, t);
        let lu = LuFactorization::new(&jac.gz)?;
        Ok(lu.solve_matrix(&jac.gy)?.scaled(-1.0))
    }
}

/// Builds a registered problem. `grid_size` only affects the PDAE and
/// `epsilon` only the stiff scalar equation.
pub fn by_name(name: &str, grid_size: usize, epsilon: f64) -> Result<Box<dyn SemiExplicitDae>> {
    match name {
        "linear" => Ok(Box::new(LinearDae::new())),
        "stiff-scalar" => Ok(Box::new(StiffScalar::new(epsilon)?)),
        "reaction-diffusion" => Ok(Box::new(ReactionDiffusion::new(grid_size)?)),
        other => Err(SdcError::InvalidArgument(format!(
            "unknown problem '{other}', expected one of: {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}
