use serde::{Deserialize, Serialize};

use crate::error::{Result, SdcError};
use crate::linalg::{norm_inf, DenseMatrix, LuFactorization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Absolute tolerance on the residual in the max norm.
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 50,
            max_halvings: 8,
        }
    }
}

impl NewtonOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// How the Newton tolerance is chosen for a step of size `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum NewtonTolerance {
    Fixed {
        tol: f64,
    },
    /// `tol = tol_ref * dt / dt_ref`. Solves that stop at the iteration
    /// limit are accepted with a warning.
    Coupled {
        tol_ref: f64,
        dt_ref: f64,
    },
}

impl Default for NewtonTolerance {
    fn default() -> Self {
        NewtonTolerance::Fixed { tol: 1e-12 }
    }
}

impl NewtonTolerance {
    pub const REFERENCE_TOL: f64 = 1.3e-12;
    pub const REFERENCE_DT: f64 = 2.6e-3;

    pub fn coupled_default() -> Self {
        NewtonTolerance::Coupled {
            tol_ref: Self::REFERENCE_TOL,
            dt_ref: Self::REFERENCE_DT,
        }
    }

    pub fn tolerance(&self, dt: f64) -> f64 {
        match *self {
            NewtonTolerance::Fixed { tol } => tol,
            NewtonTolerance::Coupled { tol_ref, dt_ref } => tol_ref * dt / dt_ref,
        }
    }

    pub fn accepts_unconverged(&self) -> bool {
        matches!(self, NewtonTolerance::Coupled { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NewtonTolerance::Fixed { tol } => tol > 0.0 && tol.is_finite(),
            NewtonTolerance::Coupled { tol_ref, dt_ref } => {
                tol_ref > 0.0 && dt_ref > 0.0 && tol_ref.is_finite() && dt_ref.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SdcError::InvalidArgument(format!("bad Newton tolerance {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Damped Newton for `F(x) = 0`, updating `x` in place.
///
/// A step is halved (up to `max_halvings` times) while it does not reduce
/// `||F||_inf`; if no halving helps, the smallest step is taken anyway.
/// Stops early once the update no longer changes `x`.
pub fn newton_solve<F, J>(
    x: &mut [f64],
    mut residual: F,
    mut jacobian: J,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
    J: FnMut(&[f64]) -> Result<DenseMatrix>,
{
    let n = x.len();
    let mut r = vec![0.0; n];
    if n == 0 {
        return Ok(NewtonOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    residual(x, &mut r);
    let mut rnorm = norm_inf(&r);
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];

    for it in 0..opts.max_iterations {
        if rnorm <= opts.tol {
            return Ok(NewtonOutcome {
                iterations: it,
                residual: rnorm,
                converged: true,
            });
        }
        if !rnorm.is_finite() {
            break;
        }
        let jac = jacobian(x)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = LuFactorization::new(&jac)?.solve(&neg)?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for i in 0..n {
                trial[i] = x[i] + lambda * dx[i];
            }
            residual(&trial, &mut r_trial);
            let tn = norm_inf(&r_trial);
            if tn < rnorm {
                accepted = true;
                rnorm = tn;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            rnorm = norm_inf(&r_trial);
        }
        let moved = x.iter().zip(&trial).any(|(a, b)| a != b);
        x.copy_from_slice(&trial);
        r.copy_from_slice(&r_trial);
        if !moved {
            return Ok(NewtonOutcome {
                iterations: it + 1,
                residual: rnorm,
                converged: rnorm <= opts.tol,
            });
        }
    }
    Ok(NewtonOutcome {
        iterations: opts.max_iterations,
        residual: rnorm,
        converged: rnorm <= opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_scalar_quadratic() {
        let mut x = vec![3.0];
        let out = newton_solve(
            &mut x,
            |x, r| r[0] = x[0] * x[0] - 2.0,
            |x| Ok(DenseMatrix::from_diagonal(&[2.0 * x[0]])),
            &NewtonOptions::with_tol(1e-14),
        )
        .unwrap();
        assert!(out.converged);
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn linear_problem_takes_one_step() {
        let mut x = vec![0.0, 0.0];
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let out = newton_solve(
            &mut x,
            |x, r| {
                let ax = a.matvec(x);
                r[0] = ax[0] - 1.0;
                r[1] = ax[1] - 2.0;
            },
            |_| Ok(a.clone()),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn damping_rescues_arctan() {
        // undamped Newton on atan diverges from x0 = 3
        let mut x = vec![3.0];
        let out = newton_solve(
            &mut x,
            |x, r| r[0] = x[0].atan(),
            |x| Ok(DenseMatrix::from_diagonal(&[1.0 / (1.0 + x[0] * x[0])])),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!(x[0].abs() < 1e-12);
    }

    #[test]
    fn singular_jacobian_is_an_error() {
        let mut x = vec![1.0];
        let res = newton_solve(
            &mut x,
            |x, r| r[0] = x[0] - 2.0,
            |_| Ok(DenseMatrix::zeros(1, 1)),
            &NewtonOptions::default(),
        );
        assert_eq!(res, Err(SdcError::SingularMatrix { pivot: 0 }));
    }

    #[test]
    fn coupled_policy_scales_with_dt() {
        let p = NewtonTolerance::coupled_default();
        assert!((p.tolerance(2.6e-3) - 1.3e-12).abs() < 1e-27);
        assert!((p.tolerance(5.2e-3) - 2.6e-12).abs() < 1e-27);
        assert!(p.accepts_unconverged());
        assert!(!NewtonTolerance::default().accepts_unconverged());
    }
}
