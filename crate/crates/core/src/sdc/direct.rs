use super::newton::{newton_solve, NewtonOptions};
use super::sweep::{SweepState, SweepVariant};
use crate::collocation::CollocationScheme;
use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;
use crate::problems::SemiExplicitDae;

/// Solves the collocation problem
/// `y_m = y0 + sum_j q_mj f(y_j, z_j, tau_j)`, `0 = g(y_m, z_m, tau_m)`
/// for all nodes at once by Newton. This is the Radau IIA step.
///
/// `guess` supplies the starting node values; unknowns are ordered node by
/// node, `y_m` then `z_m`.
pub fn solve_collocation_direct<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    y0: &[f64],
    guess: &SweepState,
    newton: &NewtonOptions,
) -> Result<SweepState> {
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    let n = nd + na;
    let nodes = scheme.nodes();
    let big_m = nodes.len();
    let q = scheme.q();
    if guess.num_nodes() != big_m {
        return Err(SdcError::InvalidArgument("guess does not match the scheme".into()));
    }

    let mut x = Vec::with_capacity(big_m * n);
    for m in 0..big_m {
        x.extend_from_slice(&guess.y[m]);
        x.extend_from_slice(&guess.z[m]);
    }

    let mut f = vec![vec![0.0; nd]; big_m];
    let outcome = newton_solve(
        &mut x,
        |x, out| {
            for m in 0..big_m {
                let (y, z) = x[m * n..(m + 1) * n].split_at(nd);
                problem.f(y, z, nodes[m], &mut f[m]);
            }
            for m in 0..big_m {
                let (y, z) = x[m * n..(m + 1) * n].split_at(nd);
                let row = &mut out[m * n..(m + 1) * n];
                for i in 0..nd {
                    let mut s = y0[i];
                    for (j, fj) in f.iter().enumerate() {
                        s += q[(m, j)] * fj[i];
                    }
                    row[i] = y[i] - s;
                }
                problem.g(y, z, nodes[m], &mut row[nd..]);
            }
        },
        |x| {
            let mut jac = DenseMatrix::zeros(big_m * n, big_m * n);
            for j in 0..big_m {
                let (y, z) = x[j * n..(j + 1) * n].split_at(nd);
                let blocks = problem.jacobian(y, z, nodes[j]);
                for m in 0..big_m {
                    let c = q[(m, j)];
                    jac.add_block(m * n, j * n, &blocks.fy, -c);
                    jac.add_block(m * n, j * n + nd, &blocks.fz, -c);
                }
                jac.add_block(j * n + nd, j * n, &blocks.gy, 1.0);
                jac.add_block(j * n + nd, j * n + nd, &blocks.gz, 1.0);
                for i in 0..nd {
                    jac[(j * n + i, j * n + i)] += 1.0;
                }
            }
            Ok(jac)
        },
        newton,
    )?;
    if !outcome.converged {
        return Err(SdcError::StepFailure(format!(
            "Newton stopped after {} iterations with residual {:e}",
            outcome.iterations, outcome.residual
        )));
    }

    let mut state = SweepState {
        variant: SweepVariant::CollocationDirect,
        k: 1,
        y: Vec::with_capacity(big_m),
        z: Vec::with_capacity(big_m),
        derivatives: Vec::new(),
        f: Vec::with_capacity(big_m),
    };
    for m in 0..big_m {
        let (y, z) = x[m * n..(m + 1) * n].split_at(nd);
        state.f.push(problem.eval_f(y, z, nodes[m]));
        state.y.push(y.to_vec());
        state.z.push(z.to_vec());
    }
    Ok(state)
}
