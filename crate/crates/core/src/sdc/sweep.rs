use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::newton::{newton_solve, NewtonOptions, NewtonOutcome};
use crate::collocation::{CollocationScheme, QDeltaMatrix};
use crate::error::{Result, SdcError};
use crate::linalg::{norm_inf, DenseMatrix};
use crate::problems::{JacobianBlocks, SemiExplicitDae};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariant {
    /// SDC on the differential equations with `g = 0` imposed at every node.
    #[serde(rename = "sdc-c")]
    Constrained,
    /// Solves for `y'` and `z`, integrating only the differential part.
    #[serde(rename = "si-sdc")]
    SemiIntegrating,
    /// Solves for `u' = (y', z')` of the implicit form `F(t, u, u') = 0`.
    #[serde(rename = "fi-sdc")]
    FullyIntegrating,
    /// Global Newton on the collocation problem, no sweeps.
    #[serde(rename = "collocation")]
    CollocationDirect,
}

impl SweepVariant {
    pub const ALL: [SweepVariant; 4] = [
        SweepVariant::Constrained,
        SweepVariant::SemiIntegrating,
        SweepVariant::FullyIntegrating,
        SweepVariant::CollocationDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVariant::Constrained => "sdc-c",
            SweepVariant::SemiIntegrating => "si-sdc",
            SweepVariant::FullyIntegrating => "fi-sdc",
            SweepVariant::CollocationDirect => "collocation",
        }
    }
}

impl fmt::Display for SweepVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariant {
    type Err = SdcError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL.into_iter().find(|v| v.name() == lower).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
            SdcError::InvalidArgument(format!("unknown variant '{s}', expected one of: {}", names.join(", ")))
        })
    }
}

/// Node values of one iterate.
///
/// `y` and `z` always hold the state at the nodes (for SI/FI the values
/// recovered by quadrature). `derivatives` holds `Y_m` for SI-SDC and
/// `U_m = (y', z')` for FI-SDC; `f` caches `f(y_m, z_m, tau_m)` for SDC-C.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    pub variant: SweepVariant,
    pub k: usize,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

impl SweepState {
    pub fn num_nodes(&self) -> usize {
        self.y.len()
    }

    /// Max-norm distance over all node values of `y` and `z`.
    pub fn increment(&self, other: &SweepState) -> f64 {
        let mut inc = 0.0f64;
        for (a, b) in self.y.iter().zip(&other.y).chain(self.z.iter().zip(&other.z)) {
            for (p, q) in a.iter().zip(b) {
                inc = inc.max((p - q).abs());
            }
        }
        inc
    }

    pub fn last(&self) -> (&[f64], &[f64]) {
        let m = self.num_nodes() - 1;
        (&self.y[m], &self.z[m])
    }

    pub fn is_finite(&self) -> bool {
        self.y
            .iter()
            .chain(&self.z)
            .chain(&self.derivatives)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Everything a sweep needs besides the iterate.
pub struct SweepContext<'a, P: SemiExplicitDae + ?Sized> {
    pub problem: &'a P,
    pub scheme: &'a CollocationScheme,
    pub qdelta: &'a QDeltaMatrix,
    pub newton: NewtonOptions,
    /// Keep going (with a logged warning) when a node solve stops at the
    /// iteration limit.
    pub accept_unconverged: bool,
    /// Used for node-parallel sweeps when `qdelta` is diagonal.
    pub pool: Option<&'a ThreadPool>,
}

impl<'a, P: SemiExplicitDae + ?Sized> SweepContext<'a, P> {
    pub fn new(problem: &'a P, scheme: &'a CollocationScheme, qdelta: &'a QDeltaMatrix) -> Self {
        Self {
            problem,
            scheme,
            qdelta,
            newton: NewtonOptions::default(),
            accept_unconverged: false,
            pool: None,
        }
    }

    fn check(&self, state: &SweepState) -> Result<()> {
        let m = self.scheme.num_nodes();
        if self.qdelta.matrix().rows() != m {
            return Err(SdcError::InvalidArgument(format!(
                "Q_Delta has size {}, scheme has {m} nodes",
                self.qdelta.matrix().rows()
            )));
        }
        if state.num_nodes() != m || state.z.len() != m {
            return Err(SdcError::InvalidArgument(format!(
                "state has {} nodes, scheme has {m}",
                state.num_nodes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepReport {
    pub newton_iterations: usize,
    pub newton_warnings: usize,
}

struct NodeSolution {
    y: Vec<f64>,
    z: Vec<f64>,
    derivative: Vec<f64>,
    f: Vec<f64>,
    outcome: NewtonOutcome,
}

/// Runs `solve(m, earlier)` for every node. `earlier` holds the new values
/// of nodes `0..m`; it is empty on the parallel path, which is only taken
/// when `qdelta` is diagonal and so no node reads it.
fn for_each_node<P, F>(ctx: &SweepContext<'_, P>, solve: F) -> Result<Vec<NodeSolution>>
where
    P: SemiExplicitDae + ?Sized,
    F: Fn(usize, &[NodeSolution]) -> Result<NodeSolution> + Sync,
{
    let m = ctx.scheme.num_nodes();
    match ctx.pool {
        Some(pool) if ctx.qdelta.is_diagonal() => {
            pool.install(|| (0..m).into_par_iter().map(|i| solve(i, &[])).collect())
        }
        _ => {
            let mut done = Vec::with_capacity(m);
            for i in 0..m {
                let node = solve(i, &done)?;
                done.push(node);
            }
            Ok(done)
        }
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (s, v) in acc.iter_mut().zip(x) {
        *s += a * v;
    }
}

fn check_outcome<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    outcome: NewtonOutcome,
    node: usize,
    k: usize,
) -> Result<()> {
    if outcome.converged {
        return Ok(());
    }
    if ctx.accept_unconverged && outcome.residual.is_finite() {
        warn!(
            "Newton at node {node}, sweep {k} stopped after {} iterations with residual {:e}",
            outcome.iterations, outcome.residual
        );
        return Ok(());
    }
    Err(SdcError::NodeSolveFailure {
        node,
        iteration: k,
        residual: outcome.residual,
    })
}

/// `[[a, b], [c, d]]` from four blocks.
fn block2(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix, d: &DenseMatrix, scales: [f64; 4]) -> DenseMatrix {
    let (nd, na) = (a.rows(), d.rows());
    let mut out = DenseMatrix::zeros(nd + na, nd + na);
    out.add_block(0, 0, a, scales[0]);
    out.add_block(0, nd, b, scales[1]);
    out.add_block(nd, 0, c, scales[2]);
    out.add_block(nd, nd, d, scales[3]);
    out
}

/// `[[I - a fy, -b fz], [c gy, d gz]]`.
fn node_jacobian(jac: &JacobianBlocks, a: f64, b: f64, c: f64, d: f64) -> DenseMatrix {
    let nd = jac.fy.rows();
    let mut out = block2(&jac.fy, &jac.fz, &jac.gy, &jac.gz, [-a, -b, c, d]);
    for i in 0..nd {
        out[(i, i)] += 1.0;
    }
    out
}

fn join(y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(y.len() + z.len());
    u.extend_from_slice(y);
    u.extend_from_slice(z);
    u
}

/// Provisional iterate: the initial condition spread to every node. For
/// SDC-C (and the direct solve) `z` is projected onto `g = 0` at each node;
/// SI/FI start from zero derivatives, so their recovered state is the
/// spread initial value.
pub fn provisional_state<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    variant: SweepVariant,
    y0: &[f64],
    z0: &[f64],
) -> Result<SweepState> {
    let problem = ctx.problem;
    let m = ctx.scheme.num_nodes();
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    if y0.len() != nd || z0.len() != na {
        return Err(SdcError::InvalidArgument(format!(
            "initial values have sizes ({}, {}), problem has ({nd}, {na})",
            y0.len(),
            z0.len()
        )));
    }
    let y = vec![y0.to_vec(); m];
    match variant {
        SweepVariant::Constrained | SweepVariant::CollocationDirect => {
            let nodes = ctx.scheme.nodes();
            let mut z = Vec::with_capacity(m);
            let mut f = Vec::with_capacity(m);
            for (i, &tau) in nodes.iter().enumerate() {
                let mut zi = z0.to_vec();
                let outcome = newton_solve(
                    &mut zi,
                    |z, out| problem.g(y0, z, tau, out),
                    |z| Ok(problem.jacobian(y0, z, tau).gz),
                    &ctx.newton,
                )?;
                check_outcome(ctx, outcome, i, 0)?;
                f.push(problem.eval_f(y0, &zi, tau));
                z.push(zi);
            }
            Ok(SweepState {
                variant,
                k: 0,
                y,
                z,
                derivatives: Vec::new(),
                f,
            })
        }
        SweepVariant::SemiIntegrating | SweepVariant::FullyIntegrating => {
            let width = if variant == SweepVariant::SemiIntegrating {
                nd
            } else {
                nd + na
            };
            Ok(SweepState {
                variant,
                k: 0,
                y,
                z: vec![z0.to_vec(); m],
                derivatives: vec![vec![0.0; width]; m],
                f: Vec::new(),
            })
        }
    }
}

/// One sweep of whichever variant `state` belongs to.
pub fn sweep<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    state: &SweepState,
    y0: &[f64],
    z0: &[f64],
) -> Result<(SweepState, SweepReport)> {
    match state.variant {
        SweepVariant::Constrained => sweep_sdc_c(ctx, state, y0),
        SweepVariant::SemiIntegrating => sweep_si_sdc(ctx, state, y0),
        SweepVariant::FullyIntegrating => sweep_fi_sdc(ctx, state, &join(y0, z0)),
        SweepVariant::CollocationDirect => Err(SdcError::InvalidArgument(
            "the direct collocation solve has no sweeps".into(),
        )),
    }
}

fn report(nodes: &[NodeSolution]) -> SweepReport {
    SweepReport {
        newton_iterations: nodes.iter().map(|n| n.outcome.iterations).sum(),
        newton_warnings: nodes.iter().filter(|n| !n.outcome.converged).count(),
    }
}

/// Constrained sweep: at node `m`, solve
/// `y = y0 + sum_{j<m} qd_mj (f_j^{k+1} - f_j^k) + qd_mm (f(y, z) - f_m^k) + sum_j q_mj f_j^k`
/// together with `0 = g(y, z, tau_m)`.
pub fn sweep_sdc_c<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    state: &SweepState,
    y0: &[f64],
) -> Result<(SweepState, SweepReport)> {
    ctx.check(state)?;
    if state.variant != SweepVariant::Constrained {
        return Err(SdcError::InvalidArgument(format!(
            "expected an sdc-c state, got {}",
            state.variant
        )));
    }
    let problem = ctx.problem;
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    let q = ctx.scheme.q();
    let qd = ctx.qdelta.matrix();
    let nodes = ctx.scheme.nodes();
    let big_m = nodes.len();
    let k = state.k;

    let solved = for_each_node(ctx, |m, earlier| {
        let tau = nodes[m];
        let d = qd[(m, m)];
        let mut b = y0.to_vec();
        for j in 0..big_m {
            axpy(&mut b, q[(m, j)], &state.f[j]);
        }
        if d != 0.0 {
            axpy(&mut b, -d, &state.f[m]);
        }
        for j in 0..m {
            let c = qd[(m, j)];
            if c == 0.0 {
                continue;
            }
            for i in 0..nd {
                b[i] += c * (earlier[j].f[i] - state.f[j][i]);
            }
        }

        let (y, z, outcome) = if d == 0.0 {
            let mut z = state.z[m].clone();
            let outcome = newton_solve(
                &mut z,
                |z, out| problem.g(&b, z, tau, out),
                |z| Ok(problem.jacobian(&b, z, tau).gz),
                &ctx.newton,
            )?;
            (b, z, outcome)
        } else {
            let mut x = join(&state.y[m], &state.z[m]);
            let mut fbuf = vec![0.0; nd];
            let outcome = newton_solve(
                &mut x,
                |x, out| {
                    let (y, z) = x.split_at(nd);
                    problem.f(y, z, tau, &mut fbuf);
                    for i in 0..nd {
                        out[i] = y[i] - b[i] - d * fbuf[i];
                    }
                    problem.g(y, z, tau, &mut out[nd..]);
                },
                |x| {
                    let (y, z) = x.split_at(nd);
                    Ok(node_jacobian(&problem.jacobian(y, z, tau), d, d, 1.0, 1.0))
                },
                &ctx.newton,
            )?;
            let z = x.split_off(nd);
            (x, z, outcome)
        };
        check_outcome(ctx, outcome, m, k)?;
        debug_assert_eq!(z.len(), na);
        let f = problem.eval_f(&y, &z, tau);
        Ok(NodeSolution {
            y,
            z,
            derivative: Vec::new(),
            f,
            outcome,
        })
    })?;

    let rep = report(&solved);
    let mut next = SweepState {
        variant: SweepVariant::Constrained,
        k: k + 1,
        y: Vec::with_capacity(big_m),
        z: Vec::with_capacity(big_m),
        derivatives: Vec::new(),
        f: Vec::with_capacity(big_m),
    };
    for node in solved {
        next.y.push(node.y);
        next.z.push(node.z);
        next.f.push(node.f);
    }
    Ok((next, rep))
}

fn recover(u0: &[f64], q: &DenseMatrix, derivatives: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..derivatives.len())
        .map(|m| {
            let mut u = u0.to_vec();
            for (j, dj) in derivatives.iter().enumerate() {
                axpy(&mut u, q[(m, j)], dj);
            }
            u
        })
        .collect()
}

/// Known part `u0 + sum_j (q - qd)_mj X_j^k + sum_{j<m} qd_mj X_j^{k+1}`.
fn integrated_guess(
    u0: &[f64],
    q: &DenseMatrix,
    qd: &DenseMatrix,
    m: usize,
    old: &[Vec<f64>],
    earlier: &[NodeSolution],
) -> Vec<f64> {
    let mut s = u0.to_vec();
    for (j, xj) in old.iter().enumerate() {
        let c = q[(m, j)] - qd[(m, j)];
        if c != 0.0 {
            axpy(&mut s, c, xj);
        }
    }
    for (j, node) in earlier.iter().enumerate().take(m) {
        let c = qd[(m, j)];
        if c != 0.0 {
            axpy(&mut s, c, &node.derivative);
        }
    }
    s
}

/// Semi-integrating sweep: unknowns `(Y_m, z_m)` with
/// `y = s_m + qd_mm Y_m`, `Y_m = f(y, z)`, `0 = g(y, z)`.
/// Node states are recovered afterwards as `y_m = y0 + sum_j q_mj Y_j`.
pub fn sweep_si_sdc<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    state: &SweepState,
    y0: &[f64],
) -> Result<(SweepState, SweepReport)> {
    ctx.check(state)?;
    if state.variant != SweepVariant::SemiIntegrating {
        return Err(SdcError::InvalidArgument(format!(
            "expected an si-sdc state, got {}",
            state.variant
        )));
    }
    let problem = ctx.problem;
    let nd = problem.n_diff();
    let q = ctx.scheme.q();
    let qd = ctx.qdelta.matrix();
    let nodes = ctx.scheme.nodes();
    let k = state.k;

    let solved = for_each_node(ctx, |m, earlier| {
        let tau = nodes[m];
        let d = qd[(m, m)];
        let s = integrated_guess(y0, q, qd, m, &state.derivatives, earlier);
        let mut x = join(&state.derivatives[m], &state.z[m]);
        let mut y = vec![0.0; nd];
        let mut fbuf = vec![0.0; nd];
        let outcome = newton_solve(
            &mut x,
            |x, out| {
                let (yd, z) = x.split_at(nd);
                for i in 0..nd {
                    y[i] = s[i] + d * yd[i];
                }
                problem.f(&y, z, tau, &mut fbuf);
                for i in 0..nd {
                    out[i] = yd[i] - fbuf[i];
                }
                problem.g(&y, z, tau, &mut out[nd..]);
            },
            |x| {
                let (yd, z) = x.split_at(nd);
                let yy: Vec<f64> = (0..nd).map(|i| s[i] + d * yd[i]).collect();
                Ok(node_jacobian(&problem.jacobian(&yy, z, tau), d, 1.0, d, 1.0))
            },
            &ctx.newton,
        )?;
        check_outcome(ctx, outcome, m, k)?;
        let z = x.split_off(nd);
        Ok(NodeSolution {
            y: Vec::new(),
            z,
            derivative: x,
            f: Vec::new(),
            outcome,
        })
    })?;

    let rep = report(&solved);
    let mut z = Vec::with_capacity(solved.len());
    let mut derivatives = Vec::with_capacity(solved.len());
    for node in solved {
        z.push(node.z);
        derivatives.push(node.derivative);
    }
    let y = recover(y0, q, &derivatives);
    Ok((
        SweepState {
            variant: SweepVariant::SemiIntegrating,
            k: k + 1,
            y,
            z,
            derivatives,
            f: Vec::new(),
        },
        rep,
    ))
}

/// Fully-integrating sweep on `F(t, u, U) = (U_y - f(u), g(u))` with
/// `u = s_m + qd_mm U_m`; states are recovered as `u_m = u0 + sum_j q_mj U_j`.
///
/// An explicit `Q_Delta` leaves the algebraic rows without an unknown, which
/// is reported as a singular matrix.
pub fn sweep_fi_sdc<P: SemiExplicitDae + ?Sized>(
    ctx: &SweepContext<'_, P>,
    state: &SweepState,
    u0: &[f64],
) -> Result<(SweepState, SweepReport)> {
    ctx.check(state)?;
    if state.variant != SweepVariant::FullyIntegrating {
        return Err(SdcError::InvalidArgument(format!(
            "expected an fi-sdc state, got {}",
            state.variant
        )));
    }
    let problem = ctx.problem;
    let (nd, na) = (problem.n_diff(), problem.n_alg());
    let q = ctx.scheme.q();
    let qd = ctx.qdelta.matrix();
    let nodes = ctx.scheme.nodes();
    let k = state.k;

    let solved = for_each_node(ctx, |m, earlier| {
        let tau = nodes[m];
        let d = qd[(m, m)];
        if d == 0.0 && na > 0 {
            return Err(SdcError::SingularMatrix { pivot: nd });
        }
        let s = integrated_guess(u0, q, qd, m, &state.derivatives, earlier);
        let mut x = state.derivatives[m].clone();
        let mut u = vec![0.0; nd + na];
        let mut fbuf = vec![0.0; nd];
        let outcome = newton_solve(
            &mut x,
            |x, out| {
                for i in 0..nd + na {
                    u[i] = s[i] + d * x[i];
                }
                let (y, z) = u.split_at(nd);
                problem.f(y, z, tau, &mut fbuf);
                for i in 0..nd {
                    out[i] = x[i] - fbuf[i];
                }
                problem.g(y, z, tau, &mut out[nd..]);
            },
            |x| {
                let uu: Vec<f64> = (0..nd + na).map(|i| s[i] + d * x[i]).collect();
                let (y, z) = uu.split_at(nd);
                Ok(node_jacobian(&problem.jacobian(y, z, tau), d, d, d, d))
            },
            &ctx.newton,
        )?;
        check_outcome(ctx, outcome, m, k)?;
        Ok(NodeSolution {
            y: Vec::new(),
            z: Vec::new(),
            derivative: x,
            f: Vec::new(),
            outcome,
        })
    })?;

    let rep = report(&solved);
    let derivatives: Vec<Vec<f64>> = solved.into_iter().map(|n| n.derivative).collect();
    let states = recover(u0, q, &derivatives);
    let (y, z) = states
        .into_iter()
        .map(|mut u| {
            let z = u.split_off(nd);
            (u, z)
        })
        .unzip();
    Ok((
        SweepState {
            variant: SweepVariant::FullyIntegrating,
            k: k + 1,
            y,
            z,
            derivatives,
            f: Vec::new(),
        },
        rep,
    ))
}

/// Collocation residual per node, `||y0 + sum_j q_mj f_j - y_m||_inf`.
pub fn residual<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    state: &SweepState,
    y0: &[f64],
) -> Vec<f64> {
    let nodes = scheme.nodes();
    let q = scheme.q();
    let f: Vec<Vec<f64>> = (0..nodes.len())
        .map(|j| problem.eval_f(&state.y[j], &state.z[j], nodes[j]))
        .collect();
    (0..nodes.len())
        .map(|m| {
            let mut r = y0.to_vec();
            for (j, fj) in f.iter().enumerate() {
                axpy(&mut r, q[(m, j)], fj);
            }
            for (ri, yi) in r.iter_mut().zip(&state.y[m]) {
                *ri -= yi;
            }
            norm_inf(&r)
        })
        .collect()
}

/// Largest `||g(y_m, z_m, tau_m)||_inf` over the nodes.
pub fn max_constraint_residual<P: SemiExplicitDae + ?Sized>(
    problem: &P,
    scheme: &CollocationScheme,
    state: &SweepState,
) -> f64 {
    scheme
        .nodes()
        .iter()
        .enumerate()
        .map(|(m, &tau)| norm_inf(&problem.eval_g(&state.y[m], &state.z[m], tau)))
        .fold(0.0, f64::max)
}
