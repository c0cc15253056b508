//! Backward Hamilton-Jacobi and linear parabolic solvers on the torus, plus
//! a-priori-bound audits of their outputs.
//!
//! Stepping is IMEX backward Euler in reverse time: the diffusion is implicit
//! through a periodic tridiagonal solve, the first-order terms are explicit.
//! Coefficient closures are evaluated at grid nodes and mesh times only.

use serde::Serialize;

use crate::error::{MfgError, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::mesh::{ParabolicTrajectory, TimeMesh, Trajectory};
use crate::spectral;
use crate::tridiag::PeriodicTridiag;

/// How first-order terms read the spatial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Fourier differentiation; spectrally accurate on smooth data.
    #[default]
    Spectral,
    /// Local Lax-Friedrichs upwinding; first order but monotone, so the
    /// discrete comparison principle holds.
    MonotoneUpwind,
}

fn elliptic_nodes(
    grid: &TorusGrid,
    t: f64,
    a: &dyn Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let values: Vec<f64> = grid.nodes().map(|x| a(t, x)).collect();
    for (i, &ai) in values.iter().enumerate() {
        if !(ai > 0.0) {
            return Err(MfgError::NotElliptic {
                min_value: ai,
                at: grid.node(i),
            });
        }
    }
    Ok(values)
}

fn diffusion_matrix(a_nodes: &[f64], dt: f64, h: f64) -> PeriodicTridiag {
    let n = a_nodes.len();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let r = dt / (h * h);
    for i in 0..n {
        lower[i] = -r * a_nodes[i];
        upper[i] = -r * a_nodes[i];
        diag[i] = 1.0 + 2.0 * r * a_nodes[i];
    }
    PeriodicTridiag::factor(&lower, &diag, &upper)
}

fn check_drift_cfl(dt: f64, h: f64, max_drift: f64) -> Result<()> {
    if max_drift <= 0.0 {
        return Ok(());
    }
    let required = 0.5 * h / max_drift;
    if dt > required {
        return Err(MfgError::CflViolation { dt, required, max_drift });
    }
    Ok(())
}

/// Largest |dh/dp| over the grid near the current derivative values.
fn drift_bound(
    grid: &TorusGrid,
    t: f64,
    h: &dyn Fn(f64, f64, f64) -> f64,
    p: &[f64],
) -> f64 {
    let mut worst = 0.0f64;
    for (i, x) in grid.nodes().enumerate() {
        let delta = 1e-6 * (1.0 + p[i].abs());
        let hp = (h(t, x, p[i] + delta) - h(t, x, p[i] - delta)) / (2.0 * delta);
        worst = worst.max(hp.abs());
    }
    worst
}

/// Solves -du/dt - a(t,x) u_xx + h(t,x,u_x) = 0 backward from u(t1) = g.
pub fn solve_hj_backward(
    a: &dyn Fn(f64, f64) -> f64,
    h: &dyn Fn(f64, f64, f64) -> f64,
    g: &GridFunction,
    mesh: &TimeMesh,
    mode: DerivativeMode,
) -> Result<ParabolicTrajectory> {
    let grid = g.grid().clone();
    let n = grid.n();
    let hx = grid.spacing();
    let dt = mesh.dt();
    let length = grid.length();

    let mut snapshots = vec![GridFunction::zero(grid.clone()); mesh.steps() + 1];
    snapshots[mesh.steps()] = g.clone();
    let mut current = g.values().to_vec();
    let mut rhs = vec![0.0; n];
    let mut out = vec![0.0; n];

    for k in (0..mesh.steps()).rev() {
        let t_new = mesh.time(k);
        let t_old = mesh.time(k + 1);

        match mode {
            DerivativeMode::Spectral => {
                let du = spectral::spectral_derivative(&current, 1, length);
                let theta = drift_bound(&grid, t_old, h, &du);
                check_drift_cfl(dt, hx, theta)?;
                for (i, x) in grid.nodes().enumerate() {
                    rhs[i] = current[i] - dt * h(t_old, x, du[i]);
                }
            }
            DerivativeMode::MonotoneUpwind => {
                let mut mid = vec![0.0; n];
                let mut spread = vec![0.0; n];
                for i in 0..n {
                    let dm = (current[i] - current[(i + n - 1) % n]) / hx;
                    let dp = (current[(i + 1) % n] - current[i]) / hx;
                    mid[i] = 0.5 * (dm + dp);
                    spread[i] = dp - dm;
                }
                let theta = drift_bound(&grid, t_old, h, &mid) * 1.05 + 1e-12;
                check_drift_cfl(dt, hx, theta)?;
                for (i, x) in grid.nodes().enumerate() {
                    let flux = h(t_old, x, mid[i]) - 0.5 * theta * spread[i];
                    rhs[i] = current[i] - dt * flux;
                }
            }
        }

        let a_nodes = elliptic_nodes(&grid, t_new, a)?;
        let matrix = diffusion_matrix(&a_nodes, dt, hx);
        matrix.solve(&rhs, &mut out);
        std::mem::swap(&mut current, &mut out);
        snapshots[k] = GridFunction::new(grid.clone(), current.clone());
    }
    Trajectory::from_snapshots(*mesh, snapshots)
}

/// Extra advection of follower components by a leader's spatial derivative:
/// each target l gets + coefficient(t,x) * d_x u_leader added to its equation.
pub struct LeaderCoupling<'a> {
    pub leader: usize,
    pub targets: &'a [usize],
    pub coefficient: &'a dyn Fn(f64, f64) -> f64,
}

/// Solves the affine system -du_l/dt - a u_l_xx + V u_l_x = f_l backward
/// from u_l(t1) = g_l, sharing one diffusion factorization per step across
/// all components. Coupling terms join V on the left-hand side.
pub fn solve_linear_parabolic_system(
    a: &dyn Fn(f64, f64) -> f64,
    v: &dyn Fn(f64, f64) -> f64,
    coupling: Option<&LeaderCoupling<'_>>,
    sources: &[&dyn Fn(f64, f64) -> f64],
    terminals: &[GridFunction],
    mesh: &TimeMesh,
) -> Result<Vec<ParabolicTrajectory>> {
    if sources.len() != terminals.len() {
        return Err(MfgError::InvalidArgument(format!(
            "{} sources for {} terminal conditions",
            sources.len(),
            terminals.len()
        )));
    }
    if terminals.is_empty() {
        return Ok(Vec::new());
    }
    let grid = terminals[0].grid().clone();
    for g in terminals {
        grid.check_same(g.grid())?;
    }
    if let Some(c) = coupling {
        let bad = c.targets.iter().chain([&c.leader]).find(|&&l| l >= terminals.len());
        if bad.is_some() || c.targets.contains(&c.leader) {
            return Err(MfgError::InvalidArgument(
                "coupling indices out of range or self-referential".into(),
            ));
        }
    }

    let n = grid.n();
    let hx = grid.spacing();
    let dt = mesh.dt();
    let length = grid.length();
    let count = terminals.len();

    let mut state: Vec<Vec<f64>> = terminals.iter().map(|g| g.values().to_vec()).collect();
    let mut trajectories: Vec<Vec<GridFunction>> = terminals
        .iter()
        .map(|g| {
            let mut snaps = vec![GridFunction::zero(grid.clone()); mesh.steps() + 1];
            snaps[mesh.steps()] = g.clone();
            snaps
        })
        .collect();

    let mut rhs = vec![0.0; n];
    let mut out = vec![0.0; n];
    for k in (0..mesh.steps()).rev() {
        let t_new = mesh.time(k);
        let t_old = mesh.time(k + 1);

        let v_nodes: Vec<f64> = grid.nodes().map(|x| v(t_old, x)).collect();
        let max_drift = v_nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        check_drift_cfl(dt, hx, max_drift)?;

        let leader_du = coupling
            .map(|c| spectral::spectral_derivative(&state[c.leader], 1, length));

        let a_nodes = elliptic_nodes(&grid, t_new, a)?;
        let matrix = diffusion_matrix(&a_nodes, dt, hx);

        for l in 0..count {
            let du = spectral::spectral_derivative(&state[l], 1, length);
            for (i, x) in grid.nodes().enumerate() {
                let mut advection = v_nodes[i] * du[i];
                if let (Some(c), Some(ldu)) = (coupling, leader_du.as_ref()) {
                    if c.targets.contains(&l) {
                        advection += (c.coefficient)(t_old, x) * ldu[i];
                    }
                }
                rhs[i] = state[l][i] - dt * advection + dt * sources[l](t_old, x);
            }
            matrix.solve(&rhs, &mut out);
            state[l].copy_from_slice(&out);
            trajectories[l][k] = GridFunction::new(grid.clone(), out.clone());
        }
    }

    trajectories
        .into_iter()
        .map(|snaps| Trajectory::from_snapshots(*mesh, snaps))
        .collect()
}

/// Certified sup bound of one derivative order along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct OrderBound {
    pub order: usize,
    /// sup over time of the certified sup norm of the order-th derivative.
    pub sup_over_time: f64,
    pub terminal: f64,
    /// Least-squares slope in sup_{[t, t1]} <= terminal + C (t1 - t).
    pub fitted_c: f64,
}

/// Measured growth of derivative sup norms along a backward trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BernsteinAuditReport {
    pub sup_lip: f64,
    pub terminal_lip: f64,
    pub fitted_c_lip: f64,
    /// Uniform gradient cap observed over the whole trajectory.
    pub gradient_cap: f64,
    pub orders: Vec<OrderBound>,
}

/// Measures sup_t of each derivative order and fits the affine-in-horizon
/// bound using every sub-horizon of the trajectory.
pub fn bernstein_audit(
    traj: &ParabolicTrajectory,
    g: &GridFunction,
    max_order: usize,
) -> BernsteinAuditReport {
    let mesh = traj.mesh();
    let length = g.grid().length();
    let steps = mesh.steps();

    let mut orders = Vec::with_capacity(max_order + 1);
    for r in 0..=max_order {
        let norms: Vec<f64> = traj
            .snapshots()
            .iter()
            .map(|u| spectral::sup_derivative_bound(u.values(), r, length))
            .collect();
        let terminal = spectral::sup_derivative_bound(g.values(), r, length);

        let mut running = vec![0.0; steps + 1];
        let mut acc = f64::NEG_INFINITY;
        for k in (0..=steps).rev() {
            acc = acc.max(norms[k]);
            running[k] = acc;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &y) in running.iter().enumerate() {
            let horizon = mesh.t1() - mesh.time(k);
            num += horizon * (y - terminal);
            den += horizon * horizon;
        }
        let fitted_c = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        orders.push(OrderBound {
            order: r,
            sup_over_time: running[0],
            terminal,
            fitted_c,
        });
    }

    let lip = orders.get(1).cloned().unwrap_or(OrderBound {
        order: 1,
        sup_over_time: 0.0,
        terminal: 0.0,
        fitted_c: 0.0,
    });
    BernsteinAuditReport {
        sup_lip: lip.sup_over_time,
        terminal_lip: lip.terminal,
        fitted_c_lip: lip.fitted_c,
        gradient_cap: lip.sup_over_time,
        orders,
    }
}
