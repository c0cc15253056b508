//! The coupled forward-backward system: a backward HJ equation for the value
//! u and a forward FP equation for the density m, closed by a damped Picard
//! iteration on the density trajectory.

use crate::error::{MfgError, Result};
use crate::fp::solve_fp_forward;
use crate::functional::MeasureFunctional;
use crate::grid::GridDensity;
use crate::hamiltonian::HamiltonianAt;
use crate::mesh::{DensityTrajectory, ParabolicTrajectory, TimeMesh, Trajectory};
use crate::parabolic::{solve_hj_backward, DerivativeMode};
use crate::scenario::Scenario;
use crate::spectral::{spectral_derivative, sup_derivative_bound};
use crate::transport::wasserstein1;

#[derive(Debug, Clone)]
pub struct MFGSolution {
    pub u: ParabolicTrajectory,
    pub m: DensityTrajectory,
    pub x0: f64,
    pub iterations: usize,
    /// Gap between the last two density iterates (sup over time of the
    /// 1-Wasserstein distance), or the certified tail bound when the
    /// contraction-certificate stop fired.
    pub final_gap: f64,
}

/// Internal knobs for callers that solve many related systems (the splitting
/// scheme): undamped iteration, warm starts, early stop by contraction
/// certificate, and a caller-fixed time mesh.
#[derive(Default, Clone)]
pub(crate) struct MfgTuning {
    pub theta: Option<f64>,
    pub warm_start: Option<DensityTrajectory>,
    pub certificate_stop: bool,
    pub mesh: Option<TimeMesh>,
}

pub fn solve_mfg(
    scenario: &Scenario,
    t0: f64,
    m0: &GridDensity,
    x0: f64,
    terminal: &dyn MeasureFunctional,
) -> Result<MFGSolution> {
    solve_mfg_with(scenario, t0, m0, x0, terminal, &MfgTuning::default()).map(|(sol, _)| sol)
}

/// Time mesh anchored to the scenario horizon: the step count over [0, T] is
/// even and fixed by a measure-independent drift bound, and any start time on
/// that lattice reuses the same step size. Mid-trajectory re-solves then run
/// on the same discretization and reproduce the discrete flow exactly.
pub(crate) fn mfg_time_mesh(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    terminal: &dyn MeasureFunctional,
) -> Result<TimeMesh> {
    let length = scenario.grid.length();
    let lip_g = match terminal.gradient_bound(length) {
        Some(b) => b,
        None => sup_derivative_bound(terminal.evaluate(x0, m0)?.values(), 1, length),
    };
    let drift_hint = scenario.hamiltonian.quad.abs() * (lip_g + 1.0)
        + scenario.hamiltonian.drift_coupling_bound()
        + 1.0;
    let dt_target = TimeMesh::cfl_default_dt(scenario.grid.spacing(), drift_hint);
    let mut total = ((scenario.horizon / dt_target).ceil() as usize).max(2);
    if total % 2 == 1 {
        total += 1;
    }
    let quantum = scenario.horizon / total as f64;
    let k = (t0 / quantum).round();
    let on_lattice = (t0 - k * quantum).abs() <= 1e-9 * scenario.horizon;
    let steps = if on_lattice {
        ((total as i64) - (k as i64)).max(1) as usize
    } else {
        (((scenario.horizon - t0) / quantum).ceil() as usize).max(1)
    };
    TimeMesh::new(t0, scenario.horizon, steps)
}

pub(crate) fn solve_mfg_with(
    scenario: &Scenario,
    t0: f64,
    m0: &GridDensity,
    x0: f64,
    terminal: &dyn MeasureFunctional,
    tuning: &MfgTuning,
) -> Result<(MFGSolution, Vec<f64>)> {
    scenario.validate()?;
    scenario.grid.check_same(m0.grid())?;
    if !(t0.is_finite() && t0 >= 0.0 && t0 < scenario.horizon) {
        return Err(MfgError::InvalidArgument(format!(
            "start time {t0} must lie in [0, {})",
            scenario.horizon
        )));
    }
    let mesh = match tuning.mesh {
        Some(m) => m,
        None => mfg_time_mesh(scenario, t0, x0, m0, terminal)?,
    };
    if (mesh.t0() - t0).abs() > 1e-12 || (mesh.t1() - scenario.horizon).abs() > 1e-12 {
        return Err(MfgError::InvalidArgument(
            "supplied mesh does not span [t0, horizon]".into(),
        ));
    }
    let a = scenario.diffusion_fn();

    let mut m_traj = match &tuning.warm_start {
        Some(w) => {
            if w.mesh().steps() != mesh.steps()
                || (w.mesh().t0() - mesh.t0()).abs() > 1e-12
                || (w.mesh().t1() - mesh.t1()).abs() > 1e-12
            {
                return Err(MfgError::InvalidArgument(
                    "warm start lives on a different time mesh".into(),
                ));
            }
            scenario.grid.check_same(w.initial().grid())?;
            let mut traj = w.clone();
            if traj.initial() != m0 {
                // keep the prescribed initial condition, reuse the shape
                let mut snaps: Vec<GridDensity> = traj.snapshots().to_vec();
                snaps[0] = m0.clone();
                traj = Trajectory::from_snapshots(mesh, snaps)?;
            }
            traj
        }
        None => solve_fp_forward(&a, &|_, _| 0.0, m0, &mesh)?,
    };

    let theta = tuning.theta.unwrap_or(scenario.fixed_point.theta);
    let tol = scenario.fixed_point.tol;
    let grid = scenario.grid;
    let mut gaps: Vec<f64> = Vec::new();
    let mut prev_gap: Option<f64> = None;

    for iter in 1..=scenario.fixed_point.max_iter {
        let candidate = best_response(scenario, x0, terminal, &m_traj, &a)?;
        let mut next_snaps = Vec::with_capacity(mesh.steps() + 1);
        for k in 0..=mesh.steps() {
            let mixed: Vec<f64> = m_traj
                .snapshot(k)
                .values()
                .iter()
                .zip(candidate.snapshot(k).values())
                .map(|(old, new)| (1.0 - theta) * old + theta * new)
                .collect();
            next_snaps.push(GridDensity::from_solver(grid, mixed));
        }
        let next = Trajectory::from_snapshots(mesh, next_snaps)?;
        let mut gap = 0.0f64;
        for k in 0..=mesh.steps() {
            gap = gap.max(wasserstein1(next.snapshot(k), m_traj.snapshot(k))?);
        }
        gaps.push(gap);
        m_traj = next;

        let mut reported = gap;
        let mut done = gap < tol;
        if !done && tuning.certificate_stop {
            if let Some(pg) = prev_gap {
                if pg > 0.0 {
                    let r = gap / pg;
                    if r < 0.95 {
                        let tail = gap * r / (1.0 - r);
                        if tail < tol {
                            done = true;
                            reported = tail;
                        }
                    }
                }
            }
        }
        prev_gap = Some(gap);

        if done {
            // one more backward sweep against the settled density, so the
            // terminal identity u(T) = G(x0, ., m(T)) holds exactly
            let u = hj_sweep(scenario, x0, terminal, &m_traj, &a)?;
            let solution = MFGSolution { u, m: m_traj, x0, iterations: iter, final_gap: reported };
            return Ok((solution, gaps));
        }
    }

    Err(MfgError::NotConverged {
        solver: "mfg-picard".into(),
        iterations: scenario.fixed_point.max_iter,
        gap: gaps.last().copied().unwrap_or(f64::INFINITY),
        tol,
    })
}

/// Hamiltonian bound to every snapshot of a density trajectory.
pub(crate) fn bind_along(
    scenario: &Scenario,
    x0: f64,
    m_traj: &DensityTrajectory,
) -> Vec<HamiltonianAt> {
    (0..=m_traj.mesh().steps())
        .map(|k| HamiltonianAt::bind(&scenario.hamiltonian, &scenario.grid, x0, m_traj.snapshot(k).values()))
        .collect()
}

fn hj_sweep(
    scenario: &Scenario,
    x0: f64,
    terminal: &dyn MeasureFunctional,
    m_traj: &DensityTrajectory,
    a: &dyn Fn(f64, f64) -> f64,
) -> Result<ParabolicTrajectory> {
    let hams = bind_along(scenario, x0, m_traj);
    let g = terminal.evaluate(x0, m_traj.terminal())?;
    let mesh = *m_traj.mesh();
    let grid = scenario.grid;
    let h = move |t: f64, x: f64, p: f64| {
        let k = mesh.step_index(t).expect("hamiltonian queried off the mesh");
        hams[k].value(grid.node_index(x), p)
    };
    solve_hj_backward(a, &h, &g, &mesh, DerivativeMode::Spectral)
}

fn best_response(
    scenario: &Scenario,
    x0: f64,
    terminal: &dyn MeasureFunctional,
    m_traj: &DensityTrajectory,
    a: &dyn Fn(f64, f64) -> f64,
) -> Result<DensityTrajectory> {
    let u = hj_sweep(scenario, x0, terminal, m_traj, a)?;
    let hams = bind_along(scenario, x0, m_traj);
    let mesh = *m_traj.mesh();
    let grid = scenario.grid;
    let length = grid.length();
    let du: Vec<Vec<f64>> = u
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, length))
        .collect();
    let b = move |t: f64, x: f64| {
        let k = mesh.step_index(t).expect("drift queried off the mesh");
        let i = grid.node_index(x);
        hams[k].dp(i, du[k][i])
    };
    solve_fp_forward(a, &b, m_traj.initial(), &mesh)
}
