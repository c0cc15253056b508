//! Linearizations of the coupled system around a reference solution: the
//! first-order pair (v, rho) driven by an initial signed measure and source
//! terms, and the second-order pair (w, mu) whose sources are bilinear in two
//! first-order solutions. Also the source builders for differentiating the
//! system in the major position x0.

use crate::error::{MfgError, Result};
use crate::fp::solve_fp_signed_forward;
use crate::functional::MeasureFunctional;
use crate::grid::{GridFunction, GridSignedMeasure, TorusGrid};
use crate::hamiltonian::HamiltonianAt;
use crate::mesh::{ParabolicTrajectory, SignedTrajectory, TimeMesh, Trajectory};
use crate::mfg::{bind_along, MFGSolution};
use crate::parabolic::solve_linear_parabolic_system;
use crate::scenario::Scenario;
use crate::spectral::spectral_derivative;

/// Inhomogeneities of a linearized system: R1 enters the backward equation,
/// R2 enters the forward equation in divergence form, R3 shifts the terminal
/// condition. R1 and R2 carry one snapshot per time level.
#[derive(Debug, Clone)]
pub struct LinearSources {
    pub r1: Vec<GridFunction>,
    pub r2: Vec<GridFunction>,
    pub r3: GridFunction,
}

impl LinearSources {
    pub fn zero(grid: TorusGrid, mesh: &TimeMesh) -> Self {
        let levels = mesh.steps() + 1;
        Self {
            r1: vec![GridFunction::zero(grid); levels],
            r2: vec![GridFunction::zero(grid); levels],
            r3: GridFunction::zero(grid),
        }
    }

    fn check(&self, grid: &TorusGrid, mesh: &TimeMesh) -> Result<()> {
        let levels = mesh.steps() + 1;
        if self.r1.len() != levels || self.r2.len() != levels {
            return Err(MfgError::InvalidArgument(format!(
                "sources carry {} and {} snapshots for {} time levels",
                self.r1.len(),
                self.r2.len(),
                levels
            )));
        }
        for f in self.r1.iter().chain(&self.r2).chain([&self.r3]) {
            grid.check_same(f.grid())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LinearizedSolution {
    pub v: ParabolicTrajectory,
    pub rho: SignedTrajectory,
    pub around: MFGSolution,
    pub iterations: usize,
    /// Sup over time of the L1 distance between the last two rho-iterates.
    pub final_gap: f64,
    pub sources: LinearSources,
}

/// The reference solution with its Hamiltonian bindings and value gradient,
/// precomputed once per time level.
pub(crate) struct Frame {
    pub hams: Vec<HamiltonianAt>,
    pub du: Vec<Vec<f64>>,
    pub mesh: TimeMesh,
    pub grid: TorusGrid,
}

impl Frame {
    pub fn new(scenario: &Scenario, around: &MFGSolution) -> Self {
        let grid = scenario.grid;
        let mesh = *around.m.mesh();
        let hams = bind_along(scenario, around.x0, &around.m);
        let du = around
            .u
            .snapshots()
            .iter()
            .map(|s| spectral_derivative(s.values(), 1, grid.length()))
            .collect();
        Self { hams, du, mesh, grid }
    }

    fn level_of(&self, t: f64) -> usize {
        self.mesh.step_index(t).expect("coefficient queried off the mesh")
    }
}

fn l1_distance(a: &GridSignedMeasure, b: &GridSignedMeasure, spacing: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * spacing
}

pub fn solve_linearized_1(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
    rho0: &GridSignedMeasure,
    sources: &LinearSources,
) -> Result<LinearizedSolution> {
    let frame = Frame::new(scenario, around);
    scenario.grid.check_same(rho0.grid())?;
    sources.check(&scenario.grid, &frame.mesh)?;

    let grid = frame.grid;
    let spacing = grid.spacing();
    let mesh = frame.mesh;
    let a = scenario.diffusion_fn();
    let drift = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        frame.hams[k].dp(i, frame.du[k][i])
    };
    let theta = scenario.fixed_point.theta;
    let tol = scenario.fixed_point.tol;

    // start from the forward solve that ignores the feedback terms
    let r2_only = |t: f64, x: f64| sources.r2[frame.level_of(t)].values()[grid.node_index(x)];
    let mut rho_traj =
        solve_fp_signed_forward(&a, &drift, rho0, &[&r2_only], &mesh)?;

    for iter in 1..=scenario.fixed_point.max_iter {
        let (_, candidate) =
            linear_pair_response(&frame, terminal, around, &rho_traj, sources, &a, &drift)?;

        let mut gap = 0.0f64;
        let mut next = Vec::with_capacity(mesh.steps() + 1);
        for k in 0..=mesh.steps() {
            let mixed: Vec<f64> = rho_traj
                .snapshot(k)
                .values()
                .iter()
                .zip(candidate.snapshot(k).values())
                .map(|(old, new)| (1.0 - theta) * old + theta * new)
                .collect();
            let snap = GridSignedMeasure::new(grid, mixed);
            gap = gap.max(l1_distance(&snap, rho_traj.snapshot(k), spacing));
            next.push(snap);
        }
        let next = Trajectory::from_snapshots(mesh, next)?;
        rho_traj = next;

        if gap < tol {
            // final backward sweep against the settled rho, so the terminal
            // identity v(T) = dG/dm(rho(T)) + R3 holds exactly
            let (v, _) = linear_pair_response(
                &frame, terminal, around, &rho_traj, sources, &a, &drift,
            )?;
            return Ok(LinearizedSolution {
                v,
                rho: rho_traj,
                around: around.clone(),
                iterations: iter,
                final_gap: gap,
                sources: sources.clone(),
            });
        }
    }
    Err(MfgError::NotConverged {
        solver: "linearized-picard".into(),
        iterations: scenario.fixed_point.max_iter,
        gap: f64::INFINITY,
        tol,
    })
}

/// One sweep of the first-order system: backward v-solve against the given
/// rho iterate, then the forward rho-solve driven by that v.
#[allow(clippy::too_many_arguments)]
fn linear_pair_response(
    frame: &Frame,
    terminal: &dyn MeasureFunctional,
    around: &MFGSolution,
    rho_traj: &SignedTrajectory,
    sources: &LinearSources,
    a: &dyn Fn(f64, f64) -> f64,
    drift: &dyn Fn(f64, f64) -> f64,
) -> Result<(ParabolicTrajectory, SignedTrajectory)> {
    let grid = frame.grid;
    let mesh = frame.mesh;
    let dirs: Vec<_> = (0..=mesh.steps())
        .map(|k| frame.hams[k].direction(rho_traj.snapshot(k).values()))
        .collect();

    let g = terminal
        .flat_derivative(around.x0, around.m.terminal(), rho_traj.terminal())?
        .zip_with(&sources.r3, |d, r| d + r);
    let f = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        sources.r1[k].values()[i] - frame.hams[k].dm(i, frame.du[k][i], &dirs[k])
    };
    let v = solve_linear_parabolic_system(a, drift, None, &[&f], &[g], &mesh)?
        .pop()
        .expect("one component in, one out");

    let dv: Vec<Vec<f64>> = v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let feedback = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        let m = around.m.snapshot(k).values()[i];
        m * frame.hams[k].dpp() * dv[k][i] + m * frame.hams[k].dm_dp(i, &dirs[k])
    };
    let r2 = |t: f64, x: f64| sources.r2[frame.level_of(t)].values()[grid.node_index(x)];
    let rho_next =
        solve_fp_signed_forward(a, drift, rho_traj.initial(), &[&feedback, &r2], &mesh)?;
    Ok((v, rho_next))
}

pub fn solve_linearized_2(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
    first: &LinearizedSolution,
    second: &LinearizedSolution,
    tilde: &LinearSources,
) -> Result<LinearizedSolution> {
    let frame = Frame::new(scenario, around);
    let grid = frame.grid;
    let mesh = frame.mesh;
    let spacing = grid.spacing();
    tilde.check(&grid, &mesh)?;
    for sol in [first, second] {
        if sol.around.x0 != around.x0
            || sol.rho.mesh().steps() != mesh.steps()
            || sol.around.m.snapshots() != around.m.snapshots()
        {
            return Err(MfgError::InvalidArgument(
                "first-order solutions were not computed around this reference".into(),
            ));
        }
    }

    let a = scenario.diffusion_fn();
    let drift = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        frame.hams[k].dp(i, frame.du[k][i])
    };
    let theta = scenario.fixed_point.theta;
    let tol = scenario.fixed_point.tol;

    let dv1: Vec<Vec<f64>> = first
        .v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let dv2: Vec<Vec<f64>> = second
        .v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();

    // bilinear blocks are fixed across the iteration; assembled term by term
    let mut back_fixed = vec![vec![0.0; grid.n()]; mesh.steps() + 1];
    let mut fwd_fixed = vec![vec![0.0; grid.n()]; mesh.steps() + 1];
    for k in 0..=mesh.steps() {
        let ham = &frame.hams[k];
        let d1 = ham.direction(first.rho.snapshot(k).values());
        let d2 = ham.direction(second.rho.snapshot(k).values());
        let m = around.m.snapshot(k).values();
        let r1v = first.rho.snapshot(k).values();
        let r2v = second.rho.snapshot(k).values();
        for i in 0..grid.n() {
            back_fixed[k][i] = ham.dm2(i, &d1, &d2)
                + ham.dpp() * dv1[k][i] * dv2[k][i]
                + ham.dm_dp(i, &d1) * dv2[k][i]
                + ham.dm_dp(i, &d2) * dv1[k][i];
            fwd_fixed[k][i] = r1v[i] * ham.dpp() * dv2[k][i]
                + r1v[i] * ham.dm_dp(i, &d2)
                + r2v[i] * ham.dpp() * dv1[k][i]
                + m[i] * ham.dppp() * dv1[k][i] * dv2[k][i]
                + m[i] * ham.dm_dpp(i, &d2) * dv1[k][i]
                + r2v[i] * ham.dm_dp(i, &d1)
                + m[i] * ham.dm_dpp(i, &d1) * dv2[k][i]
                + m[i] * ham.dm2_dp(i, &d1, &d2);
        }
    }
    let terminal_fixed = terminal
        .second_flat_derivative(
            around.x0,
            around.m.terminal(),
            first.rho.terminal(),
            second.rho.terminal(),
        )?
        .zip_with(&tilde.r3, |d, r| d + r);

    let mut mu_traj = Trajectory::from_snapshots(
        mesh,
        vec![GridSignedMeasure::zero(grid); mesh.steps() + 1],
    )?;

    for iter in 1..=scenario.fixed_point.max_iter {
        let (_, candidate) = second_order_response(
            &frame,
            terminal,
            around,
            &mu_traj,
            tilde,
            &back_fixed,
            &fwd_fixed,
            &terminal_fixed,
            &a,
            &drift,
        )?;

        let mut gap = 0.0f64;
        let mut next = Vec::with_capacity(mesh.steps() + 1);
        for k in 0..=mesh.steps() {
            let mixed: Vec<f64> = mu_traj
                .snapshot(k)
                .values()
                .iter()
                .zip(candidate.snapshot(k).values())
                .map(|(old, new)| (1.0 - theta) * old + theta * new)
                .collect();
            let snap = GridSignedMeasure::new(grid, mixed);
            gap = gap.max(l1_distance(&snap, mu_traj.snapshot(k), spacing));
            next.push(snap);
        }
        mu_traj = Trajectory::from_snapshots(mesh, next)?;

        if gap < tol {
            let (w, _) = second_order_response(
                &frame,
                terminal,
                around,
                &mu_traj,
                tilde,
                &back_fixed,
                &fwd_fixed,
                &terminal_fixed,
                &a,
                &drift,
            )?;
            return Ok(LinearizedSolution {
                v: w,
                rho: mu_traj,
                around: around.clone(),
                iterations: iter,
                final_gap: gap,
                sources: tilde.clone(),
            });
        }
    }
    Err(MfgError::NotConverged {
        solver: "linearized2-picard".into(),
        iterations: scenario.fixed_point.max_iter,
        gap: f64::INFINITY,
        tol,
    })
}

#[allow(clippy::too_many_arguments)]
fn second_order_response(
    frame: &Frame,
    terminal: &dyn MeasureFunctional,
    around: &MFGSolution,
    mu_traj: &SignedTrajectory,
    tilde: &LinearSources,
    back_fixed: &[Vec<f64>],
    fwd_fixed: &[Vec<f64>],
    terminal_fixed: &GridFunction,
    a: &dyn Fn(f64, f64) -> f64,
    drift: &dyn Fn(f64, f64) -> f64,
) -> Result<(ParabolicTrajectory, SignedTrajectory)> {
    let grid = frame.grid;
    let mesh = frame.mesh;
    let mu_dirs: Vec<_> = (0..=mesh.steps())
        .map(|k| frame.hams[k].direction(mu_traj.snapshot(k).values()))
        .collect();

    let g = terminal
        .flat_derivative(around.x0, around.m.terminal(), mu_traj.terminal())?
        .zip_with(terminal_fixed, |d, fixed| d + fixed);
    let f = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        tilde.r1[k].values()[i]
            - frame.hams[k].dm(i, frame.du[k][i], &mu_dirs[k])
            - back_fixed[k][i]
    };
    let w = solve_linear_parabolic_system(a, drift, None, &[&f], &[g], &mesh)?
        .pop()
        .expect("one component in, one out");

    let dw: Vec<Vec<f64>> = w
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let feedback = |t: f64, x: f64| {
        let k = frame.level_of(t);
        let i = grid.node_index(x);
        let m = around.m.snapshot(k).values()[i];
        m * frame.hams[k].dpp() * dw[k][i] + m * frame.hams[k].dm_dp(i, &mu_dirs[k])
    };
    let fixed = |t: f64, x: f64| fwd_fixed[frame.level_of(t)][grid.node_index(x)];
    let r2 = |t: f64, x: f64| tilde.r2[frame.level_of(t)].values()[grid.node_index(x)];
    let zero0 = GridSignedMeasure::zero(grid);
    let mu_next = solve_fp_signed_forward(a, drift, &zero0, &[&feedback, &fixed, &r2], &mesh)?;
    Ok((w, mu_next))
}

fn require_direction_zero(direction: usize) -> Result<()> {
    if direction != 0 {
        return Err(MfgError::InvalidArgument(format!(
            "the major position is one-dimensional; direction {direction} does not exist"
        )));
    }
    Ok(())
}

/// Sources for the x0-derivative of the system: differentiate the reference
/// equations in x0 at frozen (u, m).
pub fn build_x0_sources(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
    direction: usize,
) -> Result<LinearSources> {
    require_direction_zero(direction)?;
    let frame = Frame::new(scenario, around);
    let levels = frame.mesh.steps() + 1;
    let mut r1 = Vec::with_capacity(levels);
    let mut r2 = Vec::with_capacity(levels);
    for k in 0..levels {
        let ham = &frame.hams[k];
        let m = around.m.snapshot(k).values();
        let mut v1 = vec![0.0; frame.grid.n()];
        let mut v2 = vec![0.0; frame.grid.n()];
        for i in 0..frame.grid.n() {
            v1[i] = -ham.dx0(i, frame.du[k][i]);
            v2[i] = m[i] * ham.dx0_dp(i);
        }
        r1.push(GridFunction::new(frame.grid, v1));
        r2.push(GridFunction::new(frame.grid, v2));
    }
    let r3 = terminal.x0_derivative(around.x0, around.m.terminal())?;
    Ok(LinearSources { r1, r2, r3 })
}

/// Sources for the mixed x0-and-measure derivative: differentiate the
/// first-order system in x0, keeping only the terms where the explicit
/// x0-dependence of the coefficients hits the given solution.
pub fn build_tilde_sources(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
    solution: &LinearizedSolution,
    direction: usize,
) -> Result<LinearSources> {
    require_direction_zero(direction)?;
    let frame = Frame::new(scenario, around);
    let grid = frame.grid;
    let levels = frame.mesh.steps() + 1;
    let dv: Vec<Vec<f64>> = solution
        .v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let mut r1 = Vec::with_capacity(levels);
    let mut r2 = Vec::with_capacity(levels);
    for k in 0..levels {
        let ham = &frame.hams[k];
        let dir = ham.direction(solution.rho.snapshot(k).values());
        let m = around.m.snapshot(k).values();
        let rho = solution.rho.snapshot(k).values();
        let mut v1 = vec![0.0; grid.n()];
        let mut v2 = vec![0.0; grid.n()];
        for i in 0..grid.n() {
            let p = frame.du[k][i];
            v1[i] = -ham.dx0_dp(i) * dv[k][i] - ham.dx0_dm(i, p, &dir);
            v2[i] = rho[i] * ham.dx0_dp(i)
                + m[i] * ham.dx0_dpp() * dv[k][i]
                + m[i] * ham.dx0_dm_dp(i, &dir);
        }
        r1.push(GridFunction::new(grid, v1));
        r2.push(GridFunction::new(grid, v2));
    }
    let r3 =
        terminal.x0_flat_derivative(around.x0, around.m.terminal(), solution.rho.terminal())?;
    Ok(LinearSources { r1, r2, r3 })
}

/// Sources for the second x0-derivative, symmetric in the two first-order
/// x0-solutions.
pub fn build_tilde2_sources(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
    first: &LinearizedSolution,
    second: &LinearizedSolution,
    direction: usize,
) -> Result<LinearSources> {
    require_direction_zero(direction)?;
    let frame = Frame::new(scenario, around);
    let grid = frame.grid;
    let levels = frame.mesh.steps() + 1;
    let dv1: Vec<Vec<f64>> = first
        .v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let dv2: Vec<Vec<f64>> = second
        .v
        .snapshots()
        .iter()
        .map(|s| spectral_derivative(s.values(), 1, grid.length()))
        .collect();
    let mut r1 = Vec::with_capacity(levels);
    let mut r2 = Vec::with_capacity(levels);
    for k in 0..levels {
        let ham = &frame.hams[k];
        let d1 = ham.direction(first.rho.snapshot(k).values());
        let d2 = ham.direction(second.rho.snapshot(k).values());
        let m = around.m.snapshot(k).values();
        let rho1 = first.rho.snapshot(k).values();
        let rho2 = second.rho.snapshot(k).values();
        let mut v1 = vec![0.0; grid.n()];
        let mut v2 = vec![0.0; grid.n()];
        for i in 0..grid.n() {
            let p = frame.du[k][i];
            v1[i] = -(ham.dx0x0(i, p)
                + ham.dx0_dp(i) * dv2[k][i]
                + ham.dx0_dp(i) * dv1[k][i]
                + ham.dx0_dm(i, p, &d2)
                + ham.dx0_dm(i, p, &d1));
            v2[i] = rho2[i] * ham.dx0_dp(i)
                + rho1[i] * ham.dx0_dp(i)
                + m[i] * ham.dx0_dpp() * (dv2[k][i] + dv1[k][i])
                + m[i] * (ham.dx0_dm_dp(i, &d2) + ham.dx0_dm_dp(i, &d1))
                + m[i] * ham.dx0x0_dp(i);
        }
        r1.push(GridFunction::new(grid, v1));
        r2.push(GridFunction::new(grid, v2));
    }
    let term = around.m.terminal();
    let base = terminal.x0_second_derivative(around.x0, term)?;
    let cross1 = terminal.x0_flat_derivative(around.x0, term, second.rho.terminal())?;
    let cross2 = terminal.x0_flat_derivative(around.x0, term, first.rho.terminal())?;
    let r3 = GridFunction::new(
        grid,
        (0..grid.n())
            .map(|i| base.values()[i] + cross1.values()[i] + cross2.values()[i])
            .collect(),
    );
    Ok(LinearSources { r1, r2, r3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDensity;
    use crate::mfg::solve_mfg;

    fn reference(n: usize, tol: f64) -> (Scenario, MFGSolution) {
        let mut scenario = Scenario::catalog(n).unwrap();
        scenario.fixed_point.tol = tol;
        let m0 = GridDensity::wrapped_gaussian(scenario.grid, 2.2, 0.6).unwrap();
        let sol = solve_mfg(&scenario, 0.0, &m0, 0.9, &scenario.terminal).unwrap();
        (scenario, sol)
    }

    #[test]
    fn zero_data_stays_exactly_zero() {
        let (scenario, around) = reference(32, 1e-9);
        let zero_sources = LinearSources::zero(scenario.grid, around.m.mesh());
        let rho0 = GridSignedMeasure::zero(scenario.grid);
        let sol = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho0, &zero_sources)
            .unwrap();
        assert_eq!(sol.iterations, 1);
        for snap in sol.v.snapshots() {
            assert_eq!(snap.sup_norm(), 0.0);
        }
        for snap in sol.rho.snapshots() {
            assert!(snap.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn direction_along_the_flow_reproduces_the_density() {
        let (scenario, around) = reference(32, 1e-10);
        let zero_sources = LinearSources::zero(scenario.grid, around.m.mesh());
        let rho0 = around.m.initial().to_signed();
        let sol = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho0, &zero_sources)
            .unwrap();
        let spacing = scenario.grid.spacing();
        for k in 0..=around.m.mesh().steps() {
            let drift = l1_distance(
                sol.rho.snapshot(k),
                &around.m.snapshot(k).to_signed(),
                spacing,
            );
            assert!(drift < 1e-7, "rho strayed from m by {drift} at level {k}");
        }
        assert!(sol.v.snapshot(0).sup_norm() < 5e-9, "v(t0) = {}", sol.v.snapshot(0).sup_norm());
    }

    #[test]
    fn solution_is_linear_in_the_initial_direction() {
        let (scenario, around) = reference(32, 1e-12);
        let zero_sources = LinearSources::zero(scenario.grid, around.m.mesh());
        let grid = scenario.grid;
        let bump1 = GridDensity::wrapped_gaussian(grid, 1.0, 0.5).unwrap();
        let bump2 = GridDensity::wrapped_gaussian(grid, 4.0, 0.8).unwrap();
        let rho1 = GridSignedMeasure::difference(&bump1, around.m.initial()).unwrap();
        let rho2 = GridSignedMeasure::difference(&bump2, around.m.initial()).unwrap();
        let combo = GridSignedMeasure::new(
            grid,
            rho1.values()
                .iter()
                .zip(rho2.values())
                .map(|(a, b)| 2.0 * a - 0.5 * b)
                .collect(),
        );
        let s1 = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho1, &zero_sources)
            .unwrap();
        let s2 = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho2, &zero_sources)
            .unwrap();
        let sc = solve_linearized_1(&scenario, &around, &scenario.terminal, &combo, &zero_sources)
            .unwrap();
        let direct = sc.v.snapshot(0);
        let superposed = s1.v.snapshot(0).zip_with(s2.v.snapshot(0), |a, b| 2.0 * a - 0.5 * b);
        assert!(
            direct.sup_distance(&superposed) < 1e-10,
            "superposition defect {}",
            direct.sup_distance(&superposed)
        );
    }

    #[test]
    fn rho_keeps_its_initial_mass() {
        let (scenario, around) = reference(32, 1e-9);
        let zero_sources = LinearSources::zero(scenario.grid, around.m.mesh());
        let grid = scenario.grid;
        let mut vals = vec![0.0; grid.n()];
        vals[3] = 1.0 / grid.spacing();
        vals[19] = -1.0 / grid.spacing();
        let dipole = GridSignedMeasure::new(grid, vals);
        let sol = solve_linearized_1(&scenario, &around, &scenario.terminal, &dipole, &zero_sources)
            .unwrap();
        for snap in sol.rho.snapshots() {
            assert!(snap.total_mass().abs() <= 1e-12);
        }
        let g = scenario
            .terminal
            .flat_derivative(around.x0, around.m.terminal(), sol.rho.terminal())
            .unwrap();
        assert!(sol.v.terminal().sup_distance(&g) <= 1e-12);
    }

    #[test]
    fn x0_sources_vanish_without_coupling_and_match_differencing() {
        let (scenario, around) = reference(24, 1e-9);
        let sources =
            build_x0_sources(&scenario, &around, &scenario.terminal, 0).unwrap();
        // central difference of the bound Hamiltonian in x0 at frozen (u, m)
        let frame = Frame::new(&scenario, &around);
        let eps = 1e-5;
        for k in [0, frame.mesh.steps() / 2, frame.mesh.steps()] {
            let hp = HamiltonianAt::bind(
                &scenario.hamiltonian,
                &scenario.grid,
                around.x0 + eps,
                around.m.snapshot(k).values(),
            );
            let hm = HamiltonianAt::bind(
                &scenario.hamiltonian,
                &scenario.grid,
                around.x0 - eps,
                around.m.snapshot(k).values(),
            );
            for i in [0, 7, 15] {
                let p = frame.du[k][i];
                let fd = (hp.value(i, p) - hm.value(i, p)) / (2.0 * eps);
                assert!((sources.r1[k].values()[i] + fd).abs() < 1e-8);
                let fd_p = (hp.dp(i, p) - hm.dp(i, p)) / (2.0 * eps);
                let m = around.m.snapshot(k).values()[i];
                assert!((sources.r2[k].values()[i] - m * fd_p).abs() < 1e-8);
            }
        }
        assert!(build_x0_sources(&scenario, &around, &scenario.terminal, 1).is_err());

        let mut flat = scenario.clone();
        flat.hamiltonian.x0_amp = 0.0;
        flat.terminal.x0_amp = 0.0;
        let m0 = GridDensity::wrapped_gaussian(flat.grid, 2.2, 0.6).unwrap();
        let around_flat = solve_mfg(&flat, 0.0, &m0, 0.9, &flat.terminal).unwrap();
        let none = build_x0_sources(&flat, &around_flat, &flat.terminal, 0).unwrap();
        for k in 0..none.r1.len() {
            assert_eq!(none.r1[k].sup_norm(), 0.0);
            assert_eq!(none.r2[k].sup_norm(), 0.0);
        }
        assert_eq!(none.r3.sup_norm(), 0.0);
    }

    #[test]
    fn second_order_solution_is_symmetric_and_bilinear() {
        let (scenario, around) = reference(24, 1e-10);
        let grid = scenario.grid;
        let zero_sources = LinearSources::zero(grid, around.m.mesh());
        let bump1 = GridDensity::wrapped_gaussian(grid, 1.0, 0.5).unwrap();
        let bump2 = GridDensity::wrapped_gaussian(grid, 4.5, 0.7).unwrap();
        let rho1 = GridSignedMeasure::difference(&bump1, around.m.initial()).unwrap();
        let rho2 = GridSignedMeasure::difference(&bump2, around.m.initial()).unwrap();
        let s1 = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho1, &zero_sources)
            .unwrap();
        let s2 = solve_linearized_1(&scenario, &around, &scenario.terminal, &rho2, &zero_sources)
            .unwrap();

        let w12 =
            solve_linearized_2(&scenario, &around, &scenario.terminal, &s1, &s2, &zero_sources)
                .unwrap();
        let w21 =
            solve_linearized_2(&scenario, &around, &scenario.terminal, &s2, &s1, &zero_sources)
                .unwrap();
        let defect = w12.v.snapshot(0).sup_distance(w21.v.snapshot(0));
        assert!(defect < 1e-9, "swap symmetry defect {defect}");
        assert!(w12.rho.initial().values().iter().all(|v| *v == 0.0));
        for snap in w12.rho.snapshots() {
            assert!(snap.total_mass().abs() <= 1e-12);
        }

        // zero directions give the zero solution
        let zero_rho = GridSignedMeasure::zero(grid);
        let s0 = solve_linearized_1(&scenario, &around, &scenario.terminal, &zero_rho, &zero_sources)
            .unwrap();
        let w00 =
            solve_linearized_2(&scenario, &around, &scenario.terminal, &s0, &s0, &zero_sources)
                .unwrap();
        for snap in w00.v.snapshots() {
            assert_eq!(snap.sup_norm(), 0.0);
        }
    }
}
