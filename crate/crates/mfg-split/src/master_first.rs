//! The master field: the value of the coupled system read as a function
//! U(t, x0, x, m) of its starting point, together with its measure and
//! x0-derivatives and a term-by-term audit of the equation it satisfies.
//!
//! Every operation re-solves the coupled system from the queried point, so
//! values are always consistent with the solver's own discretization. The
//! scalar field U0(t, x0, m) rides along the same solve: it is the major
//! terminal cost read off the terminal density.

use crate::error::{MfgError, Result};
use crate::functional::{MajorTerminal, MeasureFunctional};
use crate::grid::{GridDensity, GridFunction, GridSignedMeasure};
use crate::hamiltonian::HamiltonianAt;
use crate::linearized::{build_x0_sources, solve_linearized_1, solve_linearized_2, LinearSources};
use crate::mfg::{solve_mfg, MFGSolution};
use crate::scenario::Scenario;
use crate::spectral::spectral_derivative;

/// Largest grid accepted by [`master_residual_via_flow`]: the sweep runs one
/// linearized solve per grid cell, so the cost grows with n times the cost of
/// a full linearized solve.
pub const RESIDUAL_SWEEP_LIMIT: usize = 32;

/// Sup-norm magnitudes of the five signed terms of the equation satisfied by
/// the master field, plus the sup norm of their pointwise sum. A small
/// `total` against large individual magnitudes means the terms cancel, i.e.
/// the field actually satisfies the equation at the reported resolution.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub time_derivative: f64,
    pub diffusion: f64,
    pub hamiltonian: f64,
    pub nonlocal_diffusion: f64,
    pub nonlocal_drift: f64,
    pub total: f64,
    /// Step of the extrapolated forward time quotient.
    pub time_step: f64,
    /// Time step of the underlying parabolic solves.
    pub solver_dt: f64,
    pub grid_n: usize,
    /// Linearized solves spent on the measure-derivative sweep.
    pub sweep_solves: usize,
}

fn at_horizon(scenario: &Scenario, t0: f64) -> bool {
    (t0 - scenario.horizon).abs() <= 1e-12 * scenario.horizon.max(1.0)
}

/// U(t0, x0, ., m0): the value function of the coupled system started at
/// (t0, m0), or the terminal cost itself when t0 sits at the horizon.
pub fn eval_u(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    terminal: &dyn MeasureFunctional,
) -> Result<GridFunction> {
    if at_horizon(scenario, t0) {
        return terminal.evaluate(x0, m0);
    }
    let sol = solve_mfg(scenario, t0, m0, x0, terminal)?;
    Ok(sol.u.initial().clone())
}

/// U0(t0, x0, m0): the major terminal cost read off the terminal density of
/// the same solve.
pub fn eval_u0(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    major: &MajorTerminal,
    terminal: &dyn MeasureFunctional,
) -> Result<f64> {
    if at_horizon(scenario, t0) {
        return Ok(major.evaluate(x0, m0));
    }
    let sol = solve_mfg(scenario, t0, m0, x0, terminal)?;
    Ok(major.evaluate(x0, sol.m.terminal()))
}

/// The measure derivative of U paired with rho0, i.e. v(t0, .) from the
/// linearized system with no sources and initial direction rho0.
pub fn delta_u_delta_m(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    rho0: &GridSignedMeasure,
    terminal: &dyn MeasureFunctional,
) -> Result<GridFunction> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let sources = LinearSources::zero(scenario.grid, around.m.mesh());
    let lin = solve_linearized_1(scenario, &around, terminal, rho0, &sources)?;
    Ok(lin.v.initial().clone())
}

/// The measure derivative of U0 paired with rho0: the major terminal cost
/// differentiated at the transported direction rho(T).
pub fn delta_u0_delta_m(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    rho0: &GridSignedMeasure,
    major: &MajorTerminal,
    terminal: &dyn MeasureFunctional,
) -> Result<f64> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let sources = LinearSources::zero(scenario.grid, around.m.mesh());
    let lin = solve_linearized_1(scenario, &around, terminal, rho0, &sources)?;
    Ok(major.flat_derivative(x0, around.m.terminal(), lin.rho.terminal()))
}

/// The x0-derivative of U: the linearized system driven by the
/// x0-differentiated coefficients, with zero initial direction.
pub fn d_x0_u(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    terminal: &dyn MeasureFunctional,
) -> Result<GridFunction> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let sources = build_x0_sources(scenario, &around, terminal, 0)?;
    let rho0 = GridSignedMeasure::zero(scenario.grid);
    let lin = solve_linearized_1(scenario, &around, terminal, &rho0, &sources)?;
    Ok(lin.v.initial().clone())
}

/// The x0-derivative of U0: the direct x0-derivative of the major terminal
/// cost plus its measure derivative paired with the transported direction.
pub fn d_x0_u0(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    major: &MajorTerminal,
    terminal: &dyn MeasureFunctional,
) -> Result<f64> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let sources = build_x0_sources(scenario, &around, terminal, 0)?;
    let rho0 = GridSignedMeasure::zero(scenario.grid);
    let lin = solve_linearized_1(scenario, &around, terminal, &rho0, &sources)?;
    let m_terminal = around.m.terminal();
    Ok(major.x0_derivative(x0, m_terminal)
        + major.flat_derivative(x0, m_terminal, lin.rho.terminal()))
}

/// The second measure derivative of U paired with (rho0, rho0_prime):
/// w(t0, .) from the second-order linearized system with no sources.
pub fn d2_u_dm2(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    rho0: &GridSignedMeasure,
    rho0_prime: &GridSignedMeasure,
    terminal: &dyn MeasureFunctional,
) -> Result<GridFunction> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let zero = LinearSources::zero(scenario.grid, around.m.mesh());
    let s1 = solve_linearized_1(scenario, &around, terminal, rho0, &zero)?;
    let s2 = solve_linearized_1(scenario, &around, terminal, rho0_prime, &zero)?;
    let w = solve_linearized_2(scenario, &around, terminal, &s1, &s2, &zero)?;
    Ok(w.v.initial().clone())
}

/// The second measure derivative of U0 paired with (rho0, rho0_prime).
pub fn d2_u0_dm2(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    rho0: &GridSignedMeasure,
    rho0_prime: &GridSignedMeasure,
    major: &MajorTerminal,
    terminal: &dyn MeasureFunctional,
) -> Result<f64> {
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let zero = LinearSources::zero(scenario.grid, around.m.mesh());
    let s1 = solve_linearized_1(scenario, &around, terminal, rho0, &zero)?;
    let s2 = solve_linearized_1(scenario, &around, terminal, rho0_prime, &zero)?;
    let w = solve_linearized_2(scenario, &around, terminal, &s1, &s2, &zero)?;
    let m_terminal = around.m.terminal();
    Ok(major.second_flat_derivative(x0, m_terminal, s1.rho.terminal(), s2.rho.terminal())
        + major.flat_derivative(x0, m_terminal, w.rho.terminal()))
}

fn check_sweep_size(n: usize) -> Result<()> {
    if n > RESIDUAL_SWEEP_LIMIT {
        return Err(MfgError::InvalidArgument(format!(
            "the measure-derivative sweep runs one linearized solve per grid \
             cell; {n} cells exceeds the limit of {RESIDUAL_SWEEP_LIMIT}"
        )));
    }
    Ok(())
}

fn kernel_rows(
    scenario: &Scenario,
    around: &MFGSolution,
    terminal: &dyn MeasureFunctional,
) -> Result<Vec<GridFunction>> {
    let grid = scenario.grid;
    let zero_sources = LinearSources::zero(grid, around.m.mesh());
    (0..grid.n())
        .map(|j| {
            let mut vals = vec![0.0; grid.n()];
            vals[j] = 1.0 / grid.spacing();
            let dir = GridSignedMeasure::new(grid, vals);
            let lin = solve_linearized_1(scenario, around, terminal, &dir, &zero_sources)?;
            Ok(lin.v.initial().clone())
        })
        .collect()
}

/// The measure-derivative kernel dU/dm(x_i, y_j) on the full grid: row j is
/// the derivative paired with a unit point direction at cell j. Runs one
/// linearized solve per cell, so the grid is capped at
/// [`RESIDUAL_SWEEP_LIMIT`] cells.
pub fn delta_u_delta_m_kernel(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
    terminal: &dyn MeasureFunctional,
) -> Result<Vec<GridFunction>> {
    check_sweep_size(scenario.grid.n())?;
    scenario.grid.check_same(m0.grid())?;
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    kernel_rows(scenario, &around, terminal)
}

/// Sup norm of the y-gradient of a measure-derivative kernel, by periodic
/// central differences across the rows.
pub fn kernel_y_gradient_sup(kernel: &[GridFunction]) -> f64 {
    let rows = kernel.len();
    if rows == 0 {
        return 0.0;
    }
    let h = kernel[0].grid().spacing();
    let mut sup = 0.0f64;
    for j in 0..rows {
        let up = kernel[(j + 1) % rows].values();
        let down = kernel[(j + rows - 1) % rows].values();
        for i in 0..up.len() {
            sup = sup.max(((up[i] - down[i]) / (2.0 * h)).abs());
        }
    }
    sup
}

/// Audit of the equation satisfied by the master field at (t0, x0, ., m0):
///
///   -dU/dt - a d2U/dx2 + H(x0, x, dU/dx, m0)
///   - integral of a(y) d2/dy2 [dU/dm](x, y) m0(dy)
///   + integral of d/dy [dU/dm](x, y) . Hp(x0, y, dU/dx(y), m0) m0(dy) = 0.
///
/// The time derivative is a forward quotient at frozen m0, extrapolated once;
/// the measure-derivative kernel dU/dm(x, y) is recovered by one linearized
/// solve per grid cell, then differentiated in y by central differences.
pub fn master_residual_via_flow(
    scenario: &Scenario,
    t0: f64,
    x0: f64,
    m0: &GridDensity,
) -> Result<ResidualReport> {
    let grid = scenario.grid;
    let n = grid.n();
    check_sweep_size(n)?;
    grid.check_same(m0.grid())?;
    let terminal: &dyn MeasureFunctional = &scenario.terminal;
    let around = solve_mfg(scenario, t0, m0, x0, terminal)?;
    let u0 = around.u.initial();

    let delta = (1e-3 * scenario.horizon).min(0.5 * (scenario.horizon - t0));
    let u_full = eval_u(scenario, t0 + delta, x0, m0, terminal)?;
    let u_half = eval_u(scenario, t0 + 0.5 * delta, x0, m0, terminal)?;

    let length = grid.length();
    let du = spectral_derivative(u0.values(), 1, length);
    let d2u = spectral_derivative(u0.values(), 2, length);
    let a = scenario.diffusion_fn();
    let ham = HamiltonianAt::bind(&scenario.hamiltonian, &grid, x0, m0.values());

    let mut time_term = vec![0.0; n];
    let mut diffusion_term = vec![0.0; n];
    let mut hamiltonian_term = vec![0.0; n];
    for i in 0..n {
        let quot_full = (u_full.values()[i] - u0.values()[i]) / delta;
        let quot_half = (u_half.values()[i] - u0.values()[i]) / (0.5 * delta);
        time_term[i] = -(2.0 * quot_half - quot_full);
        diffusion_term[i] = -a(t0, grid.node(i)) * d2u[i];
        hamiltonian_term[i] = ham.value(i, du[i]);
    }

    // kernel[j][i] = dU/dm(x_i, y_j), one unit-mass cell direction per j; the
    // normalization shift is constant in j and drops out of the y-differences
    let kernel = kernel_rows(scenario, &around, terminal)?;

    let h = grid.spacing();
    let mut nonlocal_diffusion = vec![0.0; n];
    let mut nonlocal_drift = vec![0.0; n];
    for i in 0..n {
        let mut diffusion_acc = 0.0;
        let mut drift_acc = 0.0;
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            let up = kernel[jp].values()[i];
            let down = kernel[jm].values()[i];
            let mid = kernel[j].values()[i];
            let ky = (up - down) / (2.0 * h);
            let kyy = (up - 2.0 * mid + down) / (h * h);
            let weight = m0.values()[j] * h;
            diffusion_acc += a(t0, grid.node(j)) * kyy * weight;
            drift_acc += ky * ham.dp(j, du[j]) * weight;
        }
        nonlocal_diffusion[i] = -diffusion_acc;
        nonlocal_drift[i] = drift_acc;
    }

    let sup = |v: &[f64]| v.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
    let mut total = 0.0f64;
    for i in 0..n {
        let sum = time_term[i]
            + diffusion_term[i]
            + hamiltonian_term[i]
            + nonlocal_diffusion[i]
            + nonlocal_drift[i];
        total = total.max(sum.abs());
    }
    Ok(ResidualReport {
        time_derivative: sup(&time_term),
        diffusion: sup(&diffusion_term),
        hamiltonian: sup(&hamiltonian_term),
        nonlocal_diffusion: sup(&nonlocal_diffusion),
        nonlocal_drift: sup(&nonlocal_drift),
        total,
        time_step: delta,
        solver_dt: around.m.mesh().dt(),
        grid_n: n,
        sweep_solves: n,
    })
}
