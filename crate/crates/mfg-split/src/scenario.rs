//! A scenario bundles everything a solve needs: grids, horizon, diffusion
//! coefficients, the Hamiltonian and terminal-cost catalogs, and the
//! fixed-point iteration settings.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::functional::{CatalogTerminal, MajorTerminal};
use crate::grid::TorusGrid;
use crate::hamiltonian::{HamiltonianSpec, MajorHamiltonianSpec};
use crate::trig::TrigPoly;

/// Diffusion coefficient a(t, x) = base + variation(x); time-independent by
/// construction, uniformly elliptic when base exceeds the variation bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub base: f64,
    #[serde(default = "TrigPoly::zero")]
    pub variation: TrigPoly,
}

impl DiffusionSpec {
    pub fn constant(base: f64) -> Self {
        Self { base, variation: TrigPoly::zero() }
    }

    pub fn value(&self, x: f64, length: f64) -> f64 {
        self.base + self.variation.eval(x, length)
    }

    pub fn lower_bound(&self) -> f64 {
        self.base - self.variation.sup_bound()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FixedPointConfig {
    #[serde(default = "FixedPointConfig::default_theta")]
    pub theta: f64,
    #[serde(default = "FixedPointConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "FixedPointConfig::default_max_iter")]
    pub max_iter: usize,
}

impl FixedPointConfig {
    fn default_theta() -> f64 {
        0.5
    }
    fn default_tol() -> f64 {
        1e-9
    }
    fn default_max_iter() -> usize {
        200
    }
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            theta: Self::default_theta(),
            tol: Self::default_tol(),
            max_iter: Self::default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: TorusGrid,
    pub horizon: f64,
    pub diffusion: DiffusionSpec,
    /// Common-noise intensity; constant in space and time.
    pub a0: f64,
    pub x0_grid: TorusGrid,
    pub hamiltonian: HamiltonianSpec,
    pub major_hamiltonian: MajorHamiltonianSpec,
    pub terminal: CatalogTerminal,
    pub major_terminal: MajorTerminal,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

impl Scenario {
    /// The standard smooth catalog on n cells: unit diffusion, every coupling
    /// channel active, horizon short enough for the fixed point to contract.
    pub fn catalog(n: usize) -> Result<Self> {
        let s = Self {
            grid: TorusGrid::standard(n)?,
            horizon: 0.25,
            diffusion: DiffusionSpec::constant(1.0),
            a0: 0.5,
            x0_grid: TorusGrid::standard(32)?,
            hamiltonian: HamiltonianSpec::standard(),
            major_hamiltonian: MajorHamiltonianSpec::standard(),
            terminal: CatalogTerminal::standard(),
            major_terminal: MajorTerminal::standard(),
            fixed_point: FixedPointConfig::default(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Catalog with all couplings removed: the system splits into an
    /// independent HJ equation and a heat flow.
    pub fn decoupled(n: usize) -> Result<Self> {
        let mut s = Self::catalog(n)?;
        s.hamiltonian = HamiltonianSpec::decoupled();
        s.major_hamiltonian = MajorHamiltonianSpec::decoupled();
        s.terminal = CatalogTerminal::from_base(TrigPoly::from_modes(0.0, &[0.2], &[0.3]));
        s.major_terminal = MajorTerminal::from_base(TrigPoly::from_modes(0.1, &[0.2], &[]));
        s.validate()?;
        Ok(s)
    }

    pub fn diffusion_fn(&self) -> impl Fn(f64, f64) -> f64 + '_ {
        let length = self.grid.length();
        move |_t, x| self.diffusion.value(x, length)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, message: String| {
            Err(MfgError::Schema { path: path.into(), message })
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return fail("horizon", format!("must be a positive number, got {}", self.horizon));
        }
        if !(self.a0.is_finite() && self.a0 >= 0.0) {
            return fail("a0", format!("must be a nonnegative constant, got {}", self.a0));
        }
        if self.diffusion.lower_bound() < 1e-8 {
            return fail(
                "diffusion",
                format!(
                    "coefficient must stay uniformly positive; lower bound {:.3e}",
                    self.diffusion.lower_bound()
                ),
            );
        }
        if !(self.hamiltonian.quad.is_finite() && self.hamiltonian.quad > 0.0) {
            return fail("hamiltonian.quad", "momentum coefficient must be positive".into());
        }
        if !(self.major_hamiltonian.quad.is_finite() && self.major_hamiltonian.quad > 0.0) {
            return fail("major_hamiltonian.quad", "momentum coefficient must be positive".into());
        }
        let tau = std::f64::consts::TAU;
        let x0_coupled = self.hamiltonian.x0_amp != 0.0 || self.terminal.x0_amp != 0.0;
        if x0_coupled && (self.grid.length() - tau).abs() > 1e-12 {
            return fail(
                "grid.length",
                "the relative-position coupling cos(x - x0) needs the 2*pi torus".into(),
            );
        }
        if x0_coupled && (self.x0_grid.length() - tau).abs() > 1e-12 {
            return fail(
                "x0_grid.length",
                "the relative-position coupling cos(x - x0) needs the 2*pi torus".into(),
            );
        }
        let major_coupled = self.major_hamiltonian.strength != 0.0
            || self.major_terminal.c != 0.0
            || self.major_terminal.beta != 0.0;
        if major_coupled && (self.x0_grid.length() - self.grid.length()).abs() > 1e-12 {
            return fail(
                "x0_grid.length",
                "kernel couplings between x0 and m need matching torus lengths".into(),
            );
        }
        let fp = &self.fixed_point;
        if !(fp.theta > 0.0 && fp.theta <= 1.0) {
            return fail("fixed_point.theta", format!("damping must lie in (0, 1], got {}", fp.theta));
        }
        if !(fp.tol.is_finite() && fp.tol > 0.0) {
            return fail("fixed_point.tol", format!("tolerance must be positive, got {}", fp.tol));
        }
        if fp.max_iter == 0 {
            return fail("fixed_point.max_iter", "need at least one iteration".into());
        }
        Ok(())
    }
}
