//! Functionals of (x0, measure) used as terminal costs. The trait exposes
//! every derivative the solvers may request; implementations that cannot
//! provide one return a typed error instead of silently differencing.
//!
//! Flat derivatives are normalized representatives: acting on a direction
//! with mass c they subtract c times the value on the bound measure itself,
//! so the direction rho = m yields zero and mass-free directions are
//! untouched.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{GridDensity, GridFunction, GridSignedMeasure, TorusGrid};
use crate::spectral::convolve_periodic;
use crate::trig::TrigPoly;

pub trait MeasureFunctional {
    fn name(&self) -> &str;

    /// G(x0, ., m) sampled on m's grid.
    fn evaluate(&self, x0: f64, m: &GridDensity) -> Result<GridFunction>;

    /// dG/dm(x0, ., m)(rho); linear in rho.
    fn flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        let _ = (x0, m, rho);
        Err(self.missing("the flat measure derivative"))
    }

    /// d2G/dm2(x0, ., m)(rho, rho2); bilinear and symmetric.
    fn second_flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
        rho2: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        let _ = (x0, m, rho, rho2);
        Err(self.missing("the second flat measure derivative"))
    }

    fn x0_derivative(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        let _ = (x0, m);
        Err(self.missing("the x0 derivative"))
    }

    fn x0_flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        let _ = (x0, m, rho);
        Err(self.missing("the mixed x0 and measure derivative"))
    }

    fn x0_second_derivative(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        let _ = (x0, m);
        Err(self.missing("the second x0 derivative"))
    }

    /// Certified bound on |d_x G| uniform over x0 and probability measures,
    /// when the structure allows one. Used for time-step selection.
    fn gradient_bound(&self, length: f64) -> Option<f64> {
        let _ = length;
        None
    }

    fn missing(&self, what: &str) -> MfgError {
        MfgError::MissingDerivative {
            functional: self.name().to_string(),
            what: what.to_string(),
        }
    }
}

/// Terminal cost catalog:
/// G(x0, x, m) = base(x) + amp cos(x-x0) (1 + psi*m) + c (psi*m)
///             + beta/2 (phi*m)^2 + mean_strength <mean_kernel, m>.
/// The last term is constant in x; it couples the value to a mean of m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogTerminal {
    pub tag: String,
    pub base: TrigPoly,
    pub x0_amp: f64,
    pub psi: TrigPoly,
    pub c: f64,
    pub beta: f64,
    pub phi: TrigPoly,
    #[serde(default)]
    pub mean_strength: f64,
    #[serde(default = "TrigPoly::zero")]
    pub mean_kernel: TrigPoly,
}

impl CatalogTerminal {
    pub fn standard() -> Self {
        Self {
            tag: "standard".into(),
            base: TrigPoly::from_modes(0.0, &[0.0, 0.1], &[0.25]),
            x0_amp: 0.2,
            psi: TrigPoly::from_modes(0.0, &[1.0], &[]),
            c: 0.3,
            beta: 0.2,
            phi: TrigPoly::from_modes(0.0, &[0.6], &[0.4]),
            mean_strength: 0.0,
            mean_kernel: TrigPoly::zero(),
        }
    }

    /// Only the x-dependent base; no measure or x0 coupling.
    pub fn from_base(base: TrigPoly) -> Self {
        Self {
            tag: "base-only".into(),
            base,
            x0_amp: 0.0,
            psi: TrigPoly::zero(),
            c: 0.0,
            beta: 0.0,
            phi: TrigPoly::zero(),
            mean_strength: 0.0,
            mean_kernel: TrigPoly::zero(),
        }
    }

    /// base(x) + <kernel, m>: affine in the measure, no x0 coupling.
    pub fn mean_coupled(base: TrigPoly, kernel: TrigPoly) -> Self {
        Self {
            tag: "mean-coupled".into(),
            base,
            x0_amp: 0.0,
            psi: TrigPoly::zero(),
            c: 0.0,
            beta: 0.0,
            phi: TrigPoly::zero(),
            mean_strength: 1.0,
            mean_kernel: kernel,
        }
    }

    fn fields(&self, x0: f64, m: &GridDensity) -> TerminalFields {
        let grid = *m.grid();
        let spacing = grid.spacing();
        let psi_m = convolve_periodic(&self.psi.sample(&grid), m.values(), spacing);
        let phi_m = convolve_periodic(&self.phi.sample(&grid), m.values(), spacing);
        let mean_m = self.mean_of(&grid, m.values());
        let n = grid.n();
        let mut sin_rel = vec![0.0; n];
        let mut cos_rel = vec![0.0; n];
        for (i, x) in grid.nodes().enumerate() {
            sin_rel[i] = (x - x0).sin();
            cos_rel[i] = (x - x0).cos();
        }
        TerminalFields { grid, psi_m, phi_m, mean_m, sin_rel, cos_rel }
    }

    fn mean_of(&self, grid: &TorusGrid, values: &[f64]) -> f64 {
        if self.mean_strength == 0.0 {
            return 0.0;
        }
        grid.nodes()
            .zip(values)
            .map(|(x, w)| self.mean_kernel.eval(x, grid.length()) * w)
            .sum::<f64>()
            * grid.spacing()
    }

    /// Kernel convolutions against rho, centered against m so that rho = m
    /// yields zero (see the module doc).
    fn direction(&self, f: &TerminalFields, rho: &GridSignedMeasure) -> TerminalDirection {
        let spacing = f.grid.spacing();
        let mut psi_rho = convolve_periodic(&self.psi.sample(&f.grid), rho.values(), spacing);
        let mut phi_rho = convolve_periodic(&self.phi.sample(&f.grid), rho.values(), spacing);
        let mut mean_rho = self.mean_of(&f.grid, rho.values());
        let mass = rho.total_mass();
        if mass != 0.0 {
            for i in 0..psi_rho.len() {
                psi_rho[i] -= mass * f.psi_m[i];
                phi_rho[i] -= mass * f.phi_m[i];
            }
            mean_rho -= mass * f.mean_m;
        }
        TerminalDirection { psi_rho, phi_rho, mean_rho }
    }
}

struct TerminalFields {
    grid: TorusGrid,
    psi_m: Vec<f64>,
    phi_m: Vec<f64>,
    mean_m: f64,
    sin_rel: Vec<f64>,
    cos_rel: Vec<f64>,
}

struct TerminalDirection {
    psi_rho: Vec<f64>,
    phi_rho: Vec<f64>,
    mean_rho: f64,
}

impl MeasureFunctional for CatalogTerminal {
    fn name(&self) -> &str {
        &self.tag
    }

    fn evaluate(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        let f = self.fields(x0, m);
        let grid = f.grid;
        let base = self.base.sample(&grid);
        let values = (0..grid.n())
            .map(|i| {
                base[i]
                    + self.x0_amp * f.cos_rel[i] * (1.0 + f.psi_m[i])
                    + self.c * f.psi_m[i]
                    + 0.5 * self.beta * f.phi_m[i] * f.phi_m[i]
                    + self.mean_strength * f.mean_m
            })
            .collect();
        Ok(GridFunction::new(grid, values))
    }

    fn flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        m.grid().check_same(rho.grid())?;
        let f = self.fields(x0, m);
        let d = self.direction(&f, rho);
        let values = (0..f.grid.n())
            .map(|i| {
                (self.x0_amp * f.cos_rel[i] + self.c) * d.psi_rho[i]
                    + self.beta * f.phi_m[i] * d.phi_rho[i]
                    + self.mean_strength * d.mean_rho
            })
            .collect();
        Ok(GridFunction::new(f.grid, values))
    }

    fn second_flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
        rho2: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        m.grid().check_same(rho.grid())?;
        m.grid().check_same(rho2.grid())?;
        let f = self.fields(x0, m);
        let d1 = self.direction(&f, rho);
        let d2 = self.direction(&f, rho2);
        let values = (0..f.grid.n())
            .map(|i| self.beta * d1.phi_rho[i] * d2.phi_rho[i])
            .collect();
        Ok(GridFunction::new(f.grid, values))
    }

    fn x0_derivative(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        let f = self.fields(x0, m);
        let values = (0..f.grid.n())
            .map(|i| self.x0_amp * f.sin_rel[i] * (1.0 + f.psi_m[i]))
            .collect();
        Ok(GridFunction::new(f.grid, values))
    }

    fn x0_flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        m.grid().check_same(rho.grid())?;
        let f = self.fields(x0, m);
        let d = self.direction(&f, rho);
        let values = (0..f.grid.n())
            .map(|i| self.x0_amp * f.sin_rel[i] * d.psi_rho[i])
            .collect();
        Ok(GridFunction::new(f.grid, values))
    }

    fn x0_second_derivative(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        let f = self.fields(x0, m);
        let values = (0..f.grid.n())
            .map(|i| -self.x0_amp * f.cos_rel[i] * (1.0 + f.psi_m[i]))
            .collect();
        Ok(GridFunction::new(f.grid, values))
    }

    fn gradient_bound(&self, length: f64) -> Option<f64> {
        let psi_sup = self.psi.sup_bound();
        let dpsi_sup = self.psi.derivative_sup_bound(length);
        let dphi_sup = self.phi.derivative_sup_bound(length);
        Some(
            self.base.derivative_sup_bound(length)
                + self.x0_amp.abs() * (1.0 + psi_sup + dpsi_sup)
                + self.c.abs() * dpsi_sup
                + self.beta.abs() * self.phi.sup_bound() * dphi_sup,
        )
    }
}

/// Scalar terminal cost of the major player:
/// G0(x0, m) = base(x0) + c (kernel * m)(x0) + beta/2 ((kernel * m)(x0))^2.
/// The kernel convolution pairs the x0-torus with m's torus, so both must
/// share the same length when c or beta is nonzero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MajorTerminal {
    pub tag: String,
    pub base: TrigPoly,
    pub c: f64,
    pub beta: f64,
    pub kernel: TrigPoly,
}

impl MajorTerminal {
    pub fn standard() -> Self {
        Self {
            tag: "standard".into(),
            base: TrigPoly::from_modes(0.0, &[0.4], &[0.2]),
            c: 0.5,
            beta: 0.3,
            kernel: TrigPoly::from_modes(0.0, &[1.0], &[0.3]),
        }
    }

    pub fn from_base(base: TrigPoly) -> Self {
        Self { tag: "base-only".into(), base, c: 0.0, beta: 0.0, kernel: TrigPoly::zero() }
    }

    fn kernel_mean(&self, values: &[f64], grid: &TorusGrid, x0: f64) -> f64 {
        grid.nodes()
            .zip(values)
            .map(|(y, w)| self.kernel.eval(x0 - y, grid.length()) * w)
            .sum::<f64>()
            * grid.spacing()
    }

    pub fn evaluate(&self, x0: f64, m: &GridDensity) -> f64 {
        let km = self.kernel_mean(m.values(), m.grid(), x0);
        self.base.eval(x0, m.grid().length()) + self.c * km + 0.5 * self.beta * km * km
    }

    /// dG0/dm(x0, m)(rho), centered against m.
    pub fn flat_derivative(&self, x0: f64, m: &GridDensity, rho: &GridSignedMeasure) -> f64 {
        let km = self.kernel_mean(m.values(), m.grid(), x0);
        let krho =
            self.kernel_mean(rho.values(), m.grid(), x0) - rho.total_mass() * km;
        (self.c + self.beta * km) * krho
    }

    pub fn second_flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
        rho2: &GridSignedMeasure,
    ) -> f64 {
        let km = self.kernel_mean(m.values(), m.grid(), x0);
        let k1 = self.kernel_mean(rho.values(), m.grid(), x0) - rho.total_mass() * km;
        let k2 = self.kernel_mean(rho2.values(), m.grid(), x0) - rho2.total_mass() * km;
        self.beta * k1 * k2
    }

    pub fn x0_derivative(&self, x0: f64, m: &GridDensity) -> f64 {
        let length = m.grid().length();
        let km = self.kernel_mean(m.values(), m.grid(), x0);
        let dkernel = self.kernel.derivative(length);
        let dkm = m
            .grid()
            .nodes()
            .zip(m.values())
            .map(|(y, w)| dkernel.eval(x0 - y, length) * w)
            .sum::<f64>()
            * m.grid().spacing();
        self.base.derivative(length).eval(x0, length) + (self.c + self.beta * km) * dkm
    }
}
