//! Hamiltonian catalog: quadratic in the momentum with smooth nonlocal
//! couplings, so every derivative the solvers and linearizations ask for
//! exists in closed form.
//!
//! H(x0, x, p, m) = q/2 p^2 + S(x0,x,m) p + F(x0,x,m) with
//!   S = amp sin(x-x0) (1 + phi*m) + beta (phi*m)
//!   F = amp cos(x-x0) (1 + psi*m) + c0 (psi*m) + beta/2 (phi*m)^2
//! where * is convolution on the torus. The quadratic coefficient never
//! depends on m, so third momentum derivatives and measure derivatives of
//! H_pp vanish identically.

use serde::{Deserialize, Serialize};

use crate::grid::{GridDensity, TorusGrid};
use crate::spectral::convolve_periodic;
use crate::trig::TrigPoly;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    /// Catalog label carried into reports.
    pub tag: String,
    /// Quadratic coefficient q in q/2 p^2; must be positive.
    pub quad: f64,
    /// Kernel entering the potential coupling psi*m.
    pub psi: TrigPoly,
    /// Kernel entering the drift coupling phi*m.
    pub phi: TrigPoly,
    /// Strength of the linear potential coupling.
    pub c0: f64,
    /// Strength of the drift coupling and of the quadratic potential part.
    pub beta: f64,
    /// Amplitude of the major-position coupling.
    pub x0_amp: f64,
    /// Declared growth constant, reported by audits.
    pub growth_c0: f64,
    /// Declared growth exponent, reported by audits.
    pub gamma: f64,
}

impl HamiltonianSpec {
    pub fn standard() -> Self {
        Self {
            tag: "standard".into(),
            quad: 1.0,
            psi: TrigPoly::from_modes(0.0, &[1.0, 0.3], &[]),
            phi: TrigPoly::from_modes(0.0, &[0.5], &[0.8]),
            c0: 0.4,
            beta: 0.3,
            x0_amp: 0.25,
            growth_c0: 4.0,
            gamma: 1.0,
        }
    }

    /// Zero coupling: H = q/2 p^2, which decouples the MFG system.
    pub fn decoupled() -> Self {
        Self {
            tag: "decoupled".into(),
            quad: 1.0,
            psi: TrigPoly::zero(),
            phi: TrigPoly::zero(),
            c0: 0.0,
            beta: 0.0,
            x0_amp: 0.0,
            growth_c0: 1.0,
            gamma: 1.0,
        }
    }

    /// Crude bound on |S| uniform over measures and x0.
    pub fn drift_coupling_bound(&self) -> f64 {
        let phi_sup = self.phi.sup_bound();
        self.x0_amp.abs() * (1.0 + phi_sup) + self.beta.abs() * phi_sup
    }
}

/// Hamiltonian of the major player: H0(x0, p0, m) = q0/2 p0^2
/// + strength (kernel * m)(x0) + potential(x0). The momentum coefficient is
/// measure-free, so the induced drift depends on m only through the value
/// function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MajorHamiltonianSpec {
    pub tag: String,
    pub quad: f64,
    pub strength: f64,
    pub kernel: TrigPoly,
    pub potential: TrigPoly,
}

impl MajorHamiltonianSpec {
    pub fn standard() -> Self {
        Self {
            tag: "standard".into(),
            quad: 1.0,
            strength: 0.4,
            kernel: TrigPoly::from_modes(0.0, &[1.0], &[0.2]),
            potential: TrigPoly::from_modes(0.0, &[0.3], &[]),
        }
    }

    pub fn decoupled() -> Self {
        Self {
            tag: "decoupled".into(),
            quad: 1.0,
            strength: 0.0,
            kernel: TrigPoly::zero(),
            potential: TrigPoly::zero(),
        }
    }

    /// (kernel * m)(x0) by direct summation; the kernel period is the torus
    /// length of m's grid.
    pub fn mean_field_term(&self, m: &GridDensity, x0: f64) -> f64 {
        let grid = m.grid();
        let length = grid.length();
        let spacing = grid.spacing();
        grid.nodes()
            .zip(m.values())
            .map(|(y, w)| self.kernel.eval(x0 - y, length) * w)
            .sum::<f64>()
            * spacing
    }
}

/// The Hamiltonian bound to one (grid, x0, m) triple: all coupling
/// convolutions are precomputed, evaluation is per node index.
pub struct HamiltonianAt {
    q: f64,
    c0: f64,
    beta: f64,
    amp: f64,
    s: Vec<f64>,
    f: Vec<f64>,
    sin_rel: Vec<f64>,
    cos_rel: Vec<f64>,
    phi_m: Vec<f64>,
    psi_m: Vec<f64>,
    phi_vals: Vec<f64>,
    psi_vals: Vec<f64>,
    spacing: f64,
}

/// A measure direction rho bound to the same state: the two kernel
/// convolutions against rho.
pub struct HamiltonianDirection {
    phi_rho: Vec<f64>,
    psi_rho: Vec<f64>,
}

impl HamiltonianAt {
    pub fn bind(spec: &HamiltonianSpec, grid: &TorusGrid, x0: f64, m_values: &[f64]) -> Self {
        let n = grid.n();
        assert_eq!(m_values.len(), n);
        let spacing = grid.spacing();
        let phi_vals = spec.phi.sample(grid);
        let psi_vals = spec.psi.sample(grid);
        let phi_m = convolve_periodic(&phi_vals, m_values, spacing);
        let psi_m = convolve_periodic(&psi_vals, m_values, spacing);
        let mut sin_rel = vec![0.0; n];
        let mut cos_rel = vec![0.0; n];
        for (i, x) in grid.nodes().enumerate() {
            sin_rel[i] = (x - x0).sin();
            cos_rel[i] = (x - x0).cos();
        }
        let amp = spec.x0_amp;
        let mut s = vec![0.0; n];
        let mut f = vec![0.0; n];
        for i in 0..n {
            s[i] = amp * sin_rel[i] * (1.0 + phi_m[i]) + spec.beta * phi_m[i];
            f[i] = amp * cos_rel[i] * (1.0 + psi_m[i])
                + spec.c0 * psi_m[i]
                + 0.5 * spec.beta * phi_m[i] * phi_m[i];
        }
        Self {
            q: spec.quad,
            c0: spec.c0,
            beta: spec.beta,
            amp,
            s,
            f,
            sin_rel,
            cos_rel,
            phi_m,
            psi_m,
            phi_vals,
            psi_vals,
            spacing,
        }
    }

    pub fn value(&self, i: usize, p: f64) -> f64 {
        0.5 * self.q * p * p + self.s[i] * p + self.f[i]
    }

    pub fn dp(&self, i: usize, p: f64) -> f64 {
        self.q * p + self.s[i]
    }

    pub fn dpp(&self) -> f64 {
        self.q
    }

    pub fn dppp(&self) -> f64 {
        0.0
    }

    pub fn dx0(&self, i: usize, p: f64) -> f64 {
        let ds = -self.amp * self.cos_rel[i] * (1.0 + self.phi_m[i]);
        let df = self.amp * self.sin_rel[i] * (1.0 + self.psi_m[i]);
        ds * p + df
    }

    pub fn dx0_dp(&self, i: usize) -> f64 {
        -self.amp * self.cos_rel[i] * (1.0 + self.phi_m[i])
    }

    pub fn dx0_dpp(&self) -> f64 {
        0.0
    }

    pub fn dx0x0(&self, i: usize, p: f64) -> f64 {
        let dds = -self.amp * self.sin_rel[i] * (1.0 + self.phi_m[i]);
        let ddf = -self.amp * self.cos_rel[i] * (1.0 + self.psi_m[i]);
        dds * p + ddf
    }

    pub fn dx0x0_dp(&self, i: usize) -> f64 {
        -self.amp * self.sin_rel[i] * (1.0 + self.phi_m[i])
    }

    /// Bind a measure direction for the flat-derivative terms. The
    /// representatives are centered against the bound measure, so the
    /// direction rho = m itself yields zero; mass-free directions are
    /// unaffected.
    pub fn direction(&self, rho_values: &[f64]) -> HamiltonianDirection {
        let mass = self.spacing * rho_values.iter().sum::<f64>();
        let mut phi_rho = convolve_periodic(&self.phi_vals, rho_values, self.spacing);
        let mut psi_rho = convolve_periodic(&self.psi_vals, rho_values, self.spacing);
        if mass != 0.0 {
            for i in 0..phi_rho.len() {
                phi_rho[i] -= mass * self.phi_m[i];
                psi_rho[i] -= mass * self.psi_m[i];
            }
        }
        HamiltonianDirection { phi_rho, psi_rho }
    }

    /// dH/dm(x0, x_i, p, m)(rho).
    pub fn dm(&self, i: usize, p: f64, dir: &HamiltonianDirection) -> f64 {
        self.dm_dp(i, dir) * p
            + (self.amp * self.cos_rel[i] + self.c0) * dir.psi_rho[i]
            + self.beta * self.phi_m[i] * dir.phi_rho[i]
    }

    /// dH_p/dm(rho).
    pub fn dm_dp(&self, i: usize, dir: &HamiltonianDirection) -> f64 {
        (self.amp * self.sin_rel[i] + self.beta) * dir.phi_rho[i]
    }

    pub fn dm_dpp(&self, _i: usize, _dir: &HamiltonianDirection) -> f64 {
        0.0
    }

    /// d2H/dm2(rho, rho').
    pub fn dm2(&self, i: usize, a: &HamiltonianDirection, b: &HamiltonianDirection) -> f64 {
        self.beta * a.phi_rho[i] * b.phi_rho[i]
    }

    pub fn dm2_dp(&self, _i: usize, _a: &HamiltonianDirection, _b: &HamiltonianDirection) -> f64 {
        0.0
    }

    /// Mixed major-position and measure derivative of H.
    pub fn dx0_dm(&self, i: usize, p: f64, dir: &HamiltonianDirection) -> f64 {
        -self.amp * self.cos_rel[i] * dir.phi_rho[i] * p
            + self.amp * self.sin_rel[i] * dir.psi_rho[i]
    }

    pub fn dx0_dm_dp(&self, i: usize, dir: &HamiltonianDirection) -> f64 {
        -self.amp * self.cos_rel[i] * dir.phi_rho[i]
    }

    /// Upper bound for |H_p| given a gradient cap, used for mesh selection.
    pub fn advection_bound(&self, p_sup: f64) -> f64 {
        let s_sup = self.s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.q.abs() * p_sup + s_sup
    }
}
