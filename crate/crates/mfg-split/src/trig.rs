//! Small trigonometric polynomials: the coupling kernels and potentials are
//! stored this way so one scenario can be sampled onto any grid resolution.

use serde::{Deserialize, Serialize};

/// constant + sum_j (cos[j-1] cos(j w x) + sin[j-1] sin(j w x)), where
/// w = 2*pi / period matches the torus the polynomial lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self { constant: 0.0, cos: Vec::new(), sin: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, cos: Vec::new(), sin: Vec::new() }
    }

    pub fn from_modes(constant: f64, cos: &[f64], sin: &[f64]) -> Self {
        Self { constant, cos: cos.to_vec(), sin: sin.to_vec() }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0
            && self.cos.iter().all(|&c| c == 0.0)
            && self.sin.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// True when the x-dependence vanishes and only the constant term survives.
    pub fn is_constant(&self) -> bool {
        self.cos.iter().all(|&c| c == 0.0) && self.sin.iter().all(|&c| c == 0.0)
    }

    /// Evaluate at x on a torus of the given length.
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        let w = std::f64::consts::TAU / length;
        let mut total = self.constant;
        for (j, &c) in self.cos.iter().enumerate() {
            total += c * ((j + 1) as f64 * w * x).cos();
        }
        for (j, &s) in self.sin.iter().enumerate() {
            total += s * ((j + 1) as f64 * w * x).sin();
        }
        total
    }

    pub fn derivative(&self, length: f64) -> Self {
        let w = std::f64::consts::TAU / length;
        let deg = self.degree();
        let mut cos = vec![0.0; deg];
        let mut sin = vec![0.0; deg];
        for j in 0..deg {
            let k = (j + 1) as f64 * w;
            // d/dx cos(kx) = -k sin(kx), d/dx sin(kx) = k cos(kx)
            if j < self.cos.len() {
                sin[j] -= k * self.cos[j];
            }
            if j < self.sin.len() {
                cos[j] += k * self.sin[j];
            }
        }
        Self { constant: 0.0, cos, sin }
    }

    /// The same polynomial with shifted argument: shifted(c).eval(x) = eval(x + c).
    pub fn shifted(&self, c: f64, length: f64) -> Self {
        let w = std::f64::consts::TAU / length;
        let deg = self.degree();
        let mut cos = vec![0.0; deg];
        let mut sin = vec![0.0; deg];
        for j in 0..deg {
            let (s, co) = ((j + 1) as f64 * w * c).sin_cos();
            let a = self.cos.get(j).copied().unwrap_or(0.0);
            let b = self.sin.get(j).copied().unwrap_or(0.0);
            cos[j] = a * co + b * s;
            sin[j] = b * co - a * s;
        }
        Self { constant: self.constant, cos, sin }
    }

    /// Every coefficient multiplied by the same factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constant: self.constant * factor,
            cos: self.cos.iter().map(|c| c * factor).collect(),
            sin: self.sin.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn sample(&self, grid: &crate::grid::TorusGrid) -> Vec<f64> {
        grid.nodes().map(|x| self.eval(x, grid.length())).collect()
    }

    pub fn sup_bound(&self) -> f64 {
        self.constant.abs()
            + self.cos.iter().map(|c| c.abs()).sum::<f64>()
            + self.sin.iter().map(|s| s.abs()).sum::<f64>()
    }

    pub fn derivative_sup_bound(&self, length: f64) -> f64 {
        self.derivative(length).sup_bound()
    }
}
