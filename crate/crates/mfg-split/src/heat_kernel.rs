//! Wrapped Gaussian transition kernels on the torus grid: the fundamental
//! solution of du/dt = a0 d2u/dx2 sampled at whole-cell shifts and
//! renormalized to unit mass. Weights are built on half the shift range and
//! mirrored, so the kernel is symmetric to the last bit.

use crate::error::{MfgError, Result};
use crate::grid::TorusGrid;

/// Wrap images summed on each side of the principal Gaussian. Nine images
/// cover every duration-coefficient product up to 10 on a unit-length torus
/// with tail mass far below round-off.
const WRAP_IMAGES: i64 = 8;

/// Discrete transition kernel over grid shifts: `weights()[k]` multiplies the
/// contribution shifted by k cells, and spacing times the weight sum is 1.
/// A zero duration-coefficient product degenerates to the identity kernel
/// (all mass on the zero shift).
#[derive(Debug, Clone)]
pub struct WrappedHeatKernel {
    grid: TorusGrid,
    duration: f64,
    a0: f64,
    weights: Vec<f64>,
    identity: bool,
}

impl WrappedHeatKernel {
    pub fn new(grid: TorusGrid, duration: f64, a0: f64) -> Result<Self> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(MfgError::InvalidArgument(format!(
                "kernel duration must be nonnegative, got {duration}"
            )));
        }
        if !a0.is_finite() || a0 < 0.0 {
            return Err(MfgError::InvalidArgument(format!(
                "kernel coefficient must be nonnegative, got {a0}"
            )));
        }
        let n = grid.n();
        let h = grid.spacing();
        let mut weights = vec![0.0; n];
        let four_at = 4.0 * a0 * duration;
        if four_at == 0.0 {
            weights[0] = 1.0 / h;
            return Ok(Self { grid, duration, a0, weights, identity: true });
        }
        let length = grid.length();
        for k in 0..=n / 2 {
            let z = k as f64 * h;
            // the normalizing prefactor cancels in the renormalization below
            let mut sum = 0.0;
            for j in -WRAP_IMAGES..=WRAP_IMAGES {
                let d = z + j as f64 * length;
                sum += (-(d * d) / four_at).exp();
            }
            weights[k] = sum;
            if k != 0 && k != n - k {
                weights[n - k] = sum;
            }
        }
        let mass: f64 = weights.iter().sum::<f64>() * h;
        for w in &mut weights {
            *w /= mass;
        }
        Ok(Self { grid, duration, a0, weights, identity: false })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Weight per shift index; index k stands for the displacement k cells
    /// forward, wrapped (so index n-k is the mirror displacement).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_weight_matches_long_wrapped_sum() {
        let n = 64;
        let grid = TorusGrid::standard(n).unwrap();
        let h = grid.spacing();
        let length = grid.length();
        let (a0, t) = (0.5, 1.0);
        let kernel = WrappedHeatKernel::new(grid, t, a0).unwrap();

        // reference: 10^4 wrap images with the Gaussian prefactor, then the
        // same discrete renormalization over the grid shifts
        let four_at = 4.0 * a0 * t;
        let prefactor = 1.0 / (std::f64::consts::PI * four_at).sqrt();
        let raw = |z: f64| -> f64 {
            let mut sum = 0.0;
            for j in -5000i64..=5000 {
                let d = z + j as f64 * length;
                sum += prefactor * (-(d * d) / four_at).exp();
            }
            sum
        };
        let mass: f64 = (0..n).map(|k| raw(k as f64 * h)).sum::<f64>() * h;
        let oracle = raw(0.0) / mass;
        assert!((kernel.weights()[0] - oracle).abs() <= 1e-13);
        // the raw center value is the standard normal density plus a wrap
        // correction of order 5e-9
        assert!((raw(0.0) - 1.0 / std::f64::consts::TAU.sqrt()).abs() <= 1e-6);
        assert!(raw(0.0) > 1.0 / std::f64::consts::TAU.sqrt());
    }

    #[test]
    fn weights_are_symmetric_nonnegative_and_normalized() {
        for n in [31usize, 32] {
            let grid = TorusGrid::standard(n).unwrap();
            let kernel = WrappedHeatKernel::new(grid, 0.3, 0.7).unwrap();
            let w = kernel.weights();
            assert_eq!(w.len(), n);
            for k in 1..n {
                assert_eq!(w[k], w[n - k], "asymmetry at {k} for n={n}");
            }
            assert!(w.iter().all(|v| *v >= 0.0));
            let mass: f64 = w.iter().sum::<f64>() * grid.spacing();
            assert!((mass - 1.0).abs() <= 1e-13, "mass {mass}");
        }
    }

    #[test]
    fn degenerate_products_give_the_identity_kernel() {
        let grid = TorusGrid::standard(16).unwrap();
        let h = grid.spacing();
        for (t, a0) in [(0.0, 1.0), (0.5, 0.0), (0.0, 0.0)] {
            let kernel = WrappedHeatKernel::new(grid, t, a0).unwrap();
            assert!(kernel.is_identity());
            assert_eq!(kernel.weights()[0], 1.0 / h);
            assert!(kernel.weights()[1..].iter().all(|w| *w == 0.0));
        }
        // tiny but positive products land on the same weights numerically
        let tiny = WrappedHeatKernel::new(grid, 1e-30, 1.0).unwrap();
        assert!(!tiny.is_identity());
        assert_eq!(tiny.weights()[0], 1.0 / h);
        assert!(tiny.weights()[1..].iter().all(|w| *w == 0.0));
    }

    #[test]
    fn negative_parameters_are_rejected() {
        let grid = TorusGrid::standard(8).unwrap();
        assert!(WrappedHeatKernel::new(grid, -0.1, 1.0).is_err());
        assert!(WrappedHeatKernel::new(grid, 0.1, -1.0).is_err());
        assert!(WrappedHeatKernel::new(grid, f64::NAN, 1.0).is_err());
    }
}
