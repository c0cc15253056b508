//! Exact evaluator for the constant-coefficient flow that translates the
//! state and the measure together: the value after a duration is the
//! heat-kernel average of the terminal functional over jointly shifted
//! arguments,
//!
//!   U(t, x, m) = spacing * sum_z G(x - z, shift_{-z} m) Gamma(t, z),
//!
//! with the sum over whole-cell shifts z. Measures rotate by exact index
//! shifts, so the only discretization is the kernel's z-quadrature.

use crate::error::Result;
use crate::functional::MeasureFunctional;
use crate::grid::{GridDensity, GridFunction, GridSignedMeasure};
use crate::heat_kernel::WrappedHeatKernel;

fn rotated_density(m: &GridDensity, k: usize) -> Result<GridDensity> {
    let n = m.grid().n();
    let values = (0..n).map(|i| m.values()[(i + k) % n]).collect();
    GridDensity::new(*m.grid(), values)
}

fn rotated_signed(rho: &GridSignedMeasure, k: usize) -> GridSignedMeasure {
    let n = rho.grid().n();
    let values = (0..n).map(|i| rho.values()[(i + k) % n]).collect();
    GridSignedMeasure::new(*rho.grid(), values)
}

/// U(duration, x0, ., m) for a prebuilt kernel.
pub fn eval_with_kernel(
    g: &dyn MeasureFunctional,
    x0: f64,
    kernel: &WrappedHeatKernel,
    m: &GridDensity,
) -> Result<GridFunction> {
    let grid = *kernel.grid();
    grid.check_same(m.grid())?;
    if kernel.is_identity() {
        return g.evaluate(x0, m);
    }
    let n = grid.n();
    let h = grid.spacing();
    let mut values = vec![0.0; n];
    for (k, &w) in kernel.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let shifted = g.evaluate(x0, &rotated_density(m, k)?)?;
        let scale = w * h;
        for (i, v) in values.iter_mut().enumerate() {
            *v += scale * shifted.values()[(i + n - k) % n];
        }
    }
    Ok(GridFunction::new(grid, values))
}

/// U(duration, x0, ., m): builds the kernel for (duration, a0) and averages.
/// Duration zero returns the functional's own values.
pub fn eval_linear_master(
    g: &dyn MeasureFunctional,
    x0: f64,
    duration: f64,
    m: &GridDensity,
    a0: f64,
) -> Result<GridFunction> {
    let kernel = WrappedHeatKernel::new(*m.grid(), duration, a0)?;
    eval_with_kernel(g, x0, &kernel, m)
}

/// Measure derivative of the flowed value paired with rho: the functional's
/// flat derivative averaged over jointly shifted (x, m, rho).
pub fn dm_with_kernel(
    g: &dyn MeasureFunctional,
    x0: f64,
    kernel: &WrappedHeatKernel,
    m: &GridDensity,
    rho: &GridSignedMeasure,
) -> Result<GridFunction> {
    let grid = *kernel.grid();
    grid.check_same(m.grid())?;
    grid.check_same(rho.grid())?;
    if kernel.is_identity() {
        return g.flat_derivative(x0, m, rho);
    }
    let n = grid.n();
    let h = grid.spacing();
    let mut values = vec![0.0; n];
    for (k, &w) in kernel.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let shifted =
            g.flat_derivative(x0, &rotated_density(m, k)?, &rotated_signed(rho, k))?;
        let scale = w * h;
        for (i, v) in values.iter_mut().enumerate() {
            *v += scale * shifted.values()[(i + n - k) % n];
        }
    }
    Ok(GridFunction::new(grid, values))
}

pub fn dm_linear_master(
    g: &dyn MeasureFunctional,
    x0: f64,
    duration: f64,
    m: &GridDensity,
    rho: &GridSignedMeasure,
    a0: f64,
) -> Result<GridFunction> {
    let kernel = WrappedHeatKernel::new(*m.grid(), duration, a0)?;
    dm_with_kernel(g, x0, &kernel, m, rho)
}

/// A functional precomposed with the joint-translation flow: evaluating it
/// flows `g` for the stored duration first. Composing these is how the
/// splitting scheme chains checkpoint evaluators.
pub struct LinearFlow<'a> {
    g: &'a dyn MeasureFunctional,
    duration: f64,
    a0: f64,
    tag: String,
}

impl<'a> LinearFlow<'a> {
    pub fn new(g: &'a dyn MeasureFunctional, duration: f64, a0: f64) -> Self {
        let tag = format!("{}|flow({duration})", g.name());
        Self { g, duration, a0, tag }
    }
}

impl MeasureFunctional for LinearFlow<'_> {
    fn name(&self) -> &str {
        &self.tag
    }

    fn evaluate(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        eval_linear_master(self.g, x0, self.duration, m, self.a0)
    }

    fn flat_derivative(
        &self,
        x0: f64,
        m: &GridDensity,
        rho: &GridSignedMeasure,
    ) -> Result<GridFunction> {
        dm_linear_master(self.g, x0, self.duration, m, rho, self.a0)
    }

    // averaging over translations cannot increase the x-Lipschitz bound
    fn gradient_bound(&self, length: f64) -> Option<f64> {
        self.g.gradient_bound(length)
    }
}

/// Max sup-norm deviation over the samples between flowing for s + t in one
/// step and flowing for t then for s.
pub fn semigroup_check(
    g: &dyn MeasureFunctional,
    x0: f64,
    s: f64,
    t: f64,
    a0: f64,
    samples: &[GridDensity],
) -> Result<f64> {
    let inner = LinearFlow::new(g, t, a0);
    let mut worst = 0.0f64;
    for m in samples {
        let direct = eval_linear_master(g, x0, s + t, m, a0)?;
        let composed = eval_linear_master(&inner, x0, s, m, a0)?;
        worst = worst.max(direct.sup_distance(&composed));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::CatalogTerminal;
    use crate::grid::TorusGrid;
    use crate::trig::TrigPoly;

    fn bump(grid: TorusGrid, center: f64, sigma: f64) -> GridDensity {
        GridDensity::wrapped_gaussian(grid, center, sigma).unwrap()
    }

    #[test]
    fn zero_duration_returns_the_functional_bitwise() {
        let grid = TorusGrid::standard(32).unwrap();
        let g = CatalogTerminal::standard();
        let m = bump(grid, 2.0, 0.6);
        let out = eval_linear_master(&g, 0.4, 0.0, &m, 1.0).unwrap();
        let direct = g.evaluate(0.4, &m).unwrap();
        assert_eq!(out.values(), direct.values());
    }

    #[test]
    fn constant_functional_is_invariant() {
        let grid = TorusGrid::standard(24).unwrap();
        let g = CatalogTerminal::from_base(TrigPoly::constant(0.7));
        let m = bump(grid, 1.0, 0.5);
        for t in [0.1, 0.6, 2.0] {
            let out = eval_linear_master(&g, 0.0, t, &m, 0.8).unwrap();
            for v in out.values() {
                assert!((v - 0.7).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn uniform_measure_reduces_to_spectral_heat_flow() {
        let grid = TorusGrid::standard(64).unwrap();
        let g = CatalogTerminal::standard();
        let m = GridDensity::uniform(grid);
        let (t, a0, x0) = (0.3, 1.0, 0.9);
        let out = eval_linear_master(&g, x0, t, &m, a0).unwrap();
        // with a uniform measure the couplings are constant, so the value is
        // the plain heat flow of base + x0_amp cos(x - x0); base has modes
        // (cos 2x, sin x) and each mode k damps by exp(-a0 t k^2)
        let d1 = (-a0 * t).exp();
        let d2 = (-4.0 * a0 * t).exp();
        for (i, x) in grid.nodes().enumerate() {
            let exact = 0.1 * d2 * (2.0 * x).cos()
                + 0.25 * d1 * x.sin()
                + 0.2 * d1 * (x - x0).cos();
            assert!((out.values()[i] - exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn mean_coupling_damps_like_the_first_mode() {
        let grid = TorusGrid::standard(64).unwrap();
        let g = CatalogTerminal::mean_coupled(
            TrigPoly::from_modes(0.0, &[], &[1.0]),
            TrigPoly::from_modes(0.0, &[1.0], &[]),
        );
        let m = bump(grid, 2.4, 0.5);
        let (t, a0) = (0.3, 1.0);
        let out = eval_linear_master(&g, 0.0, t, &m, a0).unwrap();
        let h = grid.spacing();
        let cos_mean: f64 =
            grid.nodes().zip(m.values()).map(|(y, w)| y.cos() * w).sum::<f64>() * h;
        let decay = (-a0 * t).exp();
        for (i, x) in grid.nodes().enumerate() {
            let exact = decay * (x.sin() + cos_mean);
            assert!((out.values()[i] - exact).abs() <= 1e-9);
        }
    }

    #[test]
    fn jointly_invariant_functional_is_a_fixed_point() {
        let grid = TorusGrid::standard(32).unwrap();
        // no base, no x0 part, no mean term: only convolutional couplings,
        // which are invariant under joint translation of x and m
        let g = CatalogTerminal {
            tag: "joint-invariant".into(),
            base: TrigPoly::zero(),
            x0_amp: 0.0,
            psi: TrigPoly::from_modes(0.0, &[1.0], &[]),
            c: 0.3,
            beta: 0.2,
            phi: TrigPoly::from_modes(0.0, &[0.6], &[0.4]),
            mean_strength: 0.0,
            mean_kernel: TrigPoly::zero(),
        };
        let m = bump(grid, 4.0, 0.7);
        let direct = g.evaluate(0.0, &m).unwrap();
        for t in [0.05, 0.8] {
            let out = eval_linear_master(&g, 0.0, t, &m, 1.0).unwrap();
            assert!(out.sup_distance(&direct) <= 1e-12);
        }
    }

    #[test]
    fn flow_commutes_with_joint_translation() {
        let n = 48;
        let grid = TorusGrid::standard(n).unwrap();
        let g = CatalogTerminal::standard();
        let (t, a0, x0) = (0.25, 0.8, 1.1);
        let shift_cells = 5usize;
        let c = shift_cells as f64 * grid.spacing();
        let length = grid.length();

        // T_c g (x, m) = g(x + c, shift_c m): shift the base and the mean
        // kernel, move the cos(x - x0) factor by moving x0
        let mut shifted_g = g.clone();
        shifted_g.base = g.base.shifted(c, length);
        shifted_g.mean_kernel = g.mean_kernel.shifted(c, length);
        let m = bump(grid, 2.0, 0.6);
        let left = eval_linear_master(&shifted_g, x0 - c, t, &m, a0).unwrap();

        let rotated = rotated_density(&m, n - shift_cells).unwrap();
        let right = eval_linear_master(&g, x0, t, &rotated, a0).unwrap();
        for i in 0..n {
            let r = right.values()[(i + shift_cells) % n];
            assert!((left.values()[i] - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn values_stay_between_shifted_extremes() {
        let grid = TorusGrid::standard(32).unwrap();
        let n = grid.n();
        let g = CatalogTerminal::standard();
        let m = bump(grid, 1.0, 0.4);
        let out = eval_linear_master(&g, 0.3, 0.5, &m, 1.0).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let vals = g.evaluate(0.3, &rotated_density(&m, k).unwrap()).unwrap();
            for v in vals.values() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        for v in out.values() {
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn measure_derivative_vanishes_on_the_base_measure() {
        let grid = TorusGrid::standard(32).unwrap();
        let g = CatalogTerminal::standard();
        let m = bump(grid, 2.0, 0.6);
        let out = dm_linear_master(&g, 0.0, 0.4, &m, &m.to_signed(), 1.0).unwrap();
        assert!(out.sup_norm() <= 1e-13);
    }

    #[test]
    fn measure_derivative_matches_displacement_difference() {
        let grid = TorusGrid::standard(48).unwrap();
        let g = CatalogTerminal::standard();
        let floor = GridDensity::uniform(grid);
        let peak = bump(grid, 2.0, 0.6);
        let blended: Vec<f64> = peak
            .values()
            .iter()
            .zip(floor.values())
            .map(|(b, f)| 0.5 * b + 0.5 * f)
            .collect();
        let m = GridDensity::new(grid, blended).unwrap();
        let rho =
            GridSignedMeasure::difference(&bump(grid, 4.0, 0.8), &bump(grid, 1.0, 0.5)).unwrap();
        let (t, a0, x0, step) = (0.4, 1.0, 0.7, 1e-2);

        let lin = dm_linear_master(&g, x0, t, &m, &rho, a0).unwrap();
        let displaced = |sign: f64| -> GridDensity {
            let values = m
                .values()
                .iter()
                .zip(rho.values())
                .map(|(a, b)| a + sign * step * b)
                .collect();
            GridDensity::new(grid, values).unwrap()
        };
        let plus = eval_linear_master(&g, x0, t, &displaced(1.0), a0).unwrap();
        let minus = eval_linear_master(&g, x0, t, &displaced(-1.0), a0).unwrap();
        let fd = plus.zip_with(&minus, |p, q| (p - q) / (2.0 * step));
        // the functional is quadratic in m, so the central difference is
        // exact up to round-off amplified by 1/step
        assert!(lin.sup_distance(&fd) <= 1e-9, "gap {}", lin.sup_distance(&fd));
    }

    #[test]
    fn measure_derivative_at_zero_duration_is_the_flat_derivative() {
        let grid = TorusGrid::standard(24).unwrap();
        let g = CatalogTerminal::standard();
        let m = bump(grid, 2.0, 0.6);
        let rho =
            GridSignedMeasure::difference(&bump(grid, 4.0, 0.8), &m).unwrap();
        let out = dm_linear_master(&g, 0.2, 0.0, &m, &rho, 1.0).unwrap();
        let direct = g.flat_derivative(0.2, &m, &rho).unwrap();
        assert_eq!(out.values(), direct.values());
    }

    #[test]
    fn composition_is_exact_at_zero_and_tight_in_general() {
        let grid = TorusGrid::standard(48).unwrap();
        let g = CatalogTerminal::standard();
        let samples = vec![bump(grid, 1.0, 0.5), bump(grid, 3.5, 0.9)];
        let zero = semigroup_check(&g, 0.4, 0.0, 0.2, 1.0, &samples).unwrap();
        assert_eq!(zero, 0.0);
        let split = semigroup_check(&g, 0.4, 0.15, 0.1, 1.0, &samples).unwrap();
        assert!(split <= 1e-10, "semigroup deviation {split}");
    }
}
