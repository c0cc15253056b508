use crate::error::{MfgError, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic mesh on [0, length). Node i sits at i*spacing; the cell
/// around node i is [node - spacing/2, node + spacing/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 {
            return Err(MfgError::InvalidGrid(format!("need at least 8 cells, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(MfgError::InvalidGrid(format!("length must be positive, got {length}")));
        }
        Ok(Self { n, length })
    }

    /// Grid on the torus of length 2*pi.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, std::f64::consts::TAU)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    /// Index of the node nearest to x (the solvers only evaluate coefficient
    /// closures at nodes, so this is how closures map x back to data).
    pub fn node_index(&self, x: f64) -> usize {
        (self.wrap(x) / self.spacing()).round() as usize % self.n
    }

    /// Reduce x to [0, length).
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.length);
        if y == self.length {
            0.0
        } else {
            y
        }
    }

    /// Reduce x to [-length/2, length/2).
    pub fn signed_wrap(&self, x: f64) -> f64 {
        let y = self.wrap(x);
        if y >= self.length / 2.0 {
            y - self.length
        } else {
            y
        }
    }

    /// Geodesic distance on the torus.
    pub fn periodic_distance(&self, x: f64, y: f64) -> f64 {
        self.signed_wrap(x - y).abs()
    }

    pub fn same_as(&self, other: &TorusGrid) -> bool {
        self.n == other.n && self.length == other.length
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(MfgError::GridMismatch {
                left: self.n,
                right: other.n,
                left_len: self.length,
                right_len: other.length,
            })
        }
    }
}

/// Probability density as cell values: values >= 0 and spacing * sum == 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: TorusGrid,
    values: Vec<f64>,
}

const MASS_TOL: f64 = 1e-12;

impl GridDensity {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(MfgError::InvalidDensity(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(MfgError::InvalidDensity(format!("nonnegative finite values required, found {v}")));
        }
        let mass = grid.spacing() * values.iter().sum::<f64>();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(MfgError::InvalidDensity(format!("total mass {mass} differs from 1 by more than {MASS_TOL}")));
        }
        Ok(Self { grid, values })
    }

    /// Clamp tiny negative values to zero and rescale to unit mass. Intended
    /// for analytic formulas whose samples carry round-off.
    pub fn from_values_normalized(grid: TorusGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(MfgError::InvalidDensity(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(MfgError::InvalidDensity(format!("non-finite value {v}")));
            }
            if *v < 0.0 {
                if *v < -1e-9 {
                    return Err(MfgError::InvalidDensity(format!("negative value {v} too large to clamp")));
                }
                *v = 0.0;
            }
        }
        let mass = grid.spacing() * values.iter().sum::<f64>();
        if mass <= 0.0 {
            return Err(MfgError::InvalidDensity("zero total mass".into()));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: TorusGrid) -> Self {
        let v = 1.0 / grid.length();
        Self { grid, values: vec![v; grid.n()] }
    }

    /// Unit mass concentrated on a single cell.
    pub fn dirac(grid: TorusGrid, cell: usize) -> Self {
        let mut values = vec![0.0; grid.n()];
        values[cell % grid.n()] = 1.0 / grid.spacing();
        Self { grid, values }
    }

    /// Wrapped Gaussian density centered at `center` with scale `sigma`,
    /// normalized on the grid.
    pub fn wrapped_gaussian(grid: TorusGrid, center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(MfgError::InvalidDensity(format!("sigma must be positive, got {sigma}")));
        }
        let l = grid.length();
        let values: Vec<f64> = (0..grid.n())
            .map(|i| {
                let d = grid.signed_wrap(grid.node(i) - center);
                (-8..=8).map(|j| (-((d + j as f64 * l) / sigma).powi(2) / 2.0).exp()).sum::<f64>()
            })
            .collect();
        Self::from_values_normalized(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.spacing() * self.values.iter().sum::<f64>()
    }

    pub fn to_signed(&self) -> GridSignedMeasure {
        GridSignedMeasure::new(self.grid, self.values.clone())
    }

    /// Internal constructor for solver outputs that are nonnegative and
    /// mass-one by construction.
    pub(crate) fn from_solver(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        debug_assert!((grid.spacing() * values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self { grid, values }
    }
}

/// Signed measure as cell values; total mass is cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignedMeasure {
    grid: TorusGrid,
    values: Vec<f64>,
    total_mass: f64,
}

impl GridSignedMeasure {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "value count must match the grid");
        let total_mass = grid.spacing() * values.iter().sum::<f64>();
        Self { grid, values, total_mass }
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n()], total_mass: 0.0 }
    }

    /// m1 - m2 as a signed measure (zero total mass up to round-off).
    pub fn difference(m1: &GridDensity, m2: &GridDensity) -> Result<Self> {
        m1.grid().check_same(m2.grid())?;
        let values = m1
            .values()
            .iter()
            .zip(m2.values())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::new(*m1.grid(), values))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }
}

/// Real-valued function sampled at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "value count must match the grid");
        debug_assert!(values.iter().all(|v| v.is_finite()), "grid function values must be finite");
        Self { grid, values }
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n()] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n()] }
    }

    pub fn sample(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n()).map(|i| f(grid.node(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the node nearest to x.
    pub fn sample_node(&self, x: f64) -> f64 {
        self.values[self.grid.node_index(x)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.same_as(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self::new(self.grid, values)
    }
}
