//! Time discretization and trajectory containers shared by the solvers.

use crate::error::{MfgError, Result};
use crate::grid::{GridDensity, GridFunction, GridSignedMeasure};

/// Uniform partition of a time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMesh {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeMesh {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() || t0 >= t1 {
            return Err(MfgError::InvalidArgument(format!(
                "time interval [{t0}, {t1}] must be finite with t0 < t1"
            )));
        }
        if steps == 0 {
            return Err(MfgError::InvalidArgument(
                "time mesh needs at least one step".into(),
            ));
        }
        Ok(Self { t0, t1, steps })
    }

    /// Step count chosen from the advective CFL rule
    /// dt = min(0.5·spacing/maxDrift, 0.25·spacing).
    pub fn with_cfl(t0: f64, t1: f64, spacing: f64, max_drift: f64) -> Result<Self> {
        let dt = Self::cfl_default_dt(spacing, max_drift);
        let steps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
        Self::new(t0, t1, steps)
    }

    pub fn cfl_default_dt(spacing: f64, max_drift: f64) -> f64 {
        let cap = 0.25 * spacing;
        if max_drift > 0.0 {
            cap.min(0.5 * spacing / max_drift)
        } else {
            cap
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// Node k of the mesh; k = steps lands on t1 exactly.
    pub fn time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        if k == self.steps {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * (k as f64 / self.steps as f64)
        }
    }

    /// Index of a mesh node, if `t` is one (up to a relative slack).
    pub fn step_index(&self, t: f64) -> Option<usize> {
        let raw = (t - self.t0) / self.dt();
        let k = raw.round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        if (raw - k).abs() > 1e-9 * self.steps as f64 {
            return None;
        }
        Some(k as usize)
    }
}

/// Time-indexed snapshots over a [`TimeMesh`]; snapshot k lives at `mesh.time(k)`.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    mesh: TimeMesh,
    snapshots: Vec<T>,
}

pub type ParabolicTrajectory = Trajectory<GridFunction>;
pub type DensityTrajectory = Trajectory<GridDensity>;
pub type SignedTrajectory = Trajectory<GridSignedMeasure>;

impl<T> Trajectory<T> {
    pub fn from_snapshots(mesh: TimeMesh, snapshots: Vec<T>) -> Result<Self> {
        if snapshots.len() != mesh.steps() + 1 {
            return Err(MfgError::InvalidArgument(format!(
                "trajectory needs {} snapshots, got {}",
                mesh.steps() + 1,
                snapshots.len()
            )));
        }
        Ok(Self { mesh, snapshots })
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn snapshots(&self) -> &[T] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &T {
        &self.snapshots[k]
    }

    pub fn initial(&self) -> &T {
        &self.snapshots[0]
    }

    pub fn terminal(&self) -> &T {
        self.snapshots.last().unwrap()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Trajectory<U> {
        Trajectory {
            mesh: self.mesh,
            snapshots: self.snapshots.iter().map(f).collect(),
        }
    }
}

impl ParabolicTrajectory {
    /// Largest pointwise gap against another trajectory on the same mesh.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.snapshots.len(), other.snapshots.len());
        self.snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max)
    }
}
