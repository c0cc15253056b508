//! Alternating split-step construction of the master field. The horizon is
//! cut into 2N intervals at checkpoints t_k = k T / (2N); counting from the
//! terminal side, each odd interval applies the translation-smoothing flow
//! and each even interval solves the coupled forward-backward system, both
//! with doubled coefficients so the two half-dynamics average to the full
//! one. Checkpoint values are evaluated lazily and memoized per quantized
//! measure; grid-aligned translations compose exactly, which is what keeps
//! the smoothing fan-out from exploding combinatorially.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::cache::{fingerprint, FunctionalCache, QUANTUM};
use crate::error::{MfgError, Result};
use crate::functional::MeasureFunctional;
use crate::grid::{GridDensity, GridFunction};
use crate::heat_kernel::WrappedHeatKernel;
use crate::master_linear::eval_with_kernel;
use crate::mesh::TimeMesh;
use crate::mfg::{solve_mfg_with, MfgTuning};
use crate::scenario::Scenario;
use crate::spectral::sup_derivative_bound;

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    /// Cap on distinct (cache-miss) checkpoint evaluations, terminal ones
    /// included. Exceeding it is a typed error, so long runs fail fast
    /// instead of grinding.
    pub budget: Option<u64>,
    /// Memo-cache capacity in entries; eviction changes cost, never values.
    pub cache_capacity: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { budget: None, cache_capacity: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct SplitStats {
    /// Distinct checkpoint evaluations performed (cache misses).
    pub evaluations: u64,
    /// Forward-backward sub-solves, the dominant cost unit.
    pub mfg_solves: u64,
    /// Smoothing intervals expanded into translated evaluations.
    pub kernel_expansions: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_evictions: u64,
}

/// The scheme evaluator for one (scenario, N, x0) triple. Values at
/// checkpoint k are defined backward from U(T) = G: across even intervals by
/// the forward-backward system with doubled drift and diffusion whose
/// terminal cost is the next checkpoint's evaluator, across odd intervals by
/// the doubled-noise translation smoothing of the next checkpoint.
pub struct SplitScheme {
    scenario: Scenario,
    sub: Scenario,
    x0: f64,
    intervals: usize,
    kernel: WrappedHeatKernel,
    /// None when drift, diffusion and running cost all vanish: the
    /// forward-backward intervals then transport nothing and reduce to the
    /// identity.
    sub_mesh: Option<TimeMesh>,
    /// When every ingredient commutes with grid translations, measures are
    /// folded to a canonical rotation before hitting the cache and results
    /// rotated back. The n translated evaluations an expansion spawns then
    /// share one cache entry exactly, so cost stays linear in the fan-out
    /// instead of multiplying at every level.
    fold: bool,
    budget: Option<u64>,
    cache: FunctionalCache,
    evaluations: AtomicU64,
    mfg_solves: AtomicU64,
    kernel_expansions: AtomicU64,
}

/// Translation invariance of the whole problem: no relative-position
/// coupling, flat diffusion, and a terminal cost whose x-dependence enters
/// only through convolutions against the measure. Under these, the value for
/// a rotated measure is the rotation of the value.
fn shift_invariant(scenario: &Scenario) -> bool {
    scenario.hamiltonian.x0_amp == 0.0
        && scenario.diffusion.variation.is_zero()
        && scenario.terminal.x0_amp == 0.0
        && scenario.terminal.base.is_constant()
        && (scenario.terminal.mean_strength == 0.0 || scenario.terminal.mean_kernel.is_constant())
}

/// Index of the rotation whose quantized value sequence is lexicographically
/// greatest, smallest index on ties. Rotation-covariant: rolling the input
/// by w moves the result by w, which is what makes folding consistent.
/// Periodic ties are harmless since the value function inherits the period.
fn canonical_shift(m: &GridDensity) -> usize {
    let n = m.grid().n();
    let q: Vec<i64> = m.values().iter().map(|&v| (v / QUANTUM).round() as i64).collect();
    let mut best = 0usize;
    for s in 1..n {
        for i in 0..n {
            let current = q[(best + i) % n];
            let candidate = q[(s + i) % n];
            if candidate != current {
                if candidate > current {
                    best = s;
                }
                break;
            }
        }
    }
    best
}

fn rolled_density(m: &GridDensity, s: usize) -> Result<GridDensity> {
    let n = m.grid().n();
    let values = (0..n).map(|i| m.values()[(i + s) % n]).collect();
    GridDensity::new(*m.grid(), values)
}

fn rolled_function(u: &GridFunction, s: usize) -> GridFunction {
    let n = u.grid().n();
    let values = (0..n).map(|i| u.values()[(i + s) % n]).collect();
    GridFunction::new(*u.grid(), values)
}

/// True when the forward-backward half of the dynamics moves nothing, which
/// is the one configuration the full scenario validator rejects (it insists
/// on parabolicity) but the scheme accepts: the flow degenerates to pure
/// smoothing.
fn first_order_is_static(scenario: &Scenario) -> bool {
    scenario.hamiltonian.quad == 0.0
        && scenario.hamiltonian.x0_amp == 0.0
        && scenario.hamiltonian.c0 == 0.0
        && scenario.hamiltonian.beta == 0.0
        && scenario.diffusion.base == 0.0
        && scenario.diffusion.variation.is_zero()
}

/// The sub-interval scenario: horizon T/(2N), both half-dynamics doubled.
/// Doubling the Hamiltonian is exactly doubling its four strength fields;
/// the coupling kernels are untouched.
fn doubled_sub_scenario(scenario: &Scenario, intervals: usize) -> Scenario {
    let mut sub = scenario.clone();
    sub.horizon = scenario.horizon / (2 * intervals) as f64;
    sub.a0 = 2.0 * scenario.a0;
    sub.diffusion.base = 2.0 * scenario.diffusion.base;
    sub.diffusion.variation = scenario.diffusion.variation.scaled(2.0);
    sub.hamiltonian.quad *= 2.0;
    sub.hamiltonian.x0_amp *= 2.0;
    sub.hamiltonian.c0 *= 2.0;
    sub.hamiltonian.beta *= 2.0;
    sub.hamiltonian.growth_c0 *= 2.0;
    sub
}

/// Steps per sub-interval: the CFL-target step for the doubled drift,
/// rounded so the count is a power of two. Halving the sub-interval then
/// halves the count exactly (down to a single step), so schemes with N and
/// 2N intervals integrate on the same global time lattice and their gap
/// measures splitting error, not time-stepping noise.
fn interval_steps(scenario: &Scenario, sub: &Scenario, x0: f64) -> Result<usize> {
    let length = scenario.grid.length();
    let lip_g = match scenario.terminal.gradient_bound(length) {
        Some(b) => b,
        None => {
            let probe = GridDensity::uniform(scenario.grid);
            sup_derivative_bound(scenario.terminal.evaluate(x0, &probe)?.values(), 1, length)
        }
    };
    let drift_hint = sub.hamiltonian.quad.abs() * (lip_g + 1.0)
        + sub.hamiltonian.drift_coupling_bound()
        + 1.0;
    let dt_target = TimeMesh::cfl_default_dt(scenario.grid.spacing(), drift_hint);
    let per_interval = ((sub.horizon / dt_target).ceil().max(1.0)) as usize;
    Ok(per_interval.next_power_of_two())
}

impl SplitScheme {
    pub fn build(scenario: &Scenario, intervals: usize, x0: f64) -> Result<Self> {
        Self::build_with(scenario, intervals, x0, SplitOptions::default())
    }

    pub fn build_with(
        scenario: &Scenario,
        intervals: usize,
        x0: f64,
        options: SplitOptions,
    ) -> Result<Self> {
        if intervals == 0 {
            return Err(MfgError::InvalidArgument(
                "the scheme needs at least one interval pair".into(),
            ));
        }
        if !x0.is_finite() {
            return Err(MfgError::InvalidArgument(format!(
                "major position {x0} must be finite"
            )));
        }
        let static_flow = first_order_is_static(scenario);
        if static_flow {
            if !(scenario.horizon.is_finite() && scenario.horizon > 0.0) {
                return Err(MfgError::Schema {
                    path: "horizon".into(),
                    message: format!("must be a positive number, got {}", scenario.horizon),
                });
            }
            if !(scenario.a0.is_finite() && scenario.a0 >= 0.0) {
                return Err(MfgError::Schema {
                    path: "a0".into(),
                    message: format!("must be a nonnegative constant, got {}", scenario.a0),
                });
            }
        } else {
            scenario.validate()?;
        }
        let sub = doubled_sub_scenario(scenario, intervals);
        let kernel = WrappedHeatKernel::new(scenario.grid, sub.horizon, sub.a0)?;
        let sub_mesh = if static_flow {
            None
        } else {
            let steps = interval_steps(scenario, &sub, x0)?;
            Some(TimeMesh::new(0.0, sub.horizon, steps)?)
        };
        Ok(Self {
            scenario: scenario.clone(),
            sub,
            x0,
            intervals,
            kernel,
            sub_mesh,
            fold: shift_invariant(scenario),
            budget: options.budget,
            cache: FunctionalCache::new(options.cache_capacity),
            evaluations: AtomicU64::new(0),
            mfg_solves: AtomicU64::new(0),
            kernel_expansions: AtomicU64::new(0),
        })
    }

    pub fn interval_count(&self) -> usize {
        self.intervals
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Length of one sub-interval, T / (2N).
    pub fn sub_duration(&self) -> f64 {
        self.sub.horizon
    }

    /// Time steps per forward-backward sub-interval; None when those
    /// intervals are the identity.
    pub fn sub_steps(&self) -> Option<usize> {
        self.sub_mesh.as_ref().map(|m| m.steps())
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        (0..=2 * self.intervals)
            .map(|k| k as f64 * self.sub.horizon)
            .collect()
    }

    pub fn stats(&self) -> SplitStats {
        let c = self.cache.stats();
        SplitStats {
            evaluations: self.evaluations.load(Ordering::Relaxed),
            mfg_solves: self.mfg_solves.load(Ordering::Relaxed),
            kernel_expansions: self.kernel_expansions.load(Ordering::Relaxed),
            cache_hits: c.hits,
            cache_misses: c.misses,
            cache_evictions: c.evictions,
        }
    }

    /// Scheme value at a checkpoint time; times off the checkpoint lattice
    /// are rejected.
    pub fn eval(&self, t: f64, m: &GridDensity) -> Result<GridFunction> {
        let quantum = self.sub.horizon;
        let k = (t / quantum).round();
        let aligned = t.is_finite()
            && (t - k * quantum).abs() <= 1e-9 * self.scenario.horizon
            && k >= 0.0
            && k <= (2 * self.intervals) as f64;
        if !aligned {
            return Err(MfgError::InvalidArgument(format!(
                "time {t} is not one of the {} checkpoints",
                2 * self.intervals + 1
            )));
        }
        self.eval_checkpoint(k as usize, m)
    }

    pub fn eval_checkpoint(&self, k: usize, m: &GridDensity) -> Result<GridFunction> {
        if k > 2 * self.intervals {
            return Err(MfgError::InvalidArgument(format!(
                "checkpoint {k} out of range 0..={}",
                2 * self.intervals
            )));
        }
        self.scenario.grid.check_same(m.grid())?;
        // Interior checkpoints only: the terminal cost stays a direct,
        // bit-exact evaluation of the supplied functional.
        if self.fold && k < 2 * self.intervals {
            let s = canonical_shift(m);
            if s != 0 {
                let canon = rolled_density(m, s)?;
                let value = self.eval_checkpoint(k, &canon)?;
                let n = self.scenario.grid.n();
                return Ok(rolled_function(&value, n - s));
            }
        }
        let fp = fingerprint(m);
        if let Some(hit) = self.cache.get(k, &fp) {
            return Ok(hit);
        }
        let used = self.evaluations.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(budget) = self.budget {
            if used > budget {
                return Err(MfgError::BudgetExceeded { used, budget });
            }
        }
        let value = if k == 2 * self.intervals {
            self.scenario.terminal.evaluate(self.x0, m)?
        } else if k % 2 == 0 {
            match &self.sub_mesh {
                None => self.eval_checkpoint(k + 1, m)?,
                Some(mesh) => {
                    self.mfg_solves.fetch_add(1, Ordering::Relaxed);
                    let next = CheckpointFunctional::new(self, k + 1);
                    let tuning = MfgTuning {
                        theta: Some(1.0),
                        warm_start: None,
                        certificate_stop: true,
                        mesh: Some(*mesh),
                    };
                    let (sol, _) =
                        solve_mfg_with(&self.sub, 0.0, m, self.x0, &next, &tuning)?;
                    sol.u.initial().clone()
                }
            }
        } else {
            self.kernel_expansions.fetch_add(1, Ordering::Relaxed);
            let next = CheckpointFunctional::new(self, k + 1);
            eval_with_kernel(&next, self.x0, &self.kernel, m)?
        };
        self.cache.insert(k, fp, value.clone());
        Ok(value)
    }
}

/// The next checkpoint's evaluator, shaped as a terminal-cost functional so
/// the sub-solves can consume it. Only plain evaluation is available;
/// derivative transport through the scheme is out of scope.
struct CheckpointFunctional<'a> {
    scheme: &'a SplitScheme,
    level: usize,
    tag: String,
}

impl<'a> CheckpointFunctional<'a> {
    fn new(scheme: &'a SplitScheme, level: usize) -> Self {
        Self { scheme, level, tag: format!("split-checkpoint-{level}") }
    }
}

impl MeasureFunctional for CheckpointFunctional<'_> {
    fn name(&self) -> &str {
        &self.tag
    }

    fn evaluate(&self, x0: f64, m: &GridDensity) -> Result<GridFunction> {
        if x0 != self.scheme.x0 {
            return Err(MfgError::InvalidArgument(format!(
                "checkpoint functional is bound to x0 = {}, got {x0}",
                self.scheme.x0
            )));
        }
        self.scheme.eval_checkpoint(self.level, m)
    }

    fn gradient_bound(&self, length: f64) -> Option<f64> {
        self.scheme.scenario.terminal.gradient_bound(length)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceRow {
    pub coarse: usize,
    pub fine: usize,
    /// sup over samples of |U^coarse - U^fine| at t = 0.
    pub gap: f64,
    /// log2 of the previous row's gap over this one; None on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SchemeRun {
    pub intervals: usize,
    pub stats: SplitStats,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// True when the evaluation budget ran out; the rows present are valid.
    pub partial: bool,
    pub runs: Vec<SchemeRun>,
}

/// Interval-refinement study: for consecutive entries of `ns`, the sup over
/// sample points (x-index, measure) of the gap between the two schemes'
/// values at t = 0. Budget exhaustion stops the study and flags the table as
/// partial instead of failing it.
pub fn convergence_study(
    scenario: &Scenario,
    x0: f64,
    ns: &[usize],
    samples: &[(usize, GridDensity)],
    options: SplitOptions,
) -> Result<ConvergenceTable> {
    if ns.is_empty() || !ns.windows(2).all(|w| w[0] < w[1]) {
        return Err(MfgError::InvalidArgument(
            "interval counts must be ascending and nonempty".into(),
        ));
    }
    if samples.is_empty() {
        return Err(MfgError::InvalidArgument("need at least one sample point".into()));
    }
    let n = scenario.grid.n();
    for (idx, m) in samples {
        if *idx >= n {
            return Err(MfgError::InvalidArgument(format!(
                "sample index {idx} outside the {n}-cell grid"
            )));
        }
        scenario.grid.check_same(m.grid())?;
    }

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut partial = false;
    // values[i][j] = scheme ns[i] evaluated at samples[j]'s measure
    let mut values: Vec<Option<Vec<GridFunction>>> = vec![None; ns.len()];

    'pairs: for i in 0..ns.len().saturating_sub(1) {
        for slot in [i, i + 1] {
            if values[slot].is_some() {
                continue;
            }
            let scheme = SplitScheme::build_with(scenario, ns[slot], x0, options)?;
            let mut per_sample = Vec::with_capacity(samples.len());
            for (_, m) in samples {
                match scheme.eval_checkpoint(0, m) {
                    Ok(v) => per_sample.push(v),
                    Err(MfgError::BudgetExceeded { .. }) => {
                        partial = true;
                        runs.push(SchemeRun { intervals: ns[slot], stats: scheme.stats() });
                        break 'pairs;
                    }
                    Err(e) => return Err(e),
                }
            }
            runs.push(SchemeRun { intervals: ns[slot], stats: scheme.stats() });
            values[slot] = Some(per_sample);
        }
        let coarse = values[i].as_ref().unwrap();
        let fine = values[i + 1].as_ref().unwrap();
        let mut gap = 0.0f64;
        for (j, (idx, _)) in samples.iter().enumerate() {
            gap = gap.max((coarse[j].values()[*idx] - fine[j].values()[*idx]).abs());
        }
        let order = rows
            .last()
            .map(|prev: &ConvergenceRow| (prev.gap / gap).log2());
        rows.push(ConvergenceRow { coarse: ns[i], fine: ns[i + 1], gap, order });
    }

    Ok(ConvergenceTable { rows, partial, runs })
}
