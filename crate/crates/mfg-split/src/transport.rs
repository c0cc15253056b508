//! Optimal transport distances and measure operations on the periodic grid.
//!
//! For the transport distances a grid measure is read as a collection of
//! atoms at the grid nodes (node i carries mass value_i * spacing). The
//! second moment instead integrates the squared periodic distance exactly
//! over each cell against the piecewise constant density.

use crate::error::Result;
use crate::grid::{GridDensity, GridFunction, GridSignedMeasure, TorusGrid};

/// Anything with cell values on a grid that can be integrated against.
pub trait CellMeasure {
    fn measure_grid(&self) -> &TorusGrid;
    fn cell_values(&self) -> &[f64];
}

impl CellMeasure for GridDensity {
    fn measure_grid(&self) -> &TorusGrid {
        self.grid()
    }
    fn cell_values(&self) -> &[f64] {
        self.values()
    }
}

impl CellMeasure for GridSignedMeasure {
    fn measure_grid(&self) -> &TorusGrid {
        self.grid()
    }
    fn cell_values(&self) -> &[f64] {
        self.values()
    }
}

/// spacing * sum f_i m_i.
pub fn integrate_against<M: CellMeasure>(m: &M, f: &GridFunction) -> Result<f64> {
    m.measure_grid().check_same(f.grid())?;
    let s: f64 = f
        .values()
        .iter()
        .zip(m.cell_values())
        .map(|(a, b)| a * b)
        .sum();
    Ok(m.measure_grid().spacing() * s)
}

fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2)
}

/// Periodic 1-D Wasserstein-1 distance: min over a scalar offset c of the
/// L1 norm of the difference of cumulative mass functions. The scan over the
/// cell-quantized candidate offsets is exact (the objective is piecewise
/// linear and convex in c); a golden-section pass certifies the scan.
pub fn wasserstein1(m1: &GridDensity, m2: &GridDensity) -> Result<f64> {
    m1.grid().check_same(m2.grid())?;
    let g = m1.grid();
    let h = g.spacing();
    let n = g.n();
    let mut d = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += (m1.values()[i] - m2.values()[i]) * h;
        d.push(acc);
    }
    let objective = |c: f64| h * d.iter().map(|v| (v - c).abs()).sum::<f64>();
    let mut sorted = d.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scanned = sorted
        .iter()
        .map(|c| objective(*c))
        .fold(f64::INFINITY, f64::min);
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let refined = if hi > lo {
        golden_section(lo, hi, 1e-13 * (hi - lo).max(1.0), objective)
    } else {
        scanned
    };
    Ok(scanned.min(refined).max(0.0))
}

struct QuantileRep {
    // node position per atom index, in increasing order of cumulative level
    positions: Vec<f64>,
    // cumulative masses; last entry forced to exactly 1
    levels: Vec<f64>,
}

fn quantile_rep(m: &GridDensity) -> QuantileRep {
    let g = m.grid();
    let h = g.spacing();
    let mut positions = Vec::with_capacity(g.n());
    let mut levels = Vec::with_capacity(g.n());
    let mut acc = 0.0;
    for i in 0..g.n() {
        let w = m.values()[i] * h;
        if w > 0.0 {
            acc += w;
            positions.push(g.node(i));
            levels.push(acc);
        }
    }
    if let Some(last) = levels.last_mut() {
        *last = 1.0;
    }
    QuantileRep { positions, levels }
}

/// Integral over s in [0,1) of (Q1(s) - Q2unrolled(s + alpha))^2, where the
/// unrolled quantile satisfies Q(t + 1) = Q(t) + length.
fn shifted_quantile_cost(q1: &QuantileRep, q2: &QuantileRep, length: f64, alpha: f64) -> f64 {
    let mut s = 0.0f64;
    let mut i = 0usize; // current q1 segment: s < levels1[i]
    // locate the q2 segment containing t = alpha
    let mut wrap = alpha.floor();
    let tp = alpha - wrap;
    let mut j = q2.levels.partition_point(|l| *l <= tp);
    if j >= q2.levels.len() {
        j = 0;
        wrap += 1.0;
    }
    let mut total = 0.0;
    while s < 1.0 {
        while i < q1.levels.len() && q1.levels[i] <= s {
            i += 1;
        }
        let next1 = if i < q1.levels.len() { q1.levels[i] } else { 1.0 };
        let next2 = q2.levels[j] + wrap - alpha;
        let upper = next1.min(next2).min(1.0);
        if upper > s {
            let diff = q1.positions[i.min(q1.positions.len() - 1)]
                - (q2.positions[j] + length * wrap);
            total += (upper - s) * diff * diff;
        }
        if next2 <= next1 && next2 <= 1.0 {
            j += 1;
            if j == q2.levels.len() {
                j = 0;
                wrap += 1.0;
            }
        }
        s = upper.max(s + f64::EPSILON * 4.0);
    }
    total
}

/// Periodic 1-D Wasserstein-2 distance via quantile functions, minimized
/// over the circular mass offset. The cost is piecewise linear and convex in
/// the offset, so scanning its kinks (all pairwise differences of cumulative
/// levels) is exact; a local golden-section pass certifies the scan.
pub fn wasserstein2(m1: &GridDensity, m2: &GridDensity) -> Result<f64> {
    m1.grid().check_same(m2.grid())?;
    let length = m1.grid().length();
    let q1 = quantile_rep(m1);
    let q2 = quantile_rep(m2);
    let mut candidates: Vec<f64> = Vec::with_capacity(q1.levels.len() * q2.levels.len() * 2 + 1);
    candidates.push(0.0);
    for l2 in &q2.levels {
        for l1 in &q1.levels {
            let base = l2 - l1;
            for k in [-1.0, 0.0, 1.0] {
                let a = base + k;
                if (-1.0..=1.0).contains(&a) {
                    candidates.push(a);
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let cost = |a: f64| shifted_quantile_cost(&q1, &q2, length, a);
    let mut best = f64::INFINITY;
    let mut best_idx = 0usize;
    for (idx, a) in candidates.iter().enumerate() {
        let c = cost(*a);
        if c < best {
            best = c;
            best_idx = idx;
        }
    }
    let lo = candidates[best_idx.saturating_sub(1)];
    let hi = candidates[(best_idx + 1).min(candidates.len() - 1)];
    if hi > lo {
        best = best.min(golden_section(lo, hi, 1e-14, cost));
    }
    Ok(best.max(0.0).sqrt())
}

/// Push-forward of m under x -> x + z (mass-preserving circular shift with
/// linear interpolation between cells).
pub fn pushforward_translate(m: &GridDensity, z: f64) -> GridDensity {
    let g = *m.grid();
    let n = g.n();
    let s = g.wrap(z) / g.spacing();
    let k = s.floor() as usize % n;
    let frac = s - s.floor();
    let old = m.values();
    let mut values = vec![0.0; n];
    for (i, v) in values.iter_mut().enumerate() {
        let a = old[(i + n - k) % n];
        let b = old[(i + 2 * n - k - 1) % n];
        *v = (1.0 - frac) * a + frac * b;
    }
    GridDensity::from_solver(g, values)
}

/// Exact integral of the squared periodic distance to the origin over
/// [a, b] within [0, length].
fn squared_distance_integral(a: f64, b: f64, length: f64) -> f64 {
    debug_assert!(a <= b);
    let half = length / 2.0;
    let mut total = 0.0;
    // piece in [0, half]: integrand x^2
    let lo = a.min(half);
    let hi = b.min(half);
    if hi > lo {
        total += (hi.powi(3) - lo.powi(3)) / 3.0;
    }
    // piece in [half, length]: integrand (length - x)^2
    let lo = a.max(half);
    let hi = b.max(half);
    if hi > lo {
        total += ((length - lo).powi(3) - (length - hi).powi(3)) / 3.0;
    }
    total
}

/// Square root of the integral of the squared periodic distance to the
/// origin, integrated exactly over each cell. Diagnostic quantity.
pub fn moment2(m: &GridDensity) -> f64 {
    let g = m.grid();
    let h = g.spacing();
    let l = g.length();
    let mut total = 0.0;
    for (i, v) in m.values().iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let a = g.node(i) - h / 2.0;
        let b = g.node(i) + h / 2.0;
        let integral = if a < 0.0 {
            squared_distance_integral(0.0, b, l) + squared_distance_integral(a + l, l, l)
        } else if b > l {
            squared_distance_integral(a, l, l) + squared_distance_integral(0.0, b - l, l)
        } else {
            squared_distance_integral(a, b, l)
        };
        total += v * integral;
    }
    total.max(0.0).sqrt()
}
