//! Memoization for measure-indexed evaluations: keys are hashes of density
//! values quantized at a fixed resolution, so measures that agree to within
//! the quantum share one entry. Bounded capacity with least-recently-used
//! eviction; eviction affects cost only, never values.

use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;
use sha2::{Digest, Sha256};

use crate::grid::{GridDensity, GridFunction};

/// Quantization step for fingerprints. Grid-aligned translations commute
/// exactly, and solves started from translated data agree with the translated
/// solve to rounding error, so this quantum is what lets those branches
/// collapse onto shared entries.
pub(crate) const QUANTUM: f64 = 1e-12;

pub(crate) type Fingerprint = [u8; 32];

pub(crate) fn fingerprint(m: &GridDensity) -> Fingerprint {
    let mut h = Sha256::new();
    h.update((m.grid().n() as u64).to_le_bytes());
    for &v in m.values() {
        let q = (v / QUANTUM).round() as i64;
        h.update(q.to_le_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

pub(crate) struct FunctionalCache {
    inner: Mutex<Inner>,
}

struct Inner {
    map: LruCache<(usize, Fingerprint), GridFunction>,
    stats: CacheStats,
}

impl FunctionalCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        Self {
            inner: Mutex::new(Inner { map: LruCache::new(cap), stats: CacheStats::default() }),
        }
    }

    pub fn get(&self, level: usize, fp: &Fingerprint) -> Option<GridFunction> {
        let mut inner = self.inner.lock().unwrap();
        match inner.map.get(&(level, *fp)).cloned() {
            Some(v) => {
                inner.stats.hits += 1;
                Some(v)
            }
            None => {
                inner.stats.misses += 1;
                None
            }
        }
    }

    pub fn insert(&self, level: usize, fp: Fingerprint, value: GridFunction) {
        let mut inner = self.inner.lock().unwrap();
        let key = (level, fp);
        if let Some((old_key, _)) = inner.map.push(key, value) {
            if old_key != key {
                inner.stats.evictions += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn stats(&self) -> CacheStats {
        self.inner.lock().unwrap().stats
    }
}
