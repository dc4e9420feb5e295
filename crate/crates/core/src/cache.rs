use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use once_cell::sync::OnceCell;

use crate::coalition::Coalition;

/// Memo table from coalition mask to coalitional cost.
///
/// Concurrent callers asking for the same mask block on a per-key cell, so
/// each key is evaluated at most once. Failed evaluations leave the cell
/// empty and are retried by the next caller.
#[derive(Debug)]
pub struct ValueCache {
    enabled: bool,
    entries: Mutex<HashMap<u64, Arc<OnceCell<f64>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

impl Default for ValueCache {
    fn default() -> Self {
        Self::new()
    }
}

impl ValueCache {
    pub fn new() -> Self {
        ValueCache {
            enabled: true,
            entries: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// A pass-through cache: every lookup evaluates.
    pub fn disabled() -> Self {
        ValueCache {
            enabled: false,
            ..Self::new()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn get_or_compute<E, F>(&self, c: Coalition, f: F) -> Result<f64, E>
    where
        F: FnOnce(Coalition) -> Result<f64, E>,
    {
        if !self.enabled {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return f(c);
        }
        let cell = {
            let mut map = self.entries.lock().expect("value cache poisoned");
            Arc::clone(map.entry(c.mask()).or_default())
        };
        let mut evaluated = false;
        let value = cell.get_or_try_init(|| {
            evaluated = true;
            self.misses.fetch_add(1, Ordering::Relaxed);
            f(c)
        })?;
        if !evaluated {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(*value)
    }

    pub fn get(&self, c: Coalition) -> Option<f64> {
        let map = self.entries.lock().expect("value cache poisoned");
        map.get(&c.mask()).and_then(|cell| cell.get().copied())
    }

    pub fn len(&self) -> usize {
        let map = self.entries.lock().expect("value cache poisoned");
        map.values().filter(|cell| cell.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn clear(&self) {
        self.entries.lock().expect("value cache poisoned").clear();
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }
}
