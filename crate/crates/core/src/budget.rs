//! Process-wide cap on the number of `f32` matrix elements a single
//! allocation may request.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::{Error, Result};

/// 2^29 elements, i.e. 2 GiB of `f32`.
pub const DEFAULT_MAX_ELEMENTS: usize = 1 << 29;

static MAX_ELEMENTS: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_ELEMENTS);

pub fn set_max_elements(n: usize) {
    MAX_ELEMENTS.store(n, Ordering::Relaxed);
}

pub fn max_elements() -> usize {
    MAX_ELEMENTS.load(Ordering::Relaxed)
}

pub fn check(rows: usize, cols: usize) -> Result<()> {
    let budget = max_elements();
    match rows.checked_mul(cols) {
        Some(n) if n <= budget => Ok(()),
        Some(n) => Err(Error::Resource { requested: n, budget }),
        None => Err(Error::Resource { requested: usize::MAX, budget }),
    }
}
