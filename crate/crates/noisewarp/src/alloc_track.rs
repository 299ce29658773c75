//! Heap-allocation accounting for benchmarks.
//!
//! Peak memory is measured from inside the allocator rather than from OS
//! resident-set numbers: the counter is deterministic, immune to allocator
//! caching and container accounting, and cheap enough to leave on.
//!
//! A binary that wants measurements installs the allocator:
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: noisewarp::alloc_track::CountingAllocator =
//!     noisewarp::alloc_track::CountingAllocator;
//! ```
//!
//! and brackets regions with [`measure_peak_alloc`]. Without the installed
//! allocator the counters never move and measurements report `None`.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

#[inline]
fn on_alloc(size: usize) {
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

#[inline]
fn on_dealloc(size: usize) {
    CURRENT.fetch_sub(size, Ordering::Relaxed);
}

/// System allocator wrapper that counts live bytes and tracks the high-water
/// mark.
pub struct CountingAllocator;

// SAFETY: defers all allocation to `System`; only bookkeeping is added.
unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            on_alloc(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            on_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        on_dealloc(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            on_dealloc(layout.size());
            on_alloc(new_size);
        }
        p
    }
}

/// Live heap bytes right now (0 unless the counting allocator is installed).
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// Whether the counting allocator is actually installed, probed by making a
/// small allocation and watching the counter.
pub fn tracking_active() -> bool {
    let before = CURRENT.load(Ordering::Relaxed);
    let probe = std::hint::black_box(vec![0u8; 64]);
    let moved = CURRENT.load(Ordering::Relaxed) != before;
    drop(probe);
    moved
}

/// Runs `f` and reports the peak heap growth above the starting level, in
/// bytes — `None` when the counting allocator is not installed.
pub fn measure_peak_alloc<T>(f: impl FnOnce() -> T) -> (T, Option<usize>) {
    if !tracking_active() {
        return (f(), None);
    }
    let base = CURRENT.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let out = f();
    let peak = PEAK.load(Ordering::Relaxed);
    (out, Some(peak.saturating_sub(base)))
}

#[cfg(test)]
mod tests {
    use super::*;

    // The test binary does not install the allocator, so measurements must
    // degrade to None rather than report garbage.
    #[test]
    fn reports_none_without_installation() {
        let (value, peak) = measure_peak_alloc(|| vec![0u8; 1 << 20].len());
        assert_eq!(value, 1 << 20);
        assert_eq!(peak, None);
        assert!(!tracking_active());
        assert_eq!(current_bytes(), 0);
    }
}
