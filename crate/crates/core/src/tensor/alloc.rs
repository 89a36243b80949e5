//! Live-byte accounting for tensor storage.
//!
//! Counters are per thread: a measurement window is opened with
//! [`reset_peak_alloc`] on the thread that does the work and read back with
//! [`peak_alloc_bytes`]. Tensors dropped on a different thread than the one
//! that allocated them skew both threads' counts, so benchmarks run
//! single-threaded.

use std::cell::Cell;

thread_local! {
    static LIVE: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

pub(crate) fn record_alloc(bytes: usize) {
    LIVE.with(|live| {
        let now = live.get() + bytes;
        live.set(now);
        PEAK.with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
}

pub(crate) fn record_free(bytes: usize) {
    LIVE.with(|live| live.set(live.get().saturating_sub(bytes)));
}

/// High-water mark of live tensor bytes on this thread since the last reset.
pub fn peak_alloc_bytes() -> usize {
    PEAK.with(Cell::get)
}

/// Bytes currently held by live tensors on this thread.
pub fn live_alloc_bytes() -> usize {
    LIVE.with(Cell::get)
}

/// Start a new measurement window; the peak restarts from the live count.
pub fn reset_peak_alloc() {
    let live = live_alloc_bytes();
    PEAK.with(|peak| peak.set(live));
}
