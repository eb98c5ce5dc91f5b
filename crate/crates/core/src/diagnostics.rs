//! Allocation counters and peak resident memory.
//!
//! The counters only move when a binary installs [`CountingAllocator`] as its
//! global allocator; otherwise [`AllocStats::installed`] reports `false`.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

static ACTIVE: AtomicBool = AtomicBool::new(false);
static ALLOCATIONS: AtomicU64 = AtomicU64::new(0);
static BYTES: AtomicU64 = AtomicU64::new(0);
static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

/// Wraps the system allocator and counts every allocation.
///
/// ```ignore
/// #[global_allocator]
/// static ALLOC: dgnet::diagnostics::CountingAllocator = dgnet::diagnostics::CountingAllocator;
/// ```
pub struct CountingAllocator;

fn record_alloc(size: usize) {
    ACTIVE.store(true, Ordering::Relaxed);
    ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
    BYTES.fetch_add(size as u64, Ordering::Relaxed);
    let live = LIVE.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(live, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AllocStats {
    pub installed: bool,
    pub allocations: u64,
    pub bytes: u64,
    pub peak_live_bytes: usize,
}

pub fn alloc_stats() -> AllocStats {
    AllocStats {
        installed: ACTIVE.load(Ordering::Relaxed),
        allocations: ALLOCATIONS.load(Ordering::Relaxed),
        bytes: BYTES.load(Ordering::Relaxed),
        peak_live_bytes: PEAK.load(Ordering::Relaxed),
    }
}

/// Restart the peak-live watermark from the current live size.
pub fn reset_peak() {
    PEAK.store(LIVE.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Peak resident set size in KiB (`VmHWM`), where the platform reports it.
pub fn peak_resident_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

/// Resources used by one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ResourceUsage {
    /// `None` when the counting allocator is not installed.
    pub allocations: Option<u64>,
    pub allocated_bytes: Option<u64>,
    pub peak_live_bytes: Option<usize>,
    pub peak_resident_kib: Option<u64>,
}

/// Measures allocations between [`ResourceMeter::start`] and
/// [`ResourceMeter::finish`].
pub struct ResourceMeter {
    start: AllocStats,
}

impl ResourceMeter {
    pub fn start() -> Self {
        reset_peak();
        ResourceMeter { start: alloc_stats() }
    }

    pub fn finish(self) -> ResourceUsage {
        let end = alloc_stats();
        let installed = end.installed;
        ResourceUsage {
            allocations: installed.then(|| end.allocations - self.start.allocations),
            allocated_bytes: installed.then(|| end.bytes - self.start.bytes),
            peak_live_bytes: installed.then_some(end.peak_live_bytes),
            peak_resident_kib: peak_resident_kib(),
        }
    }
}
