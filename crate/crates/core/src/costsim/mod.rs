//! Trace-driven cache and cycle simulation for co-design sweeps.

mod cache;
mod cycles;
mod sweep;

pub use cache::{
    simulate_cache, simulate_cache_with, Cache, CacheGeometry, CacheHierarchy, CacheStats,
    LevelStats, Lookup, PrefetchPolicy,
};
pub use cycles::{estimate_cycles, CycleEstimate, ReplaySink};
pub use sweep::{
    sweep, write_sweep_csv, SweepAlgorithm, SweepAxes, SweepOptions, SweepRow, SweepWorkload,
    SWEEP_CSV_HEADER,
};
