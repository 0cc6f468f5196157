//! Cycle estimation and live replay.

use crate::error::{Error, Result};
use crate::vla::{AccessEvent, AddressMap, Buffer, ComputeProfile, MachineConfig, TraceSink};

use super::cache::{CacheHierarchy, CacheStats};

/// Non-calibrated cycle proxy. Compute and memory are assumed to overlap
/// perfectly, so `total = max(compute, memory)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleEstimate {
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub total_cycles: u64,
}

/// `compute = sum over vector ops of ceil(active / lanes)`;
/// `memory = L2 hits x L2 latency + L2 misses x memory latency`.
pub fn estimate_cycles(
    profile: &ComputeProfile,
    cfg: &MachineConfig,
    stats: &CacheStats,
) -> CycleEstimate {
    let compute_cycles = profile.cycles(cfg.lanes);
    let memory_cycles =
        stats.l2.hits * cfg.l2_latency_cycles + stats.l2.misses * cfg.mem_latency_cycles;
    CycleEstimate {
        compute_cycles,
        memory_cycles,
        total_cycles: compute_cycles.max(memory_cycles),
    }
}

/// Feeds events straight into one or more cache hierarchies while the kernel
/// runs, so long traces never need to be stored.
pub struct ReplaySink {
    layout: AddressMap,
    hierarchies: Vec<CacheHierarchy>,
    profile: ComputeProfile,
    events: u64,
    error: Option<Error>,
}

impl ReplaySink {
    pub fn new(hierarchies: Vec<CacheHierarchy>) -> Self {
        ReplaySink {
            layout: AddressMap::new(),
            hierarchies,
            profile: ComputeProfile::default(),
            events: 0,
            error: None,
        }
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn profile(&self) -> &ComputeProfile {
        &self.profile
    }

    /// Per-hierarchy stats, or the first resolution error seen.
    pub fn finish(self) -> Result<(Vec<CacheStats>, ComputeProfile, u64)> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let stats = self.hierarchies.iter().map(|h| *h.stats()).collect();
        Ok((stats, self.profile, self.events))
    }
}

impl TraceSink for ReplaySink {
    fn register_buffer(&mut self, buffer: Buffer, bytes: u64) {
        self.layout.register(buffer, bytes);
    }

    fn record(&mut self, event: AccessEvent) {
        self.events += 1;
        match self.layout.resolve(&event) {
            Ok(addr) => {
                for h in &mut self.hierarchies {
                    h.access(&event, addr);
                }
            }
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(e);
                }
            }
        }
    }

    fn record_vector_ops(&mut self, active: usize, count: u64) {
        self.profile.record(active, count);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costsim::{simulate_cache, CacheGeometry, LevelStats, PrefetchPolicy};
    use crate::vla::{AccessKind, AccessTrace, CacheLevel, Phase, Unit};

    fn cfg(lanes: u32) -> MachineConfig {
        MachineConfig::new(512, lanes).unwrap()
    }

    fn stats(hits: u64, misses: u64) -> CacheStats {
        CacheStats {
            l2: LevelStats {
                accesses: hits + misses,
                hits,
                misses,
            },
            ..CacheStats::default()
        }
    }

    #[test]
    fn zero_miss_full_lane_trace_costs_one_cycle_per_op() {
        let mut p = ComputeProfile::default();
        p.record(8, 10);
        let e = estimate_cycles(&p, &cfg(8), &CacheStats::default());
        assert_eq!(e.compute_cycles, 10);
        assert_eq!(e.memory_cycles, 0);
        assert_eq!(e.total_cycles, p.vector_ops());
    }

    #[test]
    fn more_lanes_never_cost_more_compute() {
        let mut p = ComputeProfile::default();
        for active in 1..=16 {
            p.record(active, 1);
        }
        let mut prev = u64::MAX;
        for lanes in [1, 2, 4, 8] {
            let c = estimate_cycles(&p, &cfg(lanes), &CacheStats::default()).compute_cycles;
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn memory_bound_trace_tracks_memory_cycles() {
        // A streaming trace over 4 MiB through a 64 KiB L2: every line misses.
        let mut t = AccessTrace::new();
        t.register_buffer(Buffer::B, 4 << 20);
        for off in (0..(4u64 << 20)).step_by(64) {
            t.record(AccessEvent {
                kind: AccessKind::Load,
                unit: Unit::Vector,
                buffer: Buffer::B,
                offset: off,
                bytes: 64,
                tag: Phase::Kernel,
            });
            t.record_vector_ops(16, 1);
        }
        let l1 = CacheGeometry::new(4096, 64, 4).unwrap();
        let l2 = CacheGeometry::new(65536, 64, 8).unwrap();
        let s = simulate_cache(&t, l1, l2, CacheLevel::L2).unwrap();
        let e = estimate_cycles(&t.profile, &cfg(8), &s);
        assert_eq!(s.l2.misses, 65536);
        assert_eq!(e.memory_cycles, 65536 * 100);
        assert_eq!(e.total_cycles, e.memory_cycles);
        assert!(e.compute_cycles < e.memory_cycles);
    }

    #[test]
    fn latencies_weight_hits_and_misses() {
        let e = estimate_cycles(&ComputeProfile::default(), &cfg(8), &stats(10, 3));
        assert_eq!(e.memory_cycles, 10 * 12 + 3 * 100);
    }

    #[test]
    fn replay_sink_matches_offline_simulation() {
        let l1 = CacheGeometry::new(4096, 64, 4).unwrap();
        let small = CacheGeometry::new(16384, 64, 8).unwrap();
        let big = CacheGeometry::new(65536, 64, 8).unwrap();
        let mk = |l2| CacheHierarchy::new(l1, l2, CacheLevel::L2, PrefetchPolicy::Fill).unwrap();
        let mut live = ReplaySink::new(vec![mk(small), mk(big)]);
        let mut stored = AccessTrace::new();
        for sink in [&mut live as &mut dyn TraceSink, &mut stored] {
            sink.register_buffer(Buffer::B, 40000);
            for pass in 0..3u64 {
                for off in (0..40000u64 - 64).step_by(96) {
                    sink.record(AccessEvent {
                        kind: AccessKind::Load,
                        unit: if pass == 1 {
                            Unit::Scalar
                        } else {
                            Unit::Vector
                        },
                        buffer: Buffer::B,
                        offset: off,
                        bytes: 64,
                        tag: Phase::Kernel,
                    });
                }
            }
        }
        let (live_stats, _, n) = live.finish().unwrap();
        assert_eq!(n as usize, stored.len());
        assert_eq!(
            live_stats[0],
            simulate_cache(&stored, l1, small, CacheLevel::L2).unwrap()
        );
        assert_eq!(
            live_stats[1],
            simulate_cache(&stored, l1, big, CacheLevel::L2).unwrap()
        );
    }

    #[test]
    fn replay_sink_reports_unregistered_buffers() {
        let mut live = ReplaySink::new(vec![]);
        live.record(AccessEvent {
            kind: AccessKind::Load,
            unit: Unit::Vector,
            buffer: Buffer::A,
            offset: 0,
            bytes: 4,
            tag: Phase::Kernel,
        });
        assert!(live.finish().is_err());
    }
}
