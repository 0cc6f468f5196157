//! Set-associative LRU caches and a two-level inclusive hierarchy.

use crate::error::{Error, Result};
use crate::vla::{AccessEvent, AccessKind, AccessTrace, AddressMap, CacheLevel, Phase, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheGeometry {
    pub size_bytes: u64,
    pub line_bytes: u64,
    pub associativity: u32,
}

impl CacheGeometry {
    pub fn new(size_bytes: u64, line_bytes: u64, associativity: u32) -> Result<Self> {
        let g = CacheGeometry {
            size_bytes,
            line_bytes,
            associativity,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = self.size_bytes.is_power_of_two()
            && self.line_bytes.is_power_of_two()
            && self.associativity.is_power_of_two();
        if !pow2 {
            return Err(Error::InvalidGeometry(format!(
                "size {}, line {} and associativity {} must all be powers of two",
                self.size_bytes, self.line_bytes, self.associativity
            )));
        }
        let way_bytes = self.line_bytes * u64::from(self.associativity);
        if self.size_bytes < way_bytes || !self.size_bytes.is_multiple_of(way_bytes) {
            return Err(Error::InvalidGeometry(format!(
                "size {} is not divisible by line x associativity = {way_bytes}",
                self.size_bytes
            )));
        }
        Ok(())
    }

    pub fn sets(&self) -> u64 {
        self.size_bytes / (self.line_bytes * u64::from(self.associativity))
    }

    pub fn lines(&self) -> u64 {
        self.size_bytes / self.line_bytes
    }
}

/// Outcome of one line lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup {
    pub hit: bool,
    /// Line number evicted to make room, if any.
    pub evicted: Option<u64>,
}

/// One set-associative LRU cache operating on line numbers.
///
/// Tag and timestamp arrays are zero-initialized and only the sets that are
/// actually touched are ever written, so very large caches cost memory only
/// in proportion to the footprint of the trace.
#[derive(Debug, Clone)]
pub struct Cache {
    geometry: CacheGeometry,
    sets: u64,
    ways: usize,
    // line number + 1; 0 marks an invalid way
    tags: Vec<u64>,
    stamps: Vec<u64>,
    clock: u64,
}

impl Cache {
    pub fn new(geometry: CacheGeometry) -> Self {
        let sets = geometry.sets();
        let ways = geometry.associativity as usize;
        let n = sets as usize * ways;
        Cache {
            geometry,
            sets,
            ways,
            tags: vec![0; n],
            stamps: vec![0; n],
            clock: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    #[inline]
    fn set_range(&self, line: u64) -> std::ops::Range<usize> {
        let base = (line % self.sets) as usize * self.ways;
        base..base + self.ways
    }

    pub fn contains(&self, line: u64) -> bool {
        let r = self.set_range(line);
        self.tags[r].contains(&(line + 1))
    }

    /// Looks up `line`, filling it on a miss and updating recency either way.
    #[inline]
    pub fn access(&mut self, line: u64) -> Lookup {
        self.clock += 1;
        let range = self.set_range(line);
        let key = line + 1;
        let mut victim = range.start;
        let mut oldest = u64::MAX;
        for i in range {
            let t = self.tags[i];
            if t == key {
                self.stamps[i] = self.clock;
                return Lookup {
                    hit: true,
                    evicted: None,
                };
            }
            let stamp = if t == 0 { 0 } else { self.stamps[i] };
            if stamp < oldest {
                oldest = stamp;
                victim = i;
            }
        }
        let old = self.tags[victim];
        self.tags[victim] = key;
        self.stamps[victim] = self.clock;
        Lookup {
            hit: false,
            evicted: (old != 0).then(|| old - 1),
        }
    }

    pub fn invalidate(&mut self, line: u64) {
        let range = self.set_range(line);
        let key = line + 1;
        for i in range {
            if self.tags[i] == key {
                self.tags[i] = 0;
                self.stamps[i] = 0;
                return;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LevelStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

impl LevelStats {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }

    fn record(&mut self, hit: bool) {
        self.accesses += 1;
        if hit {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
    }

    pub fn merge(&mut self, other: &LevelStats) {
        self.accesses += other.accesses;
        self.hits += other.hits;
        self.misses += other.misses;
    }
}

/// Line-granular counters for both levels. Prefetch fills are counted
/// separately and never contribute to hits or misses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub l1: LevelStats,
    pub l2: LevelStats,
    pub prefetch_fills: u64,
}

impl CacheStats {
    pub fn merge(&mut self, other: &CacheStats) {
        self.l1.merge(&other.l1);
        self.l2.merge(&other.l2);
        self.prefetch_fills += other.prefetch_fills;
    }
}

/// How prefetch-tagged events are replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefetchPolicy {
    /// Non-blocking fill: updates cache state, costs nothing.
    #[default]
    Fill,
    /// Treated as no-ops.
    Ignore,
}

/// Two-level LRU hierarchy.
///
/// L2 is inclusive of L1: an L2 eviction back-invalidates the line in L1.
/// Scalar accesses always start at L1. Vector accesses start at the level the
/// vector unit is attached to; when that is L2 they bypass L1 entirely, and a
/// vector store drops any stale L1 copy.
#[derive(Debug, Clone)]
pub struct CacheHierarchy {
    l1: Cache,
    l2: Cache,
    attach: CacheLevel,
    prefetch: PrefetchPolicy,
    line_shift: u32,
    stats: CacheStats,
}

impl CacheHierarchy {
    pub fn new(
        l1: CacheGeometry,
        l2: CacheGeometry,
        attach: CacheLevel,
        prefetch: PrefetchPolicy,
    ) -> Result<Self> {
        l1.validate()?;
        l2.validate()?;
        if l1.line_bytes != l2.line_bytes {
            return Err(Error::InvalidGeometry(format!(
                "L1 and L2 line sizes differ ({} vs {})",
                l1.line_bytes, l2.line_bytes
            )));
        }
        Ok(CacheHierarchy {
            l1: Cache::new(l1),
            l2: Cache::new(l2),
            attach,
            prefetch,
            line_shift: l1.line_bytes.trailing_zeros(),
            stats: CacheStats::default(),
        })
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    /// Replays one event whose flat byte address is `addr`.
    pub fn access(&mut self, event: &AccessEvent, addr: u64) {
        let first = addr >> self.line_shift;
        let last = (addr + u64::from(event.bytes) - 1) >> self.line_shift;
        if event.tag.is_prefetch() {
            if self.prefetch == PrefetchPolicy::Fill {
                for line in first..=last {
                    self.prefetch_line(line, event.tag);
                }
            }
            return;
        }
        let via_l1 = event.unit == Unit::Scalar || self.attach == CacheLevel::L1;
        for line in first..=last {
            if via_l1 {
                let l1 = self.l1.access(line);
                self.stats.l1.record(l1.hit);
                if !l1.hit {
                    self.l2_access(line);
                }
            } else {
                self.l2_access(line);
                if event.kind == AccessKind::Store {
                    self.l1.invalidate(line);
                }
            }
        }
    }

    #[inline]
    fn l2_access(&mut self, line: u64) {
        let r = self.l2.access(line);
        self.stats.l2.record(r.hit);
        if let Some(victim) = r.evicted {
            self.l1.invalidate(victim);
        }
    }

    fn prefetch_line(&mut self, line: u64, tag: Phase) {
        self.stats.prefetch_fills += 1;
        if let Some(victim) = self.l2.access(line).evicted {
            self.l1.invalidate(victim);
        }
        if tag == Phase::PrefetchL1 {
            self.l1.access(line);
        }
    }
}

/// Replays a recorded trace through a fresh hierarchy.
pub fn simulate_cache(
    trace: &AccessTrace,
    l1: CacheGeometry,
    l2: CacheGeometry,
    vpu_attach: CacheLevel,
) -> Result<CacheStats> {
    simulate_cache_with(trace, l1, l2, vpu_attach, PrefetchPolicy::Fill)
}

pub fn simulate_cache_with(
    trace: &AccessTrace,
    l1: CacheGeometry,
    l2: CacheGeometry,
    vpu_attach: CacheLevel,
    prefetch: PrefetchPolicy,
) -> Result<CacheStats> {
    let mut h = CacheHierarchy::new(l1, l2, vpu_attach, prefetch)?;
    replay(&mut h, &trace.layout, &trace.events)?;
    Ok(*h.stats())
}

fn replay(h: &mut CacheHierarchy, layout: &AddressMap, events: &[AccessEvent]) -> Result<()> {
    for e in events {
        let addr = layout.resolve(e)?;
        h.access(e, addr);
    }
    Ok(())
}
