//! Memory-trace events emitted by instrumented kernels.
//!
//! Addresses are `(buffer, byte offset)` pairs. A flat address space is only
//! materialized at replay time by an [`AddressMap`], which hands out disjoint,
//! page-aligned regions in registration order so traces never depend on the
//! host allocator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Logical buffers a kernel can touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Buffer {
    A,
    B,
    C,
    PackA,
    PackB,
    Input,
    Cols,
    Weights,
    Output,
    WinoInput,
    WinoWeights,
    WinoProduct,
    Scratch,
}

impl Buffer {
    pub const ALL: [Buffer; 13] = [
        Buffer::A,
        Buffer::B,
        Buffer::C,
        Buffer::PackA,
        Buffer::PackB,
        Buffer::Input,
        Buffer::Cols,
        Buffer::Weights,
        Buffer::Output,
        Buffer::WinoInput,
        Buffer::WinoWeights,
        Buffer::WinoProduct,
        Buffer::Scratch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Buffer::A => "A",
            Buffer::B => "B",
            Buffer::C => "C",
            Buffer::PackA => "packA",
            Buffer::PackB => "packB",
            Buffer::Input => "input",
            Buffer::Cols => "cols",
            Buffer::Weights => "weights",
            Buffer::Output => "output",
            Buffer::WinoInput => "wgInput",
            Buffer::WinoWeights => "wgWeights",
            Buffer::WinoProduct => "wgProduct",
            Buffer::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Buffer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Buffer::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown buffer `{s}`"))
    }
}

/// Kernel-phase label attached to every event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Kernel,
    PackA,
    PackB,
    Microkernel,
    PrefetchL1,
    PrefetchL2,
    Im2col,
    WinoInput,
    WinoTuple,
    WinoOutput,
}

impl Phase {
    pub const ALL: [Phase; 10] = [
        Phase::Kernel,
        Phase::PackA,
        Phase::PackB,
        Phase::Microkernel,
        Phase::PrefetchL1,
        Phase::PrefetchL2,
        Phase::Im2col,
        Phase::WinoInput,
        Phase::WinoTuple,
        Phase::WinoOutput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Kernel => "kernel",
            Phase::PackA => "packA",
            Phase::PackB => "packB",
            Phase::Microkernel => "microkernel",
            Phase::PrefetchL1 => "prefetchL1",
            Phase::PrefetchL2 => "prefetchL2",
            Phase::Im2col => "im2col",
            Phase::WinoInput => "wgInput",
            Phase::WinoTuple => "wgTuple",
            Phase::WinoOutput => "wgOutput",
        }
    }

    pub fn is_prefetch(self) -> bool {
        matches!(self, Phase::PrefetchL1 | Phase::PrefetchL2)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown tag `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Load,
    Store,
}

/// Which pipeline issued the access. Scalar accesses always go through L1;
/// vector accesses start at the level the vector unit is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Vector,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub kind: AccessKind,
    pub unit: Unit,
    pub buffer: Buffer,
    /// Byte offset into `buffer`.
    pub offset: u64,
    pub bytes: u32,
    pub tag: Phase,
}

impl AccessEvent {
    fn kind_token(&self) -> &'static str {
        match (self.unit, self.kind) {
            (Unit::Vector, AccessKind::Load) => "load",
            (Unit::Vector, AccessKind::Store) => "store",
            (Unit::Scalar, AccessKind::Load) => "sload",
            (Unit::Scalar, AccessKind::Store) => "sstore",
        }
    }

    /// One `kind,buffer,offset,bytes,tag` line, without the newline.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.kind_token(),
            self.buffer,
            self.offset,
            self.bytes,
            self.tag
        )
    }

    pub fn parse_csv(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        }
        let (unit, kind) = match fields[0] {
            "load" => (Unit::Vector, AccessKind::Load),
            "store" => (Unit::Vector, AccessKind::Store),
            "sload" => (Unit::Scalar, AccessKind::Load),
            "sstore" => (Unit::Scalar, AccessKind::Store),
            other => return Err(format!("unknown access kind `{other}`")),
        };
        let buffer = fields[1].parse()?;
        let offset = fields[2]
            .parse()
            .map_err(|e| format!("bad offset `{}`: {e}", fields[2]))?;
        let bytes: u32 = fields[3]
            .parse()
            .map_err(|e| format!("bad byte count `{}`: {e}", fields[3]))?;
        if bytes == 0 {
            return Err("zero-byte event".into());
        }
        let tag = fields[4].parse()?;
        Ok(AccessEvent {
            kind,
            unit,
            buffer,
            offset,
            bytes,
            tag,
        })
    }
}

pub const TRACE_CSV_HEADER: &str = "kind,buffer,offset,bytes,tag";

/// Histogram of vector arithmetic instructions keyed by active lane count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComputeProfile {
    by_active: BTreeMap<usize, u64>,
}

impl ComputeProfile {
    /// Records `count` instructions with `active` lanes each.
    pub fn record(&mut self, active: usize, count: u64) {
        *self.by_active.entry(active).or_insert(0) += count;
    }

    pub fn vector_ops(&self) -> u64 {
        self.by_active.values().sum()
    }

    /// Issue cycles when each instruction occupies `ceil(active / lanes)` slots.
    pub fn cycles(&self, lanes: u32) -> u64 {
        let lanes = lanes.max(1) as usize;
        self.by_active
            .iter()
            .map(|(&active, &n)| active.div_ceil(lanes) as u64 * n)
            .sum()
    }

    pub fn merge(&mut self, other: &ComputeProfile) {
        for (&k, &v) in &other.by_active {
            *self.by_active.entry(k).or_insert(0) += v;
        }
    }
}

/// Receives the event stream of an instrumented kernel.
pub trait TraceSink {
    /// Declares the byte extent of a buffer before it is accessed.
    fn register_buffer(&mut self, _buffer: Buffer, _bytes: u64) {}

    fn record(&mut self, event: AccessEvent);

    /// Called for `count` vector arithmetic instructions of `active` lanes.
    fn record_vector_ops(&mut self, _active: usize, _count: u64) {}
}

impl<T: TraceSink + ?Sized> TraceSink for &mut T {
    fn register_buffer(&mut self, buffer: Buffer, bytes: u64) {
        (**self).register_buffer(buffer, bytes)
    }

    fn record(&mut self, event: AccessEvent) {
        (**self).record(event)
    }

    fn record_vector_ops(&mut self, active: usize, count: u64) {
        (**self).record_vector_ops(active, count)
    }
}

/// Discards everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    #[inline(always)]
    fn record(&mut self, _event: AccessEvent) {}
}

/// Counts events without storing them.
#[derive(Debug, Clone, Default)]
pub struct EventCounter {
    pub events: u64,
    pub bytes: u64,
    pub by_tag: BTreeMap<Phase, u64>,
    pub profile: ComputeProfile,
}

impl TraceSink for EventCounter {
    fn record(&mut self, event: AccessEvent) {
        self.events += 1;
        self.bytes += u64::from(event.bytes);
        *self.by_tag.entry(event.tag).or_insert(0) += 1;
    }

    fn record_vector_ops(&mut self, active: usize, count: u64) {
        self.profile.record(active, count);
    }
}

/// Assigns each registered buffer a disjoint, page-aligned base address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressMap {
    regions: BTreeMap<Buffer, (u64, u64)>,
    next_base: u64,
}

const REGION_ALIGN: u64 = 4096;

impl AddressMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registering a buffer again with a larger extent moves it to a fresh
    /// region, as a reallocation would.
    pub fn register(&mut self, buffer: Buffer, bytes: u64) {
        if let Some(&(_, len)) = self.regions.get(&buffer) {
            if bytes <= len {
                return;
            }
        }
        let base = self.next_base;
        self.regions.insert(buffer, (base, bytes));
        self.next_base = base + bytes.max(1).div_ceil(REGION_ALIGN) * REGION_ALIGN;
    }

    pub fn base(&self, buffer: Buffer) -> Option<u64> {
        self.regions.get(&buffer).map(|&(b, _)| b)
    }

    pub fn len(&self, buffer: Buffer) -> Option<u64> {
        self.regions.get(&buffer).map(|&(_, l)| l)
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Flat byte address of an event.
    pub fn resolve(&self, event: &AccessEvent) -> Result<u64> {
        match self.regions.get(&event.buffer) {
            Some(&(base, len)) if event.offset + u64::from(event.bytes) <= len => {
                Ok(base + event.offset)
            }
            Some(&(_, len)) => Err(Error::UnregisteredBuffer(format!(
                "{} (bytes {}..{} outside registered extent {len})",
                event.buffer,
                event.offset,
                event.offset + u64::from(event.bytes)
            ))),
            None => Err(Error::UnregisteredBuffer(event.buffer.to_string())),
        }
    }
}

/// An in-memory trace: ordered events plus the buffer registrations and the
/// vector-instruction profile of the run that produced it.
#[derive(Debug, Clone, Default)]
pub struct AccessTrace {
    pub events: Vec<AccessEvent>,
    pub layout: AddressMap,
    pub profile: ComputeProfile,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.bytes)).sum()
    }

    pub fn count_tag(&self, tag: Phase) -> usize {
        self.events.iter().filter(|e| e.tag == tag).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for e in &self.events {
            writeln!(out, "{}", e.to_csv())?;
        }
        Ok(())
    }

    /// Reads a CSV dump. Buffers are registered with the largest extent any
    /// event touches; the compute profile is not part of the dump.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut trace = AccessTrace::new();
        let mut extents: BTreeMap<Buffer, u64> = BTreeMap::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || (idx == 0 && trimmed == TRACE_CSV_HEADER) {
                continue;
            }
            let event = AccessEvent::parse_csv(trimmed).map_err(|message| Error::Parse {
                line: idx + 1,
                message,
            })?;
            let end = event.offset + u64::from(event.bytes);
            let e = extents.entry(event.buffer).or_insert(0);
            *e = (*e).max(end);
            trace.events.push(event);
        }
        for (buffer, bytes) in extents {
            trace.layout.register(buffer, bytes);
        }
        Ok(trace)
    }
}

impl TraceSink for AccessTrace {
    fn register_buffer(&mut self, buffer: Buffer, bytes: u64) {
        self.layout.register(buffer, bytes);
    }

    fn record(&mut self, event: AccessEvent) {
        self.events.push(event);
    }

    fn record_vector_ops(&mut self, active: usize, count: u64) {
        self.profile.record(active, count);
    }
}
