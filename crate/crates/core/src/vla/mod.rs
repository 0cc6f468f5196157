//! Emulated vector-length-agnostic vector unit.
//!
//! Kernels never hardcode a vector width: they ask [`set_vector_length`] how
//! many elements they may process, build tail predicates for partial vectors,
//! and issue loads, stores and multiply-accumulates through a [`Vpu`]. Every
//! memory instruction is reported to a [`TraceSink`] so the same kernel run
//! can drive the cache simulator.
//!
//! Multiply-accumulate rounds the product and the sum separately. The scalar
//! reference kernels do the same, which is what makes the vectorized GEMM and
//! Winograd paths bit-comparable with them.

mod trace;

pub use trace::{
    AccessEvent, AccessKind, AccessTrace, AddressMap, Buffer, ComputeProfile, EventCounter,
    NullSink, Phase, TraceSink, Unit, TRACE_CSV_HEADER,
};

use crate::costsim::CacheGeometry;
use crate::error::{Error, Result};

/// Cache level that vector memory instructions hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheLevel {
    L1,
    L2,
}

/// Bytes per single-precision element.
pub const ELEMENT_BYTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub mvl_bits: u32,
    pub lanes: u32,
    pub sew_bits: u32,
    pub l1: CacheGeometry,
    pub l2: CacheGeometry,
    pub l2_latency_cycles: u64,
    pub mem_latency_cycles: u64,
    pub vpu_attach: CacheLevel,
}

impl MachineConfig {
    /// A vector machine shaped like the simulated RISC-V platform: 64 KiB
    /// 4-way L1, 1 MiB 8-way L2, 64-byte lines, vector unit behind the L2.
    pub fn new(mvl_bits: u32, lanes: u32) -> Result<Self> {
        let cfg = MachineConfig {
            mvl_bits,
            lanes,
            sew_bits: 32,
            l1: CacheGeometry::new(64 * 1024, 64, 4)?,
            l2: CacheGeometry::new(1024 * 1024, 64, 8)?,
            l2_latency_cycles: 12,
            mem_latency_cycles: 100,
            vpu_attach: CacheLevel::L2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_l2(mut self, l2: CacheGeometry) -> Self {
        self.l2 = l2;
        self
    }

    pub fn with_l1(mut self, l1: CacheGeometry) -> Self {
        self.l1 = l1;
        self
    }

    pub fn with_attach(mut self, attach: CacheLevel) -> Self {
        self.vpu_attach = attach;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mvl_bits.is_power_of_two() || !(128..=16384).contains(&self.mvl_bits) {
            return Err(Error::InvalidConfig(format!(
                "vector length must be a power of two in [128, 16384] bits, got {}",
                self.mvl_bits
            )));
        }
        if ![1, 2, 4, 8].contains(&self.lanes) {
            return Err(Error::InvalidConfig(format!(
                "lanes must be one of 1, 2, 4, 8, got {}",
                self.lanes
            )));
        }
        if self.sew_bits != 32 {
            return Err(Error::InvalidConfig(format!(
                "only 32-bit elements are supported, got {}",
                self.sew_bits
            )));
        }
        Ok(())
    }

    /// Elements per vector register (`mvl / sew`).
    pub fn max_elements(&self) -> usize {
        (self.mvl_bits / self.sew_bits) as usize
    }

    /// The cache vector traffic reaches first.
    pub fn attached_cache(&self) -> &CacheGeometry {
        match self.vpu_attach {
            CacheLevel::L1 => &self.l1,
            CacheLevel::L2 => &self.l2,
        }
    }
}

/// `vsetvl`: grant `min(rvl, mvl / sew)` elements.
pub fn set_vector_length(rvl: usize, cfg: &MachineConfig) -> usize {
    rvl.min(cfg.max_elements())
}

/// Prefix predicate: the first `active` of `gvl` lanes are enabled.
///
/// Every predicate the kernels build is a tail predicate, so a mask is stored
/// as its active count rather than as a lane bitmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mask {
    gvl: usize,
    active: usize,
}

impl Mask {
    pub fn full(gvl: usize) -> Self {
        Mask { gvl, active: gvl }
    }

    pub fn gvl(&self) -> usize {
        self.gvl
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn is_full(&self) -> bool {
        self.active == self.gvl
    }

    pub fn lane(&self, i: usize) -> bool {
        i < self.active
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.gvl).map(|i| self.lane(i)).collect()
    }
}

pub fn tail_predicate(remaining: usize, gvl: usize) -> Mask {
    Mask {
        gvl,
        active: remaining.min(gvl),
    }
}

/// Contents of one vector register.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorValue {
    elements: Vec<f32>,
}

impl VectorValue {
    pub fn zeros(gvl: usize) -> Self {
        VectorValue {
            elements: vec![0.0; gvl],
        }
    }

    pub fn from_vec(elements: Vec<f32>) -> Self {
        VectorValue { elements }
    }

    pub fn gvl(&self) -> usize {
        self.elements.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.elements
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.elements
    }

    /// Re-targets the register to `gvl` lanes, all zero.
    pub fn reset(&mut self, gvl: usize) {
        self.elements.clear();
        self.elements.resize(gvl, 0.0);
    }
}

pub fn vbroadcast(scalar: f32, gvl: usize) -> VectorValue {
    VectorValue {
        elements: vec![scalar; gvl],
    }
}

/// A vector unit bound to a machine configuration and a trace sink.
///
/// The FLOP counter is per instance, so concurrent kernels on separate units
/// never share counters.
pub struct Vpu<S> {
    cfg: MachineConfig,
    sink: S,
    flops: u64,
    phase: Phase,
}

impl<S: TraceSink> Vpu<S> {
    pub fn new(cfg: MachineConfig, sink: S) -> Self {
        Vpu {
            cfg,
            sink,
            flops: 0,
            phase: Phase::Kernel,
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn max_elements(&self) -> usize {
        self.cfg.max_elements()
    }

    pub fn setvl(&self, rvl: usize) -> usize {
        set_vector_length(rvl, &self.cfg)
    }

    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn reset_flops(&mut self) {
        self.flops = 0;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    pub fn register_buffer(&mut self, buffer: Buffer, elements: usize) {
        self.sink
            .register_buffer(buffer, (elements * ELEMENT_BYTES) as u64);
    }

    /// Emits an event for `elements` contiguous elements starting at element
    /// `offset` without moving data. Kernels use it for accesses whose data
    /// movement is done natively (scalar loops, register shuffles).
    #[inline]
    pub fn trace(
        &mut self,
        kind: AccessKind,
        unit: Unit,
        buffer: Buffer,
        offset: usize,
        elements: usize,
    ) {
        self.trace_tagged(kind, unit, buffer, offset, elements, self.phase);
    }

    #[inline]
    pub fn trace_tagged(
        &mut self,
        kind: AccessKind,
        unit: Unit,
        buffer: Buffer,
        offset: usize,
        elements: usize,
        tag: Phase,
    ) {
        if elements == 0 {
            return;
        }
        self.sink.record(AccessEvent {
            kind,
            unit,
            buffer,
            offset: (offset * ELEMENT_BYTES) as u64,
            bytes: (elements * ELEMENT_BYTES) as u32,
            tag,
        });
    }

    /// Software prefetch hint. Moves no data.
    #[inline]
    pub fn prefetch(&mut self, buffer: Buffer, offset: usize, elements: usize, target: CacheLevel) {
        let tag = match target {
            CacheLevel::L1 => Phase::PrefetchL1,
            CacheLevel::L2 => Phase::PrefetchL2,
        };
        self.trace_tagged(
            AccessKind::Load,
            Unit::Vector,
            buffer,
            offset,
            elements,
            tag,
        );
    }

    /// Traced scalar load.
    #[inline]
    pub fn sload(&mut self, buffer: Buffer, data: &[f32], index: usize) -> Result<f32> {
        let v = *data.get(index).ok_or(Error::OutOfBounds {
            buffer,
            offset: index,
            end: index + 1,
            len: data.len(),
        })?;
        self.trace(AccessKind::Load, Unit::Scalar, buffer, index, 1);
        Ok(v)
    }

    pub fn vload(
        &mut self,
        buffer: Buffer,
        data: &[f32],
        offset: usize,
        mask: Mask,
    ) -> Result<VectorValue> {
        let mut v = VectorValue::zeros(mask.gvl());
        self.vload_into(&mut v, buffer, data, offset, mask)?;
        Ok(v)
    }

    /// Predicated unit-stride load; inactive lanes are zeroed.
    #[inline]
    pub fn vload_into(
        &mut self,
        dst: &mut VectorValue,
        buffer: Buffer,
        data: &[f32],
        offset: usize,
        mask: Mask,
    ) -> Result<()> {
        if dst.elements.len() != mask.gvl() {
            dst.elements.resize(mask.gvl(), 0.0);
        }
        self.vload_slice(&mut dst.elements, buffer, data, offset, mask)
    }

    /// [`Vpu::vload_into`] for a register held in a plain slice of
    /// `mask.gvl()` lanes, such as one row of a register block.
    #[inline]
    pub fn vload_slice(
        &mut self,
        dst: &mut [f32],
        buffer: Buffer,
        data: &[f32],
        offset: usize,
        mask: Mask,
    ) -> Result<()> {
        if dst.len() != mask.gvl() {
            return Err(Error::LengthMismatch {
                expected: mask.gvl(),
                found: dst.len(),
            });
        }
        let active = mask.active();
        let end = offset + active;
        if end > data.len() {
            return Err(Error::OutOfBounds {
                buffer,
                offset,
                end,
                len: data.len(),
            });
        }
        dst[..active].copy_from_slice(&data[offset..end]);
        dst[active..].fill(0.0);
        self.trace(AccessKind::Load, Unit::Vector, buffer, offset, active);
        Ok(())
    }

    /// Predicated unit-stride store; inactive lanes leave memory untouched.
    #[inline]
    pub fn vstore(
        &mut self,
        buffer: Buffer,
        data: &mut [f32],
        offset: usize,
        value: &VectorValue,
        mask: Mask,
    ) -> Result<()> {
        self.vstore_slice(buffer, data, offset, &value.elements, mask)
    }

    /// [`Vpu::vstore`] from a register held in a plain slice.
    #[inline]
    pub fn vstore_slice(
        &mut self,
        buffer: Buffer,
        data: &mut [f32],
        offset: usize,
        value: &[f32],
        mask: Mask,
    ) -> Result<()> {
        if value.len() != mask.gvl() {
            return Err(Error::LengthMismatch {
                expected: mask.gvl(),
                found: value.len(),
            });
        }
        let active = mask.active();
        let end = offset + active;
        if end > data.len() {
            return Err(Error::OutOfBounds {
                buffer,
                offset,
                end,
                len: data.len(),
            });
        }
        data[offset..end].copy_from_slice(&value[..active]);
        self.trace(AccessKind::Store, Unit::Vector, buffer, offset, active);
        Ok(())
    }

    /// `acc + a * b` on active lanes; inactive lanes keep `acc`.
    pub fn vfma(
        &mut self,
        acc: &VectorValue,
        a: &VectorValue,
        b: &VectorValue,
        mask: Mask,
    ) -> Result<VectorValue> {
        let gvl = acc.gvl();
        for found in [a.gvl(), b.gvl(), mask.gvl()] {
            if found != gvl {
                return Err(Error::LengthMismatch {
                    expected: gvl,
                    found,
                });
            }
        }
        let mut out = acc.clone();
        let active = mask.active();
        for ((o, &x), &y) in out.elements[..active]
            .iter_mut()
            .zip(&a.elements[..active])
            .zip(&b.elements[..active])
        {
            *o += x * y;
        }
        self.count_fma(active);
        Ok(out)
    }

    /// Vector-scalar form `acc += a * b`, the shape compilers emit for a
    /// broadcast operand. Avoids materializing the broadcast register.
    #[inline]
    pub fn vfmacc_scalar(
        &mut self,
        acc: &mut VectorValue,
        a: f32,
        b: &VectorValue,
        mask: Mask,
    ) -> Result<()> {
        let gvl = acc.gvl();
        if b.gvl() != gvl || mask.gvl() != gvl {
            return Err(Error::LengthMismatch {
                expected: gvl,
                found: if b.gvl() != gvl { b.gvl() } else { mask.gvl() },
            });
        }
        let active = mask.active();
        for (o, &y) in acc.elements[..active].iter_mut().zip(&b.elements[..active]) {
            *o += a * y;
        }
        self.count_fma(active);
        Ok(())
    }

    /// A register-blocked micro-kernel: for `kk` in `0..kb`,
    /// `acc[u] += (a_scale * a[kk * a_stride + u]) * b[kk * gvl ..]` for each
    /// of the `rows` registers in `acc` (stored back to back, `gvl` lanes
    /// each). The product uses `a` unscaled when `a_scale` is 1.
    ///
    /// Each element accumulates in ascending `kk`, exactly as `kb` rounds of
    /// [`Vpu::vfmacc_scalar`] would; the host loop is merely tiled so the
    /// accumulators stay in machine registers. Memory events for the operands
    /// are the caller's to emit.
    #[allow(clippy::too_many_arguments)]
    pub fn vfmacc_panel(
        &mut self,
        acc: &mut [f32],
        a: &[f32],
        a_stride: usize,
        a_scale: f32,
        b: &[f32],
        kb: usize,
        mask: Mask,
    ) -> Result<()> {
        let gvl = mask.gvl();
        if gvl == 0 || kb == 0 {
            return Ok(());
        }
        let rows = acc.len() / gvl;
        if acc.len() != rows * gvl || rows > a_stride {
            return Err(Error::LengthMismatch {
                expected: a_stride * gvl,
                found: acc.len(),
            });
        }
        if b.len() < kb * gvl || a.len() < (kb - 1) * a_stride + rows {
            return Err(Error::LengthMismatch {
                expected: kb * gvl,
                found: b.len(),
            });
        }
        let active = mask.active();
        if a_scale == 1.0 {
            panel_fma(acc, a, a_stride, b, gvl, kb, rows, active, |x| x);
        } else {
            panel_fma(acc, a, a_stride, b, gvl, kb, rows, active, |x| a_scale * x);
        }
        self.count_fmas(active, (kb * rows) as u64);
        Ok(())
    }

    #[inline]
    fn count_fma(&mut self, active: usize) {
        self.count_fmas(active, 1);
    }

    #[inline]
    fn count_fmas(&mut self, active: usize, count: u64) {
        self.flops += 2 * active as u64 * count;
        self.sink.record_vector_ops(active, count);
    }
}

/// Register-tiled body of [`Vpu::vfmacc_panel`]; lengths are already checked.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn panel_fma(
    acc: &mut [f32],
    a: &[f32],
    a_stride: usize,
    b: &[f32],
    gvl: usize,
    kb: usize,
    rows: usize,
    active: usize,
    sa: impl Fn(f32) -> f32,
) {
    const RB: usize = 4;
    const LB: usize = 8;
    for l0 in (0..active).step_by(LB) {
        let lw = LB.min(active - l0);
        for u0 in (0..rows).step_by(RB) {
            let rw = RB.min(rows - u0);
            if lw == LB && rw == RB {
                let mut r = [[0.0f32; LB]; RB];
                for (u, reg) in r.iter_mut().enumerate() {
                    reg.copy_from_slice(&acc[(u0 + u) * gvl + l0..][..LB]);
                }
                let (mut bo, mut ao) = (l0, u0);
                for _ in 0..kb {
                    let bv: &[f32; LB] = b[bo..bo + LB].try_into().expect("LB lanes");
                    let av: &[f32; RB] = a[ao..ao + RB].try_into().expect("RB rows");
                    bo += gvl;
                    ao += a_stride;
                    for u in 0..RB {
                        let x = sa(av[u]);
                        for l in 0..LB {
                            r[u][l] += x * bv[l];
                        }
                    }
                }
                for (u, reg) in r.iter().enumerate() {
                    acc[(u0 + u) * gvl + l0..][..LB].copy_from_slice(reg);
                }
            } else {
                for u in u0..u0 + rw {
                    let row = &mut acc[u * gvl + l0..][..lw];
                    for kk in 0..kb {
                        let x = sa(a[kk * a_stride + u]);
                        for (o, &y) in row.iter_mut().zip(&b[kk * gvl + l0..][..lw]) {
                            *o += x * y;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(bits: u32) -> MachineConfig {
        MachineConfig::new(bits, 8).unwrap()
    }

    #[test]
    fn setvl_examples() {
        assert_eq!(set_vector_length(100, &cfg(16384)), 100);
        assert_eq!(set_vector_length(1000, &cfg(512)), 16);
        assert_eq!(set_vector_length(0, &cfg(512)), 0);
    }

    #[test]
    fn setvl_exhaustive_against_cap() {
        for bits in [128u32, 512, 2048, 16384] {
            let c = cfg(bits);
            let cap = (bits / 32) as usize;
            for rvl in 0..=2 * cap {
                let gvl = set_vector_length(rvl, &c);
                assert!(gvl <= rvl.min(cap));
                if rvl <= cap {
                    assert_eq!(gvl, rvl);
                } else {
                    assert_eq!(gvl, cap);
                }
                assert_eq!(gvl == 0, rvl == 0);
            }
        }
    }

    #[test]
    fn config_invariants_are_enforced() {
        assert!(MachineConfig::new(256, 3).is_err());
        assert!(MachineConfig::new(64, 1).is_err());
        assert!(MachineConfig::new(32768, 1).is_err());
        assert!(MachineConfig::new(1000, 1).is_err());
        let mut c = cfg(512);
        c.sew_bits = 64;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tail_predicate_examples() {
        assert_eq!(tail_predicate(16, 16).to_bools(), vec![true; 16]);
        let m = tail_predicate(3, 16).to_bools();
        assert_eq!(m.iter().filter(|&&b| b).count(), 3);
        assert!(m[0] && m[1] && m[2] && !m[3]);
        assert_eq!(tail_predicate(0, 16).to_bools(), vec![false; 16]);
    }

    #[test]
    fn vload_masks_tail_and_traces_one_event() {
        let mut vpu = Vpu::new(cfg(512), AccessTrace::new());
        let buf = [1.0, 2.0, 3.0, 4.0];
        let full = vpu.vload(Buffer::B, &buf, 0, Mask::full(4)).unwrap();
        assert_eq!(full.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let tail = vpu.vload(Buffer::B, &buf, 2, tail_predicate(2, 4)).unwrap();
        assert_eq!(tail.as_slice(), &[3.0, 4.0, 0.0, 0.0]);
        let events = &vpu.sink().events;
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].bytes, 8);
        assert_eq!(events[1].offset, 8);
        assert_eq!(events[1].kind, AccessKind::Load);
    }

    #[test]
    fn vload_out_of_bounds_is_an_error() {
        let mut vpu = Vpu::new(cfg(512), NullSink);
        let buf = [1.0, 2.0, 3.0];
        let err = vpu.vload(Buffer::A, &buf, 1, Mask::full(4)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { end: 5, len: 3, .. }));
    }

    #[test]
    fn vstore_leaves_inactive_lanes_unchanged() {
        let mut vpu = Vpu::new(cfg(512), AccessTrace::new());
        let mut buf = [1.0, 2.0, 3.0];
        let v = VectorValue::from_vec(vec![9.0, 9.0, 9.0]);
        vpu.vstore(Buffer::C, &mut buf, 0, &v, tail_predicate(2, 3))
            .unwrap();
        assert_eq!(buf, [9.0, 9.0, 3.0]);
        vpu.vstore(
            Buffer::C,
            &mut buf,
            0,
            &vbroadcast(7.0, 3),
            tail_predicate(0, 3),
        )
        .unwrap();
        assert_eq!(buf, [9.0, 9.0, 3.0]);
        // an empty mask emits no zero-byte event
        assert_eq!(vpu.sink().events.len(), 1);
        assert_eq!(vpu.sink().events[0].kind, AccessKind::Store);
    }

    #[test]
    fn broadcast_and_fma_examples() {
        assert_eq!(vbroadcast(5.0, 4).as_slice(), &[5.0; 4]);
        assert_eq!(vbroadcast(0.0, 16).as_slice(), &[0.0; 16]);

        let mut vpu = Vpu::new(cfg(512), NullSink);
        let acc = VectorValue::from_vec(vec![1.0, 1.0]);
        let a = VectorValue::from_vec(vec![2.0, 3.0]);
        let b = VectorValue::from_vec(vec![10.0, 10.0]);
        let r = vpu.vfma(&acc, &a, &b, Mask::full(2)).unwrap();
        assert_eq!(r.as_slice(), &[21.0, 31.0]);

        let zero = VectorValue::zeros(2);
        assert_eq!(vpu.vfma(&acc, &zero, &b, Mask::full(2)).unwrap(), acc);

        let partial = vpu.vfma(&acc, &a, &b, tail_predicate(1, 2)).unwrap();
        assert_eq!(partial.as_slice(), &[21.0, 1.0]);
    }

    #[test]
    fn broadcast_then_fma_is_scalar_times_vector() {
        let mut vpu = Vpu::new(cfg(512), NullSink);
        let x = VectorValue::from_vec(vec![1.5, -2.0, 0.25, 8.0]);
        let r = vpu
            .vfma(
                &VectorValue::zeros(4),
                &vbroadcast(3.0, 4),
                &x,
                Mask::full(4),
            )
            .unwrap();
        for (out, &xi) in r.as_slice().iter().zip(x.as_slice()) {
            assert_eq!(*out, 3.0 * xi);
        }
    }

    #[test]
    fn fma_counts_two_flops_per_active_lane() {
        let mut vpu = Vpu::new(cfg(512), EventCounter::default());
        let v = vbroadcast(1.0, 16);
        vpu.vfma(&v, &v, &v, Mask::full(16)).unwrap();
        assert_eq!(vpu.flops(), 32);
        let mut acc = VectorValue::zeros(16);
        vpu.vfmacc_scalar(&mut acc, 2.0, &v, tail_predicate(5, 16))
            .unwrap();
        assert_eq!(vpu.flops(), 42);
        assert_eq!(vpu.sink().profile.vector_ops(), 2);
    }

    #[test]
    fn fma_rejects_mismatched_lengths() {
        let mut vpu = Vpu::new(cfg(512), NullSink);
        let a = VectorValue::zeros(4);
        let b = VectorValue::zeros(8);
        assert!(matches!(
            vpu.vfma(&a, &a, &b, Mask::full(4)),
            Err(Error::LengthMismatch { .. })
        ));
        let mut acc = VectorValue::zeros(4);
        assert!(vpu.vfmacc_scalar(&mut acc, 1.0, &b, Mask::full(4)).is_err());
    }

    proptest! {
        #[test]
        fn load_store_roundtrip_on_active_lanes(
            data in proptest::collection::vec(-1e6f32..1e6, 1..64),
            offset_frac in 0.0f64..1.0,
            active_frac in 0.0f64..=1.0,
        ) {
            let mut vpu = Vpu::new(cfg(2048), AccessTrace::new());
            let offset = ((data.len() - 1) as f64 * offset_frac) as usize;
            let room = data.len() - offset;
            let gvl = vpu.setvl(room);
            let active = ((gvl as f64) * active_frac) as usize;
            let mask = tail_predicate(active, gvl);
            let v = vpu.vload(Buffer::B, &data, offset, mask).unwrap();
            let mut out = vec![f32::NAN; data.len()];
            vpu.vstore(Buffer::C, &mut out, offset, &v, mask).unwrap();
            for i in 0..active {
                prop_assert_eq!(out[offset + i], data[offset + i]);
            }
            for (i, x) in out.iter().enumerate() {
                if i < offset || i >= offset + active {
                    prop_assert!(x.is_nan());
                }
            }
            let trace = vpu.sink();
            prop_assert_eq!(trace.len(), if active == 0 { 0 } else { 2 });
            prop_assert!(trace.events.iter().all(|e| e.bytes as usize == active * 4));
            prop_assert_eq!(trace.total_bytes(), trace.events.iter().map(|e| e.bytes as u64).sum::<u64>());
        }
    }
}
