use crate::error::Result;
use crate::tensor::Matrix;
use crate::vla::{
    tail_predicate, AccessKind, Buffer, CacheLevel, Phase, TraceSink, Unit, VectorValue, Vpu,
};

use super::packing::{pack_a_traced, pack_b_traced, packed_a_len, packed_b_len};
use super::{check_shapes, BlockConfig, GemmDims};

/// Blocked 6-loop GEMM.
///
/// Loop nest: `j1` (blockN), `k1` (blockK, packs B), `i1` (blockM, packs A),
/// then the macro-kernel over packed panels: `j` by panel width, `i` by the
/// unroll factor, `k` inside the micro-kernel. The micro-kernel reads only
/// the packed buffers. Software prefetches are emitted as tagged trace events
/// in the same iteration as the accesses they cover; they move no data.
pub fn gemm_6loop<S: TraceSink>(
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    dims: &GemmDims,
    vpu: &mut Vpu<S>,
    blocks: &BlockConfig,
) -> Result<()> {
    check_shapes(a, b, c, dims)?;
    blocks.validate()?;
    let GemmDims { m, n, k, alpha } = *dims;
    let unroll = blocks.unroll;
    let (bm, bn, bk) = (blocks.block_m, blocks.block_n, blocks.block_k);
    let panel = vpu.setvl(bn.min(n));

    let mut packed_a = vec![0.0; packed_a_len(bm.min(m), bk.min(k), unroll)];
    let mut packed_b = vec![0.0; packed_b_len(bn.min(n), bk.min(k), panel)];
    vpu.register_buffer(Buffer::A, m * k);
    vpu.register_buffer(Buffer::B, k * n);
    vpu.register_buffer(Buffer::C, m * n);
    vpu.register_buffer(Buffer::PackA, packed_a.len());
    vpu.register_buffer(Buffer::PackB, packed_b.len());
    let saved = vpu.phase();

    // `unroll` accumulator registers of `panel` lanes, back to back
    let mut acc = vec![0.0f32; unroll * panel];
    let mut scratch = VectorValue::zeros(vpu.max_elements());
    let c = c.as_mut_slice();

    for j1 in (0..n).step_by(bn) {
        let nb = bn.min(n - j1);
        for k1 in (0..k).step_by(bk) {
            let kb = bk.min(k - k1);
            pack_b_traced(vpu, b, k1, j1, kb, nb, panel, &mut packed_b, &mut scratch)?;
            for i1 in (0..m).step_by(bm) {
                let mb = bm.min(m - i1);
                pack_a_traced(vpu, a, i1, k1, mb, kb, unroll, &mut packed_a, &mut scratch)?;

                vpu.set_phase(Phase::Microkernel);
                for (p, j) in (0..nb).step_by(panel).enumerate() {
                    let mask = tail_predicate(nb - j, panel);
                    let b_panel = p * kb * panel;
                    for (q, i) in (0..mb).step_by(unroll).enumerate() {
                        let rows = unroll.min(mb - i);
                        let a_panel = q * kb * unroll;
                        for u in 0..rows {
                            let row = (i1 + i + u) * n + j1 + j;
                            vpu.prefetch(Buffer::C, row, mask.active(), CacheLevel::L1);
                        }
                        vpu.prefetch(Buffer::PackA, a_panel, kb * unroll, CacheLevel::L2);
                        vpu.prefetch(Buffer::PackB, b_panel, kb * panel, CacheLevel::L2);

                        let tile = &mut acc[..rows * panel];
                        for (u, reg) in tile.chunks_exact_mut(panel).enumerate() {
                            let row = (i1 + i + u) * n + j1 + j;
                            vpu.vload_slice(reg, Buffer::C, c, row, mask)?;
                        }
                        for kk in 0..kb {
                            let b_row = b_panel + kk * panel;
                            let a_col = a_panel + kk * unroll;
                            vpu.prefetch(Buffer::PackB, b_row, panel, CacheLevel::L1);
                            vpu.prefetch(Buffer::PackA, a_col, unroll, CacheLevel::L1);
                            vpu.trace(
                                AccessKind::Load,
                                Unit::Vector,
                                Buffer::PackB,
                                b_row,
                                mask.active(),
                            );
                            // the `rows` broadcast operands are contiguous in
                            // packed A; one event covers them
                            vpu.trace(AccessKind::Load, Unit::Scalar, Buffer::PackA, a_col, rows);
                        }
                        // B rows are read in place: packing zeroed their
                        // padding lanes, so they equal the predicated loads
                        vpu.vfmacc_panel(
                            tile,
                            &packed_a[a_panel..a_panel + kb * unroll],
                            unroll,
                            alpha,
                            &packed_b[b_panel..b_panel + kb * panel],
                            kb,
                            mask,
                        )?;
                        for (u, reg) in tile.chunks_exact(panel).enumerate() {
                            let row = (i1 + i + u) * n + j1 + j;
                            vpu.vstore_slice(Buffer::C, c, row, reg, mask)?;
                        }
                    }
                }
            }
        }
    }
    vpu.set_phase(saved);
    Ok(())
}
