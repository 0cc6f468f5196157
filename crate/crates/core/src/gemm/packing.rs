//! Operand packing for the 6-loop kernel.
//!
//! Packed A: panels of `unroll` rows; inside a panel, element `(u, k)` sits
//! at `k * unroll + u`, so the micro-kernel reads the `unroll` values it
//! broadcasts for step `k` from one contiguous run.
//!
//! Packed B: panels of `gvl` columns; inside a panel, row `k` is the
//! contiguous vector the micro-kernel loads at step `k`.
//!
//! Edge tiles are zero-padded to whole panels.

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vla::{
    tail_predicate, AccessKind, Buffer, MachineConfig, Mask, NullSink, Phase, TraceSink, Unit,
    VectorValue, Vpu,
};

pub(crate) fn packed_a_len(rows: usize, kb: usize, unroll: usize) -> usize {
    rows.div_ceil(unroll) * unroll * kb
}

pub(crate) fn packed_b_len(cols: usize, kb: usize, panel: usize) -> usize {
    cols.div_ceil(panel) * panel * kb
}

/// Packs the `rows x kb` tile of A at `(i1, k1)` into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pack_a_traced<S: TraceSink>(
    vpu: &mut Vpu<S>,
    a: &Matrix,
    i1: usize,
    k1: usize,
    rows: usize,
    kb: usize,
    unroll: usize,
    out: &mut [f32],
    reg: &mut VectorValue,
) -> Result<()> {
    let saved = vpu.phase();
    vpu.set_phase(Phase::PackA);
    let lda = a.cols();
    let src = a.as_slice();
    let panels = rows.div_ceil(unroll);
    for q in 0..panels {
        let panel = &mut out[q * kb * unroll..(q + 1) * kb * unroll];
        for u in 0..unroll {
            let row = q * unroll + u;
            if row >= rows {
                for kk in 0..kb {
                    panel[kk * unroll + u] = 0.0;
                }
                continue;
            }
            // unit-stride loads along the row, transposed into the panel in
            // registers
            let mut kk = 0;
            while kk < kb {
                let gvl = vpu.setvl(kb - kk);
                vpu.vload_into(
                    reg,
                    Buffer::A,
                    src,
                    (i1 + row) * lda + k1 + kk,
                    Mask::full(gvl),
                )?;
                for (l, &v) in reg.as_slice().iter().enumerate() {
                    panel[(kk + l) * unroll + u] = v;
                }
                kk += gvl;
            }
        }
        for kk in 0..kb {
            vpu.trace(
                AccessKind::Store,
                Unit::Vector,
                Buffer::PackA,
                (q * kb + kk) * unroll,
                unroll,
            );
        }
    }
    vpu.set_phase(saved);
    Ok(())
}

/// Packs the `kb x cols` tile of B at `(k1, j1)` into `out` as panels of
/// `panel` columns.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pack_b_traced<S: TraceSink>(
    vpu: &mut Vpu<S>,
    b: &Matrix,
    k1: usize,
    j1: usize,
    kb: usize,
    cols: usize,
    panel: usize,
    out: &mut [f32],
    reg: &mut VectorValue,
) -> Result<()> {
    let saved = vpu.phase();
    vpu.set_phase(Phase::PackB);
    let ldb = b.cols();
    let src = b.as_slice();
    let panels = cols.div_ceil(panel);
    for kk in 0..kb {
        for p in 0..panels {
            let mask = tail_predicate(cols - p * panel, panel);
            vpu.vload_into(reg, Buffer::B, src, (k1 + kk) * ldb + j1 + p * panel, mask)?;
            // full-width store: the zeroed inactive lanes become the padding
            vpu.vstore(
                Buffer::PackB,
                out,
                (p * kb + kk) * panel,
                reg,
                Mask::full(panel),
            )?;
        }
    }
    vpu.set_phase(saved);
    Ok(())
}

fn packing_vpu() -> Vpu<NullSink> {
    Vpu::new(
        MachineConfig::new(16384, 1).expect("widest machine is valid"),
        NullSink,
    )
}

/// Packs the A tile at `(i1, k1)`, clipped to the matrix edge.
pub fn pack_block_a(
    a: &Matrix,
    i1: usize,
    k1: usize,
    block_m: usize,
    block_k: usize,
    unroll: usize,
) -> Result<Vec<f32>> {
    if unroll == 0 || i1 >= a.rows() || k1 >= a.cols() {
        return Err(Error::ShapeMismatch(format!(
            "A tile at ({i1}, {k1}) with unroll {unroll} is outside a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let rows = block_m.min(a.rows() - i1);
    let kb = block_k.min(a.cols() - k1);
    let mut out = vec![0.0; packed_a_len(rows, kb, unroll)];
    let mut vpu = packing_vpu();
    let mut reg = VectorValue::zeros(vpu.max_elements());
    pack_a_traced(&mut vpu, a, i1, k1, rows, kb, unroll, &mut out, &mut reg)?;
    Ok(out)
}

/// Packs the B tile at `(k1, j1)`, clipped to the matrix edge.
pub fn pack_block_b(
    b: &Matrix,
    k1: usize,
    j1: usize,
    block_k: usize,
    block_n: usize,
    gvl: usize,
) -> Result<Vec<f32>> {
    let mut vpu = packing_vpu();
    if gvl == 0 || gvl > vpu.max_elements() || k1 >= b.rows() || j1 >= b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "B tile at ({k1}, {j1}) with panel width {gvl} is outside a {}x{} matrix",
            b.rows(),
            b.cols()
        )));
    }
    let kb = block_k.min(b.rows() - k1);
    let cols = block_n.min(b.cols() - j1);
    let mut out = vec![0.0; packed_b_len(cols, kb, gvl)];
    let mut reg = VectorValue::zeros(gvl);
    pack_b_traced(&mut vpu, b, k1, j1, kb, cols, gvl, &mut out, &mut reg)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted_nonzero(v: &[f32]) -> Vec<i64> {
        let mut out: Vec<i64> = v.iter().filter(|&&x| x != 0.0).map(|&x| x as i64).collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn pack_a_two_by_two() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            pack_block_a(&a, 0, 0, 2, 2, 2).unwrap(),
            vec![1.0, 3.0, 2.0, 4.0]
        );
    }

    #[test]
    fn pack_a_pads_partial_panel() {
        // 3 rows with unroll 2: second panel has one real row and one zero row
        let a = Matrix::from_fn(3, 2, |r, c| (r * 2 + c + 1) as f32);
        let p = pack_block_a(&a, 0, 0, 3, 2, 2).unwrap();
        assert_eq!(p, vec![1.0, 3.0, 2.0, 4.0, 5.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn pack_b_three_by_three() {
        // panel width 2: first panel holds columns 0-1, second column 2 + pad
        let b = Matrix::from_fn(3, 3, |r, c| (r * 3 + c + 1) as f32);
        let p = pack_block_b(&b, 0, 0, 3, 3, 2).unwrap();
        assert_eq!(
            p,
            vec![1.0, 2.0, 4.0, 5.0, 7.0, 8.0, 3.0, 0.0, 6.0, 0.0, 9.0, 0.0]
        );
    }

    #[test]
    fn zero_tiles_pack_to_zero() {
        let z = Matrix::zeros(7, 9);
        assert!(pack_block_a(&z, 2, 3, 4, 4, 3)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(pack_block_b(&z, 2, 3, 4, 4, 3)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn interior_tile_offsets_are_respected() {
        let a = Matrix::from_fn(6, 6, |r, c| (10 * r + c) as f32);
        let p = pack_block_a(&a, 2, 3, 2, 2, 2).unwrap();
        assert_eq!(p, vec![23.0, 33.0, 24.0, 34.0]);
        let p = pack_block_b(&a, 4, 1, 2, 3, 4).unwrap();
        assert_eq!(p, vec![41.0, 42.0, 43.0, 0.0, 51.0, 52.0, 53.0, 0.0]);
    }

    #[test]
    fn out_of_range_tiles_are_rejected() {
        let a = Matrix::zeros(4, 4);
        assert!(pack_block_a(&a, 4, 0, 2, 2, 2).is_err());
        assert!(pack_block_b(&a, 0, 0, 2, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn packing_is_a_permutation_plus_zero_padding(
            rows in 1usize..20, cols in 1usize..20,
            i_frac in 0.0f64..1.0, j_frac in 0.0f64..1.0,
            bm in 1usize..12, bk in 1usize..12, unroll in 1usize..6, gvl in 1usize..9,
        ) {
            let m = Matrix::from_fn(rows, cols, |r, c| (1 + r * 31 + c) as f32);
            let i1 = ((rows - 1) as f64 * i_frac) as usize;
            let k1 = ((cols - 1) as f64 * j_frac) as usize;
            let tile_rows = bm.min(rows - i1);
            let tile_cols = bk.min(cols - k1);
            let mut tile = Vec::new();
            for r in i1..i1 + tile_rows {
                for c in k1..k1 + tile_cols {
                    tile.push(m.get(r, c));
                }
            }
            let pa = pack_block_a(&m, i1, k1, bm, bk, unroll).unwrap();
            prop_assert_eq!(pa.len(), tile_rows.div_ceil(unroll) * unroll * tile_cols);
            prop_assert_eq!(sorted_nonzero(&pa), sorted_nonzero(&tile));

            // reuse the same tile as a B operand: (k1=i1 rows, j1=k1 cols)
            let pb = pack_block_b(&m, i1, k1, bm, bk, gvl).unwrap();
            prop_assert_eq!(pb.len(), tile_cols.div_ceil(gvl) * gvl * tile_rows);
            prop_assert_eq!(sorted_nonzero(&pb), sorted_nonzero(&tile));
        }
    }
}
