//! Cache-driven choice of 6-loop block sizes.
//!
//! Candidates come from a fixed power-of-two grid. They are tried along a
//! fixed shrinking chain that starts at the largest grid point and halves
//! blockM first, then blockN, then blockK, so blockK and blockN are kept
//! large longest. Walking a chain (rather than taking the largest-volume
//! point that fits) guarantees that a smaller cache never selects a larger
//! value for any block dimension.

use crate::vla::{MachineConfig, ELEMENT_BYTES};

use super::{BlockConfig, GemmDims};

/// `(blockM values, blockN values, blockK values)`.
pub const BLOCK_GRID: (&[usize], &[usize], &[usize]) =
    (&[16, 32, 64, 128], &[256, 512, 1024], &[128, 256]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunedBlocks {
    pub blocks: BlockConfig,
    pub footprint_bytes: u64,
    /// False when even the smallest candidate exceeds the cache.
    pub fits: bool,
}

/// Bytes of packed A + packed B + the register-resident C macro-block.
pub fn packed_footprint_bytes(blocks: &BlockConfig, gvl: usize) -> u64 {
    let u = blocks.unroll;
    let a = blocks.block_m.div_ceil(u) * u * blocks.block_k;
    let b = blocks.block_k * blocks.block_n.div_ceil(gvl) * gvl;
    let c = blocks.macro_block(gvl);
    ((a + b + c) * ELEMENT_BYTES) as u64
}

fn chain() -> Vec<(usize, usize, usize)> {
    let (ms, ns, ks) = BLOCK_GRID;
    let (mut m, mut n, mut k) = (ms.len() - 1, ns.len() - 1, ks.len() - 1);
    let mut out = vec![(ms[m], ns[n], ks[k])];
    loop {
        if m > 0 {
            m -= 1;
        } else if n > 0 {
            n -= 1;
        } else if k > 0 {
            k -= 1;
        } else {
            break;
        }
        out.push((ms[m], ns[n], ks[k]));
    }
    out
}

/// Picks block sizes whose packed footprint fits the cache the vector unit
/// is attached to. Blocks are clipped to the problem and blockM is rounded up
/// to a multiple of `unroll`.
pub fn tune_block_sizes(
    dims: &GemmDims,
    cfg: &MachineConfig,
    gvl: usize,
    unroll: usize,
) -> TunedBlocks {
    let capacity = cfg.attached_cache().size_bytes;
    let gvl = gvl.max(1);
    let unroll = unroll.clamp(1, super::MAX_UNROLL);
    let mut last = None;
    for (bm, bn, bk) in chain() {
        let block_m = bm.min(dims.m.max(1)).div_ceil(unroll) * unroll;
        let blocks = BlockConfig {
            block_m,
            block_n: bn.min(dims.n.max(1)),
            block_k: bk.min(dims.k.max(1)),
            unroll,
        };
        let footprint_bytes = packed_footprint_bytes(&blocks, gvl);
        let tuned = TunedBlocks {
            blocks,
            footprint_bytes,
            fits: footprint_bytes <= capacity,
        };
        if tuned.fits {
            return tuned;
        }
        last = Some(tuned);
    }
    last.expect("chain is never empty")
}
