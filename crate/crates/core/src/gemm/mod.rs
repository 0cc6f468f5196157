//! Single-precision GEMM, `C += alpha * A * B`, in three forms.
//!
//! * [`gemm_naive`]: scalar `i, k, j` triple loop.
//! * [`gemm_3loop`]: vector-length-agnostic; columns step by the granted
//!   vector length, rows by the unroll factor, with one accumulator register
//!   per unrolled row of C.
//! * [`gemm_6loop`]: BLIS-style blocking with packed operands and a
//!   register-blocked micro-kernel.
//!
//! Every variant accumulates each element of C in ascending `k`, starting
//! from the value already in C, with the product and the sum rounded
//! separately. The variants are therefore bit-identical to each other, not
//! merely close.

mod blocked;
mod packing;
mod tune;

pub use blocked::gemm_6loop;
pub use packing::{pack_block_a, pack_block_b};
pub use tune::{packed_footprint_bytes, tune_block_sizes, TunedBlocks, BLOCK_GRID};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vla::{Buffer, Mask, Phase, TraceSink, VectorValue, Vpu};

/// Unroll factor used when none is given: 16 accumulator registers.
pub const DEFAULT_UNROLL: usize = 16;

/// Accumulator registers available to the micro-kernel (32 architectural
/// registers, two reserved for the B vector and the broadcast operand).
pub const MAX_UNROLL: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmDims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f32,
}

impl GemmDims {
    pub fn new(m: usize, n: usize, k: usize) -> Self {
        GemmDims {
            m,
            n,
            k,
            alpha: 1.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f32) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn flops(&self) -> u64 {
        2 * self.m as u64 * self.n as u64 * self.k as u64
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::ShapeMismatch(format!(
                "GEMM dimensions must be positive, got M={} N={} K={}",
                self.m, self.n, self.k
            )));
        }
        Ok(())
    }
}

/// Tiling of the 6-loop kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub block_m: usize,
    pub block_n: usize,
    pub block_k: usize,
    pub unroll: usize,
}

impl BlockConfig {
    pub fn new(block_m: usize, block_n: usize, block_k: usize, unroll: usize) -> Result<Self> {
        let b = BlockConfig {
            block_m,
            block_n,
            block_k,
            unroll,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_m == 0 || self.block_n == 0 || self.block_k == 0 || self.unroll == 0 {
            return Err(Error::InvalidConfig(format!(
                "block sizes and unroll factor must be positive: {self:?}"
            )));
        }
        if self.unroll > self.block_m {
            return Err(Error::InvalidConfig(format!(
                "unroll factor {} exceeds blockM {}",
                self.unroll, self.block_m
            )));
        }
        if self.unroll > MAX_UNROLL {
            return Err(Error::InvalidConfig(format!(
                "unroll factor {} exceeds the {MAX_UNROLL}-register budget",
                self.unroll
            )));
        }
        Ok(())
    }

    /// Elements of C held in registers by one micro-kernel invocation.
    pub fn macro_block(&self, gvl: usize) -> usize {
        gvl * self.unroll
    }
}

fn check_shapes(a: &Matrix, b: &Matrix, c: &Matrix, dims: &GemmDims) -> Result<()> {
    dims.validate()?;
    let ok = a.rows() == dims.m
        && a.cols() == dims.k
        && b.rows() == dims.k
        && b.cols() == dims.n
        && c.rows() == dims.m
        && c.cols() == dims.n;
    if !ok {
        return Err(Error::ShapeMismatch(format!(
            "A {}x{}, B {}x{}, C {}x{} do not match M={} N={} K={}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols(),
            dims.m,
            dims.n,
            dims.k
        )));
    }
    Ok(())
}

#[inline(always)]
fn scale(alpha: f32, a: f32) -> f32 {
    if alpha == 1.0 {
        a
    } else {
        alpha * a
    }
}

/// Scalar reference: `i, k, j` loop order.
pub fn gemm_naive(a: &Matrix, b: &Matrix, c: &mut Matrix, dims: &GemmDims) -> Result<()> {
    check_shapes(a, b, c, dims)?;
    let (n, k) = (dims.n, dims.k);
    let (a, b) = (a.as_slice(), b.as_slice());
    let c = c.as_mut_slice();
    for i in 0..dims.m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let a_alpha = scale(dims.alpha, a[i * k + kk]);
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_alpha * bv;
            }
        }
    }
    Ok(())
}

/// Vector-length-agnostic 3-loop GEMM.
///
/// The column loop asks for `N - j` elements and advances by whatever is
/// granted, so the last column block is simply shorter. Rows advance by
/// `unroll`; a final partial group uses fewer accumulators.
pub fn gemm_3loop<S: TraceSink>(
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    dims: &GemmDims,
    vpu: &mut Vpu<S>,
    unroll: usize,
) -> Result<()> {
    check_shapes(a, b, c, dims)?;
    if unroll == 0 || unroll > MAX_UNROLL {
        return Err(Error::InvalidConfig(format!(
            "unroll factor must be in 1..={MAX_UNROLL}, got {unroll}"
        )));
    }
    let GemmDims { m, n, k, alpha } = *dims;
    vpu.register_buffer(Buffer::A, m * k);
    vpu.register_buffer(Buffer::B, k * n);
    vpu.register_buffer(Buffer::C, m * n);
    let saved = vpu.phase();
    vpu.set_phase(Phase::Kernel);

    let cap = vpu.max_elements();
    let mut acc: Vec<VectorValue> = (0..unroll).map(|_| VectorValue::zeros(cap)).collect();
    let mut vb = VectorValue::zeros(cap);
    let (a, b) = (a.as_slice(), b.as_slice());
    let c = c.as_mut_slice();

    let mut j = 0;
    while j < n {
        let gvl = vpu.setvl(n - j);
        let mask = Mask::full(gvl);
        let mut i = 0;
        while i < m {
            let rows = unroll.min(m - i);
            for (u, reg) in acc[..rows].iter_mut().enumerate() {
                vpu.vload_into(reg, Buffer::C, c, (i + u) * n + j, mask)?;
            }
            for kk in 0..k {
                vpu.vload_into(&mut vb, Buffer::B, b, kk * n + j, mask)?;
                for (u, reg) in acc[..rows].iter_mut().enumerate() {
                    let a_alpha = scale(alpha, vpu.sload(Buffer::A, a, (i + u) * k + kk)?);
                    vpu.vfmacc_scalar(reg, a_alpha, &vb, mask)?;
                }
            }
            for (u, reg) in acc[..rows].iter().enumerate() {
                vpu.vstore(Buffer::C, c, (i + u) * n + j, reg, mask)?;
            }
            i += rows;
        }
        j += gvl;
    }
    vpu.set_phase(saved);
    Ok(())
}
