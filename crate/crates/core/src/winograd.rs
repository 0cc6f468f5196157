//! Winograd F(6x6, 3x3) convolution with inter-tile parallelism across
//! channels.
//!
//! A single 8x8 tile row holds only 8 floats, far fewer than a long vector
//! register. Instead of growing the tile (which costs accuracy), the input
//! and output transforms process the same 8x8 tile position from a group of
//! channels at once: each row of every tile is split into two halves of
//! [`ELEMENTS`] floats, and the halves of `interchannels` channels are packed
//! side by side into two row buffers. With 16 floats per 512-bit register,
//! four channels fill a vector; a 2048-bit register takes sixteen.
//!
//! A tile transform `L * X * L^T` runs in two passes over those buffers: the
//! first combines the eight row vectors with the coefficients of `L`; the
//! intermediate is transposed in registers so the second pass can combine
//! columns the same way. Per lane the arithmetic sequence is independent of
//! how many channels share the vector, so results are bit-identical for every
//! vector length.
//!
//! Transformed tensors are stored frequency-position major: for one of the 64
//! positions, all tiles, and within a tile all channels, are contiguous. The
//! tuple multiplication is then 64 small GEMMs, vectorized over output
//! channels.

use crate::convlayer::ConvLayerSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::vla::{AccessKind, Buffer, Mask, Phase, TraceSink, Unit, VectorValue, Vpu};

pub const TILE: usize = 8;
pub const OUTPUT_TILE: usize = 6;
pub const KERNEL: usize = 3;
/// Floats per half tile row.
pub const ELEMENTS: usize = 4;
const POSITIONS: usize = TILE * TILE;
/// Tiles accumulated together in the tuple multiplication.
const TUPLE_UNROLL: usize = 16;

// Interpolation points 0, +-1, +-2, +-1/2 and infinity.
#[rustfmt::skip]
const INPUT_TRANSFORM: [[f32; 8]; 8] = [
    [1.0, 0.0, -5.25, 0.0, 5.25, 0.0, -1.0, 0.0],
    [0.0, 1.0, 1.0, -4.25, -4.25, 1.0, 1.0, 0.0],
    [0.0, -1.0, 1.0, 4.25, -4.25, -1.0, 1.0, 0.0],
    [0.0, 0.5, 0.25, -2.5, -1.25, 2.0, 1.0, 0.0],
    [0.0, -0.5, 0.25, 2.5, -1.25, -2.0, 1.0, 0.0],
    [0.0, 2.0, 4.0, -2.5, -5.0, 0.5, 1.0, 0.0],
    [0.0, -2.0, 4.0, 2.5, -5.0, -0.5, 1.0, 0.0],
    [0.0, -1.0, 0.0, 5.25, 0.0, -5.25, 0.0, 1.0],
];

// 8x3 kernel transform, zero-extended to 8 columns.
#[rustfmt::skip]
const KERNEL_TRANSFORM: [[f32; 8]; 8] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-2.0 / 9.0, -2.0 / 9.0, -2.0 / 9.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-2.0 / 9.0, 2.0 / 9.0, -2.0 / 9.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 90.0, 1.0 / 45.0, 2.0 / 45.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 90.0, -1.0 / 45.0, 2.0 / 45.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [32.0 / 45.0, 16.0 / 45.0, 8.0 / 45.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [32.0 / 45.0, -16.0 / 45.0, 8.0 / 45.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
];

#[rustfmt::skip]
const OUTPUT_TRANSFORM: [[f32; 8]; 6] = [
    [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0],
    [0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 0.0],
    [0.0, 1.0, 1.0, 4.0, 4.0, 0.25, 0.25, 0.0],
    [0.0, 1.0, -1.0, 8.0, -8.0, 0.125, -0.125, 0.0],
    [0.0, 1.0, 1.0, 16.0, 16.0, 0.0625, 0.0625, 0.0],
    [0.0, 1.0, -1.0, 32.0, -32.0, 0.03125, -0.03125, 1.0],
];

type Tile = [f32; POSITIONS];

/// Channel grouping derived from the vector length at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WinogradPlan {
    pub elements: usize,
    pub interchannels: usize,
}

impl WinogradPlan {
    /// `interchannels = (vector elements) / 4`, at least one.
    pub fn for_vector_elements(vector_elements: usize) -> Self {
        WinogradPlan {
            elements: ELEMENTS,
            interchannels: (vector_elements / ELEMENTS).max(1),
        }
    }

    pub fn for_vector_bits(bits: u32) -> Self {
        Self::for_vector_elements((bits / 32) as usize)
    }

    /// Channels per transform group; fewer than four channels use one tile at
    /// a time.
    pub fn group_size(&self, channels: usize) -> usize {
        if channels < 4 {
            1
        } else {
            self.interchannels
        }
    }
}

/// Spatial tiling of a stride-1 3x3 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub tiles_h: usize,
    pub tiles_w: usize,
}

impl TileGrid {
    pub fn new(h: usize, w: usize, pad: usize) -> Result<Self> {
        if h + 2 * pad < KERNEL || w + 2 * pad < KERNEL {
            return Err(Error::InvalidSpec(format!(
                "3x3 kernel does not fit a {h}x{w} input with padding {pad}"
            )));
        }
        let (out_h, out_w) = (h + 2 * pad - 2, w + 2 * pad - 2);
        Ok(TileGrid {
            pad,
            out_h,
            out_w,
            tiles_h: out_h.div_ceil(OUTPUT_TILE),
            tiles_w: out_w.div_ceil(OUTPUT_TILE),
        })
    }

    pub fn tiles(&self) -> usize {
        self.tiles_h * self.tiles_w
    }
}

/// Transformed activations, `[position][tile][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedTensor {
    pub channels: usize,
    pub tiles: usize,
    pub data: Vec<f32>,
}

impl TransformedTensor {
    fn zeros(channels: usize, tiles: usize) -> Self {
        TransformedTensor {
            channels,
            tiles,
            data: vec![0.0; POSITIONS * tiles * channels],
        }
    }

    #[inline]
    pub fn index(&self, pos: usize, tile: usize, channel: usize) -> usize {
        (pos * self.tiles + tile) * self.channels + channel
    }
}

/// Transformed kernels, `[position][input channel][filter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedWeights {
    pub filters: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl TransformedWeights {
    #[inline]
    pub fn index(&self, pos: usize, channel: usize, filter: usize) -> usize {
        (pos * self.channels + channel) * self.filters + filter
    }
}

/// Weights handed to [`conv_winograd`]: raw `n x c x 3 x 3`, or already
/// transformed offline.
#[derive(Debug, Clone, Copy)]
pub enum WinogradWeights<'a> {
    Raw(&'a [f32]),
    Transformed(&'a TransformedWeights),
}

/// `L * X * L^T` for one tile, in the same per-element operation order as
/// the grouped vector path.
fn transform_tile(lhs: &[[f32; 8]], x: &Tile) -> Tile {
    let rows = lhs.len();
    let mut t = [0.0f32; POSITIONS];
    for (r_out, coefs) in lhs.iter().enumerate() {
        for c in 0..TILE {
            let mut acc = 0.0f32;
            for (r, &coef) in coefs.iter().enumerate() {
                if coef != 0.0 {
                    acc += coef * x[r * TILE + c];
                }
            }
            t[r_out * TILE + c] = acc;
        }
    }
    let mut y = [0.0f32; POSITIONS];
    for r in 0..rows {
        for (c_out, coefs) in lhs.iter().enumerate() {
            let mut acc = 0.0f32;
            for (c, &coef) in coefs.iter().enumerate() {
                if coef != 0.0 {
                    acc += coef * t[r * TILE + c];
                }
            }
            y[r * TILE + c_out] = acc;
        }
    }
    y
}

/// Registers and row buffers for one channel group.
struct GroupScratch {
    rows: Vec<f32>,
    v: [Vec<VectorValue>; 2],
    t: [Vec<VectorValue>; 2],
    w: Vec<VectorValue>,
    u: Vec<VectorValue>,
}

impl GroupScratch {
    fn new(max_group: usize) -> Self {
        let lanes = ELEMENTS * max_group;
        let regs = |n| {
            (0..n)
                .map(|_| VectorValue::zeros(lanes))
                .collect::<Vec<_>>()
        };
        GroupScratch {
            rows: vec![0.0; 2 * TILE * lanes],
            v: [regs(TILE), regs(TILE)],
            t: [regs(TILE), regs(TILE)],
            w: regs(TILE),
            u: regs(TILE),
        }
    }

    fn scratch_len(max_group: usize) -> usize {
        2 * TILE * ELEMENTS * max_group
    }
}

/// `acc = sum_r coefs[r] * src[r]`, skipping zero coefficients.
fn combine<S: TraceSink>(
    vpu: &mut Vpu<S>,
    acc: &mut VectorValue,
    coefs: &[f32; 8],
    src: &[VectorValue],
    mask: Mask,
) -> Result<()> {
    acc.reset(mask.gvl());
    for (&coef, x) in coefs.iter().zip(src) {
        if coef != 0.0 {
            vpu.vfmacc_scalar(acc, coef, x, mask)?;
        }
    }
    Ok(())
}

/// Transforms a group of tiles (one per channel) with `L * X * L^T`.
fn transform_group<S: TraceSink>(
    vpu: &mut Vpu<S>,
    lhs: &[[f32; 8]],
    tiles: &[Tile],
    out: &mut [Tile],
    s: &mut GroupScratch,
) -> Result<()> {
    let group = tiles.len();
    let lanes = ELEMENTS * group;
    let mask = Mask::full(vpu.setvl(lanes));
    debug_assert_eq!(mask.gvl(), lanes, "group must fit one vector");
    let rows_out = lhs.len();

    // pack row halves of every tile side by side: buff1 then buff2
    for half in 0..2 {
        for r in 0..TILE {
            let base = (half * TILE + r) * lanes;
            for (g, tile) in tiles.iter().enumerate() {
                let src = &tile[r * TILE + half * ELEMENTS..r * TILE + (half + 1) * ELEMENTS];
                s.rows[base + g * ELEMENTS..base + (g + 1) * ELEMENTS].copy_from_slice(src);
            }
            vpu.trace(
                AccessKind::Store,
                Unit::Vector,
                Buffer::Scratch,
                base,
                lanes,
            );
        }
    }
    for half in 0..2 {
        for r in 0..TILE {
            let base = (half * TILE + r) * lanes;
            vpu.vload_into(&mut s.v[half][r], Buffer::Scratch, &s.rows, base, mask)?;
        }
    }

    // first pass: combine rows
    for half in 0..2 {
        for (r_out, coefs) in lhs.iter().enumerate() {
            combine(vpu, &mut s.t[half][r_out], coefs, &s.v[half], mask)?;
        }
    }

    // transpose in registers; lane (g, e) of w[c] is row (4h + e), column c
    for h in 0..2 {
        if h * ELEMENTS >= rows_out {
            break;
        }
        for c in 0..TILE {
            let (src_half, src_e) = (c / ELEMENTS, c % ELEMENTS);
            s.w[c].reset(lanes);
            let w = s.w[c].as_mut_slice();
            for e in 0..ELEMENTS {
                let r = h * ELEMENTS + e;
                if r >= rows_out {
                    break;
                }
                let t = s.t[src_half][r].as_slice();
                for g in 0..group {
                    w[g * ELEMENTS + e] = t[g * ELEMENTS + src_e];
                }
            }
        }
        // second pass: combine columns
        for (c_out, coefs) in lhs.iter().enumerate() {
            combine(vpu, &mut s.u[c_out], coefs, &s.w, mask)?;
        }
        for (g, tile) in out.iter_mut().enumerate() {
            for e in 0..ELEMENTS {
                let r = h * ELEMENTS + e;
                if r >= rows_out {
                    break;
                }
                for c_out in 0..rows_out {
                    tile[r * TILE + c_out] = s.u[c_out].as_slice()[g * ELEMENTS + e];
                }
            }
        }
    }
    Ok(())
}

/// `G * g * G^T` for every filter/channel kernel. Runs once, offline, so it
/// is not vectorized or traced.
pub fn weight_transform(
    weights: &[f32],
    filters: usize,
    channels: usize,
    kernel: usize,
) -> Result<TransformedWeights> {
    if kernel != KERNEL {
        return Err(Error::UnsupportedAlgorithm(format!(
            "Winograd F(6x6, 3x3) needs a 3x3 kernel, got {kernel}x{kernel}"
        )));
    }
    if weights.len() != filters * channels * KERNEL * KERNEL {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {filters} filters x {channels} channels x 3x3",
            weights.len()
        )));
    }
    let mut out = TransformedWeights {
        filters,
        channels,
        data: vec![0.0; POSITIONS * filters * channels],
    };
    for f in 0..filters {
        for ch in 0..channels {
            let mut g = [0.0f32; POSITIONS];
            let src = &weights[(f * channels + ch) * 9..(f * channels + ch + 1) * 9];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    g[ky * TILE + kx] = src[ky * KERNEL + kx];
                }
            }
            let t = transform_tile(&KERNEL_TRANSFORM, &g);
            for (pos, &v) in t.iter().enumerate() {
                let idx = out.index(pos, ch, f);
                out.data[idx] = v;
            }
        }
    }
    Ok(out)
}

/// Input transform `B^T * d * B` for every 8x8 tile of every channel.
/// Tiles advance by 6 with a 2-pixel overlap; taps outside the image
/// (padding and the ragged right/bottom edge) read as zero.
pub fn input_transform_batch<S: TraceSink>(
    input: &Tensor3,
    pad: usize,
    plan: &WinogradPlan,
    vpu: &mut Vpu<S>,
) -> Result<TransformedTensor> {
    let (channels, h, w) = (input.channels(), input.height(), input.width());
    let grid = TileGrid::new(h, w, pad)?;
    let tiles = grid.tiles();
    let group = plan.group_size(channels).min(channels);
    check_group_fits(vpu, group)?;

    let mut out = TransformedTensor::zeros(channels, tiles);
    vpu.register_buffer(Buffer::Input, channels * h * w);
    vpu.register_buffer(Buffer::WinoInput, out.data.len());
    vpu.register_buffer(Buffer::Scratch, GroupScratch::scratch_len(group));
    let saved = vpu.phase();
    vpu.set_phase(Phase::WinoInput);

    let mut scratch = GroupScratch::new(group);
    let mut src = vec![[0.0f32; POSITIONS]; group];
    let mut dst = vec![[0.0f32; POSITIONS]; group];
    for ty in 0..grid.tiles_h {
        for tx in 0..grid.tiles_w {
            let t = ty * grid.tiles_w + tx;
            let y0 = (ty * OUTPUT_TILE) as isize - pad as isize;
            let x0 = (tx * OUTPUT_TILE) as isize - pad as isize;
            let (xa, xb) = (x0.max(0), (x0 + TILE as isize).min(w as isize));
            for g0 in (0..channels).step_by(group) {
                let gs = group.min(channels - g0);
                for (g, tile) in src[..gs].iter_mut().enumerate() {
                    let ch = g0 + g;
                    for r in 0..TILE {
                        let y = y0 + r as isize;
                        for c in 0..TILE {
                            tile[r * TILE + c] = input.get_padded(ch, y, x0 + c as isize);
                        }
                        if (0..h as isize).contains(&y) && xa < xb {
                            let off = input.index(ch, y as usize, xa as usize);
                            vpu.trace(
                                AccessKind::Load,
                                Unit::Vector,
                                Buffer::Input,
                                off,
                                (xb - xa) as usize,
                            );
                        }
                    }
                }
                transform_group(
                    vpu,
                    &INPUT_TRANSFORM,
                    &src[..gs],
                    &mut dst[..gs],
                    &mut scratch,
                )?;
                for pos in 0..POSITIONS {
                    let base = out.index(pos, t, g0);
                    for (g, tile) in dst[..gs].iter().enumerate() {
                        out.data[base + g] = tile[pos];
                    }
                    vpu.trace(AccessKind::Store, Unit::Vector, Buffer::WinoInput, base, gs);
                }
            }
        }
    }
    vpu.set_phase(saved);
    Ok(out)
}

fn check_group_fits<S: TraceSink>(vpu: &Vpu<S>, group: usize) -> Result<()> {
    if group * ELEMENTS > vpu.max_elements() {
        return Err(Error::InvalidConfig(format!(
            "a group of {group} channels needs {} lanes, the vector unit has {}",
            group * ELEMENTS,
            vpu.max_elements()
        )));
    }
    Ok(())
}

/// Per frequency position, `out[t][n] = sum_c in[t][c] * w[c][n]` with `c`
/// ascending. Vectorized over output channels, unrolled over tiles.
pub fn tuple_multiply<S: TraceSink>(
    tin: &TransformedTensor,
    tw: &TransformedWeights,
    vpu: &mut Vpu<S>,
) -> Result<TransformedTensor> {
    if tin.channels != tw.channels {
        return Err(Error::ShapeMismatch(format!(
            "transformed input has {} channels, weights expect {}",
            tin.channels, tw.channels
        )));
    }
    let (channels, filters, tiles) = (tin.channels, tw.filters, tin.tiles);
    let mut out = TransformedTensor::zeros(filters, tiles);
    vpu.register_buffer(Buffer::WinoInput, tin.data.len());
    vpu.register_buffer(Buffer::WinoWeights, tw.data.len());
    vpu.register_buffer(Buffer::WinoProduct, out.data.len());
    let saved = vpu.phase();
    vpu.set_phase(Phase::WinoTuple);

    let cap = vpu.max_elements();
    let mut acc: Vec<VectorValue> = (0..TUPLE_UNROLL).map(|_| VectorValue::zeros(cap)).collect();
    let mut wv = VectorValue::zeros(cap);
    for pos in 0..POSITIONS {
        let mut t0 = 0;
        while t0 < tiles {
            let nt = TUPLE_UNROLL.min(tiles - t0);
            let mut j = 0;
            while j < filters {
                let gvl = vpu.setvl(filters - j);
                let mask = Mask::full(gvl);
                for reg in &mut acc[..nt] {
                    reg.reset(gvl);
                }
                for c in 0..channels {
                    vpu.vload_into(
                        &mut wv,
                        Buffer::WinoWeights,
                        &tw.data,
                        tw.index(pos, c, j),
                        mask,
                    )?;
                    for (u, reg) in acc[..nt].iter_mut().enumerate() {
                        let x =
                            vpu.sload(Buffer::WinoInput, &tin.data, tin.index(pos, t0 + u, c))?;
                        vpu.vfmacc_scalar(reg, x, &wv, mask)?;
                    }
                }
                for (u, reg) in acc[..nt].iter().enumerate() {
                    let idx = out.index(pos, t0 + u, j);
                    vpu.vstore(Buffer::WinoProduct, &mut out.data, idx, reg, mask)?;
                }
                j += gvl;
            }
            t0 += nt;
        }
    }
    vpu.set_phase(saved);
    Ok(out)
}

/// Output transform `A^T * m * A`: each 8x8 product tile becomes a 6x6
/// output tile; edge tiles write only pixels inside `out`.
pub fn output_transform_batch<S: TraceSink>(
    product: &TransformedTensor,
    plan: &WinogradPlan,
    out: &mut Tensor3,
    vpu: &mut Vpu<S>,
) -> Result<()> {
    let (filters, out_h, out_w) = (out.channels(), out.height(), out.width());
    let (tiles_h, tiles_w) = (out_h.div_ceil(OUTPUT_TILE), out_w.div_ceil(OUTPUT_TILE));
    if product.channels != filters || product.tiles != tiles_h * tiles_w {
        return Err(Error::ShapeMismatch(format!(
            "{} channels x {} tiles cannot fill a {filters}x{out_h}x{out_w} output",
            product.channels, product.tiles
        )));
    }
    let group = plan.group_size(filters).min(filters);
    check_group_fits(vpu, group)?;
    vpu.register_buffer(Buffer::WinoProduct, product.data.len());
    vpu.register_buffer(Buffer::Output, filters * out_h * out_w);
    vpu.register_buffer(Buffer::Scratch, GroupScratch::scratch_len(group));
    let saved = vpu.phase();
    vpu.set_phase(Phase::WinoOutput);

    let mut scratch = GroupScratch::new(group);
    let mut src = vec![[0.0f32; POSITIONS]; group];
    let mut dst = vec![[0.0f32; POSITIONS]; group];
    for ty in 0..tiles_h {
        for tx in 0..tiles_w {
            let t = ty * tiles_w + tx;
            for g0 in (0..filters).step_by(group) {
                let gs = group.min(filters - g0);
                for pos in 0..POSITIONS {
                    let base = product.index(pos, t, g0);
                    vpu.trace(
                        AccessKind::Load,
                        Unit::Vector,
                        Buffer::WinoProduct,
                        base,
                        gs,
                    );
                    for (g, tile) in src[..gs].iter_mut().enumerate() {
                        tile[pos] = product.data[base + g];
                    }
                }
                transform_group(
                    vpu,
                    &OUTPUT_TRANSFORM,
                    &src[..gs],
                    &mut dst[..gs],
                    &mut scratch,
                )?;
                let rows = OUTPUT_TILE.min(out_h - ty * OUTPUT_TILE);
                let cols = OUTPUT_TILE.min(out_w - tx * OUTPUT_TILE);
                for (g, tile) in dst[..gs].iter().enumerate() {
                    let f = g0 + g;
                    for r in 0..rows {
                        let y = ty * OUTPUT_TILE + r;
                        let x = tx * OUTPUT_TILE;
                        let off = out.index(f, y, x);
                        out.as_mut_slice()[off..off + cols]
                            .copy_from_slice(&tile[r * TILE..r * TILE + cols]);
                        vpu.trace(AccessKind::Store, Unit::Vector, Buffer::Output, off, cols);
                    }
                }
            }
        }
    }
    vpu.set_phase(saved);
    Ok(())
}

/// Full stride-1 3x3 convolution (no bias or activation).
///
/// Any other kernel size or stride yields [`Error::UnsupportedAlgorithm`] so
/// callers can fall back to im2col + GEMM.
pub fn conv_winograd<S: TraceSink>(
    input: &Tensor3,
    weights: WinogradWeights<'_>,
    spec: &ConvLayerSpec,
    plan: &WinogradPlan,
    vpu: &mut Vpu<S>,
) -> Result<Tensor3> {
    if spec.k != KERNEL || spec.stride != 1 {
        return Err(Error::UnsupportedAlgorithm(format!(
            "Winograd F(6x6, 3x3) handles 3x3 stride-1 layers, got {}x{} stride {}",
            spec.k, spec.k, spec.stride
        )));
    }
    if (input.channels(), input.height(), input.width()) != (spec.in_c, spec.in_h, spec.in_w) {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{}x{} does not match layer input {}x{}x{}",
            input.channels(),
            input.height(),
            input.width(),
            spec.in_c,
            spec.in_h,
            spec.in_w
        )));
    }
    let owned;
    let tw = match weights {
        WinogradWeights::Raw(w) => {
            owned = weight_transform(w, spec.filters, spec.in_c, spec.k)?;
            &owned
        }
        WinogradWeights::Transformed(tw) => tw,
    };
    if tw.filters != spec.filters || tw.channels != spec.in_c {
        return Err(Error::ShapeMismatch(format!(
            "transformed weights are {}x{}, layer needs {}x{}",
            tw.filters, tw.channels, spec.filters, spec.in_c
        )));
    }
    let grid = TileGrid::new(spec.in_h, spec.in_w, spec.pad)?;
    let tin = input_transform_batch(input, spec.pad, plan, vpu)?;
    let product = tuple_multiply(&tin, tw, vpu)?;
    let mut out = Tensor3::zeros(spec.filters, grid.out_h, grid.out_w);
    output_transform_batch(&product, plan, &mut out, vpu)?;
    Ok(out)
}
