//! Co-design sweeps over vector length, L2 size and lane count.
//!
//! Each `(vlen, L2 size)` pair runs the kernel once with a [`ReplaySink`], so
//! traces stream through the cache model without being stored. Lanes do not
//! change the access stream, only the compute estimate, so every lane count
//! reuses the same replay.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convlayer::{select_algorithm, Algorithm, ConvLayerSpec};
use crate::error::{Error, Result};
use crate::gemm::{
    gemm_3loop, gemm_6loop, tune_block_sizes, BlockConfig, GemmDims, DEFAULT_UNROLL,
};
use crate::model::gemm_dims_for_layer;
use crate::tensor::{Matrix, Tensor3};
use crate::vla::{ComputeProfile, MachineConfig, Vpu};
use crate::winograd::{conv_winograd, weight_transform, WinogradPlan, WinogradWeights};

use super::cache::{CacheGeometry, CacheHierarchy, CacheStats, PrefetchPolicy};
use super::cycles::{estimate_cycles, CycleEstimate, ReplaySink};

pub const SWEEP_CSV_HEADER: &str =
    "algorithm,vlen_bits,lanes,l2_bytes,l2_miss_rate,compute_cycles,memory_cycles,total_cycles";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAlgorithm {
    Gemm3Loop,
    Gemm6Loop,
    Winograd,
}

impl SweepAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            SweepAlgorithm::Gemm3Loop => "gemm-3loop",
            SweepAlgorithm::Gemm6Loop => "gemm-6loop",
            SweepAlgorithm::Winograd => "winograd",
        }
    }
}

impl fmt::Display for SweepAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gemm-3loop" | "3loop" => Ok(SweepAlgorithm::Gemm3Loop),
            "gemm-6loop" | "6loop" => Ok(SweepAlgorithm::Gemm6Loop),
            "winograd" => Ok(SweepAlgorithm::Winograd),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected gemm-3loop, gemm-6loop or winograd)"
            ))),
        }
    }
}

/// What a sweep runs: raw GEMM problems, or convolution layers (lowered to
/// GEMM for the GEMM algorithms).
#[derive(Debug, Clone, PartialEq)]
pub enum SweepWorkload {
    Gemm(Vec<GemmDims>),
    Layers(Vec<ConvLayerSpec>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepAxes {
    pub vlen_bits: Vec<u32>,
    pub l2_bytes: Vec<u64>,
    pub lanes: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Template for everything the axes do not set.
    pub base: MachineConfig,
    pub unroll: usize,
    /// 6-loop blocks; `None` tunes them against the base machine's cache.
    pub blocks: Option<BlockConfig>,
    pub prefetch: PrefetchPolicy,
    pub seed: u64,
    /// Caps output columns (GEMM `N`, or output pixels of a layer) to bound
    /// trace length.
    pub column_cap: Option<usize>,
}

impl SweepOptions {
    pub fn new(base: MachineConfig) -> Self {
        SweepOptions {
            base,
            unroll: DEFAULT_UNROLL,
            blocks: None,
            prefetch: PrefetchPolicy::Fill,
            seed: 0,
            column_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub algorithm: SweepAlgorithm,
    pub vlen_bits: u32,
    pub lanes: u32,
    pub l2_bytes: u64,
    pub stats: CacheStats,
    pub cycles: CycleEstimate,
    pub events: u64,
}

impl SweepRow {
    pub fn l2_miss_rate(&self) -> f64 {
        self.stats.l2.miss_rate()
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{},{}",
            self.algorithm,
            self.vlen_bits,
            self.lanes,
            self.l2_bytes,
            self.l2_miss_rate(),
            self.cycles.compute_cycles,
            self.cycles.memory_cycles,
            self.cycles.total_cycles
        )
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Runs every configuration and returns rows ordered by vlen, then lanes,
/// then L2 size. Configurations run in parallel; the result is deterministic.
pub fn sweep(
    workload: &SweepWorkload,
    algorithm: SweepAlgorithm,
    axes: &SweepAxes,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if axes.vlen_bits.is_empty() || axes.l2_bytes.is_empty() || axes.lanes.is_empty() {
        return Err(Error::InvalidConfig("sweep axes must be non-empty".into()));
    }
    let problems = Problems::build(workload, algorithm, opts)?;
    let mut jobs = Vec::new();
    for &vlen in &axes.vlen_bits {
        for &l2 in &axes.l2_bytes {
            let mut cfg = opts.base;
            cfg.mvl_bits = vlen;
            cfg.l2 = CacheGeometry::new(l2, opts.base.l2.line_bytes, opts.base.l2.associativity)?;
            cfg.validate()?;
            for &lanes in &axes.lanes {
                let mut c = cfg;
                c.lanes = lanes;
                c.validate()?;
            }
            jobs.push(cfg);
        }
    }

    let replays: Vec<(CacheStats, ComputeProfile, u64)> = jobs
        .par_iter()
        .map(|cfg| replay_job(&problems, algorithm, cfg, opts))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (vi, &vlen) in axes.vlen_bits.iter().enumerate() {
        for &lanes in &axes.lanes {
            for (li, &l2) in axes.l2_bytes.iter().enumerate() {
                let mut cfg = jobs[vi * axes.l2_bytes.len() + li];
                cfg.lanes = lanes;
                let (stats, profile, events) = &replays[vi * axes.l2_bytes.len() + li];
                rows.push(SweepRow {
                    algorithm,
                    vlen_bits: vlen,
                    lanes,
                    l2_bytes: l2,
                    stats: *stats,
                    cycles: estimate_cycles(profile, &cfg, stats),
                    events: *events,
                });
            }
        }
    }
    Ok(rows)
}

/// Operands generated once and shared by every configuration.
enum Problems {
    Gemm(Vec<(GemmDims, Matrix, Matrix)>),
    Conv(Vec<(ConvLayerSpec, Tensor3, Vec<f32>)>),
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

impl Problems {
    fn build(
        workload: &SweepWorkload,
        algorithm: SweepAlgorithm,
        opts: &SweepOptions,
    ) -> Result<Self> {
        let cap = opts.column_cap.unwrap_or(usize::MAX).max(1);
        if algorithm == SweepAlgorithm::Winograd {
            let SweepWorkload::Layers(layers) = workload else {
                return Err(Error::UnsupportedAlgorithm(
                    "Winograd sweeps need convolution layers, not GEMM problems".into(),
                ));
            };
            // Layers Winograd cannot run are left out of the sweep.
            let mut out = Vec::new();
            for (i, spec) in layers.iter().enumerate() {
                if select_algorithm(spec) != Algorithm::Winograd {
                    continue;
                }
                let spec = cap_layer_rows(spec, cap)?;
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
                let input = Tensor3::from_vec(
                    spec.in_c,
                    spec.in_h,
                    spec.in_w,
                    random_vec(&mut rng, spec.in_c * spec.in_h * spec.in_w),
                )?;
                let w = random_vec(&mut rng, spec.weight_len());
                out.push((spec, input, w));
            }
            if out.is_empty() {
                return Err(Error::UnsupportedAlgorithm(
                    "no layer in the workload is a 3x3 stride-1 convolution".into(),
                ));
            }
            return Ok(Problems::Conv(out));
        }
        let dims: Vec<GemmDims> = match workload {
            SweepWorkload::Gemm(d) => d.clone(),
            SweepWorkload::Layers(layers) => layers
                .iter()
                .map(gemm_dims_for_layer)
                .collect::<Result<_>>()?,
        };
        let mut out = Vec::new();
        for (i, d) in dims.iter().enumerate() {
            let d = GemmDims {
                n: d.n.min(cap),
                ..*d
            };
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let a = Matrix::from_vec(d.m, d.k, random_vec(&mut rng, d.m * d.k))?;
            let b = Matrix::from_vec(d.k, d.n, random_vec(&mut rng, d.k * d.n))?;
            out.push((d, a, b));
        }
        Ok(Problems::Gemm(out))
    }
}

/// Shrinks the input height so the layer produces at most `cap` output pixels
/// (but at least one row).
fn cap_layer_rows(spec: &ConvLayerSpec, cap: usize) -> Result<ConvLayerSpec> {
    let (oh, ow) = spec.output_dims()?;
    if oh * ow <= cap {
        return Ok(*spec);
    }
    let rows = (cap / ow).max(1);
    let needed = (rows - 1) * spec.stride + spec.k;
    let in_h = needed.saturating_sub(2 * spec.pad).max(1);
    let capped = ConvLayerSpec { in_h, ..*spec };
    capped.validate()?;
    Ok(capped)
}

fn replay_job(
    problems: &Problems,
    algorithm: SweepAlgorithm,
    cfg: &MachineConfig,
    opts: &SweepOptions,
) -> Result<(CacheStats, ComputeProfile, u64)> {
    let hierarchy = CacheHierarchy::new(cfg.l1, cfg.l2, cfg.vpu_attach, opts.prefetch)?;
    let mut vpu = Vpu::new(*cfg, ReplaySink::new(vec![hierarchy]));
    match problems {
        Problems::Gemm(list) => {
            for (dims, a, b) in list {
                let mut c = Matrix::zeros(dims.m, dims.n);
                match algorithm {
                    SweepAlgorithm::Gemm3Loop => {
                        gemm_3loop(a, b, &mut c, dims, &mut vpu, opts.unroll)?
                    }
                    _ => {
                        let blocks = match opts.blocks {
                            Some(b) => b,
                            None => {
                                let mut tune_cfg = opts.base;
                                tune_cfg.mvl_bits = cfg.mvl_bits;
                                let gvl = vpu.max_elements();
                                tune_block_sizes(dims, &tune_cfg, gvl, opts.unroll).blocks
                            }
                        };
                        gemm_6loop(a, b, &mut c, dims, &mut vpu, &blocks)?
                    }
                }
            }
        }
        Problems::Conv(list) => {
            let plan = WinogradPlan::for_vector_elements(vpu.max_elements());
            for (spec, input, w) in list {
                let tw = weight_transform(w, spec.filters, spec.in_c, spec.k)?;
                conv_winograd(
                    input,
                    WinogradWeights::Transformed(&tw),
                    spec,
                    &plan,
                    &mut vpu,
                )?;
            }
        }
    }
    let (stats, profile, events) = vpu.into_sink().finish()?;
    Ok((stats[0], profile, events))
}
