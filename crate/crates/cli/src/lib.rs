//! Subcommands of the `vlaconv` binary, usable as a library.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use vlaconv::convlayer::{select_algorithm, Activation, Algorithm, ConvLayerSpec};
use vlaconv::costsim::{
    simulate_cache_with, sweep, CacheGeometry, CacheStats, PrefetchPolicy, SweepAlgorithm,
    SweepAxes, SweepOptions, SweepRow, SweepWorkload,
};
use vlaconv::gemm::{
    gemm_3loop, gemm_6loop, gemm_naive, tune_block_sizes, BlockConfig, GemmDims, DEFAULT_UNROLL,
};
use vlaconv::model::{
    gemm_dims_for_layer, model_ai_csv, parse_model_spec, ModelSpec, YOLOV3_TABLE,
};
use vlaconv::reference::{direct_conv, max_relative_error};
use vlaconv::tensor::{Matrix, Tensor3};
use vlaconv::vla::{AccessTrace, EventCounter, MachineConfig, NullSink, TraceSink, Vpu};
use vlaconv::winograd::{conv_winograd, WinogradPlan, WinogradWeights};

/// Name of the built-in model fixture.
pub const BUILTIN_MODEL: &str = "yolov3-table3";
pub const THREADS_ENV: &str = "VLACONV_THREADS";

pub const BENCH_CSV_HEADER: &str =
    "variant,M,N,K,vlen_bits,lanes,blockM,blockN,blockK,flops,trace_events,wall_ns";

/// Relative tolerance for GEMM on general floating-point data.
pub const GEMM_FLOAT_TOLERANCE: f32 = 1e-5;
/// Relative tolerance of Winograd against direct convolution.
pub const WINOGRAD_TOLERANCE: f32 = 1e-3;
/// The relative-error floor is this fraction of the largest output
/// magnitude, so near-zero outputs are judged against the layer's scale.
pub const WINOGRAD_EPS_FRACTION: f32 = 1e-2;

/// Machine overrides shared by every subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineArgs {
    pub vlen_bits: u32,
    pub lanes: u32,
    pub l2_bytes: u64,
}

impl Default for MachineArgs {
    fn default() -> Self {
        MachineArgs {
            vlen_bits: 512,
            lanes: 8,
            l2_bytes: 1 << 20,
        }
    }
}

impl MachineArgs {
    pub fn machine(&self) -> Result<MachineConfig> {
        let base = MachineConfig::new(self.vlen_bits, self.lanes)?;
        let l2 = CacheGeometry::new(self.l2_bytes, base.l2.line_bytes, base.l2.associativity)?;
        Ok(base.with_l2(l2))
    }
}

/// Parses `A,B,C` into three positive integers.
pub fn parse_triple(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    ensure!(
        parts.len() == 3,
        "expected three comma-separated values, got `{s}`"
    );
    let mut v = [0usize; 3];
    for (dst, p) in v.iter_mut().zip(&parts) {
        *dst = p
            .parse()
            .with_context(|| format!("`{p}` is not a positive integer"))?;
        ensure!(*dst > 0, "values in `{s}` must be positive");
    }
    Ok((v[0], v[1], v[2]))
}

/// Sizes the global worker pool from `VLACONV_THREADS` (unset: rayon's
/// default). Returns the cap that was applied.
pub fn configure_threads(value: Option<&str>) -> Result<Option<usize>> {
    let Some(v) = value else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV}=`{v}` is not a thread count"))?;
    ensure!(n > 0, "{THREADS_ENV} must be at least 1");
    // a pool may already exist (tests, repeated calls); the first one wins
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(Some(n))
}

fn int_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-8i32..=8) as f32)
}

fn float_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0f32..1.0))
}

fn case_rng(seed: u64, suite: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite);
    rng.set_word_pos(case as u128 * 1024);
    ChaCha8Rng::seed_from_u64(rng.gen())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub machine: MachineConfig,
    pub unroll: usize,
    /// Upper bound on M, N and K of random GEMM problems.
    pub max_dim: usize,
    pub gemm_int_cases: usize,
    pub gemm_float_cases: usize,
    pub winograd_cases: usize,
    /// Negative control: negates alpha inside the 6-loop run so its suite
    /// must fail.
    pub inject_fault: bool,
}

impl VerifyOptions {
    pub fn new(seed: u64, machine: MachineConfig) -> Self {
        VerifyOptions {
            seed,
            machine,
            unroll: DEFAULT_UNROLL,
            max_dim: 64,
            gemm_int_cases: 200,
            gemm_float_cases: 50,
            winograd_cases: 100,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest error metric seen (0 for bit-exact suites that passed).
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("seed {}\n", self.seed);
        for s in &self.suites {
            let _ = write!(
                out,
                "{} {}: {}/{} cases, worst {:.3e}",
                if s.passed() { "PASS" } else { "FAIL" },
                s.name,
                s.cases - s.failures,
                s.cases,
                s.worst
            );
            if let Some(f) = &s.first_failure {
                let _ = write!(out, " (first failure: {f})");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{}",
            if self.passed() {
                "all suites passed"
            } else {
                "FAILED"
            }
        );
        out
    }
}

/// One random case's outcome: error metric and an optional failure note.
type CaseOutcome = (f64, Option<String>);

fn run_suite(
    name: &'static str,
    cases: usize,
    f: impl Fn(usize) -> Result<CaseOutcome> + Sync,
) -> Result<SuiteResult> {
    let outcomes: Vec<CaseOutcome> = (0..cases).into_par_iter().map(&f).collect::<Result<_>>()?;
    let failures = outcomes.iter().filter(|o| o.1.is_some()).count();
    Ok(SuiteResult {
        name,
        cases,
        failures,
        worst: outcomes.iter().map(|o| o.0).fold(0.0, f64::max),
        first_failure: outcomes.into_iter().find_map(|o| o.1),
    })
}

fn random_dims(rng: &mut ChaCha8Rng, max_dim: usize) -> GemmDims {
    GemmDims::new(
        rng.gen_range(1..=max_dim),
        rng.gen_range(1..=max_dim),
        rng.gen_range(1..=max_dim),
    )
}

fn random_blocks(rng: &mut ChaCha8Rng, unroll: usize, max_dim: usize) -> BlockConfig {
    let unroll = rng.gen_range(1..=unroll);
    BlockConfig {
        block_m: unroll * rng.gen_range(1..=4),
        block_n: rng.gen_range(1..=max_dim),
        block_k: rng.gen_range(1..=max_dim),
        unroll,
    }
}

fn bits_differ(a: &Matrix, b: &Matrix) -> Option<usize> {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .position(|(x, y)| x.to_bits() != y.to_bits())
}

pub const SUITE_GEMM3_EXACT: &str = "gemm-3loop bit-exact vs naive";
pub const SUITE_GEMM6_EXACT: &str = "gemm-6loop bit-exact vs naive";
pub const SUITE_GEMM_FLOAT: &str = "gemm 3/6-loop float vs naive";
pub const SUITE_WINOGRAD: &str = "winograd vs direct";
pub const SUITE_WINOGRAD_GROUPING: &str = "winograd grouping bit-exact across vlen";

/// Runs the oracle-equivalence suites. Deterministic for a given seed.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let cfg = opts.machine;
    let max_dim = opts.max_dim.max(1);
    let unroll = opts.unroll;
    let seed = opts.seed;

    let gemm3 = run_suite(SUITE_GEMM3_EXACT, opts.gemm_int_cases, |i| {
        let mut rng = case_rng(seed, 1, i);
        let dims = random_dims(&mut rng, max_dim);
        let (a, b) = (
            int_matrix(&mut rng, dims.m, dims.k),
            int_matrix(&mut rng, dims.k, dims.n),
        );
        let c0 = int_matrix(&mut rng, dims.m, dims.n);
        let mut expect = c0.clone();
        gemm_naive(&a, &b, &mut expect, &dims)?;
        let mut c = c0;
        gemm_3loop(&a, &b, &mut c, &dims, &mut Vpu::new(cfg, NullSink), unroll)?;
        Ok((
            0.0,
            bits_differ(&c, &expect)
                .map(|p| format!("{}x{}x{} element {p}", dims.m, dims.n, dims.k)),
        ))
    })?;

    let gemm6 = run_suite(SUITE_GEMM6_EXACT, opts.gemm_int_cases, |i| {
        let mut rng = case_rng(seed, 2, i);
        let dims = random_dims(&mut rng, max_dim);
        let blocks = random_blocks(&mut rng, unroll, max_dim);
        let (a, b) = (
            int_matrix(&mut rng, dims.m, dims.k),
            int_matrix(&mut rng, dims.k, dims.n),
        );
        let c0 = int_matrix(&mut rng, dims.m, dims.n);
        let mut expect = c0.clone();
        gemm_naive(&a, &b, &mut expect, &dims)?;
        let mut c = c0;
        let run = if opts.inject_fault {
            dims.with_alpha(-dims.alpha)
        } else {
            dims
        };
        gemm_6loop(&a, &b, &mut c, &run, &mut Vpu::new(cfg, NullSink), &blocks)?;
        Ok((
            0.0,
            bits_differ(&c, &expect)
                .map(|p| format!("{}x{}x{} {blocks:?} element {p}", dims.m, dims.n, dims.k)),
        ))
    })?;

    let float = run_suite(SUITE_GEMM_FLOAT, opts.gemm_float_cases, |i| {
        let mut rng = case_rng(seed, 3, i);
        let dims = random_dims(&mut rng, max_dim);
        let blocks = random_blocks(&mut rng, unroll, max_dim);
        let (a, b) = (
            float_matrix(&mut rng, dims.m, dims.k),
            float_matrix(&mut rng, dims.k, dims.n),
        );
        let mut expect = Matrix::zeros(dims.m, dims.n);
        gemm_naive(&a, &b, &mut expect, &dims)?;
        let mut c3 = Matrix::zeros(dims.m, dims.n);
        gemm_3loop(&a, &b, &mut c3, &dims, &mut Vpu::new(cfg, NullSink), unroll)?;
        let mut c6 = Matrix::zeros(dims.m, dims.n);
        gemm_6loop(
            &a,
            &b,
            &mut c6,
            &dims,
            &mut Vpu::new(cfg, NullSink),
            &blocks,
        )?;
        let err = max_relative_error(c3.as_slice(), expect.as_slice(), f32::MIN_POSITIVE).max(
            max_relative_error(c6.as_slice(), expect.as_slice(), f32::MIN_POSITIVE),
        );
        let fail = (err > GEMM_FLOAT_TOLERANCE)
            .then(|| format!("{}x{}x{} relative error {err:e}", dims.m, dims.n, dims.k));
        Ok((f64::from(err), fail))
    })?;

    let wino = run_suite(SUITE_WINOGRAD, opts.winograd_cases, |i| {
        let mut rng = case_rng(seed, 4, i);
        let (spec, input, w) = random_winograd_layer(&mut rng);
        let plan = WinogradPlan::for_vector_elements(cfg.max_elements());
        let got = conv_winograd(
            &input,
            WinogradWeights::Raw(&w),
            &spec,
            &plan,
            &mut Vpu::new(cfg, NullSink),
        )?;
        let expect = direct_conv(&input, &w, spec.filters, 3, 1, spec.pad);
        let err = winograd_error(got.as_slice(), expect.as_slice());
        let fail = (err > WINOGRAD_TOLERANCE).then(|| format!("{spec:?} relative error {err:e}"));
        Ok((f64::from(err), fail))
    })?;

    let grouping = run_suite(
        SUITE_WINOGRAD_GROUPING,
        opts.winograd_cases.div_ceil(4),
        |i| {
            let mut rng = case_rng(seed, 5, i);
            let (spec, input, w) = random_winograd_layer(&mut rng);
            let mut outputs = Vec::new();
            for bits in [512u32, 1024, 2048] {
                let mcfg = MachineConfig {
                    mvl_bits: bits,
                    ..cfg
                };
                let plan = WinogradPlan::for_vector_bits(bits);
                outputs.push(conv_winograd(
                    &input,
                    WinogradWeights::Raw(&w),
                    &spec,
                    &plan,
                    &mut Vpu::new(mcfg, NullSink),
                )?);
            }
            let same = outputs.windows(2).all(|p| {
                p[0].as_slice()
                    .iter()
                    .zip(p[1].as_slice())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            });
            Ok((0.0, (!same).then(|| format!("{spec:?}"))))
        },
    )?;

    Ok(VerifyReport {
        seed,
        suites: vec![gemm3, gemm6, float, wino, grouping],
    })
}

/// `max |w - d| / (|d| + eps)` with `eps` a fixed fraction of `max |d|`.
pub fn winograd_error(actual: &[f32], expected: &[f32]) -> f32 {
    let scale = expected.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    max_relative_error(
        actual,
        expected,
        (WINOGRAD_EPS_FRACTION * scale).max(f32::MIN_POSITIVE),
    )
}

/// A 3x3 stride-1 layer with `c, n <= 32` and `h, w <= 40`.
pub fn random_winograd_layer(rng: &mut ChaCha8Rng) -> (ConvLayerSpec, Tensor3, Vec<f32>) {
    let pad = rng.gen_range(0..=1);
    let min_hw = 3 - 2 * pad;
    let spec = ConvLayerSpec {
        in_c: rng.gen_range(1..=32),
        in_h: rng.gen_range(min_hw..=40),
        in_w: rng.gen_range(min_hw..=40),
        filters: rng.gen_range(1..=32),
        k: 3,
        stride: 1,
        pad,
        batchnorm: false,
        activation: Activation::Linear,
    };
    let input = Tensor3::from_fn(spec.in_c, spec.in_h, spec.in_w, |_, _, _| {
        rng.gen_range(-1.0f32..1.0)
    });
    let w = (0..spec.weight_len())
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    (spec, input, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchVariant {
    Naive,
    ThreeLoop,
    SixLoop,
}

impl BenchVariant {
    pub fn name(self) -> &'static str {
        match self {
            BenchVariant::Naive => "naive",
            BenchVariant::ThreeLoop => "3loop",
            BenchVariant::SixLoop => "6loop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => BenchVariant::Naive,
            "3loop" => BenchVariant::ThreeLoop,
            "6loop" => BenchVariant::SixLoop,
            other => bail!("unknown variant `{other}` (expected naive, 3loop or 6loop)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub dims: GemmDims,
    pub variants: Vec<BenchVariant>,
    pub repeats: usize,
    pub machine: MachineConfig,
    /// 6-loop blocks; `None` tunes them for the machine.
    pub blocks: Option<(usize, usize, usize)>,
    pub unroll: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchRow {
    pub variant: BenchVariant,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub vlen_bits: u32,
    pub lanes: u32,
    /// Zero for variants without cache blocking.
    pub block_m: usize,
    pub block_n: usize,
    pub block_k: usize,
    pub flops: u64,
    pub trace_events: u64,
    pub wall_ns: u64,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.variant.name(),
            self.m,
            self.n,
            self.k,
            self.vlen_bits,
            self.lanes,
            self.block_m,
            self.block_n,
            self.block_k,
            self.flops,
            self.trace_events,
            self.wall_ns
        )
    }
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

fn resolve_blocks(opts: &BenchOptions) -> Result<BlockConfig> {
    match opts.blocks {
        Some((m, n, k)) => Ok(BlockConfig::new(m, n, k, opts.unroll)?),
        None => Ok(tune_block_sizes(
            &opts.dims,
            &opts.machine,
            opts.machine.max_elements(),
            opts.unroll,
        )
        .blocks),
    }
}

fn run_variant<S: TraceSink>(
    variant: BenchVariant,
    a: &Matrix,
    b: &Matrix,
    dims: &GemmDims,
    vpu: &mut Vpu<S>,
    unroll: usize,
    blocks: &BlockConfig,
) -> Result<Matrix> {
    let mut c = Matrix::zeros(dims.m, dims.n);
    match variant {
        BenchVariant::Naive => gemm_naive(a, b, &mut c, dims)?,
        BenchVariant::ThreeLoop => gemm_3loop(a, b, &mut c, dims, vpu, unroll)?,
        BenchVariant::SixLoop => gemm_6loop(a, b, &mut c, dims, vpu, blocks)?,
    }
    Ok(c)
}

/// Times each variant `repeats` times on the same seeded operands. Timed runs
/// use a sink that discards events; the event count comes from one extra,
/// untimed, counting run per variant. The naive kernel is not instrumented.
pub fn cmd_bench(opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    ensure!(opts.repeats > 0, "repeats must be positive");
    let dims = opts.dims;
    ensure!(
        dims.m > 0 && dims.n > 0 && dims.k > 0,
        "GEMM dimensions must be positive"
    );
    let blocks = resolve_blocks(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let a = float_matrix(&mut rng, dims.m, dims.k);
    let b = float_matrix(&mut rng, dims.k, dims.n);
    let cfg = opts.machine;

    let mut rows = Vec::new();
    for &variant in &opts.variants {
        let mut counter = Vpu::new(cfg, EventCounter::default());
        run_variant(variant, &a, &b, &dims, &mut counter, opts.unroll, &blocks)?;
        let trace_events = counter.sink().events;
        let (bm, bn, bk) = match variant {
            BenchVariant::SixLoop => (blocks.block_m, blocks.block_n, blocks.block_k),
            _ => (0, 0, 0),
        };
        for _ in 0..opts.repeats {
            let mut vpu = Vpu::new(cfg, NullSink);
            let start = Instant::now();
            let c = run_variant(variant, &a, &b, &dims, &mut vpu, opts.unroll, &blocks)?;
            let wall_ns = (start.elapsed().as_nanos() as u64).max(1);
            std::hint::black_box(c);
            rows.push(BenchRow {
                variant,
                m: dims.m,
                n: dims.n,
                k: dims.k,
                vlen_bits: cfg.mvl_bits,
                lanes: cfg.lanes,
                block_m: bm,
                block_n: bn,
                block_k: bk,
                flops: dims.flops(),
                trace_events,
                wall_ns,
            });
        }
    }
    Ok(rows)
}

/// A model file path or [`BUILTIN_MODEL`].
pub fn load_model(source: &str) -> Result<ModelSpec> {
    let text =
        std::fs::read_to_string(source).with_context(|| format!("reading model `{source}`"))?;
    parse_model_spec(&text).with_context(|| format!("parsing model `{source}`"))
}

/// Arithmetic-intensity CSV for the built-in table or a model file.
pub fn cmd_model_ai(source: &str) -> Result<String> {
    if source == BUILTIN_MODEL {
        let dims: Vec<(String, GemmDims)> = YOLOV3_TABLE
            .iter()
            .map(|t| (t.label.to_string(), t.dims()))
            .collect();
        return Ok(model_ai_csv(dims.iter().map(|(l, d)| (l.clone(), d))));
    }
    let model = load_model(source)?;
    let dims: Vec<GemmDims> = model
        .layers
        .iter()
        .map(gemm_dims_for_layer)
        .collect::<Result<_, _>>()?;
    Ok(model_ai_csv(
        dims.iter()
            .enumerate()
            .map(|(i, d)| (format!("L{}", i + 1), d)),
    ))
}

/// What a sweep or trace runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Gemm(GemmDims),
    /// Built-in table or model file, optionally restricted to some layers
    /// (labels `L1`, `L2`, ... for model files).
    Model {
        source: String,
        layers: Vec<String>,
    },
}

fn select<T: Clone>(items: Vec<(String, T)>, wanted: &[String]) -> Result<Vec<T>> {
    if wanted.is_empty() {
        return Ok(items.into_iter().map(|(_, t)| t).collect());
    }
    wanted
        .iter()
        .map(|w| {
            items
                .iter()
                .find(|(l, _)| l == w)
                .map(|(_, t)| t.clone())
                .with_context(|| format!("no layer labelled `{w}`"))
        })
        .collect()
}

pub fn workload(problem: &Problem, algorithm: SweepAlgorithm) -> Result<SweepWorkload> {
    match problem {
        Problem::Gemm(d) => Ok(SweepWorkload::Gemm(vec![*d])),
        Problem::Model { source, layers } if source == BUILTIN_MODEL => {
            ensure!(
                algorithm != SweepAlgorithm::Winograd,
                "the built-in table holds GEMM shapes only; Winograd needs a model file"
            );
            let items = YOLOV3_TABLE
                .iter()
                .map(|t| (t.label.to_string(), t.dims()))
                .collect();
            Ok(SweepWorkload::Gemm(select(items, layers)?))
        }
        Problem::Model { source, layers } => {
            let model = load_model(source)?;
            let items = model
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("L{}", i + 1), *l))
                .collect();
            Ok(SweepWorkload::Layers(select(items, layers)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArgs {
    pub problem: Problem,
    pub algorithm: SweepAlgorithm,
    pub vlen_bits: Vec<u32>,
    pub lanes: Vec<u32>,
    pub l2_bytes: Vec<u64>,
    pub blocks: Option<(usize, usize, usize)>,
    pub unroll: usize,
    pub seed: u64,
    pub column_cap: Option<usize>,
    pub prefetch: PrefetchPolicy,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    ensure!(
        !args.vlen_bits.is_empty() && !args.lanes.is_empty() && !args.l2_bytes.is_empty(),
        "every sweep axis needs at least one value"
    );
    let base = MachineArgs {
        vlen_bits: args.vlen_bits[0],
        lanes: args.lanes[0],
        l2_bytes: args.l2_bytes[0],
    }
    .machine()?;
    let blocks = args
        .blocks
        .map(|(m, n, k)| BlockConfig::new(m, n, k, args.unroll))
        .transpose()?;
    let opts = SweepOptions {
        base,
        unroll: args.unroll,
        blocks,
        prefetch: args.prefetch,
        seed: args.seed,
        column_cap: args.column_cap,
    };
    let axes = SweepAxes {
        vlen_bits: args.vlen_bits.clone(),
        l2_bytes: args.l2_bytes.clone(),
        lanes: args.lanes.clone(),
    };
    Ok(sweep(
        &workload(&args.problem, args.algorithm)?,
        args.algorithm,
        &axes,
        &opts,
    )?)
}

/// Records the full access trace of one GEMM (3-loop or 6-loop) or one
/// Winograd layer.
pub fn cmd_trace(
    problem: &Problem,
    algorithm: SweepAlgorithm,
    machine: &MachineConfig,
    blocks: Option<(usize, usize, usize)>,
    unroll: usize,
    seed: u64,
) -> Result<AccessTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vpu = Vpu::new(*machine, AccessTrace::new());
    let gemms = match workload(problem, algorithm)? {
        SweepWorkload::Layers(layers) if algorithm == SweepAlgorithm::Winograd => {
            let plan = WinogradPlan::for_vector_elements(machine.max_elements());
            let eligible: Vec<_> = layers
                .into_iter()
                .filter(|s| select_algorithm(s) == Algorithm::Winograd)
                .collect();
            ensure!(
                !eligible.is_empty(),
                "no layer in the model is a 3x3 stride-1 convolution"
            );
            for spec in eligible {
                let input = Tensor3::from_fn(spec.in_c, spec.in_h, spec.in_w, |_, _, _| {
                    rng.gen_range(-1.0f32..1.0)
                });
                let w: Vec<f32> = (0..spec.weight_len())
                    .map(|_| rng.gen_range(-1.0f32..1.0))
                    .collect();
                conv_winograd(&input, WinogradWeights::Raw(&w), &spec, &plan, &mut vpu)?;
            }
            return Ok(vpu.into_sink());
        }
        SweepWorkload::Layers(layers) => layers
            .iter()
            .map(gemm_dims_for_layer)
            .collect::<Result<Vec<_>, _>>()?,
        SweepWorkload::Gemm(list) => list,
    };
    for dims in gemms {
        let a = float_matrix(&mut rng, dims.m, dims.k);
        let b = float_matrix(&mut rng, dims.k, dims.n);
        let blocks = match blocks {
            Some((m, n, k)) => BlockConfig::new(m, n, k, unroll)?,
            None => tune_block_sizes(&dims, machine, machine.max_elements(), unroll).blocks,
        };
        let variant = match algorithm {
            SweepAlgorithm::Gemm3Loop => BenchVariant::ThreeLoop,
            _ => BenchVariant::SixLoop,
        };
        run_variant(variant, &a, &b, &dims, &mut vpu, unroll, &blocks)?;
    }
    Ok(vpu.into_sink())
}

pub const REPLAY_CSV_HEADER: &str = "level,accesses,hits,misses,miss_rate";

/// Replays a recorded trace through the machine's cache hierarchy.
pub fn cmd_replay(
    trace: &AccessTrace,
    machine: &MachineConfig,
    prefetch: PrefetchPolicy,
) -> Result<CacheStats> {
    Ok(simulate_cache_with(
        trace,
        machine.l1,
        machine.l2,
        machine.vpu_attach,
        prefetch,
    )?)
}

pub fn replay_csv(stats: &CacheStats) -> String {
    let mut out = format!("{REPLAY_CSV_HEADER}\n");
    for (name, l) in [("L1", &stats.l1), ("L2", &stats.l2)] {
        let _ = writeln!(
            out,
            "{name},{},{},{},{:.6}",
            l.accesses,
            l.hits,
            l.misses,
            l.miss_rate()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples() {
        assert_eq!(parse_triple("16,512,128").unwrap(), (16, 512, 128));
        assert_eq!(parse_triple(" 1, 2 ,3").unwrap(), (1, 2, 3));
        assert!(parse_triple("1,2").is_err());
        assert!(parse_triple("1,0,2").is_err());
        assert!(parse_triple("a,b,c").is_err());
    }

    #[test]
    fn machine_args_validate() {
        assert!(MachineArgs::default().machine().is_ok());
        let bad = MachineArgs {
            vlen_bits: 100,
            ..MachineArgs::default()
        };
        assert!(bad.machine().is_err());
        let bad = MachineArgs {
            l2_bytes: 1000,
            ..MachineArgs::default()
        };
        assert!(bad.machine().is_err());
    }

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(configure_threads(None).unwrap(), None);
        assert!(configure_threads(Some("zero")).is_err());
        assert!(configure_threads(Some("0")).is_err());
        assert_eq!(configure_threads(Some("2")).unwrap(), Some(2));
    }

    #[test]
    fn variants_round_trip() {
        for v in [
            BenchVariant::Naive,
            BenchVariant::ThreeLoop,
            BenchVariant::SixLoop,
        ] {
            assert_eq!(BenchVariant::parse(v.name()).unwrap(), v);
        }
        assert!(BenchVariant::parse("fast").is_err());
    }

    #[test]
    fn layer_selection() {
        let items = vec![("L1".to_string(), 1), ("L2".to_string(), 2)];
        assert_eq!(select(items.clone(), &[]).unwrap(), vec![1, 2]);
        assert_eq!(select(items.clone(), &["L2".to_string()]).unwrap(), vec![2]);
        assert!(select(items, &["L9".to_string()]).is_err());
    }

    #[test]
    fn small_verify_passes_and_fault_fails() {
        let mut opts = VerifyOptions::new(3, MachineConfig::new(512, 8).unwrap());
        opts.gemm_int_cases = 10;
        opts.gemm_float_cases = 5;
        opts.winograd_cases = 4;
        opts.max_dim = 24;
        let report = cmd_verify(&opts).unwrap();
        assert!(report.passed(), "{}", report.render());
        opts.inject_fault = true;
        let report = cmd_verify(&opts).unwrap();
        assert!(!report.passed());
        assert!(!report.suite(SUITE_GEMM6_EXACT).unwrap().passed());
    }
}
