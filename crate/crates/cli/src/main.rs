use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use vlaconv::costsim::{write_sweep_csv, PrefetchPolicy, SweepAlgorithm};
use vlaconv::gemm::{GemmDims, DEFAULT_UNROLL};
use vlaconv::vla::AccessTrace;
use vlaconv_cli::*;

#[derive(Parser)]
#[command(
    name = "vlaconv",
    version,
    about = "Vector-length-agnostic convolution kernels and cost model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Maximum vector length in bits (comma-separated list for sweep).
    #[arg(long, default_value = "512", value_delimiter = ',')]
    vlen_bits: Vec<u32>,
    /// Vector lanes (comma-separated list for sweep).
    #[arg(long, default_value = "8", value_delimiter = ',')]
    lanes: Vec<u32>,
    /// L2 capacity in bytes (comma-separated list for sweep).
    #[arg(long, default_value = "1048576", value_delimiter = ',')]
    l2_bytes: Vec<u64>,
    /// 6-loop cache blocks as M,N,K; tuned for the L2 when omitted.
    #[arg(long, value_parser = parse_block)]
    block: Option<(usize, usize, usize)>,
    /// Rows of A handled per micro-kernel call.
    #[arg(long, default_value_t = DEFAULT_UNROLL)]
    unroll: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn machine(&self) -> Result<vlaconv::vla::MachineConfig> {
        MachineArgs {
            vlen_bits: self.vlen_bits[0],
            lanes: self.lanes[0],
            l2_bytes: self.l2_bytes[0],
        }
        .machine()
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn parse_block(s: &str) -> Result<(usize, usize, usize), String> {
    parse_triple(s).map_err(|e| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<SweepAlgorithm, String> {
    s.parse().map_err(|e: vlaconv::Error| e.to_string())
}

fn parse_prefetch(s: &str) -> Result<PrefetchPolicy, String> {
    match s {
        "fill" => Ok(PrefetchPolicy::Fill),
        "ignore" => Ok(PrefetchPolicy::Ignore),
        other => Err(format!(
            "unknown prefetch policy `{other}` (expected fill or ignore)"
        )),
    }
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// A single GEMM problem M,N,K.
    #[arg(long, value_parser = parse_block, conflicts_with = "model")]
    gemm: Option<(usize, usize, usize)>,
    /// Model file, or `yolov3-table3` for the built-in layer table.
    #[arg(long)]
    model: Option<String>,
    /// Restrict to these layer labels (L1, L2, ...).
    #[arg(long, value_delimiter = ',')]
    layers: Vec<String>,
}

impl ProblemArgs {
    fn problem(&self) -> Problem {
        match (&self.gemm, &self.model) {
            (Some((m, n, k)), _) => Problem::Gemm(GemmDims::new(*m, *n, *k)),
            (None, Some(src)) => Problem::Model {
                source: src.clone(),
                layers: self.layers.clone(),
            },
            (None, None) => Problem::Model {
                source: BUILTIN_MODEL.to_string(),
                layers: self.layers.clone(),
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check every kernel against its oracle on seeded random problems.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        gemm_cases: usize,
        #[arg(long, default_value_t = 50)]
        float_cases: usize,
        #[arg(long, default_value_t = 100)]
        winograd_cases: usize,
        #[arg(long, default_value_t = 64)]
        max_dim: usize,
        /// Corrupt the 6-loop kernel so its suite fails.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Time GEMM variants and write the bench CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Problem size M,N,K.
        #[arg(long, value_parser = parse_block, default_value = "512,512,512")]
        size: (usize, usize, usize),
        #[arg(long, default_value = "naive,3loop,6loop", value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Arithmetic intensity of each layer's GEMM.
    ModelAi {
        #[command(flatten)]
        common: Common,
        /// Model file, or `yolov3-table3`.
        #[arg(default_value = BUILTIN_MODEL)]
        model: String,
    },
    /// Simulate caches and cycles over vector length, lanes and L2 size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_parser = parse_algorithm, default_value = "gemm-6loop")]
        algorithm: SweepAlgorithm,
        /// Simulate at most this many GEMM columns (output pixels) per layer.
        #[arg(long)]
        column_cap: Option<usize>,
        #[arg(long, value_parser = parse_prefetch, default_value = "fill")]
        prefetch: PrefetchPolicy,
    },
    /// Record the memory-access trace of one run as CSV.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_parser = parse_algorithm, default_value = "gemm-6loop")]
        algorithm: SweepAlgorithm,
    },
    /// Replay a recorded trace through the cache model.
    Replay {
        #[command(flatten)]
        common: Common,
        trace: PathBuf,
        #[arg(long, value_parser = parse_prefetch, default_value = "fill")]
        prefetch: PrefetchPolicy,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify {
            common,
            gemm_cases,
            float_cases,
            winograd_cases,
            max_dim,
            inject_fault,
        } => {
            let opts = VerifyOptions {
                unroll: common.unroll,
                max_dim,
                gemm_int_cases: gemm_cases,
                gemm_float_cases: float_cases,
                winograd_cases,
                inject_fault,
                ..VerifyOptions::new(common.seed, common.machine()?)
            };
            let report = cmd_verify(&opts)?;
            let mut out = common.output()?;
            out.write_all(report.render().as_bytes())?;
            out.flush()?;
            Ok(report.passed())
        }
        Command::Bench {
            common,
            size,
            variants,
            repeats,
        } => {
            let opts = BenchOptions {
                dims: GemmDims::new(size.0, size.1, size.2),
                variants: variants
                    .iter()
                    .map(|v| BenchVariant::parse(v))
                    .collect::<Result<_>>()?,
                repeats,
                machine: common.machine()?,
                blocks: common.block,
                unroll: common.unroll,
                seed: common.seed,
            };
            let rows = cmd_bench(&opts)?;
            let mut out = common.output()?;
            write_bench_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(true)
        }
        Command::ModelAi { common, model } => {
            let mut out = common.output()?;
            out.write_all(cmd_model_ai(&model)?.as_bytes())?;
            out.flush()?;
            Ok(true)
        }
        Command::Sweep {
            common,
            problem,
            algorithm,
            column_cap,
            prefetch,
        } => {
            let args = SweepArgs {
                problem: problem.problem(),
                algorithm,
                vlen_bits: common.vlen_bits.clone(),
                lanes: common.lanes.clone(),
                l2_bytes: common.l2_bytes.clone(),
                blocks: common.block,
                unroll: common.unroll,
                seed: common.seed,
                column_cap,
                prefetch,
            };
            let rows = cmd_sweep(&args)?;
            let mut out = common.output()?;
            write_sweep_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(true)
        }
        Command::Trace {
            common,
            problem,
            algorithm,
        } => {
            let trace = cmd_trace(
                &problem.problem(),
                algorithm,
                &common.machine()?,
                common.block,
                common.unroll,
                common.seed,
            )?;
            let mut out = common.output()?;
            trace.write_csv(&mut out)?;
            out.flush()?;
            Ok(true)
        }
        Command::Replay {
            common,
            trace,
            prefetch,
        } => {
            let file =
                File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let trace = AccessTrace::read_csv(BufReader::new(file))?;
            let stats = cmd_replay(&trace, &common.machine()?, prefetch)?;
            let mut out = common.output()?;
            out.write_all(replay_csv(&stats).as_bytes())?;
            out.flush()?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(std::env::var(THREADS_ENV).ok().as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // Output piped into `head` and friends.
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
