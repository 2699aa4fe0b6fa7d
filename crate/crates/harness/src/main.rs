use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fpest::format::{read_stream_path, write_binary, write_text, StreamFile};
use fpest::streamgen::{generate, Distribution, GeneratorSpec, Order, SpikeCase, SpikeParams};
use fpest::{ConstantsMode, EstimatorConfig};
use fpest_harness::{bench, estimate_stream, sweep, write_csv, Algorithm, BenchSpec};

#[derive(Parser)]
#[command(name = "fpest", version, about = "Estimate F_p of streams and benchmark the estimators against the exact value")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic stream file.
    Generate {
        #[command(flatten)]
        workload: Workload,
        #[command(flatten)]
        params: Params,
        #[arg(long, value_enum, default_value_t = FileFormat::Text)]
        format: FileFormat,
        /// Output path; `-` writes to stdout.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an estimator on a stream file.
    Estimate {
        file: PathBuf,
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        est: EstArgs,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Also compute the exact value and report relative errors.
        #[arg(long)]
        with_oracle: bool,
        /// Per-trial CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded trials on generated workloads against the exact value.
    Bench {
        #[command(flatten)]
        workload: Workload,
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        est: EstArgs,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the growth exponent of allocated counters in n.
    Sweep {
        /// Comma-separated universe sizes; at least 4 distinct values.
        #[arg(long, value_delimiter = ',', default_values_t = [1024u64, 4096, 16384, 65536])]
        ns: Vec<u64>,
        /// Stream length per universe element.
        #[arg(long, default_value_t = 8)]
        m_per_n: u64,
        #[command(flatten)]
        workload: Workload,
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        est: EstArgs,
        #[arg(long, default_value_t = 2)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Workload {
    #[arg(long, value_enum, default_value_t = Kind::Zipf)]
    kind: Kind,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Number of updates; ignored for spike instances.
    #[arg(long, default_value_t = 200_000)]
    m: u64,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.4)]
    s: f64,
    /// Planted items.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Planted frequency as a multiple of the background L2 norm.
    #[arg(long, default_value_t = 2.0)]
    strength: f64,
    /// Spike case.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,
    #[arg(long, value_enum, default_value_t = OrderArg::Rand)]
    order: OrderArg,
    /// Fraction of updates that delete an earlier insertion.
    #[arg(long, default_value_t = 0.0)]
    deletions: f64,
}

#[derive(Args, Clone)]
struct Params {
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Workload {
    fn spec(&self, params: &Params) -> GeneratorSpec {
        let dist = match self.kind {
            Kind::Uniform => Distribution::Uniform,
            Kind::Zipf => Distribution::Zipf { s: self.s },
            Kind::Planted => Distribution::PlantedHeavy { k: self.k, strength: self.strength },
            Kind::Spike => {
                let case = SpikeCase::ALL[self.case as usize - 1];
                Distribution::Spike(SpikeParams::new(case, params.p, params.eps))
            }
        };
        let m = if self.kind == Kind::Spike { 0 } else { self.m };
        GeneratorSpec::new(dist, self.n, m, params.seed)
            .with_order(self.order.into())
            .with_deletions(self.deletions)
    }
}

#[derive(Args, Clone)]
struct EstArgs {
    #[arg(long, value_enum, default_value_t = Algorithm::TpInsert)]
    algorithm: Algorithm,
    #[arg(long, value_enum, default_value_t = ModeArg::Practical)]
    constants_mode: ModeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Uniform,
    Zipf,
    Planted,
    Spike,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Rand,
    Sorted,
    RoundRobin,
    Clustered,
    Natural,
}

impl From<OrderArg> for Order {
    fn from(o: OrderArg) -> Order {
        match o {
            OrderArg::Rand => Order::RandomShuffle,
            OrderArg::Sorted => Order::Sorted,
            OrderArg::RoundRobin => Order::RoundRobin,
            OrderArg::Clustered => Order::Clustered,
            OrderArg::Natural => Order::Natural,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Text,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    Practical,
}

impl From<ModeArg> for ConstantsMode {
    fn from(m: ModeArg) -> ConstantsMode {
        match m {
            ModeArg::Paper => ConstantsMode::Paper,
            ModeArg::Practical => ConstantsMode::Practical,
        }
    }
}

fn create(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn bench_spec(w: &Workload, params: &Params, e: &EstArgs) -> BenchSpec {
    BenchSpec {
        algorithm: e.algorithm,
        workload: w.spec(params),
        p: params.p,
        eps: params.eps,
        constants_mode: e.constants_mode.into(),
        seed: params.seed,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate { workload, params, format, out } => {
            let g = generate(&workload.spec(&params))?;
            let mut w = create(&out)?;
            match format {
                FileFormat::Text => write_text(&mut w, &StreamFile::new(g.meta, g.updates))?,
                FileFormat::Binary => write_binary(&mut w, g.meta.n, &g.updates)?,
            }
            w.flush()?;
            if out != Path::new("-") {
                print_json(&json!({ "meta": g.meta, "spike": g.spike }))?;
            }
        }
        Cmd::Estimate { file, params, est, trials, with_oracle, out } => {
            let stream = read_stream_path(&file)?;
            let cfg = EstimatorConfig::new(params.p, params.eps, params.seed)?.with_mode(est.constants_mode.into());
            let report = estimate_stream(&stream, est.algorithm, &cfg, trials, with_oracle)?;
            if let Some(path) = out {
                write_csv(create(&path)?, &report.rows)?;
            }
            print_json(&report)?;
        }
        Cmd::Bench { workload, params, est, trials, out } => {
            let outcome = bench(&bench_spec(&workload, &params, &est), trials)?;
            if let Some(path) = out {
                write_csv(create(&path)?, &outcome.rows)?;
            }
            print_json(&outcome.summary)?;
        }
        Cmd::Sweep { ns, m_per_n, workload, params, est, trials, out } => {
            let outcome = sweep(&bench_spec(&workload, &params, &est), &ns, m_per_n, trials)?;
            if let Some(path) = out {
                write_csv(create(&path)?, &outcome.rows)?;
            }
            print_json(&json!({
                "algorithm": est.algorithm,
                "ns": ns,
                "m_per_n": m_per_n,
                "p": params.p,
                "eps": params.eps,
                "trials": trials,
                "slope": outcome.fit.slope,
                "slope_stderr": outcome.fit.slope_stderr,
                "slope_band": outcome.slope_band,
                "target_slope": outcome.target_slope,
                "per_level_counters": outcome.per_level,
            }))?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<fpest::Error>() {
        Some(e) if e.is_contract() => 3,
        Some(fpest::Error::Config(_) | fpest::Error::Generation(_) | fpest::Error::Format(_) | fpest::Error::ItemOutOfRange { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
