use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hrsi_causal::causalgraph::{expected_hrsi_graph, read_graph, shd, write_dot, write_graph};
use hrsi_causal::citest::CiTestKind;
use hrsi_causal::features::simulate_features;
use hrsi_causal::hrsim::{write_raw_trace_csv, WorldConfig};
use hrsi_causal::pipeline::{run_pipeline, PipelineConfig};
use hrsi_causal::sweeps::{
    aggregate, default_fractions, sweep_frequency, sweep_horizon, write_aggregate_csv, write_table_csv, SweepTable,
    DEFAULT_RATES,
};
use hrsi_causal::timeseries::{read_csv, write_csv};
use hrsi_causal::{run_discovery, DiscoveryConfig, Error, Method};

#[derive(Parser)]
#[command(name = "hrsi-causal", version, about = "Causal discovery on human-robot spatial interaction time series")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pcmci,
    Fpcmci,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pcmci => Method::Pcmci,
            MethodArg::Fpcmci => Method::Fpcmci,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CiTestArg {
    Parcorr,
    Gpdc,
}

impl From<CiTestArg> for CiTestKind {
    fn from(c: CiTestArg) -> Self {
        match c {
            CiTestArg::Parcorr => CiTestKind::ParCorr,
            CiTestArg::Gpdc => CiTestKind::Gpdc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Frequency,
    Horizon,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the interaction scenario and write the (v, d_g, r) series.
    Simulate {
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-tick agent states.
        #[arg(long)]
        raw_out: Option<PathBuf>,
        /// Position noise standard deviation in metres.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Run causal discovery on a CSV time series.
    Discover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum)]
        citest: CiTestArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        tau_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Run the collector and discovery worker from a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Structural Hamming distance between two graph documents.
    Shd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Count self-loops too.
        #[arg(long)]
        include_auto: bool,
    },
    /// SHD and runtime over sampling rates or leading fractions of a series.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
        #[arg(long)]
        input: PathBuf,
        /// Graph document to compare against (default: the expected interaction graph).
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum)]
        citest: CiTestArg,
        /// Seeds as a comma list with optional inclusive ranges, e.g. `0-4,9`.
        #[arg(long, default_value = "0", value_parser = parse_seeds)]
        seeds: SeedList,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        tau_max: usize,
        /// Per-row CSV; the per-parameter summary goes next to it as `<stem>_agg.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed `{x}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(out))
}

fn discovery_config(method: MethodArg, citest: CiTestArg, alpha: f64, tau_max: usize, seed: u64) -> DiscoveryConfig {
    let mut cfg = DiscoveryConfig::new(method.into(), citest.into()).with_seed(seed);
    cfg.alpha = alpha;
    cfg.tau_max = tau_max;
    cfg
}

fn agg_path(out: &std::path::Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    out.with_file_name(format!("{stem}_agg.csv"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            duration,
            rate,
            seed,
            out,
            raw_out,
            noise,
        } => {
            let mut world = WorldConfig::default().with_seed(seed);
            if let Some(sigma) = noise {
                world.pos_noise_sigma = sigma;
            }
            world.validate()?;
            let (trace, batch) = simulate_features(&world, duration, rate)?;
            write_csv(&batch, &out)?;
            if let Some(raw) = raw_out {
                write_raw_trace_csv(&trace, raw)?;
            }
            log::info!("wrote {} rows to {}", batch.len(), out.display());
        }
        Command::Discover {
            input,
            method,
            citest,
            alpha,
            tau_max,
            seed,
            out,
            dot,
        } => {
            let cfg = discovery_config(method, citest, alpha, tau_max, seed);
            cfg.validate()?;
            let batch = read_csv(&input)?;
            let report = run_discovery(&batch, &cfg)?;
            write_graph(&report.graph, &out)?;
            if let Some(dot) = dot {
                write_dot(&report.graph, dot)?;
            }
            log::info!(
                "{} edges in {:.3} s",
                report.graph.len(),
                report.timings.total_s
            );
        }
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::from_file(&config)?;
            let summary = run_pipeline(&cfg)?;
            let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::NumericalFailure(e.to_string()))?;
            println!("{json}");
        }
        Command::Shd { a, b, include_auto } => {
            let (a, b) = (read_graph(a)?, read_graph(b)?);
            println!("{}", shd(&a, &b, include_auto)?);
        }
        Command::Sweep {
            kind,
            input,
            baseline,
            method,
            citest,
            seeds,
            alpha,
            tau_max,
            out,
        } => {
            let batch = read_csv(&input)?;
            let (base, label) = match &baseline {
                Some(p) => (read_graph(p)?, p.display().to_string()),
                None => (expected_hrsi_graph(), "expected".to_string()),
            };
            let mut tables = Vec::with_capacity(seeds.0.len());
            for &seed in &seeds.0 {
                let cfg = discovery_config(method, citest, alpha, tau_max, seed);
                cfg.validate()?;
                let mut t = match kind {
                    SweepArg::Frequency => sweep_frequency(&batch, &base, &DEFAULT_RATES, &cfg)?,
                    SweepArg::Horizon => sweep_horizon(&batch, &base, &default_fractions(), &cfg)?,
                };
                t.baseline = label.clone();
                tables.push(t);
            }
            let merged = SweepTable::merge(&tables)?;
            write_table_csv(&merged, &out)?;
            write_aggregate_csv(&aggregate(&tables)?, agg_path(&out))?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure(_) => 3,
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
