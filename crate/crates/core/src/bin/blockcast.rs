use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use blockcast::analytics::{
    optimal_chunk_size, predict_pichu, predict_traditional, MetadataTerm, ModelParams,
};
use blockcast::config::Format;
use blockcast::experiment::{
    calibrate, calibration_profile, max_block_search, model_for, run_experiment, run_traced,
    sweep, SearchOptions, SweepSpec, CALIBRATION_PROFILES,
};
use blockcast::{Error, Result, SimConfig};

#[derive(Parser)]
#[command(name = "blockcast", version, about = "Block broadcast simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    /// Writes an NDJSON event trace next to the output (stderr without --out).
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// One simulation run.
    Run(Common),
    /// Grid of runs; the config holds `base`, `grid` and `threads`.
    Sweep(Common),
    /// Largest block size whose fork rate stays under a threshold.
    Maxblock {
        #[command(flatten)]
        common: Common,
        /// Block interval in seconds, overriding the config.
        #[arg(long)]
        interval: Option<f64>,
        #[arg(long, default_value_t = 100.0)]
        threshold: f64,
        #[arg(long)]
        start_bytes: Option<u64>,
        #[arg(long)]
        ceiling_bytes: Option<u64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Closed-form delay predictions for the configured network.
    Predict(Common),
    /// Runs a reference profile and compares with its published figures.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// bitcoin, litecoin, dogecoin or all.
        #[arg(long, default_value = "all")]
        profile: String,
        #[arg(long)]
        blocks: Option<u64>,
        /// Replaces the profile's bandwidth distribution.
        #[arg(long)]
        bandwidth_file: Option<PathBuf>,
        /// Replaces the profile's latency distribution.
        #[arg(long)]
        latency_file: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = json!({ "kind": e.kind(), "message": e.to_string() });
            if let Error::Config { field, .. } = &e {
                record["field"] = json!(field);
            }
            eprintln!("{}", json!({ "error": record }));
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.trace {
        cfg.output.trace = true;
    }
    if let Some(f) = common.format {
        cfg.output.format = match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(out: &mut dyn Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let report = if cfg.output.trace {
                let mut sink: Box<dyn Write> = match &common.out {
                    Some(p) => {
                        let mut name = p.clone().into_os_string();
                        name.push(".trace.ndjson");
                        Box::new(BufWriter::new(File::create(name)?))
                    }
                    None => Box::new(BufWriter::new(io::stderr().lock())),
                };
                let r = run_traced(&cfg, &mut sink)?;
                sink.flush()?;
                r
            } else {
                run_experiment(&cfg)?
            };
            let mut out = output(common.out.as_deref())?;
            match cfg.output.format {
                Format::Json => write_json(&mut out, &report),
                Format::Csv => {
                    report.write_blocks_csv(&mut out)?;
                    Ok(out.flush()?)
                }
            }
        }
        Command::Sweep(common) => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| Error::config("config", "sweep needs --config"))?;
            let mut spec = SweepSpec::from_toml(&std::fs::read_to_string(path)?)?;
            if let Some(seed) = common.seed {
                spec.base.seed = seed;
            }
            spec.base.validate()?;
            let outcome = sweep(&spec);
            for f in &outcome.failures {
                eprintln!("{}", json!({ "cell_failure": f }));
            }
            let mut out = output(common.out.as_deref())?;
            match common.format.unwrap_or(OutFormat::Csv) {
                OutFormat::Csv => outcome.write_csv(&mut out),
                OutFormat::Json => write_json(&mut out, &outcome),
            }
        }
        Command::Maxblock {
            common,
            interval,
            threshold,
            start_bytes,
            ceiling_bytes,
            tolerance,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(i) = interval {
                cfg.mining.block_interval_s = i;
            }
            let mut opts = SearchOptions {
                threshold_percent: threshold,
                ..SearchOptions::default()
            };
            if let Some(b) = start_bytes {
                opts.start_bytes = b;
            }
            if let Some(b) = ceiling_bytes {
                opts.ceiling_bytes = b;
            }
            if let Some(t) = tolerance {
                opts.rel_tolerance = t;
            }
            let result = max_block_search(&cfg, &opts)?;
            let mut out = output(common.out.as_deref())?;
            match common.format.unwrap_or(OutFormat::Json) {
                OutFormat::Json => write_json(&mut out, &result),
                OutFormat::Csv => write_csv(&mut out, &result.probes),
            }
        }
        Command::Predict(common) => {
            let cfg = load_config(&common)?;
            let params = model_for(&cfg)?;
            let row = Prediction::new(&cfg, params);
            let mut out = output(common.out.as_deref())?;
            match common.format.unwrap_or(OutFormat::Json) {
                OutFormat::Json => write_json(&mut out, &row),
                OutFormat::Csv => write_csv(&mut out, &[row]),
            }
        }
        Command::Calibrate {
            common,
            profile,
            blocks,
            bandwidth_file,
            latency_file,
        } => {
            let names: Vec<&str> = if profile == "all" {
                CALIBRATION_PROFILES.to_vec()
            } else {
                vec![profile.as_str()]
            };
            let mut results = Vec::new();
            for name in names {
                let mut p = calibration_profile(name)
                    .ok_or_else(|| Error::config("profile", format!("unknown profile `{name}`")))?;
                if let Some(seed) = common.seed {
                    p.config.seed = seed;
                }
                if let Some(b) = blocks {
                    p.config.mining.blocks_to_mine = b;
                }
                if bandwidth_file.is_some() {
                    p.config.link.bandwidth_file = bandwidth_file.clone();
                }
                if latency_file.is_some() {
                    p.config.link.latency_file = latency_file.clone();
                }
                p.config.validate()?;
                results.push(calibrate(&p)?);
            }
            let mut out = output(common.out.as_deref())?;
            match common.format.unwrap_or(OutFormat::Json) {
                OutFormat::Json => write_json(&mut out, &results),
                OutFormat::Csv => write_csv(&mut out, &results),
            }
        }
    }
}

#[derive(Serialize)]
struct Prediction {
    nodes: usize,
    block_bytes: u64,
    radius: f64,
    degree: f64,
    chunk_count: u64,
    traditional_s: f64,
    pichu_s: f64,
    pichu_literal_s: f64,
    optimal_chunk_bytes: u64,
}

impl Prediction {
    fn new(cfg: &SimConfig, p: ModelParams) -> Self {
        let body = cfg.block.size_bytes - cfg.block.header_bytes;
        Prediction {
            nodes: cfg.topology.nodes,
            block_bytes: cfg.block.size_bytes,
            radius: p.radius,
            degree: p.degree,
            chunk_count: p.chunk_count,
            traditional_s: predict_traditional(&p),
            pichu_s: predict_pichu(&p, MetadataTerm::PerChunk),
            pichu_literal_s: predict_pichu(&p, MetadataTerm::Literal),
            optimal_chunk_bytes: optimal_chunk_size(
                p.latency_s,
                p.header_verify_s,
                p.bandwidth_bps,
                p.degree,
                body,
            ),
        }
    }
}
