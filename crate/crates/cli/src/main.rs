//! Command-line pipeline for single-node delay analysis.
//!
//! Subcommands compose through files: `gen` emits an arrivals CSV, `sim`
//! turns arrivals into a packet trace, `estimate` recovers the service
//! parameters from a trace, `bound` evaluates the closed-form delay
//! bounds for a flow/server pair, `compare` sweeps a parameter grid and
//! tabulates simulated worst-case delay against every bound, and `curve`
//! exports arrival/service curves as breakpoint CSV.
//!
//! Every output file is written atomically and accompanied by a
//! `<output>.manifest` recording the subcommand, resolved configuration
//! and input paths, so a run can be reproduced byte for byte.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 math precondition error
//! (instability, infeasible source), 3 I/O error.

use clap::{Args, Parser, Subcommand};
use netcalc::estimator::{estimate, EstimationWarning, SearchConfig, SearchStrategy};
use netcalc::io::{
    self, curve_csv, flow_from_config, read_arrivals, read_io_delay_table, read_trace,
    server_from_config, sweep_csv, ConfigMap, IoError, ReferenceDataset,
};
use netcalc::minplus::CurveError;
use netcalc::models::{
    ideal_delay, model_a_bound, model_b_bound, model_c_bound, token_bucket_bound, DelayBound,
    FlowSpec, FourTupleFlow, ModelError, PeriodicStaircaseFlow, RateLatencyServer, RealSourceFlow,
    TokenBucketFlow,
};
use netcalc::simulator::{
    generate_arrivals, max_delay_sweep, simulate, ServerConfig, SimError, SourceConfig,
    SourceKind, SweepPoint,
};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "netcalc", version, about = "Single-node delay analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output file; a `<out>.manifest` is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an arrivals CSV from a source config.
    Gen {
        /// Source config (`kind`, `packet_*`, `burst_packets`, `load`,
        /// `nominal_bps`, `source_peak_bps`, `packets`).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate the FIFO node over arrivals, producing a packet trace.
    Sim {
        /// Server config (`rate_bps`, `error_us`, `nominal_bps`, optional
        /// `ingress_bps`, `jitter_us`, `seed`).
        #[arg(long)]
        server: PathBuf,
        /// Pre-generated arrivals CSV (alternative to --config).
        #[arg(long)]
        arrivals: Option<PathBuf>,
        /// Source config to generate arrivals on the fly.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the server config's jitter seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
        /// Optional per-packet delay report CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate the service parameters (R, e) from a packet trace.
    Estimate {
        #[arg(long)]
        trace: PathBuf,
        /// Nominal line rate C in bits per second.
        #[arg(long)]
        nominal_bps: f64,
        /// IO delay table CSV; defaults to the bundled reference table.
        #[arg(long)]
        io_table: Option<PathBuf>,
        /// Packet length for the IO correction; defaults to the dominant
        /// length in the trace.
        #[arg(long)]
        length_bytes: Option<u32>,
        /// Slack increases below this are treated as jitter (seconds).
        #[arg(long, default_value_t = 50e-9)]
        jitter_floor_s: f64,
        /// Use the bare descending search without bisection refinement.
        #[arg(long)]
        descend_only: bool,
        #[command(flatten)]
        out: OutArg,
        /// Slack profile CSV (defaults to `<out>.slack.csv`).
        #[arg(long)]
        slack_out: Option<PathBuf>,
    },
    /// Evaluate closed-form delay bounds for a flow against a server.
    Bound {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        server: PathBuf,
        /// Which bound to emit: all, ideal, tb, a, b, c.
        #[arg(long, default_value = "all")]
        model: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Sweep a length x load x burst grid: simulated max delay vs bounds.
    Compare {
        /// Sweep config (`rate_bps`, `error_us`, `nominal_bps`,
        /// `source_peak_bps`, `lengths_bytes`, `loads`, `bursts`,
        /// `packets`, optional `ingress_bps`, `seed`).
        #[arg(long)]
        config: PathBuf,
        /// Release each burst at one instant instead of spacing packets.
        #[arg(long)]
        ideal_periodic: bool,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Export a flow's arrival curve (or a server's service curve) as CSV.
    Curve {
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        server: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Math(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Math(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Math(_) => "math",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Math(m) | CliError::Io(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(inner) => CliError::Io(inner.to_string()),
            IoError::Model(m) => CliError::from(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Domain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Math(e.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::UnboundedDelay { .. } | CurveError::HorizonExceeded { .. } => {
                CliError::Math(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(m) => CliError::from(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<netcalc::estimator::EstimationError> for CliError {
    fn from(e: netcalc::estimator::EstimationError) -> Self {
        use netcalc::estimator::EstimationError::*;
        match e {
            NoFeasibleRate { .. } => CliError::Math(e.to_string()),
            Domain(_) | TooFewPackets { .. } | InvalidTrace { .. } | EmptyIoTable => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netcalc: error[{}]: {}", e.kind(), e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Write atomically: temp file in the same directory, then rename.
fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// The run manifest accompanying every output file.
struct Manifest {
    subcommand: &'static str,
    inputs: Vec<(String, String)>,
    config: Vec<(String, String)>,
    seed: Option<u64>,
}

impl Manifest {
    fn new(subcommand: &'static str) -> Self {
        Manifest {
            subcommand,
            inputs: Vec::new(),
            config: Vec::new(),
            seed: None,
        }
    }

    fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.push((name.into(), path.display().to_string()));
        self
    }

    fn resolved(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.into(), value.to_string()));
        self
    }

    fn write(&self, out: &Path) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(text, "# netcalc run manifest");
        let _ = writeln!(text, "tool = netcalc {VERSION}");
        let _ = writeln!(text, "subcommand = {}", self.subcommand);
        if let Some(seed) = self.seed {
            let _ = writeln!(text, "seed = {seed}");
        }
        for (name, path) in &self.inputs {
            let _ = writeln!(text, "input.{name} = {path}");
        }
        let _ = writeln!(text, "output = {}", out.display());
        for (key, value) in &self.config {
            let _ = writeln!(text, "config.{key} = {value}");
        }
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest");
        write_output(Path::new(&path), &text)
    }
}

fn load_config(path: &Path) -> Result<ConfigMap, CliError> {
    ConfigMap::load(path).map_err(|e| match e {
        IoError::Io(inner) => CliError::Io(format!("{}: {inner}", path.display())),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })
}

/// Source config keys shared by `gen`, `sim --config` and `compare`.
fn source_from_config(cfg: &ConfigMap) -> Result<(SourceConfig, RealSourceFlow), CliError> {
    let kind = match cfg.require_str("kind")? {
        "real_source" => SourceKind::RealSource,
        "ideal_periodic" => SourceKind::IdealPeriodic,
        other => {
            return Err(CliError::Usage(format!(
                "unknown source kind `{other}` (real_source, ideal_periodic)"
            )))
        }
    };
    let flow = RealSourceFlow::from_load(
        cfg.size_bits("packet")?,
        cfg.require_f64("burst_packets")? as u32,
        cfg.require_f64("load")?,
        cfg.rate_bps("nominal")?,
        cfg.rate_bps("source_peak")?,
    )?;
    let total_packets = cfg.u64_opt("packets")?.unwrap_or(10_000) as usize;
    Ok((
        SourceConfig {
            kind,
            total_packets,
        },
        flow,
    ))
}

/// Simulator server keys: the rate-latency pair plus ingress/jitter/seed.
fn sim_server_from_config(
    cfg: &ConfigMap,
    seed_override: Option<u64>,
) -> Result<ServerConfig, CliError> {
    Ok(ServerConfig {
        rate_bps: cfg.rate_bps("rate")?,
        proc_delay_s: cfg.time_s("error")?,
        ingress_bps: cfg.f64_opt("ingress_bps")?,
        jitter_bound_s: cfg.time_s_opt("jitter")?.unwrap_or(0.0),
        seed: seed_override.or(cfg.u64_opt("seed")?).unwrap_or(0),
    })
}

fn manifest_config_entries(m: &mut Manifest, cfg: &ConfigMap) {
    for key in cfg.keys() {
        if let Some(value) = cfg.get(key) {
            m.resolved(key, value);
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen { config, out } => cmd_gen(&config, &out.out),
        Command::Sim {
            server,
            arrivals,
            config,
            seed,
            out,
            report,
        } => cmd_sim(
            &server,
            arrivals.as_deref(),
            config.as_deref(),
            seed,
            &out.out,
            report.as_deref(),
        ),
        Command::Estimate {
            trace,
            nominal_bps,
            io_table,
            length_bytes,
            jitter_floor_s,
            descend_only,
            out,
            slack_out,
        } => cmd_estimate(
            &trace,
            nominal_bps,
            io_table.as_deref(),
            length_bytes,
            jitter_floor_s,
            descend_only,
            &out.out,
            slack_out.as_deref(),
        ),
        Command::Bound {
            flow,
            server,
            model,
            out,
        } => cmd_bound(&flow, &server, &model, &out.out),
        Command::Compare {
            config,
            ideal_periodic,
            seed,
            out,
        } => cmd_compare(&config, ideal_periodic, seed, &out.out),
        Command::Curve { flow, server, out } => {
            cmd_curve(flow.as_deref(), server.as_deref(), &out.out)
        }
    }
}

fn cmd_gen(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let (src, flow) = source_from_config(&cfg)?;
    let arrivals = generate_arrivals(&src, &flow)?;
    write_output(out, &io::write_arrivals_string(&arrivals)?)?;
    let mut m = Manifest::new("gen");
    m.input("config", config_path);
    manifest_config_entries(&mut m, &cfg);
    m.resolved("generated_packets", arrivals.len());
    m.write(out)?;
    println!("wrote {} arrivals to {}", arrivals.len(), out.display());
    Ok(())
}

fn cmd_sim(
    server_path: &Path,
    arrivals_path: Option<&Path>,
    source_path: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let server_cfg = load_config(server_path)?;
    let server = sim_server_from_config(&server_cfg, seed)?;
    let arrivals = match (arrivals_path, source_path) {
        (Some(path), None) => read_arrivals(path)?,
        (None, Some(path)) => {
            let cfg = load_config(path)?;
            let (src, flow) = source_from_config(&cfg)?;
            generate_arrivals(&src, &flow)?
        }
        _ => {
            return Err(CliError::Usage(
                "sim needs exactly one of --arrivals or --config".into(),
            ))
        }
    };
    let result = simulate(&arrivals, &server)?;
    write_output(out, &io::write_trace_string(&result.trace)?)?;

    if let Some(report) = report_path {
        let mut text = String::new();
        let _ = writeln!(text, "# max_delay_us = {:.4}", result.max_delay_s * 1e6);
        let _ = writeln!(text, "packet_id,delay_ns,queue_ns,trans_ns,proc_ns");
        for ((rec, delay), parts) in result
            .trace
            .records()
            .iter()
            .zip(&result.per_packet_delay_s)
            .zip(&result.decomposition)
        {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                rec.id,
                netcalc::s_to_ns(*delay),
                netcalc::s_to_ns(parts.queue_s),
                netcalc::s_to_ns(parts.trans_s),
                netcalc::s_to_ns(parts.proc_s)
            );
        }
        write_output(report, &text)?;
    }

    let mut m = Manifest::new("sim");
    m.seed = Some(server.seed);
    m.input("server", server_path);
    if let Some(p) = arrivals_path {
        m.input("arrivals", p);
    }
    if let Some(p) = source_path {
        m.input("config", p);
    }
    manifest_config_entries(&mut m, &server_cfg);
    m.resolved("packets", result.trace.len());
    m.resolved("max_delay_us", format!("{:.4}", result.max_delay_s * 1e6));
    m.write(out)?;
    if let Some(report) = report_path {
        m.write(report)?;
    }
    println!(
        "simulated {} packets, max delay {:.4} us -> {}",
        result.trace.len(),
        result.max_delay_s * 1e6,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    trace_path: &Path,
    nominal_bps: f64,
    io_table_path: Option<&Path>,
    length_bytes: Option<u32>,
    jitter_floor_s: f64,
    descend_only: bool,
    out: &Path,
    slack_out: Option<&Path>,
) -> Result<(), CliError> {
    let trace = read_trace(trace_path)?;
    let table = match io_table_path {
        Some(path) => read_io_delay_table(path)?,
        None => {
            ReferenceDataset::load()
                .map_err(|e| CliError::Io(e.to_string()))?
                .io_delays
        }
    };
    let config = SearchConfig {
        jitter_floor_s,
        strategy: if descend_only {
            SearchStrategy::DescendOnly { factor: 0.999 }
        } else {
            SearchStrategy::DescendAndRefine { factor: 0.999 }
        },
        ..SearchConfig::default()
    };
    let result = estimate(&trace, nominal_bps, &config)?;

    // IO correction for the requested (or dominant) packet length.
    let length = length_bytes.unwrap_or_else(|| dominant_length_bytes(&trace));
    let corrected = netcalc::estimator::apply_io_correction(&result, &table, length)?;

    let mut text = String::new();
    let _ = writeln!(text, "# service parameter estimate");
    let _ = writeln!(text, "packets = {}", trace.len());
    let _ = writeln!(text, "nominal_bps = {nominal_bps}");
    let _ = writeln!(text, "rate_hat_bps = {}", corrected.rate_hat_bps);
    let _ = writeln!(text, "error_hat_us = {:.4}", corrected.error_hat_s * 1e6);
    let _ = writeln!(
        text,
        "io_delay_us = {:.4}",
        corrected.io_delay_applied_s.unwrap_or(0.0) * 1e6
    );
    let _ = writeln!(
        text,
        "error_with_io_us = {:.4}",
        corrected.error_with_io_s.unwrap_or(corrected.error_hat_s) * 1e6
    );
    let _ = writeln!(text, "io_length_bytes = {length}");
    let _ = writeln!(text, "iterations = {}", corrected.iterations);
    for w in &corrected.warnings {
        let line = match w {
            EstimationWarning::OutlierDominatedError { max_s, runner_up_s } => format!(
                "warning = error term dominated by one outlier ({:.4} us vs runner-up {:.4} us)",
                max_s * 1e6,
                runner_up_s * 1e6
            ),
            EstimationWarning::NegativeSlackClamped { raw_s } => format!(
                "warning = raw worst slack was negative ({:.4} us); clamped to zero",
                raw_s * 1e6
            ),
        };
        let _ = writeln!(text, "{line}");
    }
    write_output(out, &text)?;

    let slack_path = match slack_out {
        Some(p) => p.to_path_buf(),
        None => {
            let mut p = out.as_os_str().to_owned();
            p.push(".slack.csv");
            PathBuf::from(p)
        }
    };
    let mut slack_text = String::from("packet_id,slack_ns\n");
    for (rec, slack) in trace.records().iter().zip(&corrected.slack_profile) {
        let _ = writeln!(slack_text, "{},{:.3}", rec.id, slack * 1e9);
    }
    write_output(&slack_path, &slack_text)?;

    let mut m = Manifest::new("estimate");
    m.input("trace", trace_path);
    if let Some(p) = io_table_path {
        m.input("io_table", p);
    }
    m.resolved("nominal_bps", nominal_bps);
    m.resolved("jitter_floor_s", jitter_floor_s);
    m.resolved(
        "strategy",
        if descend_only {
            "descend_only"
        } else {
            "descend_and_refine"
        },
    );
    m.resolved("rate_hat_bps", corrected.rate_hat_bps);
    m.resolved(
        "error_with_io_us",
        format!("{:.4}", corrected.error_with_io_s.unwrap_or(0.0) * 1e6),
    );
    m.write(out)?;
    m.write(&slack_path)?;
    println!(
        "estimated R = {:.3} Mbps, e = {:.4} us (with IO: {:.4} us) -> {}",
        corrected.rate_hat_bps / 1e6,
        corrected.error_hat_s * 1e6,
        corrected.error_with_io_s.unwrap_or(0.0) * 1e6,
        out.display()
    );
    Ok(())
}

fn dominant_length_bytes(trace: &netcalc::estimator::MeasuredTrace) -> u32 {
    let mut counts: std::collections::BTreeMap<u64, usize> = Default::default();
    for r in trace.records() {
        *counts.entry(r.length_bits / 8).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(_, c)| c)
        .map(|(len, _)| len as u32)
        .unwrap_or(0)
}

/// Derive every requested bound from the flow spec. Families that cannot
/// express a model are reported as `not_applicable`.
fn derive_bound(
    model: &str,
    flow: &FlowSpec,
    server: &RateLatencyServer,
) -> Option<Result<DelayBound, ModelError>> {
    match model {
        "ideal" => flow
            .packet_bits()
            .map(|l| ideal_delay(l, server.nominal_bps)),
        "tb" => {
            let (rate, burst) = match flow {
                FlowSpec::TokenBucket(f) => (f.rate_bps, f.burst_bits),
                FlowSpec::FourTuple(f) => (f.rate_bps, f.burst_bits),
                FlowSpec::Staircase(f) => (f.burst_bits / f.period_s, f.burst_bits),
                FlowSpec::RealSource(f) => (f.r2_bps(), f.b2_bits()),
            };
            Some(TokenBucketFlow::new(rate, burst).and_then(|f| token_bucket_bound(&f, server)))
        }
        "a" => {
            let tuple = match flow {
                FlowSpec::FourTuple(f) => Ok(*f),
                FlowSpec::Staircase(f) => FourTupleFlow::new(
                    f.peak_bps,
                    f.packet_bits,
                    f.burst_bits / f.period_s,
                    f.burst_bits,
                ),
                FlowSpec::RealSource(f) => FourTupleFlow::new(
                    f.r1_bps(),
                    f.packet_bits,
                    f.r2_bps(),
                    f.burst_packets as f64 * f.packet_bits,
                ),
                FlowSpec::TokenBucket(_) => return None,
            };
            Some(tuple.and_then(|f| model_a_bound(&f, server)))
        }
        "b" => {
            let stair = match flow {
                FlowSpec::Staircase(f) => Ok(*f),
                // Period of the equivalent periodic flow: b bits at rate r.
                FlowSpec::FourTuple(f) => PeriodicStaircaseFlow::new(
                    f.burst_bits / f.rate_bps,
                    f.burst_bits,
                    f.peak_bps,
                    f.packet_bits,
                ),
                FlowSpec::RealSource(f) => PeriodicStaircaseFlow::new(
                    f.period_s,
                    f.burst_packets as f64 * f.packet_bits,
                    f.r1_bps(),
                    f.packet_bits,
                ),
                FlowSpec::TokenBucket(_) => return None,
            };
            Some(stair.and_then(|f| model_b_bound(&f, server)))
        }
        "c" => {
            let source = match flow {
                FlowSpec::RealSource(f) => Ok(*f),
                FlowSpec::FourTuple(f) => {
                    // A spaced-burst source with the same four-tuple: the
                    // burst must be a whole number of packets.
                    let n = f.burst_bits / f.packet_bits;
                    if (n - n.round()).abs() > 1e-6 {
                        Err(ModelError::Domain(format!(
                            "burst of {} bits is not a whole number of {}-bit packets",
                            f.burst_bits, f.packet_bits
                        )))
                    } else {
                        RealSourceFlow::from_load(
                            f.packet_bits,
                            n.round() as u32,
                            f.rate_bps / server.nominal_bps,
                            server.nominal_bps,
                            f.peak_bps,
                        )
                    }
                }
                _ => return None,
            };
            Some(source.and_then(|f| model_c_bound(&f, server)))
        }
        _ => None,
    }
}

fn cmd_bound(
    flow_path: &Path,
    server_path: &Path,
    model: &str,
    out: &Path,
) -> Result<(), CliError> {
    let flow_cfg = load_config(flow_path)?;
    let server_cfg = load_config(server_path)?;
    let flow = flow_from_config(&flow_cfg)?;
    let server = server_from_config(&server_cfg)?;

    let requested: Vec<&str> = match model {
        "all" => vec!["ideal", "tb", "a", "b", "c"],
        "ideal" | "tb" | "a" | "b" | "c" => vec![model],
        other => {
            return Err(CliError::Usage(format!(
                "unknown model `{other}` (all, ideal, tb, a, b, c)"
            )))
        }
    };

    let mut text = String::from(
        "model,value_us,base_us,error_us,reduction_us,kink_t_us,kink_value_bits,status,note\n",
    );
    let mut first_failure: Option<ModelError> = None;
    for name in &requested {
        match derive_bound(name, &flow, &server) {
            None => {
                let _ = writeln!(
                    text,
                    "{name},,,,,,,not_applicable,flow kind {} cannot express this model",
                    flow.kind_name()
                );
            }
            Some(Err(e)) => {
                let _ = writeln!(
                    text,
                    "{name},,,,,,,error,{}",
                    e.to_string().replace(',', ";")
                );
                if first_failure.is_none() {
                    first_failure = Some(e);
                }
            }
            Some(Ok(b)) => {
                let (kink_t, kink_v) = match b.kink {
                    Some(k) => (format!("{:.4}", k.t_s * 1e6), format!("{:.1}", k.value_bits)),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(
                    text,
                    "{name},{:.4},{:.4},{:.4},{:.4},{kink_t},{kink_v},ok,",
                    b.value_s * 1e6,
                    b.base_s * 1e6,
                    b.error_s * 1e6,
                    b.reduction_s * 1e6
                );
            }
        }
    }
    write_output(out, &text)?;

    let mut m = Manifest::new("bound");
    m.input("flow", flow_path);
    m.input("server", server_path);
    m.resolved("model", model);
    manifest_config_entries(&mut m, &flow_cfg);
    m.write(out)?;

    if let Some(e) = first_failure {
        return Err(CliError::from(e));
    }
    println!("wrote bound table to {}", out.display());
    Ok(())
}

fn cmd_compare(
    config_path: &Path,
    ideal_periodic: bool,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let nominal_bps = cfg.rate_bps("nominal")?;
    let source_peak_bps = cfg.rate_bps("source_peak")?;
    let server = ServerConfig {
        rate_bps: cfg.rate_bps("rate")?,
        proc_delay_s: cfg.time_s("error")?,
        ingress_bps: Some(cfg.f64_opt("ingress_bps")?.unwrap_or(source_peak_bps)),
        jitter_bound_s: cfg.time_s_opt("jitter")?.unwrap_or(0.0),
        seed: seed.or(cfg.u64_opt("seed")?).unwrap_or(0),
    };
    let lengths = cfg.list_f64("lengths_bytes")?;
    let loads = cfg.list_f64("loads")?;
    let bursts = cfg.list_f64("bursts")?;
    let packets = cfg.u64_opt("packets")?.unwrap_or(2000) as usize;

    let mut grid = Vec::new();
    for &length in &lengths {
        for &load in &loads {
            for &burst in &bursts {
                grid.push(SweepPoint {
                    length_bytes: length as u32,
                    load,
                    burst_packets: burst as u32,
                });
            }
        }
    }
    let kind = if ideal_periodic {
        SourceKind::IdealPeriodic
    } else {
        SourceKind::RealSource
    };
    let rows = max_delay_sweep(&grid, &server, kind, packets, nominal_bps, source_peak_bps)?;
    write_output(out, &sweep_csv(&rows))?;

    let mut m = Manifest::new("compare");
    m.seed = Some(server.seed);
    m.input("config", config_path);
    manifest_config_entries(&mut m, &cfg);
    m.resolved(
        "source",
        if ideal_periodic {
            "ideal_periodic"
        } else {
            "real_source"
        },
    );
    m.resolved("grid_points", rows.len());
    m.write(out)?;
    println!("swept {} grid points -> {}", rows.len(), out.display());
    Ok(())
}

fn cmd_curve(
    flow_path: Option<&Path>,
    server_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let (curve, input_name, input_path) = match (flow_path, server_path) {
        (Some(path), None) => {
            let flow = flow_from_config(&load_config(path)?)?;
            (flow.arrival_curve()?, "flow", path)
        }
        (None, Some(path)) => {
            let server = server_from_config(&load_config(path)?)?;
            (server.curve(), "server", path)
        }
        _ => {
            return Err(CliError::Usage(
                "curve needs exactly one of --flow or --server".into(),
            ))
        }
    };
    write_output(out, &curve_csv(&curve))?;
    let mut m = Manifest::new("curve");
    m.input(input_name, input_path);
    m.resolved("segments", curve.segments().len());
    m.write(out)?;
    println!(
        "wrote {} breakpoints to {}",
        curve.segments().len(),
        out.display()
    );
    Ok(())
}
