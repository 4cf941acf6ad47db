//! `pcity`: experiment runner for the Poissonian-city flow simulator.
//!
//! Subcommands: `simulate-curve`, `sample-flow`, `validate`,
//! `oracle-compare`. Configuration comes from an optional JSON file plus
//! command-line flags (flags win). Exit codes: 0 success, 1 validation
//! failure, 2 I/O or configuration errors.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use poissonian_city::estimator::{l1_error_bound, run_flow_replicates};
use poissonian_city::oracle::box_volume_two_ways;
use poissonian_city::rng::RngStream;
use poissonian_city::seminal::{extend_until, Orientation, SeminalCurve};
use poissonian_city::stats::RunningStats;
use poissonian_city::validation::{
    ks_rayleigh, run_battery, BatteryConfig, MarginalSource, TestReport, DEFAULT_SEED,
};

#[derive(Parser)]
#[command(
    name = "pcity",
    version,
    about = "Simulate the limiting traffic-flow law at the centre of a Poissonian city"
)]
struct Cli {
    /// JSON configuration file; explicit flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(flatten)]
    common: CommonFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonFlags {
    /// Base seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of replicates (or oracle realizations).
    #[arg(long, global = true)]
    replicates: Option<u64>,

    /// Truncation depth N of the flow estimator.
    #[arg(long, global = true)]
    depth: Option<usize>,

    /// Deterministic bracket budget of the flow estimator.
    #[arg(long, global = true)]
    eps: Option<f64>,

    /// Output path; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads for replicate-parallel runs (output is identical for
    /// any thread count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress the timestamp header so output bytes are reproducible.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate seminal curves and emit their vertex lists.
    SimulateCurve(SimulateFlags),
    /// Sample the truncated total-flow estimator over replicates.
    SampleFlow,
    /// Run the statistical validation battery; exits 1 if any check fails.
    Validate(ValidateFlags),
    /// Run the brute-force oracle comparisons (two-way box volumes and
    /// envelope-vs-dynamics distribution checks).
    OracleCompare(OracleFlags),
}

#[derive(Args, Clone, Default)]
struct SimulateFlags {
    /// Stop extending once S·Γ(S) falls below this value (otherwise stop at
    /// the configured depth).
    #[arg(long)]
    stop_product: Option<f64>,

    /// Emit per-depth intercept means instead of raw vertices.
    #[arg(long)]
    summary: bool,
}

#[derive(Args, Clone, Default)]
struct ValidateFlags {
    /// Negative-control hook: mis-scale the KS samplers so the battery must
    /// fail.
    #[arg(long, hide = true)]
    corrupt_samplers: bool,
}

#[derive(Args, Clone, Default)]
struct OracleFlags {
    /// Abscissa of the envelope-vs-dynamics distribution comparison.
    #[arg(long)]
    s: Option<f64>,

    /// Box height H for the two-way volume comparison.
    #[arg(long)]
    box_height: Option<f64>,

    /// Quadrature grid per axis.
    #[arg(long)]
    grid: Option<usize>,

    /// Monte Carlo point pairs per realization.
    #[arg(long)]
    n_mc: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// On-disk configuration schema. Every field is optional; flags override.
#[derive(Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    replicates: Option<u64>,
    depth: Option<usize>,
    eps: Option<f64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
    no_timestamp: Option<bool>,
    stop_product: Option<f64>,
    summary: Option<bool>,
    s: Option<f64>,
    box_height: Option<f64>,
    grid: Option<usize>,
    n_mc: Option<usize>,
    corrupt_samplers: Option<bool>,
}

/// Fully resolved experiment configuration: flag > file > default.
struct Config {
    seed: u64,
    replicates: u64,
    depth: usize,
    eps: f64,
    out: Option<PathBuf>,
    format: Format,
    no_timestamp: bool,
    stop_product: Option<f64>,
    summary: bool,
    s: f64,
    box_height: f64,
    grid: usize,
    n_mc: usize,
    corrupt_samplers: bool,
}

fn resolve(cli: &Cli, default_replicates: u64) -> Result<Config> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("cannot parse config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let c = &cli.common;
    let config = Config {
        seed: c.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        replicates: c
            .replicates
            .or(file.replicates)
            .unwrap_or(default_replicates),
        depth: c.depth.or(file.depth).unwrap_or(20),
        eps: c.eps.or(file.eps).unwrap_or(1e-4),
        out: c.out.clone().or(file.out),
        format: c.format.or(file.format).unwrap_or(Format::Csv),
        no_timestamp: c.no_timestamp || file.no_timestamp.unwrap_or(false),
        stop_product: file.stop_product,
        summary: file.summary.unwrap_or(false),
        s: file.s.unwrap_or(0.5),
        box_height: file.box_height.unwrap_or(3.0),
        grid: file.grid.unwrap_or(200),
        n_mc: file.n_mc.unwrap_or(100_000),
        corrupt_samplers: file.corrupt_samplers.unwrap_or(false),
    };
    anyhow::ensure!(config.replicates >= 1, "replicates must be at least 1");
    anyhow::ensure!(config.eps > 0.0, "eps must be positive");
    if let Some(threads) = c.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    Ok(config)
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn emit(config: &Config, text: &str) -> Result<()> {
    match &config.out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("cannot write output to {}", path.display()))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("cannot write to stdout")?,
    }
    Ok(())
}

fn csv_header(config: &Config, out: &mut String) {
    if !config.no_timestamp {
        out.push_str(&format!("# timestamp_unix_s: {}\n", timestamp()));
    }
}

fn json_wrap(config: &Config, body: serde_json::Value) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    if !config.no_timestamp {
        map.insert("timestamp_unix_s".into(), timestamp().into());
    }
    if let serde_json::Value::Object(fields) = body {
        map.extend(fields);
    }
    serde_json::Value::Object(map)
}

fn cmd_simulate_curve(config: &Config, flags: &SimulateFlags) -> Result<()> {
    let stop_product = flags.stop_product.or(config.stop_product);
    let summary = flags.summary || config.summary;
    let depth = config.depth;
    let curves: Vec<SeminalCurve> = (0..config.replicates)
        .map(|replicate| {
            let mut stream = RngStream::new(config.seed, replicate);
            let mut curve = SeminalCurve::draw(Orientation::Right, &mut stream);
            match stop_product {
                Some(bound) => {
                    extend_until(&mut curve, &mut stream, |v| v.s * v.height() <= bound)
                }
                None => extend_until(&mut curve, &mut stream, |v| v.index >= depth),
            }
            .map(|_| curve)
        })
        .collect::<poissonian_city::Result<_>>()?;

    if summary {
        // Per-depth intercept means; the perpetuity pins E[Yₙ] = 3⁻ⁿ·√π/2.
        let max_depth = curves.iter().map(|c| c.vertices().len()).max().unwrap_or(0);
        let mut per_n = vec![RunningStats::new(); max_depth];
        for curve in &curves {
            for v in curve.vertices() {
                per_n[v.index].push(v.intercept);
            }
        }
        let expected = |n: usize| 3f64.powi(-(n as i32)) * std::f64::consts::PI.sqrt() / 2.0;
        match config.format {
            Format::Csv => {
                let mut out = String::new();
                csv_header(config, &mut out);
                out.push_str("n,count,mean_Y,se_Y,expected_Y\n");
                for (n, stats) in per_n.iter().enumerate() {
                    out.push_str(&format!(
                        "{n},{},{},{},{}\n",
                        stats.count(),
                        stats.mean(),
                        stats.std_error(),
                        expected(n)
                    ));
                }
                emit(config, &out)
            }
            Format::Json => {
                let rows: Vec<_> = per_n
                    .iter()
                    .enumerate()
                    .map(|(n, stats)| {
                        serde_json::json!({
                            "n": n,
                            "count": stats.count(),
                            "mean_Y": stats.mean(),
                            "se_Y": stats.std_error(),
                            "expected_Y": expected(n),
                        })
                    })
                    .collect();
                let body = json_wrap(config, serde_json::json!({ "summary": rows }));
                emit(config, &format!("{}\n", serde_json::to_string_pretty(&body)?))
            }
        }
    } else {
        match config.format {
            Format::Csv => {
                let mut out = String::new();
                csv_header(config, &mut out);
                out.push_str("replicate,n,S,Y,sigma\n");
                for (replicate, curve) in curves.iter().enumerate() {
                    for v in curve.vertices() {
                        out.push_str(&format!(
                            "{replicate},{},{},{},{}\n",
                            v.index, v.s, v.intercept, v.slope
                        ));
                    }
                }
                emit(config, &out)
            }
            Format::Json => {
                let rows: Vec<_> = curves
                    .iter()
                    .enumerate()
                    .map(|(replicate, curve)| {
                        serde_json::json!({
                            "replicate": replicate,
                            "vertices": curve.vertices(),
                        })
                    })
                    .collect();
                let body = json_wrap(config, serde_json::json!({ "curves": rows }));
                emit(config, &format!("{}\n", serde_json::to_string_pretty(&body)?))
            }
        }
    }
}

fn cmd_sample_flow(config: &Config) -> Result<()> {
    let estimates =
        run_flow_replicates(config.seed, config.replicates, config.depth, config.eps)?;
    let stats: RunningStats = estimates.iter().map(|e| e.value).collect();
    let widths: RunningStats = estimates.iter().map(|e| e.bracket_width).collect();
    let l1 = l1_error_bound(config.depth);
    let budget = 3.0 * stats.std_error() + config.eps + l1;

    match config.format {
        Format::Csv => {
            let mut out = String::new();
            csv_header(config, &mut out);
            out.push_str(
                "replicate_id,N,value,bracket_width,l1_bound,product_term,sum_plus,sum_minus\n",
            );
            for (replicate, e) in estimates.iter().enumerate() {
                out.push_str(&format!(
                    "{replicate},{},{},{},{},{},{},{}\n",
                    e.depth,
                    e.value,
                    e.bracket_width,
                    e.l1_bound,
                    e.product_term,
                    e.sum_plus,
                    e.sum_minus
                ));
            }
            out.push_str(&format!(
                "# aggregate: replicates={} mean={} se={} mean_bracket_width={} l1_bound={} error_budget={}\n",
                stats.count(),
                stats.mean(),
                stats.std_error(),
                widths.mean(),
                l1,
                budget
            ));
            emit(config, &out)
        }
        Format::Json => {
            let rows: Vec<_> = estimates
                .iter()
                .enumerate()
                .map(|(replicate, e)| {
                    serde_json::json!({
                        "replicate_id": replicate,
                        "N": e.depth,
                        "value": e.value,
                        "bracket_width": e.bracket_width,
                        "l1_bound": e.l1_bound,
                        "product_term": e.product_term,
                        "sum_plus": e.sum_plus,
                        "sum_minus": e.sum_minus,
                    })
                })
                .collect();
            let body = json_wrap(
                config,
                serde_json::json!({
                    "rows": rows,
                    "aggregate": {
                        "replicates": stats.count(),
                        "mean": stats.mean(),
                        "se": stats.std_error(),
                        "mean_bracket_width": widths.mean(),
                        "l1_bound": l1,
                        "error_budget": budget,
                    },
                }),
            );
            emit(config, &format!("{}\n", serde_json::to_string_pretty(&body)?))
        }
    }
}

fn report_rows_csv(config: &Config, reports: &[TestReport]) -> String {
    let mut out = String::new();
    csv_header(config, &mut out);
    out.push_str("name,statistic,threshold,n_samples,passed,seed\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name, r.statistic, r.threshold, r.n_samples, r.passed, r.seed
        ));
    }
    out
}

fn cmd_validate(config: &Config, flags: &ValidateFlags) -> Result<bool> {
    let battery = BatteryConfig {
        seed: config.seed,
        corrupt_samplers: flags.corrupt_samplers || config.corrupt_samplers,
        flow_replicates: config.replicates as usize,
        flow_depth: config.depth,
        flow_eps: config.eps,
    };
    let reports = run_battery(&battery);
    let all_passed = reports.iter().all(|r| r.passed);
    match config.format {
        Format::Csv => emit(config, &report_rows_csv(config, &reports))?,
        Format::Json => {
            let body = json_wrap(
                config,
                serde_json::json!({ "reports": reports, "all_passed": all_passed }),
            );
            emit(config, &format!("{}\n", serde_json::to_string_pretty(&body)?))?;
        }
    }
    Ok(all_passed)
}

fn cmd_oracle_compare(config: &Config, flags: &OracleFlags) -> Result<()> {
    let s = flags.s.unwrap_or(config.s);
    let height = flags.box_height.unwrap_or(config.box_height);
    let grid = flags.grid.unwrap_or(config.grid);
    let n_mc = flags.n_mc.unwrap_or(config.n_mc);

    #[derive(Serialize)]
    struct BoxRow {
        realization: u64,
        mc: f64,
        mc_se: f64,
        quad: f64,
        abs_diff: f64,
        band: f64,
        within: bool,
    }
    let rows: Vec<BoxRow> = (0..config.replicates)
        .map(|r| {
            let mut stream = RngStream::keyed(config.seed, r, 11);
            let v = box_volume_two_ways(&mut stream, height, n_mc, grid)?;
            let band = 3.0 * v.mc_se + v.quad_error_bound;
            let abs_diff = (v.mc - v.quad).abs();
            Ok(BoxRow {
                realization: r,
                mc: v.mc,
                mc_se: v.mc_se,
                quad: v.quad,
                abs_diff,
                band,
                within: abs_diff <= band,
            })
        })
        .collect::<poissonian_city::Result<Vec<BoxRow>>>()?;

    let ks = [
        ks_rayleigh(config.seed, MarginalSource::Dynamics, s, 10_000),
        ks_rayleigh(config.seed, MarginalSource::OracleEnvelope, s, 10_000),
    ];

    match config.format {
        Format::Csv => {
            let mut out = String::new();
            csv_header(config, &mut out);
            out.push_str("realization,mc,mc_se,quad,abs_diff,band,within\n");
            for row in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.realization, row.mc, row.mc_se, row.quad, row.abs_diff, row.band, row.within
                ));
            }
            for r in &ks {
                out.push_str(&format!(
                    "# ks: name={} statistic={} threshold={} passed={}\n",
                    r.name, r.statistic, r.threshold, r.passed
                ));
            }
            emit(config, &out)
        }
        Format::Json => {
            let body = json_wrap(
                config,
                serde_json::json!({ "box_volumes": rows, "ks": ks }),
            );
            emit(config, &format!("{}\n", serde_json::to_string_pretty(&body)?))
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::SimulateCurve(flags) => {
            let config = resolve(&cli, 1000)?;
            cmd_simulate_curve(&config, flags)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SampleFlow => {
            let config = resolve(&cli, 10_000)?;
            cmd_sample_flow(&config)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(flags) => {
            let config = resolve(&cli, 100_000)?;
            let all_passed = cmd_validate(&config, flags)?;
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::OracleCompare(flags) => {
            let config = resolve(&cli, 20)?;
            cmd_oracle_compare(&config, flags)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
