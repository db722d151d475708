//! Command-line driver: single runs, parameter sweeps and the timing bench.
//!
//! Every setting can come from a flat `key=value` file (`--config`) or from a
//! flag of the same name; flags win.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::flash::DeviceGeometry;
use crate::ftl::{simulate_spec, FtlConfig, SimError};
use crate::metrics::{export, sig6, SimReport};
use crate::strategy::StrategySpec;
use crate::workload::{TraceFormat, WorkloadSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Setting names accepted in config files and as `--<name>` flags.
pub const KEYS: &[&str] = &[
    "strategy",
    "workload",
    "trace",
    "trace-format",
    "lba-unit",
    "channels",
    "blocks-per-channel",
    "pages-per-block",
    "page-size",
    "logical-capacity",
    "op-factor",
    "hotness-levels",
    "gc-watermark",
    "warmup",
    "seed",
    "out",
    "window",
];

#[derive(Debug, Parser)]
#[command(name = "ftlsim", version, about = "Trace-driven SSD FTL simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and export its report.
    Run(RunArgs),
    /// Simulate one configuration per point along an axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Axis values, e.g. `cb fastcb` or `0.1% 25%`.
        #[arg(required = true)]
        points: Vec<String>,
    },
    /// Time strategies on the same configuration.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Strategies to time; defaults to `cb fastcb`.
        strategies: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Strategy,
    Q,
    PagesPerBlock,
    Capacity,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<String>,
    /// Synthetic workload, e.g. `hotspot:writes=10x,req=1,regions=0.1/0.9+0.9/0.1`.
    #[arg(long)]
    pub workload: Option<String>,
    #[arg(long)]
    pub trace: Option<String>,
    #[arg(long)]
    pub trace_format: Option<String>,
    #[arg(long)]
    pub lba_unit: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub blocks_per_channel: Option<String>,
    #[arg(long)]
    pub pages_per_block: Option<String>,
    #[arg(long)]
    pub page_size: Option<String>,
    /// Logical capacity in bytes; accepts K, M, G, T suffixes.
    #[arg(long)]
    pub logical_capacity: Option<String>,
    #[arg(long)]
    pub op_factor: Option<String>,
    #[arg(long)]
    pub hotness_levels: Option<String>,
    #[arg(long)]
    pub gc_watermark: Option<String>,
    /// on | off
    #[arg(long)]
    pub warmup: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub window: Option<String>,
}

pub type Settings = BTreeMap<String, String>;

impl RunArgs {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("strategy", &self.strategy),
            ("workload", &self.workload),
            ("trace", &self.trace),
            ("trace-format", &self.trace_format),
            ("lba-unit", &self.lba_unit),
            ("channels", &self.channels),
            ("blocks-per-channel", &self.blocks_per_channel),
            ("pages-per-block", &self.pages_per_block),
            ("page-size", &self.page_size),
            ("logical-capacity", &self.logical_capacity),
            ("op-factor", &self.op_factor),
            ("hotness-levels", &self.hotness_levels),
            ("gc-watermark", &self.gc_watermark),
            ("warmup", &self.warmup),
            ("seed", &self.seed),
            ("out", &self.out),
            ("window", &self.window),
        ]
    }

    /// Config file settings overlaid with the flags.
    pub fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => parse_config(&fs::read_to_string(path).map_err(io_err(path))?)?,
            None => Settings::new(),
        };
        for (k, v) in self.flags() {
            if let Some(v) = v {
                s.insert(k.to_string(), v.clone());
            }
        }
        Ok(s)
    }
}

/// Parses a flat `key=value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Parses a byte size such as `4096`, `64K`, `80G` or `1TiB` (binary units).
pub fn parse_size(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let digits = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(digits);
    let n: u64 = num.parse().map_err(|_| format!("bad size `{s}`"))?;
    let shift = match unit.trim().to_ascii_uppercase().trim_end_matches("IB").trim_end_matches('B') {
        "" => 0,
        "K" => 10,
        "M" => 20,
        "G" => 30,
        "T" => 40,
        _ => return Err(format!("bad size unit in `{s}`")),
    };
    n.checked_mul(1u64 << shift)
        .ok_or_else(|| format!("size `{s}` overflows"))
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: FtlConfig,
    pub workload: WorkloadSpec,
    pub out: PathBuf,
}

fn get<T: std::str::FromStr>(s: &Settings, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match s.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|e| CliError::Usage(format!("--{key} `{v}`: {e}"))),
    }
}

impl RunSpec {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        if let Some(k) = s.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown setting `{k}`")));
        }
        let usage = CliError::Usage;
        let strategy: StrategySpec = get(s, "strategy", StrategySpec::Cb)?;
        let channels: u32 = get(s, "channels", 1)?;
        let pages_per_block: u32 = get(s, "pages-per-block", 64)?;
        let page_size = match s.get("page-size") {
            Some(v) => parse_size(v).map_err(usage)?,
            None => 4096,
        };
        let op_factor: f64 = get(s, "op-factor", DeviceGeometry::DEFAULT_OP_FACTOR)?;
        let explicit_blocks: Option<u32> = match s.get("blocks-per-channel") {
            Some(_) => Some(get(s, "blocks-per-channel", 0)?),
            None => None,
        };
        let geometry = match s.get("logical-capacity") {
            Some(cap) => {
                let bytes = parse_size(cap).map_err(usage)?;
                if page_size == 0 {
                    return Err(usage("page size must be positive".into()));
                }
                let logical_pages = bytes / page_size;
                let blocks_per_channel = match explicit_blocks {
                    Some(b) => b,
                    None => {
                        let per = channels as u64 * pages_per_block as u64;
                        if per == 0 {
                            return Err(usage("channels and pages per block must be positive".into()));
                        }
                        let physical = (logical_pages as f64 * op_factor).ceil() as u64;
                        u32::try_from(physical.div_ceil(per))
                            .map_err(|_| usage(format!("capacity `{cap}` needs too many blocks")))?
                    }
                };
                DeviceGeometry {
                    channels,
                    blocks_per_channel,
                    pages_per_block,
                    page_size,
                    logical_pages,
                    op_factor,
                }
            }
            None => DeviceGeometry::with_max_logical(
                channels,
                explicit_blocks.unwrap_or(4096),
                pages_per_block,
                page_size,
                op_factor,
            ),
        };
        geometry.validate().map_err(SimError::from)?;

        let workload = match (s.get("workload"), s.get("trace")) {
            (Some(_), Some(_)) => return Err(usage("give either --workload or --trace, not both".into())),
            (None, None) => return Err(usage("no workload: give --workload or --trace".into())),
            (Some(w), None) => w
                .parse::<WorkloadSpec>()
                .map_err(|e| usage(format!("--workload: {e}")))?,
            (None, Some(path)) => WorkloadSpec::TraceFile {
                path: PathBuf::from(path),
                format: get(s, "trace-format", TraceFormat::Canonical)?,
                lba_unit: get(s, "lba-unit", 512)?,
            },
        };
        workload.validate().map_err(SimError::from)?;

        let hotness_levels: u8 = get(s, "hotness-levels", 3)?;
        let warm_up = match s.get("warmup").map(|v| v.as_str()) {
            None | Some("on") => true,
            Some("off") => false,
            Some(v) => return Err(usage(format!("--warmup must be on or off, got `{v}`"))),
        };
        let window = match s.get("window") {
            Some(_) => Some(get(s, "window", 0u64)?),
            None => None,
        };
        let config = FtlConfig {
            geometry,
            strategy,
            hotness_levels,
            gc_low_watermark: get(s, "gc-watermark", hotness_levels as usize + 1)?,
            warm_up,
            seed: get(s, "seed", 0)?,
            window,
        };
        config.validate()?;
        Ok(RunSpec {
            config,
            workload,
            out: PathBuf::from(s.get("out").map_or("out", |v| v.as_str())),
        })
    }
}

/// Runs one simulation, exports it and prints the one-line summary.
pub fn cmd_run(spec: &RunSpec) -> Result<SimReport, CliError> {
    let report = simulate_spec(&spec.config, &spec.workload)?;
    export(&report, &spec.out).map_err(io_err(&spec.out))?;
    println!("{}", report.one_line());
    Ok(report)
}

fn dir_name(idx: usize, point: &str) -> String {
    let clean: String = point
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{idx:02}-{clean}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Settings for one sweep point, derived from the base settings.
pub fn sweep_point(base: &Settings, axis: SweepAxis, point: &str) -> Result<Settings, CliError> {
    let mut s = base.clone();
    match axis {
        SweepAxis::Strategy => {
            s.insert("strategy".into(), point.into());
        }
        SweepAxis::Q => {
            s.insert("strategy".into(), format!("approxcb:q={point}"));
        }
        SweepAxis::PagesPerBlock => {
            // physical capacity stays fixed, so the block count scales inversely
            let g = RunSpec::from_settings(base)?.config.geometry;
            let ppb: u64 = point
                .parse()
                .map_err(|e| CliError::Usage(format!("pages-per-block point `{point}`: {e}")))?;
            let per_channel = g.blocks_per_channel as u64 * g.pages_per_block as u64;
            if ppb == 0 || per_channel % ppb != 0 {
                return Err(CliError::Usage(format!(
                    "{per_channel} pages per channel do not split into blocks of {point}"
                )));
            }
            s.insert("pages-per-block".into(), point.into());
            s.insert("blocks-per-channel".into(), (per_channel / ppb).to_string());
        }
        SweepAxis::Capacity => {
            s.insert("logical-capacity".into(), point.into());
            s.remove("blocks-per-channel");
        }
    }
    Ok(s)
}

/// Runs every point (concurrently) and writes `sweep.csv`. Successful points
/// keep their output even when another point fails.
pub fn cmd_sweep(base: &Settings, axis: SweepAxis, points: &[String]) -> Result<Vec<SimReport>, CliError> {
    let root = PathBuf::from(base.get("out").map_or("out", |v| v.as_str()));
    let mut specs = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut s = sweep_point(base, axis, p)?;
        s.insert("out".into(), root.join(dir_name(i, p)).display().to_string());
        specs.push(RunSpec::from_settings(&s)?);
    }
    let results: Vec<Result<SimReport, CliError>> = specs
        .par_iter()
        .map(|spec| {
            let report = simulate_spec(&spec.config, &spec.workload)?;
            export(&report, &spec.out).map_err(io_err(&spec.out))?;
            Ok(report)
        })
        .collect();

    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let csv_path = root.join("sweep.csv");
    let mut csv = String::from("point,wa_final,scan_cost_mean,gc_count\n");
    let mut reports = Vec::new();
    let mut first_err = None;
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(report) => {
                let s = report.summary();
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_field(p),
                    s.wa_final,
                    s.scan_cost_mean,
                    s.gc_count
                ));
                println!("{p}: {}", report.one_line());
                reports.push(report);
            }
            Err(e) => {
                eprintln!("{p}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(reports),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub strategy: String,
    pub median_seconds: f64,
    pub host_writes_per_sec: f64,
    pub scan_cost_mean: f64,
    pub wa_final: f64,
    pub speedup_vs_cb: Option<f64>,
    pub report: SimReport,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Times each strategy `repeats` times on the same configuration. Runs are
/// sequential so they do not compete for cores.
pub fn cmd_bench(base: &Settings, strategies: &[String], repeats: usize) -> Result<Vec<BenchRow>, CliError> {
    if repeats < 3 {
        return Err(CliError::Usage(format!("bench needs at least 3 repeats, got {repeats}")));
    }
    let default = ["cb".to_string(), "fastcb".to_string()];
    let strategies = if strategies.is_empty() { &default[..] } else { strategies };
    let root = PathBuf::from(base.get("out").map_or("out", |v| v.as_str()));
    let mut specs = Vec::new();
    for (i, name) in strategies.iter().enumerate() {
        let mut s = sweep_point(base, SweepAxis::Strategy, name)?;
        s.insert("out".into(), root.join(dir_name(i, name)).display().to_string());
        specs.push(RunSpec::from_settings(&s)?);
    }

    let mut rows = Vec::new();
    for spec in &specs {
        let mut times = Vec::with_capacity(repeats);
        let mut first: Option<SimReport> = None;
        for _ in 0..repeats {
            let start = Instant::now();
            let report = simulate_spec(&spec.config, &spec.workload)?;
            times.push(start.elapsed().as_secs_f64());
            match &first {
                None => first = Some(report),
                Some(f) if *f != report => {
                    return Err(CliError::Usage(format!(
                        "{}: repeated runs disagree, simulation is not deterministic",
                        spec.config.strategy
                    )))
                }
                Some(_) => {}
            }
        }
        let mut report = first.expect("at least one repeat");
        let secs = median(times);
        let host_total = report.host_page_writes + report.warmup.as_ref().map_or(0, |w| w.host_page_writes);
        let rate = if secs > 0.0 { host_total as f64 / secs } else { 0.0 };
        report.wall_clock_seconds = Some(secs);
        report.ops_per_sec = Some(rate);
        export(&report, &spec.out).map_err(io_err(&spec.out))?;
        rows.push(BenchRow {
            strategy: report.strategy.clone(),
            median_seconds: secs,
            host_writes_per_sec: rate,
            scan_cost_mean: report.scan_cost_mean,
            wa_final: report.wa_final,
            speedup_vs_cb: None,
            report,
        });
    }
    if let Some(cb) = rows.iter().find(|r| r.strategy == "cb").map(|r| r.median_seconds) {
        for r in &mut rows {
            r.speedup_vs_cb = (r.median_seconds > 0.0).then(|| cb / r.median_seconds);
        }
    }

    let mut csv = String::from("strategy,median_seconds,host_writes_per_sec,scan_cost_mean,wa_final,speedup_vs_cb\n");
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{:<28} {:>14} {:>16} {:>14} {:>10} {:>10}", "strategy", "median_s", "writes/s", "scan_mean", "wa", "vs_cb");
    for r in &rows {
        let speedup = r.speedup_vs_cb.map(|x| sig6(x).to_string()).unwrap_or_default();
        let fields = [
            sig6(r.median_seconds).to_string(),
            sig6(r.host_writes_per_sec).to_string(),
            sig6(r.scan_cost_mean).to_string(),
            sig6(r.wa_final).to_string(),
        ];
        csv.push_str(&format!("{},{},{}\n", csv_field(&r.strategy), fields.join(","), speedup));
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>16} {:>14} {:>10} {:>10}",
            r.strategy, fields[0], fields[1], fields[2], fields[3], speedup
        );
    }
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let path = root.join("bench.csv");
    fs::write(&path, csv).map_err(io_err(&path))?;
    Ok(rows)
}

/// Entry point shared by the binary and the tests.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let spec = RunSpec::from_settings(&args.settings()?)?;
            cmd_run(&spec).map(|_| ())
        }
        Command::Sweep { run, axis, points } => cmd_sweep(&run.settings()?, axis, &points).map(|_| ()),
        Command::Bench {
            run,
            repeats,
            strategies,
        } => cmd_bench(&run.settings()?, &strategies, repeats).map(|_| ()),
    }
}
