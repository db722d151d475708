//! Write-amplification accounting and report export.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

/// Rounds to six significant digits, the precision used in every export.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Counters for one phase of a run (warm-up or measured).
#[derive(Debug, Clone)]
pub struct Recorder {
    window: u64,
    host: u64,
    copies: u64,
    gc_count: u64,
    selections: u64,
    scan_total: u64,
    erases: Vec<u64>,
    win_host: u64,
    win_copies: u64,
    wa_series: Vec<(u64, f64)>,
}

impl Recorder {
    pub fn new(total_blocks: usize, window: u64) -> Self {
        Recorder {
            window: window.max(1),
            host: 0,
            copies: 0,
            gc_count: 0,
            selections: 0,
            scan_total: 0,
            erases: vec![0; total_blocks],
            win_host: 0,
            win_copies: 0,
            wa_series: Vec::new(),
        }
    }

    pub fn record_host_write(&mut self) {
        self.host += 1;
        self.win_host += 1;
        if self.win_host == self.window {
            let wa = (self.win_host + self.win_copies) as f64 / self.win_host as f64;
            self.wa_series.push((self.host, wa));
            self.win_host = 0;
            self.win_copies = 0;
        }
    }

    pub fn record_gc_copy(&mut self) {
        self.copies += 1;
        self.win_copies += 1;
    }

    pub fn record_erase(&mut self, block: u32) {
        self.erases[block as usize] += 1;
        self.gc_count += 1;
    }

    pub fn record_selection(&mut self, scan_cost: u64) {
        self.selections += 1;
        self.scan_total += scan_cost;
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn host_writes(&self) -> u64 {
        self.host
    }

    pub fn gc_copies(&self) -> u64 {
        self.copies
    }

    pub fn gc_count(&self) -> u64 {
        self.gc_count
    }

    pub fn wa(&self) -> f64 {
        wa(self.host, self.copies)
    }

    pub fn wa_series(&self) -> &[(u64, f64)] {
        &self.wa_series
    }

    pub fn erase_counts(&self) -> &[u64] {
        &self.erases
    }

    pub fn selections(&self) -> u64 {
        self.selections
    }

    pub fn scan_cost_total(&self) -> u64 {
        self.scan_total
    }
}

/// `(host + copies) / host`, defined as 1.0 without host writes.
pub fn wa(host: u64, copies: u64) -> f64 {
    if host == 0 {
        1.0
    } else {
        (host + copies) as f64 / host as f64
    }
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<u64>() as f64 / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt() / mean
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTotals {
    pub host_page_writes: u64,
    pub gc_copy_writes: u64,
    pub gc_count: u64,
    pub wa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub strategy: String,
    pub workload: String,
    pub seed: u64,
    pub channels: u32,
    pub blocks_per_channel: u32,
    pub pages_per_block: u32,
    pub logical_pages: u64,
    /// Measured-phase host page writes (warm-up excluded).
    pub host_page_writes: u64,
    pub gc_copy_writes: u64,
    pub wa_final: f64,
    /// `(window_end_host_writes, window_wa)` for each complete window.
    pub wa_series: Vec<(u64, f64)>,
    pub window: u64,
    pub erase_histogram: Vec<u64>,
    pub erase_cv: f64,
    pub gc_count: u64,
    pub selections: u64,
    pub fastcb_rebuild_empty: u64,
    pub fastcb_rebuild_overflow: u64,
    pub approx_refills: u64,
    pub scan_cost_total: u64,
    pub scan_cost_mean: f64,
    pub dropped_requests: u64,
    pub dropped_pages: u64,
    pub total_physical_writes: u64,
    pub warmup: Option<PhaseTotals>,
    pub wall_clock_seconds: Option<f64>,
    pub ops_per_sec: Option<f64>,
}

impl SimReport {
    /// Drops the timing fields, leaving only what the simulation determines.
    pub fn without_timing(&self) -> SimReport {
        SimReport {
            wall_clock_seconds: None,
            ops_per_sec: None,
            ..self.clone()
        }
    }

    pub fn summary(&self) -> Summary {
        let warm = self.warmup.as_ref();
        Summary {
            strategy: self.strategy.clone(),
            workload: self.workload.clone(),
            seed: self.seed,
            channels: self.channels,
            blocks_per_channel: self.blocks_per_channel,
            pages_per_block: self.pages_per_block,
            logical_pages: self.logical_pages,
            host_page_writes: self.host_page_writes,
            gc_copy_writes: self.gc_copy_writes,
            wa_final: sig6(self.wa_final),
            window: self.window,
            wa_windows: self.wa_series.len() as u64,
            erase_cv: sig6(self.erase_cv),
            gc_count: self.gc_count,
            selections: self.selections,
            fastcb_rebuild_empty: self.fastcb_rebuild_empty,
            fastcb_rebuild_overflow: self.fastcb_rebuild_overflow,
            approx_refills: self.approx_refills,
            scan_cost_total: self.scan_cost_total,
            scan_cost_mean: sig6(self.scan_cost_mean),
            dropped_requests: self.dropped_requests,
            dropped_pages: self.dropped_pages,
            total_physical_writes: self.total_physical_writes,
            warmup_host_page_writes: warm.map(|w| w.host_page_writes),
            warmup_gc_copy_writes: warm.map(|w| w.gc_copy_writes),
            warmup_gc_count: warm.map(|w| w.gc_count),
            warmup_wa: warm.map(|w| sig6(w.wa)),
            wall_clock_seconds: self.wall_clock_seconds.map(sig6),
            ops_per_sec: self.ops_per_sec.map(sig6),
        }
    }

    /// One-line human summary; every number also appears in `summary.json`.
    pub fn one_line(&self) -> String {
        let s = self.summary();
        format!(
            "strategy={} wa_final={} gc_count={} scan_cost_mean={}",
            s.strategy, s.wa_final, s.gc_count, s.scan_cost_mean
        )
    }
}

/// Scalar fields of a report, as written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub strategy: String,
    pub workload: String,
    pub seed: u64,
    pub channels: u32,
    pub blocks_per_channel: u32,
    pub pages_per_block: u32,
    pub logical_pages: u64,
    pub host_page_writes: u64,
    pub gc_copy_writes: u64,
    pub wa_final: f64,
    pub window: u64,
    pub wa_windows: u64,
    pub erase_cv: f64,
    pub gc_count: u64,
    pub selections: u64,
    pub fastcb_rebuild_empty: u64,
    pub fastcb_rebuild_overflow: u64,
    pub approx_refills: u64,
    pub scan_cost_total: u64,
    pub scan_cost_mean: f64,
    pub dropped_requests: u64,
    pub dropped_pages: u64,
    pub total_physical_writes: u64,
    pub warmup_host_page_writes: Option<u64>,
    pub warmup_gc_copy_writes: Option<u64>,
    pub warmup_gc_count: Option<u64>,
    pub warmup_wa: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
    pub ops_per_sec: Option<f64>,
}

/// Writes `summary.json`, `wa_series.csv` and `erase_hist.csv` into `dir`.
pub fn export(report: &SimReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&report.summary()).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;

    let mut series = io::BufWriter::new(fs::File::create(dir.join("wa_series.csv"))?);
    writeln!(series, "host_writes,wa")?;
    for &(end, wa) in &report.wa_series {
        writeln!(series, "{end},{}", sig6(wa))?;
    }
    series.flush()?;

    let mut hist = io::BufWriter::new(fs::File::create(dir.join("erase_hist.csv"))?);
    writeln!(hist, "block,erase_count")?;
    for (block, count) in report.erase_histogram.iter().enumerate() {
        writeln!(hist, "{block},{count}")?;
    }
    hist.flush()
}
