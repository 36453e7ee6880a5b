//! Experiment driver: single runs, window sweeps and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::Topology;
use crate::ir::{build_kernel, KernelError, KernelKind, KernelParams, Word};
use crate::memory::{MemoryConfig, Window};
use crate::oracle::{self, MemDiff, OracleError};
use crate::sim::{simulate, EventRecord, Metrics, Mode, SimConfig, SimError};

/// Windows of the standard sweep.
pub const STANDARD_WINDOWS: [Window; 7] = [
    Window::Finite(2),
    Window::Finite(3),
    Window::Finite(5),
    Window::Finite(10),
    Window::Finite(20),
    Window::Finite(30),
    Window::Infinite,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelKind,
    pub params: KernelParams,
    pub mode: Mode,
    pub window: Option<Window>,
    pub topology: Topology,
    pub memory: MemoryConfig,
    pub wct_capacity: Option<usize>,
    /// Reserved; every run is deterministic without it.
    pub seed: u64,
    pub event_log: bool,
    pub verify: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kernel: KernelKind::Matrix,
            params: KernelParams::default(),
            mode: Mode::Strict,
            window: None,
            topology: Topology::default(),
            memory: MemoryConfig::default(),
            wct_capacity: None,
            seed: 0,
            event_log: false,
            verify: false,
        }
    }
}

impl RunConfig {
    pub fn new(kernel: KernelKind, params: KernelParams, mode: Mode, window: Option<Window>) -> Self {
        RunConfig { kernel, params, mode, window, ..Default::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            mode: self.mode,
            window: self.window,
            topology: self.topology.clone(),
            memory: self.memory.clone(),
            wct_capacity: self.wct_capacity,
            event_log: self.event_log,
            ..SimConfig::default()
        }
    }

    fn with_mode(&self, mode: Mode, window: Option<Window>) -> Self {
        RunConfig { mode, window, ..self.clone() }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("final memory differs from the oracle at {} address(es); first: {:?}", .0.len(), .0.first())]
    Verification(Vec<MemDiff>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub memory: BTreeMap<u64, Word>,
    pub events: Vec<EventRecord>,
}

impl RunOutput {
    /// Sorted `addr value` lines.
    pub fn memory_dump(&self) -> String {
        oracle::dump_memory(&self.memory)
    }

    /// Line-delimited JSON, one record per event.
    pub fn event_log(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = writeln!(s, "{}", serde_json::to_string(e).expect("records serialize"));
        }
        s
    }
}

/// Builds the kernel and simulates it; with `verify`, also checks the final
/// memory against the oracle.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let program = build_kernel(cfg.kernel, &cfg.params)?;
    let result = simulate(&program, &cfg.sim_config())?;
    if cfg.verify {
        let expected = oracle::interpret(&program)?;
        let diffs = oracle::compare_memory(&result.memory, &expected.memory);
        if !diffs.is_empty() {
            return Err(HarnessError::Verification(diffs));
        }
    }
    Ok(RunOutput { metrics: result.metrics, memory: result.memory, events: result.events })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kernel: KernelKind,
    pub mode: Mode,
    pub window: Option<Window>,
    pub metrics: Metrics,
}

/// `(baseline / variant - 1) * 100`.
pub fn speedup_pct(baseline_cycles: u64, variant_cycles: u64) -> f64 {
    (baseline_cycles as f64 / variant_cycles as f64 - 1.0) * 100.0
}

/// Strict and decoupled baselines plus one TWC run per window, executed in
/// parallel. Rows are sorted by (mode, window); speedups are against strict.
pub fn sweep(base: &RunConfig, windows: &[Window]) -> Result<Vec<SweepRow>, HarnessError> {
    let mut configs = vec![base.with_mode(Mode::Strict, None), base.with_mode(Mode::Decoupled, None)];
    configs.extend(windows.iter().map(|&w| base.with_mode(Mode::Twc, Some(w))));
    configs.sort_by_key(|c| (c.mode, c.window));
    configs.dedup_by_key(|c| (c.mode, c.window));
    let results: Vec<Result<RunOutput, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut rows = Vec::with_capacity(configs.len());
    for (c, r) in configs.iter().zip(results) {
        rows.push(SweepRow { kernel: c.kernel, mode: c.mode, window: c.window, metrics: r?.metrics });
    }
    let baseline = rows.iter().find(|r| r.mode == Mode::Strict).map(|r| r.metrics.total_cycles).expect("strict row");
    for r in &mut rows {
        r.metrics.speedup_pct = Some(speedup_pct(baseline, r.metrics.total_cycles));
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "kernel,mode,window,cycles,raw,war,waw,commits,aborts,speedup_pct";

pub fn render_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        let m = &r.metrics;
        let window = r.window.map(|w| w.to_string()).unwrap_or_default();
        let speedup = m.speedup_pct.map(|v| format!("{v:.2}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.kernel.name(),
            r.mode,
            window,
            m.total_cycles,
            m.hazards.raw,
            m.hazards.war,
            m.hazards.waw,
            m.commits,
            m.aborts,
            speedup
        );
    }
    s
}

/// One `window speedup_pct` series per kernel, TWC rows only.
pub fn render_plot_data(rows: &[SweepRow]) -> String {
    let mut by_kernel: BTreeMap<&str, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mode == Mode::Twc) {
        by_kernel.entry(r.kernel.name()).or_default().push(r);
    }
    let mut s = String::new();
    for (kernel, rs) in by_kernel {
        let _ = writeln!(s, "# {kernel}\n# window speedup_pct");
        for r in rs {
            let w = r.window.expect("twc rows carry a window");
            let _ = writeln!(s, "{w} {:.2}", r.metrics.speedup_pct.unwrap_or(0.0));
        }
        s.push('\n');
    }
    s
}

/// Writes `sweep.csv` and `speedup.dat` into `dir`; returns their paths.
pub fn emit_report(rows: &[SweepRow], dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("no rows to report".into()));
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join("sweep.csv");
    let plot = dir.join("speedup.dat");
    fs::write(&csv, render_csv(rows)).map_err(io_err(&csv))?;
    fs::write(&plot, render_plot_data(rows)).map_err(io_err(&plot))?;
    Ok((csv, plot))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let params = KernelParams { matrices: 4, dim: 2, repeat: 2, vector_len: 8 };
        RunConfig { verify: true, ..RunConfig::new(KernelKind::Matrix, params, Mode::Strict, None) }
    }

    #[test]
    fn strict_runs_have_no_hazards() {
        for kind in KernelKind::ALL {
            let cfg = RunConfig { kernel: kind, ..small() };
            assert_eq!(run(&cfg).unwrap().metrics.hazards.total(), 0);
        }
    }

    #[test]
    fn sweep_rows_and_report() {
        let rows = sweep(&small(), &STANDARD_WINDOWS).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].mode, Mode::Strict);
        assert_eq!(rows[0].metrics.speedup_pct, Some(0.0));
        assert_eq!(rows.last().unwrap().window, Some(Window::Infinite));
        let dir = tempfile::tempdir().unwrap();
        let (csv, plot) = emit_report(&rows, dir.path()).unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with(CSV_HEADER));
        let again = dir.path().join("again");
        let (csv2, plot2) = emit_report(&rows, &again).unwrap();
        assert_eq!(fs::read(&csv).unwrap(), fs::read(csv2).unwrap());
        assert_eq!(fs::read(plot).unwrap(), fs::read(plot2).unwrap());
    }

    #[test]
    fn single_row_report() {
        let rows = sweep(&small(), &[]).unwrap();
        let one = &rows[..1];
        let dir = tempfile::tempdir().unwrap();
        let (csv, plot) = emit_report(one, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 2);
        assert!(plot.exists());
        assert!(emit_report(&[], dir.path()).is_err());
    }

    #[test]
    fn speedup_formula() {
        assert_eq!(speedup_pct(200, 100), 100.0);
        assert_eq!(speedup_pct(100, 100), 0.0);
    }

    #[test]
    fn toml_config() {
        let cfg = RunConfig::from_toml(
            "kernel = \"MATRIX-DEP\"\nmode = \"twc\"\nwindow = \"inf\"\n[params]\nmatrices = 10\n[topology]\ninter_cluster_latency = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.kernel, KernelKind::MatrixDep);
        assert_eq!(cfg.window, Some(Window::Infinite));
        assert_eq!(cfg.params.matrices, 10);
        assert_eq!(cfg.params.dim, 3);
        assert_eq!(cfg.topology.inter_cluster_latency, 6);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[memory]\nmemory_latency = 1").is_err());
    }
}
