//! Streaming batch pipeline.
//!
//! A collector thread turns a row source (live simulation or CSV replay) into
//! fixed-length batch files in a pool directory. A worker thread runs causal
//! discovery on each finalized batch while collection continues. The two
//! share no state: a batch becomes visible to the worker when its file is
//! renamed into place, and two channels carry the end-of-stream and stop
//! signals.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::causalgraph::{expected_hrsi_graph, shd, to_dot, to_text};
use crate::discovery::{run_discovery, DiscoveryConfig, DiscoveryReport};
use crate::error::{Error, Result};
use crate::features::{decimation_factor, feature_variables, FeatureExtractor};
use crate::hrsim::{Simulator, WorldConfig};
use crate::timeseries::{read_csv, to_csv_string, TimeSeriesBatch};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Simulate {
        #[serde(default)]
        world: WorldConfig,
        duration_s: f64,
    },
    Replay {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: Source,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_batch_len")]
    pub batch_len: usize,
    pub pool_dir: PathBuf,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    #[serde(default)]
    pub max_batches: Option<usize>,
    /// Pace rows by wall-clock at `rate_hz` instead of as fast as possible.
    #[serde(default)]
    pub realtime: bool,
}

fn default_rate() -> f64 {
    10.0
}

fn default_batch_len() -> usize {
    1500
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; a relative pool or replay path is taken relative
    /// to the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.pool_dir.is_relative() {
            cfg.pool_dir = base.join(&cfg.pool_dir);
        }
        if let Source::Replay { path } = &mut cfg.source {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_len < 100 {
            return Err(Error::Config(format!("batch_len must be >= 100, got {}", self.batch_len)));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        if self.max_batches == Some(0) {
            return Err(Error::Config("max_batches must be >= 1".into()));
        }
        if let Source::Simulate { world, duration_s } = &self.source {
            world.validate()?;
            if !(*duration_s >= 0.0) {
                return Err(Error::Config("duration_s must be >= 0".into()));
            }
            decimation_factor(world, self.rate_hz).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.discovery.validate()
    }
}

fn batch_name(seq: usize) -> String {
    format!("batch_{seq:05}")
}

fn parse_seq(file_name: &str) -> Option<usize> {
    let digits = file_name.strip_prefix("batch_")?.strip_suffix(".csv")?;
    (digits.len() == 5 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

/// Finalized batch files in sequence order.
pub fn list_batches(pool: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(pool).map_err(|e| Error::io(pool, e))? {
        let entry = entry.map_err(|e| Error::io(pool, e))?;
        if let Some(seq) = entry.file_name().to_str().and_then(parse_seq) {
            out.push((seq, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn sibling(batch: &Path, ext: &str) -> PathBuf {
    batch.with_extension(ext)
}

/// Writes to a hidden temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn is_processed(batch: &Path) -> bool {
    sibling(batch, "graph").exists() || sibling(batch, "error").exists()
}

/// A row-at-a-time source of `(t, values)`.
enum RowStream {
    Sim {
        sim: Simulator,
        extractor: FeatureExtractor,
        ticks_left: usize,
        factor: usize,
        emitted: usize,
    },
    Replay {
        batch: TimeSeriesBatch,
        next: usize,
    },
}

impl RowStream {
    fn open(cfg: &PipelineConfig) -> Result<(Self, Vec<String>)> {
        match &cfg.source {
            Source::Simulate { world, duration_s } => {
                let factor = decimation_factor(world, cfg.rate_hz)?;
                let rows = (duration_s * cfg.rate_hz + 1e-9).floor() as usize;
                // One extra tick: the first feature row needs a previous position.
                let ticks_left = if rows == 0 { 0 } else { rows * factor + 1 };
                let stream = RowStream::Sim {
                    sim: Simulator::new(world.clone())?,
                    extractor: FeatureExtractor::new(world.r_enc),
                    ticks_left,
                    factor,
                    emitted: 0,
                };
                Ok((stream, feature_variables()))
            }
            Source::Replay { path } => {
                let batch = read_csv(path)?;
                if batch.len() >= 2 && (batch.rate_hz() - cfg.rate_hz).abs() > 1e-6 * cfg.rate_hz {
                    return Err(Error::Config(format!(
                        "replay file sampled at {} Hz, config rate_hz is {}",
                        batch.rate_hz(),
                        cfg.rate_hz
                    )));
                }
                let vars = batch.variables().to_vec();
                Ok((RowStream::Replay { batch, next: 0 }, vars))
            }
        }
    }

    fn next_row(&mut self) -> Option<(f64, Vec<Option<f64>>)> {
        match self {
            RowStream::Sim {
                sim,
                extractor,
                ticks_left,
                factor,
                emitted,
            } => loop {
                if *ticks_left == 0 {
                    return None;
                }
                *ticks_left -= 1;
                let rec = sim.next()?;
                if let Some(row) = extractor.push(&rec) {
                    // The first feature row lands on tick 1; keep every
                    // `factor`-th from there.
                    let tick = *emitted;
                    *emitted += 1;
                    if tick % *factor == 0 {
                        return Some((row.t, vec![Some(row.v), Some(row.d_g), Some(row.r)]));
                    }
                }
            },
            RowStream::Replay { batch, next } => {
                let i = *next;
                if i >= batch.len() {
                    return None;
                }
                *next += 1;
                Some((batch.timestamps()[i], batch.rows()[i].clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectStats {
    pub batches: Vec<String>,
    pub rows_emitted: usize,
    pub rows_collected: usize,
    /// Rows of a final partial batch under half of `batch_len`.
    pub rows_discarded: usize,
    /// Rows in progress when a stop request arrived.
    pub rows_abandoned: usize,
    pub max_gap_s: f64,
}

struct Pending {
    variables: Vec<String>,
    rate_hz: f64,
    times: Vec<f64>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Pending {
    fn finalize(&mut self, pool: &Path, seq: usize) -> Result<String> {
        let times = std::mem::take(&mut self.times);
        let rows = std::mem::take(&mut self.rows);
        let batch = TimeSeriesBatch::with_timestamps(self.variables.clone(), self.rate_hz, times, rows)?;
        let name = batch_name(seq);
        write_atomic(&pool.join(format!("{name}.csv")), &to_csv_string(&batch))?;
        log::info!("finalized {name} ({} rows)", batch.len());
        Ok(name)
    }
}

/// Runs the collector until the source is exhausted or `stop` fires.
/// Sequence numbers continue after any batch already in the pool.
pub fn collect(cfg: &PipelineConfig, stop: Option<&Receiver<()>>) -> Result<CollectStats> {
    cfg.validate()?;
    let pool = cfg.pool_dir.as_path();
    fs::create_dir_all(pool).map_err(|e| Error::io(pool, e))?;
    let mut seq = list_batches(pool)?.last().map_or(0, |(s, _)| s + 1);
    let (mut stream, variables) = RowStream::open(cfg)?;
    let mut pending = Pending {
        variables,
        rate_hz: cfg.rate_hz,
        times: Vec::with_capacity(cfg.batch_len),
        rows: Vec::with_capacity(cfg.batch_len),
    };
    let mut stats = CollectStats::default();
    let start = Instant::now();
    let mut last: Option<Instant> = None;

    loop {
        if stop.is_some_and(|rx| rx.try_recv().is_ok()) {
            stats.rows_abandoned = pending.rows.len();
            log::info!("collector stopped; {} in-progress rows dropped", stats.rows_abandoned);
            return Ok(stats);
        }
        if cfg.realtime {
            let due = start + Duration::from_secs_f64(stats.rows_emitted as f64 / cfg.rate_hz);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        let Some((t, row)) = stream.next_row() else {
            break;
        };
        let now = Instant::now();
        if let Some(prev) = last {
            stats.max_gap_s = stats.max_gap_s.max((now - prev).as_secs_f64());
        }
        last = Some(now);
        stats.rows_emitted += 1;
        pending.times.push(t);
        pending.rows.push(row);
        if pending.rows.len() == cfg.batch_len {
            stats.batches.push(pending.finalize(pool, seq)?);
            stats.rows_collected += cfg.batch_len;
            seq += 1;
        }
    }

    let left = pending.rows.len();
    if left > 0 {
        if 2 * left >= cfg.batch_len {
            stats.batches.push(pending.finalize(pool, seq)?);
            stats.rows_collected += left;
        } else {
            log::info!("discarding final partial batch of {left} rows");
            stats.rows_discarded = left;
        }
    }
    Ok(stats)
}

/// Discovery entry point used by the worker; replaceable for testing.
pub type DiscoverFn = dyn Fn(&TimeSeriesBatch, &DiscoveryConfig) -> Result<DiscoveryReport> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub batch: String,
    pub rows: usize,
    pub discovery_s: f64,
    pub feature_selection_s: f64,
    pub pc1_s: f64,
    pub mci_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch: String,
    pub rows: Option<usize>,
    pub edges: Option<usize>,
    /// Cross-edge SHD against the expected interaction graph, when the batch
    /// has its variables.
    pub shd: Option<usize>,
    pub discovery_s: Option<f64>,
    pub error: Option<String>,
}

/// Runs discovery on one batch file and writes its result files. The
/// `.graph` document is written last; a failure leaves an `.error` record.
pub fn process_batch(batch_path: &Path, cfg: &DiscoveryConfig, discover: &DiscoverFn) -> BatchResult {
    let name = batch_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let mut result = BatchResult {
        batch: name.clone(),
        rows: None,
        edges: None,
        shd: None,
        discovery_s: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let batch = read_csv(batch_path)?;
        result.rows = Some(batch.len());
        let t = Instant::now();
        let report = discover(&batch, cfg)?;
        let elapsed = t.elapsed().as_secs_f64();
        result.discovery_s = Some(elapsed);
        result.edges = Some(report.graph.len());
        let expected = expected_hrsi_graph();
        if report.graph.variables() == expected.variables() {
            result.shd = shd(&report.graph, &expected, false).ok();
        }
        let timing = BatchTiming {
            batch: name.clone(),
            rows: batch.len(),
            discovery_s: elapsed,
            feature_selection_s: report.timings.feature_selection_s,
            pc1_s: report.timings.pc1_s,
            mci_s: report.timings.mci_s,
        };
        let timing = serde_json::to_string_pretty(&timing).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        write_atomic(&sibling(batch_path, "dot"), &to_dot(&report.graph))?;
        write_atomic(&sibling(batch_path, "timing"), &(timing + "\n"))?;
        let _ = fs::remove_file(sibling(batch_path, "error"));
        write_atomic(&sibling(batch_path, "graph"), &to_text(&report.graph))
    })();
    if let Err(e) = outcome {
        log::warn!("discovery failed on {name}: {e}");
        if let Err(w) = write_atomic(&sibling(batch_path, "error"), &format!("{e}\n")) {
            log::error!("cannot write error record for {name}: {w}");
        }
        result.error = Some(e.to_string());
    }
    result
}

/// Processes unprocessed batches oldest-first until the collector reports
/// completion (via `done`) and the pool is drained, or `max_batches` have
/// been handled. Sends on `stop` when it quits early.
pub fn discovery_worker(
    pool: &Path,
    cfg: &DiscoveryConfig,
    discover: &DiscoverFn,
    max_batches: Option<usize>,
    done: &Receiver<()>,
    stop: Option<&Sender<()>>,
) -> Vec<BatchResult> {
    let mut results = Vec::new();
    let mut collector_done = false;
    loop {
        let pending: Vec<PathBuf> = match list_batches(pool) {
            Ok(b) => b.into_iter().map(|(_, p)| p).filter(|p| !is_processed(p)).collect(),
            Err(e) => {
                log::error!("cannot list pool: {e}");
                Vec::new()
            }
        };
        if let Some(next) = pending.first() {
            results.push(process_batch(next, cfg, discover));
            if max_batches.is_some_and(|m| results.len() >= m) {
                if let Some(tx) = stop {
                    let _ = tx.send(());
                }
                return results;
            }
            continue;
        }
        if collector_done {
            return results;
        }
        match done.recv_timeout(POLL) {
            Ok(()) | Err(RecvTimeoutError::Disconnected) => collector_done = true,
            Err(RecvTimeoutError::Timeout) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub batches_produced: usize,
    pub batches_processed: usize,
    pub rows_emitted: usize,
    pub rows_collected: usize,
    pub rows_discarded: usize,
    pub rows_abandoned: usize,
    pub max_collection_gap_s: f64,
    pub wall_s: f64,
    pub results: Vec<BatchResult>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    run_pipeline_with(cfg, Arc::new(run_discovery))
}

/// `run_pipeline` with a caller-supplied discovery function.
pub fn run_pipeline_with(cfg: &PipelineConfig, discover: Arc<DiscoverFn>) -> Result<PipelineSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.pool_dir).map_err(|e| Error::io(&cfg.pool_dir, e))?;
    let start = Instant::now();
    let (done_tx, done_rx) = mpsc::channel::<()>();
    let (stop_tx, stop_rx) = mpsc::channel::<()>();

    let worker = {
        let pool = cfg.pool_dir.clone();
        let dcfg = cfg.discovery.clone();
        let max = cfg.max_batches;
        thread::Builder::new()
            .name("discovery".into())
            .spawn(move || discovery_worker(&pool, &dcfg, discover.as_ref(), max, &done_rx, Some(&stop_tx)))
            .map_err(|e| Error::io(&cfg.pool_dir, e))?
    };

    let collected = collect(cfg, Some(&stop_rx));
    // The worker drains the pool once it hears the collector is done,
    // whether or not collection succeeded.
    let _ = done_tx.send(());
    let results = worker
        .join()
        .map_err(|_| Error::NumericalFailure("discovery worker panicked".into()))?;
    let stats = collected?;

    Ok(PipelineSummary {
        batches_produced: stats.batches.len(),
        batches_processed: results.len(),
        rows_emitted: stats.rows_emitted,
        rows_collected: stats.rows_collected,
        rows_discarded: stats.rows_discarded,
        rows_abandoned: stats.rows_abandoned,
        max_collection_gap_s: stats.max_gap_s,
        wall_s: start.elapsed().as_secs_f64(),
        results,
    })
}
