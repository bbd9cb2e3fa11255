//! SHD and runtime against sampling frequency and time horizon.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::causalgraph::{shd, CausalGraph};
use crate::discovery::{run_discovery, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::timeseries::{slice_fraction, subsample, TimeSeriesBatch};

pub const DEFAULT_RATES: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
pub const SWEEP_HEADER: &str = "param,seed,shd,runtime_s";
pub const AGGREGATE_HEADER: &str = "param,mean_shd,std_shd,mean_runtime_s,std_runtime_s";

pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Frequency,
    Horizon,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Frequency => "frequency",
            SweepKind::Horizon => "horizon",
        })
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(SweepKind::Frequency),
            "horizon" => Ok(SweepKind::Horizon),
            other => Err(Error::InvalidArgument(format!("unknown sweep kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub seed: u64,
    pub shd: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    /// Where the baseline graph came from (a path, or `expected`).
    pub baseline: String,
    rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn new(kind: SweepKind, baseline: impl Into<String>, mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.param.total_cmp(&b.param).then(a.seed.cmp(&b.seed)));
        Self {
            kind,
            baseline: baseline.into(),
            rows,
        }
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    /// Distinct parameter values, ascending.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.rows.iter().map(|r| r.param).collect();
        g.dedup();
        g
    }

    pub fn merge(tables: &[SweepTable]) -> Result<SweepTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::IncompatibleTables("no tables to merge".into()))?;
        if tables.iter().any(|t| t.kind != first.kind) {
            return Err(Error::IncompatibleTables("mixed sweep kinds".into()));
        }
        let rows = tables.iter().flat_map(|t| t.rows.iter().copied()).collect();
        Ok(SweepTable::new(first.kind, first.baseline.clone(), rows))
    }
}

/// Discovery plus SHD. A window too short or too flat to learn from (a
/// constant variable, too few rows) counts as an empty graph.
fn timed_shd(batch: &TimeSeriesBatch, baseline: &CausalGraph, cfg: &DiscoveryConfig) -> Result<(usize, f64)> {
    let t = Instant::now();
    let graph = match run_discovery(batch, cfg) {
        Ok(report) => report.graph,
        Err(e @ (Error::DegenerateVariance { .. } | Error::InsufficientData(_) | Error::DegenerateInput(_))) => {
            log::warn!("no graph learned on {} rows: {e}", batch.len());
            CausalGraph::new(batch.variables().to_vec(), cfg.tau_max)?
        }
        Err(e) => return Err(e),
    };
    let runtime = t.elapsed().as_secs_f64();
    Ok((shd(&graph, baseline, false)?, runtime))
}

/// Integer subsampling factor from `batch_rate` down to `rate`.
pub fn rate_factor(batch_rate: f64, rate: f64) -> Result<usize> {
    let ratio = batch_rate / rate;
    let factor = ratio.round();
    if !(rate > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} Hz is not an integer divisor of {batch_rate} Hz"
        )));
    }
    Ok(factor as usize)
}

pub fn sweep_frequency(
    batch: &TimeSeriesBatch,
    baseline: &CausalGraph,
    rates: &[f64],
    cfg: &DiscoveryConfig,
) -> Result<SweepTable> {
    let factors = rates
        .iter()
        .map(|&r| rate_factor(batch.rate_hz(), r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(rates.len());
    for (&rate, factor) in rates.iter().zip(factors) {
        let sub = subsample(batch, factor)?;
        let (shd, runtime_s) = timed_shd(&sub, baseline, cfg)?;
        log::info!("{rate} Hz ({} rows): shd {shd}, {runtime_s:.3} s", sub.len());
        rows.push(SweepRow {
            param: rate,
            seed: cfg.citest.seed,
            shd,
            runtime_s,
        });
    }
    Ok(SweepTable::new(SweepKind::Frequency, "", rows))
}

pub fn sweep_horizon(
    batch: &TimeSeriesBatch,
    baseline: &CausalGraph,
    fractions: &[f64],
    cfg: &DiscoveryConfig,
) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let part = slice_fraction(batch, fraction)?;
        let (shd, runtime_s) = timed_shd(&part, baseline, cfg)?;
        log::info!("fraction {fraction} ({} rows): shd {shd}, {runtime_s:.3} s", part.len());
        rows.push(SweepRow {
            param: fraction,
            seed: cfg.citest.seed,
            shd,
            runtime_s,
        });
    }
    Ok(SweepTable::new(SweepKind::Horizon, "", rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub param: f64,
    pub mean_shd: f64,
    pub std_shd: f64,
    pub mean_runtime_s: f64,
    pub std_runtime_s: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-parameter sample mean and standard deviation over every row of
/// every table. All tables must have the same kind and parameter grid.
pub fn aggregate(tables: &[SweepTable]) -> Result<Vec<AggregateRow>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::IncompatibleTables("no tables to aggregate".into()))?;
    let grid = first.grid();
    for t in tables {
        if t.kind != first.kind {
            return Err(Error::IncompatibleTables(format!("{} table mixed with {}", t.kind, first.kind)));
        }
        if t.grid() != grid {
            return Err(Error::IncompatibleTables("parameter grids differ".into()));
        }
    }
    // Grids are identical across tables, so exact float matches suffice.
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in tables {
        for r in &t.rows {
            let idx = grid.iter().position(|&g| g == r.param).unwrap_or_default();
            let e = groups.entry(idx).or_default();
            e.0.push(r.shd as f64);
            e.1.push(r.runtime_s);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(idx, (shds, times))| {
            // Sort so the floating-point sums do not depend on table order.
            let sorted = |mut v: Vec<f64>| {
                v.sort_by(f64::total_cmp);
                v
            };
            let (mean_shd, std_shd) = mean_std(&sorted(shds));
            let (mean_runtime_s, std_runtime_s) = mean_std(&sorted(times));
            AggregateRow {
                param: grid[idx],
                mean_shd,
                std_shd,
                mean_runtime_s,
                std_runtime_s,
            }
        })
        .collect())
}

pub fn table_to_csv(table: &SweepTable) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in &table.rows {
        out.push_str(&format!("{},{},{},{}\n", r.param, r.seed, r.shd, r.runtime_s));
    }
    out
}

pub fn parse_table_csv(text: &str, kind: SweepKind, baseline: &str) -> Result<SweepTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{SWEEP_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::parse(i + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let bad = |what: &str| Error::parse(i + 1, format!("invalid {what}"));
        let row = SweepRow {
            param: f[0].parse().map_err(|_| bad("param"))?,
            seed: f[1].parse().map_err(|_| bad("seed"))?,
            shd: f[2].parse().map_err(|_| bad("shd"))?,
            runtime_s: f[3].parse().map_err(|_| bad("runtime_s"))?,
        };
        if !(row.runtime_s >= 0.0) {
            return Err(bad("runtime_s"));
        }
        rows.push(row);
    }
    Ok(SweepTable::new(kind, baseline, rows))
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.param, r.mean_shd, r.std_shd, r.mean_runtime_s, r.std_runtime_s
        ));
    }
    out
}

pub fn write_table_csv(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table_to_csv(table)).map_err(|e| Error::io(path, e))
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, aggregate_to_csv(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causalgraph::expected_hrsi_graph;
    use crate::citest::CiTestKind;
    use crate::discovery::Method;
    use crate::features::trace_to_features;
    use crate::hrsim::{run, WorldConfig};
    use proptest::prelude::*;

    fn sim_batch(seed: u64, secs: f64) -> TimeSeriesBatch {
        let cfg = WorldConfig::default().with_seed(seed);
        trace_to_features(&run(&cfg, secs).unwrap(), &cfg).unwrap()
    }

    fn pcmci(seed: u64) -> DiscoveryConfig {
        DiscoveryConfig::new(Method::Pcmci, CiTestKind::ParCorr).with_seed(seed)
    }

    fn table(rows: &[(f64, u64, usize, f64)]) -> SweepTable {
        SweepTable::new(
            SweepKind::Horizon,
            "expected",
            rows.iter()
                .map(|&(param, seed, shd, runtime_s)| SweepRow { param, seed, shd, runtime_s })
                .collect(),
        )
    }

    #[test]
    fn rate_factors() {
        let f: Vec<usize> = DEFAULT_RATES.iter().map(|&r| rate_factor(10.0, r).unwrap()).collect();
        assert_eq!(f, vec![20, 10, 5, 2, 1]);
        let e = rate_factor(10.0, 3.0).unwrap_err();
        assert!(e.to_string().contains('3'));
        assert!(rate_factor(10.0, 20.0).is_err());
    }

    #[test]
    fn frequency_sweep_shape_and_consistency() {
        let b = sim_batch(1, 150.0);
        let base = expected_hrsi_graph();
        let cfg = pcmci(0);
        let t = sweep_frequency(&b, &base, &DEFAULT_RATES, &cfg).unwrap();
        assert_eq!(t.rows().len(), 5);
        assert_eq!(t.grid(), DEFAULT_RATES.to_vec());
        let single = sweep_frequency(&b, &base, &[10.0], &cfg).unwrap();
        let direct = shd(&run_discovery(&b, &cfg).unwrap().graph, &base, false).unwrap();
        assert_eq!(single.rows()[0].shd, direct);
        assert_eq!(t.rows()[4].shd, direct);
        assert!(matches!(
            sweep_frequency(&b, &base, &[3.0], &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn horizon_sweep_full_fraction_matches_direct() {
        let b = sim_batch(2, 150.0);
        let base = expected_hrsi_graph();
        let cfg = pcmci(0);
        let t = sweep_horizon(&b, &base, &default_fractions(), &cfg).unwrap();
        assert_eq!(t.rows().len(), 10);
        let direct = shd(&run_discovery(&b, &cfg).unwrap().graph, &base, false).unwrap();
        assert_eq!(t.rows()[9].shd, direct);
        assert!(sweep_horizon(&b, &base, &[0.0], &cfg).is_err());
    }

    #[test]
    fn flat_window_counts_as_empty_graph() {
        let n = 200;
        let cols = vec![
            (0..n).map(|i| (i as f64 * 0.3).sin()).collect::<Vec<_>>(),
            (0..n).map(|i| (i as f64 * 0.7).cos()).collect(),
            vec![0.0; n],
        ];
        let b = TimeSeriesBatch::from_columns(crate::features::feature_variables(), 10.0, 0.0, &cols).unwrap();
        let t = sweep_horizon(&b, &expected_hrsi_graph(), &[1.0], &pcmci(0)).unwrap();
        assert_eq!(t.rows()[0].shd, 4);
    }

    #[test]
    fn rows_reproducible_in_isolation() {
        let b = sim_batch(3, 150.0);
        let base = expected_hrsi_graph();
        let t = sweep_horizon(&b, &base, &[0.3, 0.7], &pcmci(5)).unwrap();
        for r in t.rows() {
            let again = sweep_horizon(&b, &base, &[r.param], &pcmci(r.seed)).unwrap();
            assert_eq!(again.rows()[0].shd, r.shd);
        }
    }

    #[test]
    fn aggregate_statistics() {
        let a = table(&[(0.5, 0, 2, 1.0), (1.0, 0, 0, 2.0)]);
        let b = table(&[(0.5, 1, 4, 3.0), (1.0, 1, 0, 2.0)]);
        let agg = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(agg[0].param, 0.5);
        assert!((agg[0].mean_shd - 3.0).abs() < 1e-12);
        assert!((agg[0].std_shd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(agg[1].std_shd, 0.0);
        assert_eq!(aggregate(&[b.clone(), a.clone()]).unwrap(), agg);

        let single = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single[0].mean_shd, 2.0);
        assert_eq!(single[0].std_shd, 0.0);
        assert_eq!(aggregate(&[a.clone(), a.clone()]).unwrap()[0].std_shd, 0.0);

        let c = table(&[(0.5, 0, 1, 1.0)]);
        assert!(matches!(aggregate(&[a.clone(), c]), Err(Error::IncompatibleTables(_))));
        let mut f = a.clone();
        f.kind = SweepKind::Frequency;
        assert!(matches!(aggregate(&[a, f]), Err(Error::IncompatibleTables(_))));
    }

    #[test]
    fn rows_sorted() {
        let t = table(&[(1.0, 2, 0, 0.1), (0.5, 9, 1, 0.2), (0.5, 3, 1, 0.2)]);
        let keys: Vec<(f64, u64)> = t.rows().iter().map(|r| (r.param, r.seed)).collect();
        assert_eq!(keys, vec![(0.5, 3), (0.5, 9), (1.0, 2)]);
    }

    #[test]
    fn bad_csv() {
        assert!(parse_table_csv("a,b\n", SweepKind::Horizon, "").is_err());
        assert!(parse_table_csv("param,seed,shd,runtime_s\n1,2,x,0.1\n", SweepKind::Horizon, "").is_err());
        assert!(parse_table_csv("param,seed,shd,runtime_s\n1,2,3,-1\n", SweepKind::Horizon, "").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec((0.001..100.0f64, 0u64..1000, 0usize..12, 0.0..1e4f64), 0..20)) {
            let t = table(&rows);
            let back = parse_table_csv(&table_to_csv(&t), SweepKind::Horizon, "expected").unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
