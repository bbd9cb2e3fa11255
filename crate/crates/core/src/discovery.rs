//! Time-series causal discovery: PCMCI and F-PCMCI.
//!
//! PCMCI runs in two stages. The PC1 stage prunes, per target, the lagged
//! candidate parents through conditional-independence tests of growing
//! condition dimension. The MCI stage then tests every lagged pair
//! conditioning on the parents of both endpoints; significant pairs become
//! edges.
//!
//! F-PCMCI first screens ordered variable pairs by transfer entropy and only
//! lets retained pairs into the PC1/MCI hypothesis space.
//!
//! Every CI test draws its seed from the configured base seed and the test's
//! identity, so results do not depend on evaluation order and tests can run
//! in parallel.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causalgraph::{CausalGraph, LaggedEdge};
use crate::citest::{ci_test, derive_seed, transfer_entropy_significance, CITestConfig, CITestResult, CiTestKind};
use crate::error::{Error, Result};
use crate::timeseries::{standardize, TimeSeriesBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pcmci,
    Fpcmci,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pcmci => "pcmci",
            Method::Fpcmci => "fpcmci",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "pcmci" => Ok(Method::Pcmci),
            "fpcmci" => Ok(Method::Fpcmci),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub method: Method,
    /// Test used by the MCI stage (and its permutation/seed settings).
    pub citest: CITestConfig,
    pub alpha: f64,
    pub tau_max: usize,
    pub pc_alpha: f64,
    /// Condition subsets tried per candidate and condition dimension.
    pub max_combinations: usize,
    /// Test used by the PC1 stage. ParCorr by default, even when the MCI
    /// stage uses GPDC; set to `gpdc` to use GPDC throughout.
    pub pc_stage_test: CiTestKind,
    pub te_k: usize,
    pub te_shuffles: usize,
    pub te_alpha: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            method: Method::Fpcmci,
            citest: CITestConfig {
                kind: CiTestKind::Gpdc,
                ..CITestConfig::default()
            },
            alpha: 0.05,
            tau_max: 1,
            pc_alpha: 0.05,
            max_combinations: 1,
            pc_stage_test: CiTestKind::ParCorr,
            te_k: 4,
            te_shuffles: 100,
            te_alpha: 0.05,
        }
    }
}

impl DiscoveryConfig {
    pub fn new(method: Method, kind: CiTestKind) -> Self {
        let mut cfg = Self {
            method,
            ..Self::default()
        };
        cfg.citest.kind = kind;
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.citest.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.citest.validate()?;
        for (name, v) in [("alpha", self.alpha), ("pc_alpha", self.pc_alpha), ("te_alpha", self.te_alpha)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.tau_max < 1 {
            return Err(Error::Config("tau_max must be >= 1".into()));
        }
        if self.max_combinations < 1 {
            return Err(Error::Config("max_combinations must be >= 1".into()));
        }
        if self.te_k < 1 {
            return Err(Error::Config("te_k must be >= 1".into()));
        }
        if self.method == Method::Fpcmci && self.te_shuffles < 20 {
            return Err(Error::Config("te_shuffles must be >= 20".into()));
        }
        Ok(())
    }
}

/// Lagged source `(variable index, lag)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lagged {
    pub var: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parent {
    pub source: Lagged,
    pub statistic: f64,
    pub p_value: f64,
}

/// Selected parents per target, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentSet {
    pub variables: Vec<String>,
    pub parents: Vec<Vec<Parent>>,
}

impl ParentSet {
    pub fn empty(variables: Vec<String>) -> Self {
        let parents = vec![Vec::new(); variables.len()];
        Self { variables, parents }
    }

    pub fn of(&self, target: usize) -> &[Parent] {
        &self.parents[target]
    }

    pub fn sources_of(&self, target: usize) -> impl Iterator<Item = Lagged> + '_ {
        self.parents[target].iter().map(|p| p.source)
    }

    pub fn contains(&self, target: usize, source: Lagged) -> bool {
        self.sources_of(target).any(|s| s == source)
    }

    pub fn total(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }
}

/// Ordered `(source, target)` variable pairs allowed into the hypothesis space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedPairs {
    pub variables: Vec<String>,
    pub pairs: BTreeSet<(usize, usize)>,
    /// `(source, target, lag, te, p)` for every screened cross pair and lag.
    pub scores: Vec<(usize, usize, usize, f64, f64)>,
}

impl RetainedPairs {
    pub fn all(n_vars: usize, variables: Vec<String>) -> Self {
        let pairs = (0..n_vars).flat_map(|i| (0..n_vars).map(move |j| (i, j))).collect();
        Self {
            variables,
            pairs,
            scores: Vec::new(),
        }
    }

    pub fn contains(&self, source: usize, target: usize) -> bool {
        self.pairs.contains(&(source, target))
    }

    pub fn contains_named(&self, source: &str, target: &str) -> bool {
        let idx = |n: &str| self.variables.iter().position(|v| v == n);
        match (idx(source), idx(target)) {
            (Some(s), Some(t)) => self.contains(s, t),
            _ => false,
        }
    }

    pub fn cross_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied().filter(|(s, t)| s != t)
    }
}

/// Standardized columns with lag-aligned views: `series(v, lag)[k]` is the
/// value of `v` at time `offset + k - lag`.
struct LaggedData {
    cols: Vec<Vec<f64>>,
    offset: usize,
}

impl LaggedData {
    fn new(cols: Vec<Vec<f64>>, offset: usize) -> Self {
        Self { cols, offset }
    }

    fn n(&self) -> usize {
        self.cols[0].len()
    }

    fn series(&self, s: Lagged) -> &[f64] {
        let n = self.n();
        &self.cols[s.var][self.offset - s.lag..n - s.lag]
    }

    fn target(&self, var: usize) -> &[f64] {
        self.series(Lagged { var, lag: 0 })
    }

    fn samples(&self) -> usize {
        self.n().saturating_sub(self.offset)
    }
}

fn standardized_columns(batch: &TimeSeriesBatch) -> Result<Vec<Vec<f64>>> {
    if batch.variables().is_empty() {
        return Err(Error::InvalidArgument("batch has no variables".into()));
    }
    standardize(batch)?.columns()
}

fn check_length(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<()> {
    let need = 10 * cfg.tau_max * batch.variables().len();
    if batch.len() <= need {
        return Err(Error::InsufficientData(format!(
            "{} samples, need more than {need} for tau_max {} over {} variables",
            batch.len(),
            cfg.tau_max,
            batch.variables().len()
        )));
    }
    Ok(())
}

/// Up to `limit` size-`q` subsets of `ranked` (already strongest-first), in
/// lexicographic order of rank, so the first is the `q` strongest.
fn condition_subsets(ranked: &[Lagged], q: usize, limit: usize) -> Vec<Vec<Lagged>> {
    let mut out = Vec::new();
    if q > ranked.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..q).collect();
    loop {
        out.push(idx.iter().map(|&i| ranked[i]).collect());
        if out.len() >= limit {
            break;
        }
        let m = ranked.len();
        let Some(p) = (0..q).rev().find(|&p| idx[p] < p + m - q) else {
            break;
        };
        idx[p] += 1;
        for k in p + 1..q {
            idx[k] = idx[k - 1] + 1;
        }
    }
    out
}

fn lagged_id(s: Lagged) -> u64 {
    ((s.var as u64) << 16) | s.lag as u64
}

fn run_test(
    kind: CiTestKind,
    data: &LaggedData,
    x: Lagged,
    y: usize,
    conds: &[Lagged],
    cfg: &DiscoveryConfig,
    seed: u64,
) -> Result<CITestResult> {
    let z: Vec<&[f64]> = conds.iter().map(|&c| data.series(c)).collect();
    ci_test(kind, data.series(x), data.target(y), &z, cfg.citest.permutations, seed)
}

fn candidates_for(target: usize, n_vars: usize, tau_max: usize, allowed: &RetainedPairs) -> Vec<Lagged> {
    (0..n_vars)
        .filter(|&i| allowed.contains(i, target))
        .flat_map(|var| (1..=tau_max).map(move |lag| Lagged { var, lag }))
        .collect()
}

fn pc1_target(
    data: &LaggedData,
    target: usize,
    candidates: Vec<Lagged>,
    cfg: &DiscoveryConfig,
) -> Result<Vec<Parent>> {
    let mut survivors: Vec<Parent> = candidates
        .into_iter()
        .map(|source| Parent {
            source,
            statistic: f64::INFINITY,
            p_value: 0.0,
        })
        .collect();
    let mut q = 0;
    while q < survivors.len() {
        let ranked: Vec<Lagged> = survivors.iter().map(|p| p.source).collect();
        let mut next = Vec::with_capacity(survivors.len());
        for parent in &survivors {
            let others: Vec<Lagged> = ranked.iter().copied().filter(|&s| s != parent.source).collect();
            let mut weakest: Option<CITestResult> = None;
            let mut independent = false;
            for (k, conds) in condition_subsets(&others, q, cfg.max_combinations).iter().enumerate() {
                let seed = derive_seed(
                    cfg.citest.seed,
                    &[1, target as u64, lagged_id(parent.source), q as u64, k as u64],
                );
                let res = run_test(cfg.pc_stage_test, data, parent.source, target, conds, cfg, seed)?;
                if weakest.is_none_or(|w| res.statistic.abs() < w.statistic.abs()) {
                    weakest = Some(res);
                }
                if res.p_value > cfg.pc_alpha {
                    independent = true;
                    break;
                }
            }
            if let (false, Some(res)) = (independent, weakest) {
                next.push(Parent {
                    source: parent.source,
                    statistic: res.statistic,
                    p_value: res.p_value,
                });
            }
        }
        // Stable sort keeps candidate order among equal strengths.
        next.sort_by(|a, b| b.statistic.abs().total_cmp(&a.statistic.abs()));
        survivors = next;
        q += 1;
    }
    Ok(survivors)
}

fn pc1_on(data: &LaggedData, variables: &[String], allowed: &RetainedPairs, cfg: &DiscoveryConfig) -> Result<ParentSet> {
    let n_vars = variables.len();
    let parents = (0..n_vars)
        .into_par_iter()
        .map(|j| pc1_target(data, j, candidates_for(j, n_vars, cfg.tau_max, allowed), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParentSet {
        variables: variables.to_vec(),
        parents,
    })
}

/// PC1 condition selection on a standardized batch.
pub fn pc1_condition_selection(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<ParentSet> {
    let all = RetainedPairs::all(batch.variables().len(), batch.variables().to_vec());
    pc1_restricted(batch, cfg, &all)
}

fn pc1_restricted(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig, allowed: &RetainedPairs) -> Result<ParentSet> {
    cfg.validate()?;
    check_length(batch, cfg)?;
    let data = LaggedData::new(batch.columns()?, cfg.tau_max);
    pc1_on(&data, batch.variables(), allowed, cfg)
}

/// Conditions of the MCI test `x(t - lag) -> target(t)`: parents of the
/// target without `x` itself, plus the parents of `x` shifted by its lag.
fn mci_conditions(parents: &ParentSet, x: Lagged, target: usize) -> Vec<Lagged> {
    let mut conds: Vec<Lagged> = parents.sources_of(target).filter(|&s| s != x).collect();
    for s in parents.sources_of(x.var) {
        let shifted = Lagged {
            var: s.var,
            lag: s.lag + x.lag,
        };
        if !conds.contains(&shifted) && shifted != x {
            conds.push(shifted);
        }
    }
    conds
}

fn mci_on(
    data: &LaggedData,
    variables: &[String],
    parents: &ParentSet,
    allowed: &RetainedPairs,
    cfg: &DiscoveryConfig,
) -> Result<CausalGraph> {
    let n_vars = variables.len();
    let links: Vec<(Lagged, usize)> = (0..n_vars)
        .flat_map(|j| candidates_for(j, n_vars, cfg.tau_max, allowed).into_iter().map(move |x| (x, j)))
        .collect();
    let results = links
        .par_iter()
        .map(|&(x, j)| {
            let conds = mci_conditions(parents, x, j);
            let seed = derive_seed(cfg.citest.seed, &[2, j as u64, lagged_id(x)]);
            run_test(cfg.citest.kind, data, x, j, &conds, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut graph = CausalGraph::new(variables.to_vec(), cfg.tau_max)?;
    for (&(x, j), res) in links.iter().zip(results) {
        if res.p_value <= cfg.alpha {
            graph.add_edge(
                LaggedEdge::new(variables[x.var].clone(), variables[j].clone(), x.lag)
                    .with_stats(res.statistic, res.p_value.clamp(0.0, 1.0)),
            )?;
        }
    }
    Ok(graph)
}

/// MCI stage on a standardized batch given PC1 parents.
pub fn mci(batch: &TimeSeriesBatch, parents: &ParentSet, cfg: &DiscoveryConfig) -> Result<CausalGraph> {
    let all = RetainedPairs::all(batch.variables().len(), batch.variables().to_vec());
    mci_restricted(batch, parents, cfg, &all)
}

fn mci_restricted(
    batch: &TimeSeriesBatch,
    parents: &ParentSet,
    cfg: &DiscoveryConfig,
    allowed: &RetainedPairs,
) -> Result<CausalGraph> {
    cfg.validate()?;
    if parents.variables != batch.variables() {
        return Err(Error::InvalidArgument("parent set belongs to different variables".into()));
    }
    let max_lag = cfg.tau_max
        + parents
            .parents
            .iter()
            .flatten()
            .map(|p| p.source.lag)
            .max()
            .unwrap_or(0)
            .max(cfg.tau_max);
    if batch.len() <= max_lag + 3 {
        return Err(Error::InsufficientData(format!("{} samples for MCI", batch.len())));
    }
    let data = LaggedData::new(batch.columns()?, max_lag);
    mci_on(&data, batch.variables(), parents, allowed, cfg)
}

/// Transfer-entropy screening of ordered variable pairs. Self pairs are
/// always retained; a cross pair is retained when its shuffle p-value is at
/// most `te_alpha` at any lag in `1..=tau_max`. Expects standardized data.
pub fn te_feature_selection(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<RetainedPairs> {
    cfg.validate()?;
    let cols = batch.columns()?;
    let n_vars = cols.len();
    let jobs: Vec<(usize, usize, usize)> = (0..n_vars)
        .flat_map(|i| (0..n_vars).filter(move |&j| j != i).map(move |j| (i, j)))
        .flat_map(|(i, j)| (1..=cfg.tau_max).map(move |lag| (i, j, lag)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(i, j, lag)| {
            let seed = derive_seed(cfg.citest.seed, &[3, i as u64, j as u64, lag as u64]);
            transfer_entropy_significance(&cols[i], &cols[j], lag, cfg.te_k, cfg.te_shuffles, seed)
                .map(|(te, p)| (i, j, lag, te, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs: BTreeSet<(usize, usize)> = (0..n_vars).map(|i| (i, i)).collect();
    for &(i, j, _, _, p) in &scores {
        if p <= cfg.te_alpha {
            pairs.insert((i, j));
        }
    }
    Ok(RetainedPairs {
        variables: batch.variables().to_vec(),
        pairs,
        scores,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub feature_selection_s: f64,
    pub pc1_s: f64,
    pub mci_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct DiscoveryReport {
    pub graph: CausalGraph,
    pub parents: ParentSet,
    pub retained: Option<RetainedPairs>,
    pub timings: StageTimings,
}

/// Standardize, optionally screen pairs, then PC1 and MCI.
pub fn run_discovery(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<DiscoveryReport> {
    let start = Instant::now();
    cfg.validate()?;
    check_length(batch, cfg)?;
    let cols = standardized_columns(batch)?;
    let standardized = TimeSeriesBatch::from_columns(batch.variables().to_vec(), batch.rate_hz(), batch.start_time(), &cols)?;
    let variables = batch.variables();
    let mut timings = StageTimings::default();

    let retained = match cfg.method {
        Method::Pcmci => None,
        Method::Fpcmci => {
            let t = Instant::now();
            let r = te_feature_selection(&standardized, cfg)?;
            timings.feature_selection_s = t.elapsed().as_secs_f64();
            log::info!(
                "feature selection kept {} cross pairs in {:.3} s",
                r.cross_pairs().count(),
                timings.feature_selection_s
            );
            Some(r)
        }
    };
    let all = RetainedPairs::all(variables.len(), variables.to_vec());
    let allowed = retained.as_ref().unwrap_or(&all);

    let t = Instant::now();
    let pc_data = LaggedData::new(cols.clone(), cfg.tau_max);
    let parents = pc1_on(&pc_data, variables, allowed, cfg)?;
    timings.pc1_s = t.elapsed().as_secs_f64();
    log::info!("PC1 selected {} parents in {:.3} s", parents.total(), timings.pc1_s);

    let t = Instant::now();
    let max_lag = cfg.tau_max + parents.parents.iter().flatten().map(|p| p.source.lag).max().unwrap_or(0).max(cfg.tau_max);
    let mci_data = LaggedData::new(cols, max_lag);
    if mci_data.samples() < 4 {
        return Err(Error::InsufficientData("too few samples for MCI".into()));
    }
    let graph = mci_on(&mci_data, variables, &parents, allowed, cfg)?;
    timings.mci_s = t.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();
    log::info!("MCI found {} edges in {:.3} s", graph.len(), timings.mci_s);

    Ok(DiscoveryReport {
        graph,
        parents,
        retained,
        timings,
    })
}

/// PCMCI regardless of `cfg.method`.
pub fn run_pcmci(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<CausalGraph> {
    let cfg = DiscoveryConfig {
        method: Method::Pcmci,
        ..cfg.clone()
    };
    run_discovery(batch, &cfg).map(|r| r.graph)
}

/// F-PCMCI regardless of `cfg.method`.
pub fn run_fpcmci(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig) -> Result<CausalGraph> {
    let cfg = DiscoveryConfig {
        method: Method::Fpcmci,
        ..cfg.clone()
    };
    run_discovery(batch, &cfg).map(|r| r.graph)
}

/// PCMCI restricted to `allowed` pairs (the F-PCMCI back half).
pub fn run_restricted(batch: &TimeSeriesBatch, cfg: &DiscoveryConfig, allowed: &RetainedPairs) -> Result<CausalGraph> {
    cfg.validate()?;
    check_length(batch, cfg)?;
    let std_batch = standardize(batch)?;
    let parents = pc1_restricted(&std_batch, cfg, allowed)?;
    mci_restricted(&std_batch, &parents, cfg, allowed)
}
