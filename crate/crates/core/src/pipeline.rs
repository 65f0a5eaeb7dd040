//! Two-step estimation and the Monte Carlo scenario runner.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baum_welch::{fit, identifiable_grid, EmissionUpdate, FitConfig, FitResult};
use crate::bic_ctm::{bootstrap_sample, ctm_prune, default_depth, PrunedTreeResult};
use crate::contamination::{contaminate, NoiseSpec, Regime};
use crate::context_tree::ContextTree;
use crate::error::{Error, Result};
use crate::hmm_embedding::{EmbedMode, TransitionBlock};
use crate::presets;
use crate::rng::{derive_seed, stream_id};
use crate::scalar::Real;
use crate::sequences::{ContextString, SymbolSequence};
use crate::vlmc_source::{block_transition_counts, sample_vlmc, VlmcModel, DEFAULT_BURN_IN};

/// Settings for [`two_step_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub fit: FitConfig,
    /// Bootstrap length; the input length when unset.
    pub m: Option<usize>,
    /// Candidate depth; `min(default_depth(m), k)` when unset.
    pub depth: Option<usize>,
    pub seed: u64,
}

impl EstimateConfig {
    pub fn new(fit: FitConfig, seed: u64) -> Self {
        EstimateConfig { fit, m: None, depth: None, seed }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStepEstimate<F = f64> {
    /// Pruned tree with transitions read off `Â*`.
    pub tree: ContextTree<f64>,
    pub eps_hat: f64,
    pub fit: FitResult<F>,
    pub pruned: PrunedTreeResult,
    /// Occupancy of each block state in the bootstrap sample.
    pub block_weights: Vec<f64>,
    pub m: usize,
    pub depth: usize,
}

impl<F: Real> TwoStepEstimate<F> {
    /// Next-symbol law of `ctx` aggregated from the fitted block chain.
    pub fn transitions_for(&self, ctx: &ContextString) -> Result<Vec<f64>> {
        aggregate_transitions(&self.fit.params.transitions, &self.block_weights, ctx)
    }
}

/// Weighted average of the `Â*` rows whose block ends in `ctx`.
///
/// A context longer than the block length uses the single block formed by
/// its last `k` symbols. Without any weight on the matching blocks the rows
/// are averaged uniformly.
pub fn aggregate_transitions<F: Real>(a_star: &TransitionBlock<F>, weights: &[f64], ctx: &ContextString) -> Result<Vec<f64>> {
    let alphabet = a_star.alphabet();
    alphabet.ensure_same(ctx.alphabet())?;
    let n = alphabet.size();
    let k = a_star.k();
    let ctx = if ctx.len() > k { ctx.suffix(k) } else { ctx.clone() };
    let modulus = alphabet.num_strings(ctx.len());
    let code = ctx.code();
    let matching: Vec<usize> = (0..a_star.num_states()).filter(|w| w % modulus == code).collect();
    let total: f64 = matching.iter().map(|&w| weights[w]).sum();
    let mut row = vec![0.0; n];
    for &w in &matching {
        let weight = if total > 0.0 { weights[w] / total } else { 1.0 / matching.len() as f64 };
        for (acc, p) in row.iter_mut().zip(a_star.row(w)) {
            *acc += weight * p.as_f64();
        }
    }
    Ok(row)
}

/// Fit the block HMM, bootstrap from `Â*`, prune by BIC and attach
/// aggregated transitions to the selected contexts.
pub fn two_step_estimate<F: Real>(z: &SymbolSequence, cfg: &EstimateConfig) -> Result<TwoStepEstimate<F>> {
    let fitted = fit::<F>(z, &cfg.fit)?;
    let m = cfg.m.unwrap_or(z.len());
    let depth = match cfg.depth {
        Some(d) => d,
        None => default_depth(m, z.alphabet())?.min(cfg.fit.k),
    };
    let boot = bootstrap_sample(&fitted.params.transitions, &fitted.params.initial, m, cfg.seed)?;
    let pruned = ctm_prune(&boot, depth, m)?;
    let n = z.alphabet().size();
    let block_weights: Vec<f64> =
        block_transition_counts(&boot, cfg.fit.k).chunks(n).map(|c| c.iter().sum::<u64>() as f64).collect();
    let rows = pruned
        .tree
        .contexts()
        .iter()
        .map(|c| aggregate_transitions(&fitted.params.transitions, &block_weights, c).map(Some))
        .collect::<Result<Vec<_>>>()?;
    let tree = ContextTree::new(z.alphabet(), pruned.tree.contexts().to_vec(), rows)?;
    Ok(TwoStepEstimate { tree, eps_hat: fitted.eps_hat, fit: fitted, pruned, block_weights, m, depth })
}

/// One Monte Carlo study: a true tree, a noise regime and a sweep of levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub tree: ContextTree<f64>,
    pub regime: Regime,
    pub sweep: Vec<f64>,
    pub sample_size: usize,
    pub replications: usize,
    pub k: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Noise grid for the fit; the identifiable default grid when unset.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub mode: EmbedMode,
    #[serde(default)]
    pub emission_update: EmissionUpdate,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub depth: Option<usize>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_max_iter() -> usize {
    FitConfig::DEFAULT_MAX_ITER
}

fn default_rel_tol() -> f64 {
    FitConfig::DEFAULT_REL_TOL
}

/// Sweep used at desk scale for both regimes.
pub const DESK_SWEEP: [f64; 5] = [0.01, 0.05, 0.10, 0.25, 0.45];

impl ScenarioSpec {
    fn preset(name: &str, tree: ContextTree<f64>, regime: Regime) -> Self {
        let k = tree.depth();
        ScenarioSpec {
            name: name.to_string(),
            tree,
            regime,
            sweep: DESK_SWEEP.to_vec(),
            sample_size: 10_000,
            replications: 20,
            k,
            seed: 1,
            burn_in: DEFAULT_BURN_IN,
            grid: None,
            max_iter: FitConfig::DEFAULT_MAX_ITER,
            rel_tol: FitConfig::DEFAULT_REL_TOL,
            mode: EmbedMode::Symbol,
            emission_update: EmissionUpdate::Fixed,
            m: None,
            depth: None,
        }
    }

    pub fn scenario1(regime: Regime) -> Self {
        Self::preset("scenario1", presets::scenario1_tree(), regime)
    }

    pub fn scenario2(regime: Regime) -> Self {
        Self::preset("scenario2", presets::scenario2_tree(), regime)
    }

    /// Full sweep `0.01..0.99` (capped at `0.90` for the product regime)
    /// with 100 replications of length 30000.
    pub fn full(mut self) -> Self {
        let cap = match self.regime {
            Regime::Sum => 99,
            Regime::Product => 90,
        };
        self.sweep = (1..=cap).map(|j| j as f64 / 100.0).collect();
        self.replications = 100;
        self.sample_size = 30_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let diag = self.tree.validate();
        if !diag.is_valid() {
            return Err(Error::InvalidTree(format!("{diag:?}")));
        }
        if let Some(bad) = self.sweep.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::InvalidParameter(format!("sweep value {bad} outside (0, 1)")));
        }
        if self.k < self.tree.depth() || self.k == 0 {
            return Err(Error::InvalidParameter(format!("k={} below tree depth {}", self.k, self.tree.depth())));
        }
        if self.sample_size <= self.k || self.replications == 0 {
            return Err(Error::InvalidParameter("sample size must exceed k and replications must be positive".into()));
        }
        self.fit_config().validate()
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            noise_grid: self.grid.clone().unwrap_or_else(|| identifiable_grid(self.regime, self.tree.alphabet())),
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            k: self.k,
            mode: self.mode,
            regime: self.regime,
            emission_update: self.emission_update,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Mean, sample standard deviation and empirical 95% range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl Stat {
    /// `sd` is 0 for a single value; `NaN` fields for none.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { n, mean: f64::NAN, sd: f64::NAN, lo95: f64::NAN, hi95: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Stat { n, mean, sd, lo95: quantile(&sorted, 0.025), hi95: quantile(&sorted, 0.975) }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub point: usize,
    pub eps: f64,
    pub replication: usize,
    pub eps_hat: Option<f64>,
    pub implied_eps: Option<f64>,
    pub loglik: Option<f64>,
    pub converged: Option<bool>,
    /// Contexts of the pruned tree.
    pub tree: Vec<String>,
    pub recovered: bool,
    pub root_only: bool,
    /// Aggregated next-symbol laws for the true contexts.
    pub true_context_rows: Vec<Vec<f64>>,
    /// Largest drop between consecutive EM log-likelihoods over all restarts.
    pub max_trace_drop: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextStat {
    pub context: String,
    pub p0: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub eps: f64,
    pub replications: usize,
    pub failures: usize,
    pub eps_hat: Stat,
    pub implied_eps: Stat,
    pub contexts: Vec<ContextStat>,
    pub recovery_rate: f64,
    pub root_only_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_replication_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub name: String,
    pub regime: Regime,
    pub sample_size: usize,
    pub k: usize,
    pub contexts: Vec<String>,
    pub points: Vec<PointSummary>,
    pub records: Vec<ReplicationRecord>,
    pub runtime: RuntimeStats,
}

impl EstimationReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn run_replication(spec: &ScenarioSpec, model: &VlmcModel<f64>, point: usize, replication: usize) -> ReplicationRecord {
    let start = Instant::now();
    let eps = spec.sweep[point];
    let truth = spec.tree.context_set();
    let outcome = (|| -> Result<TwoStepEstimate<f64>> {
        // the hidden sample depends on the replication only, so every noise
        // level of a sweep sees the same chains
        let x = sample_vlmc(model, spec.sample_size, derive_seed(spec.seed, stream_id(0, replication, 0)))?;
        let noise = NoiseSpec::from_level(spec.regime, spec.tree.alphabet(), eps)?;
        let z = contaminate(&x, &noise, derive_seed(spec.seed, stream_id(point, replication, 1)))?;
        let cfg = EstimateConfig {
            fit: spec.fit_config(),
            m: spec.m,
            depth: spec.depth,
            seed: derive_seed(spec.seed, stream_id(point, replication, 2)),
        };
        two_step_estimate(&z, &cfg)
    })();
    let mut record = ReplicationRecord {
        point,
        eps,
        replication,
        eps_hat: None,
        implied_eps: None,
        loglik: None,
        converged: None,
        tree: Vec::new(),
        recovered: false,
        root_only: false,
        true_context_rows: Vec::new(),
        max_trace_drop: None,
        error: None,
        seconds: 0.0,
    };
    match outcome {
        Ok(est) => {
            record.eps_hat = Some(est.eps_hat);
            record.implied_eps = Some(est.fit.implied_eps);
            record.loglik = Some(est.fit.loglik);
            record.converged = Some(est.fit.converged);
            record.tree = est.tree.contexts().iter().map(|c| c.to_string()).collect();
            record.recovered = est.tree.context_set() == truth;
            record.root_only = est.tree.len() == 1 && est.tree.contexts()[0].is_empty();
            record.max_trace_drop = Some(
                est.fit.restart_table.iter().flat_map(|r| r.trace.windows(2)).map(|w| w[0] - w[1]).fold(0.0, f64::max),
            );
            match spec.tree.contexts().iter().map(|c| est.transitions_for(c)).collect::<Result<Vec<_>>>() {
                Ok(rows) => record.true_context_rows = rows,
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.seconds = start.elapsed().as_secs_f64();
    record
}

fn summarize(spec: &ScenarioSpec, point: usize, records: &[ReplicationRecord]) -> PointSummary {
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.point == point && r.error.is_none()).collect();
    let total = records.iter().filter(|r| r.point == point).count();
    let rate = |f: fn(&ReplicationRecord) -> bool| {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|r| f(r)).count() as f64 / ok.len() as f64
        }
    };
    PointSummary {
        eps: spec.sweep[point],
        replications: ok.len(),
        failures: total - ok.len(),
        eps_hat: Stat::of(&ok.iter().filter_map(|r| r.eps_hat).collect::<Vec<_>>()),
        implied_eps: Stat::of(&ok.iter().filter_map(|r| r.implied_eps).collect::<Vec<_>>()),
        contexts: spec
            .tree
            .contexts()
            .iter()
            .enumerate()
            .map(|(i, c)| ContextStat {
                context: c.to_string(),
                p0: Stat::of(&ok.iter().map(|r| r.true_context_rows[i][0]).collect::<Vec<_>>()),
            })
            .collect(),
        recovery_rate: rate(|r| r.recovered),
        root_only_rate: rate(|r| r.root_only),
    }
}

/// Simulate, contaminate and estimate every (level, replication) pair.
/// Failures are recorded per replication and never abort the run.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<EstimationReport> {
    spec.validate()?;
    let start = Instant::now();
    let model = VlmcModel::new(spec.tree.clone(), spec.burn_in)?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.sweep.len()).flat_map(|p| (0..spec.replications).map(move |r| (p, r))).collect();
    let records: Vec<ReplicationRecord> =
        jobs.par_iter().map(|&(p, r)| run_replication(spec, &model, p, r)).collect();
    let points = (0..spec.sweep.len()).map(|p| summarize(spec, p, &records)).collect();
    let mean_rep = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.seconds).sum::<f64>() / records.len() as f64
    };
    Ok(EstimationReport {
        name: spec.name.clone(),
        regime: spec.regime,
        sample_size: spec.sample_size,
        k: spec.k,
        contexts: spec.tree.contexts().iter().map(|c| c.to_string()).collect(),
        points,
        records,
        runtime: RuntimeStats { total_seconds: start.elapsed().as_secs_f64(), mean_replication_seconds: mean_rep },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parse(format!("unknown format {other:?}"))),
        }
    }
}

pub const ESTIMATES_HEADER: &str = "eps,context,statistic,value";
pub const SWEEP_HEADER: &str =
    "eps,eps_hat_mean,eps_hat_sd,eps_hat_lo95,eps_hat_hi95,implied_eps_mean,recovery_rate,root_only_rate,replications,failures";

/// Long-format estimates: per level, `p0_mean`/`p0_sd` for each true context
/// followed by `eps_hat_mean`/`eps_hat_sd`.
pub fn write_estimates_csv<W: Write>(report: &EstimationReport, mut out: W) -> Result<()> {
    writeln!(out, "{ESTIMATES_HEADER}")?;
    for p in &report.points {
        for c in &p.contexts {
            writeln!(out, "{},{},p0_mean,{}", p.eps, c.context, c.p0.mean)?;
            writeln!(out, "{},{},p0_sd,{}", p.eps, c.context, c.p0.sd)?;
        }
        writeln!(out, "{},,eps_hat_mean,{}", p.eps, p.eps_hat.mean)?;
        writeln!(out, "{},,eps_hat_sd,{}", p.eps, p.eps_hat.sd)?;
    }
    Ok(())
}

/// One row per noise level, for estimate-versus-noise plots.
pub fn write_sweep_csv<W: Write>(report: &EstimationReport, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in &report.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.eps,
            p.eps_hat.mean,
            p.eps_hat.sd,
            p.eps_hat.lo95,
            p.eps_hat.hi95,
            p.implied_eps.mean,
            p.recovery_rate,
            p.root_only_rate,
            p.replications,
            p.failures
        )?;
    }
    Ok(())
}

/// Write the report under `dir`; returns the files written.
pub fn emit_report(report: &EstimationReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let est = dir.join(format!("{}_estimates.csv", report.name));
            let mut w = BufWriter::new(File::create(&est)?);
            write_estimates_csv(report, &mut w)?;
            w.flush()?;
            written.push(est);
            let sweep = dir.join(format!("{}_noise_sweep.csv", report.name));
            let mut w = BufWriter::new(File::create(&sweep)?);
            write_sweep_csv(report, &mut w)?;
            w.flush()?;
            written.push(sweep);
        }
        ReportFormat::Json => {
            let path = dir.join(format!("{}_report.json", report.name));
            let mut w = BufWriter::new(File::create(&path)?);
            serde_json::to_writer_pretty(&mut w, report)?;
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::Alphabet;

    fn bin(s: &str) -> ContextString {
        ContextString::parse(Alphabet::BINARY, s).unwrap()
    }

    fn small_spec() -> ScenarioSpec {
        let mut spec = ScenarioSpec::scenario1(Regime::Sum);
        spec.sample_size = 1500;
        spec.replications = 2;
        spec.sweep = vec![0.05, 0.2];
        spec.grid = Some(vec![0.05, 0.1, 0.2]);
        spec
    }

    #[test]
    fn presets_have_expected_contexts() {
        let s1 = ScenarioSpec::scenario1(Regime::Sum);
        let p0: Vec<(String, f64)> = s1
            .tree
            .contexts()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), s1.tree.transitions(i).unwrap()[0]))
            .collect();
        assert_eq!(
            p0,
            [("010", 0.05), ("110", 0.87), ("00", 0.27), ("1", 0.38)].map(|(c, p)| (c.to_string(), p)).to_vec()
        );
        let s2 = ScenarioSpec::scenario2(Regime::Product);
        assert_eq!(s2.k, 4);
        assert_eq!(s2.tree.len(), 5);
        assert_eq!(s2.clone().full().sweep.last().copied(), Some(0.90));
        assert_eq!(ScenarioSpec::scenario1(Regime::Sum).full().sweep.len(), 99);
        let bad = ScenarioSpec { sweep: vec![0.0], ..s1.clone() };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&s1).unwrap();
        let back = ScenarioSpec::from_json_str(&json).unwrap();
        assert_eq!(back.tree.context_set(), s1.tree.context_set());
    }

    #[test]
    fn aggregation_weights_rows() {
        let a = TransitionBlock::<f64>::new(Alphabet::BINARY, 2, vec![0.9, 0.1, 0.5, 0.5, 0.7, 0.3, 0.1, 0.9]).unwrap();
        // blocks ending in 0: 00 (w=3) and 10 (w=1)
        let row = aggregate_transitions(&a, &[3.0, 0.0, 1.0, 0.0], &bin("0")).unwrap();
        assert!((row[0] - (0.75 * 0.9 + 0.25 * 0.7)).abs() < 1e-15);
        let root = aggregate_transitions(&a, &[0.0; 4], &ContextString::empty(Alphabet::BINARY)).unwrap();
        assert!((root[0] - 0.55).abs() < 1e-15);
        let long = aggregate_transitions(&a, &[1.0; 4], &bin("101")).unwrap();
        // last two symbols "01" select block 1
        assert_eq!(long, vec![0.5, 0.5]);
    }

    #[test]
    fn two_step_on_clean_data() {
        let x = sample_vlmc(&VlmcModel::new(presets::scenario1_tree(), 1000).unwrap(), 5000, 3).unwrap();
        let mut fit = FitConfig::new(3, Regime::Sum);
        fit.noise_grid = vec![0.01, 0.02];
        let est = two_step_estimate::<f64>(&x, &EstimateConfig::new(fit, 9)).unwrap();
        assert_eq!(est.depth, 3);
        assert_eq!(est.tree.context_set(), presets::scenario1_tree().context_set());
        let p = est.transitions_for(&bin("110")).unwrap();
        assert!((p[0] - 0.87).abs() < 0.1);
    }

    #[test]
    fn scenario_run_is_deterministic_and_csv_sized() {
        let spec = small_spec();
        let a = run_scenario(&spec).unwrap();
        let b = run_scenario(&spec).unwrap();
        let csv = |r: &EstimationReport| {
            let mut buf = Vec::new();
            write_estimates_csv(r, &mut buf).unwrap();
            write_sweep_csv(r, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        assert_eq!(csv(&a), csv(&b));
        let mut est = Vec::new();
        write_estimates_csv(&a, &mut est).unwrap();
        let rows = String::from_utf8(est).unwrap().lines().count() - 1;
        assert_eq!(rows, spec.sweep.len() * (spec.tree.len() * 2 + 2));
        assert_eq!(a.records.len(), 4);
        assert_eq!(a.failures(), 0);
    }

    #[test]
    fn single_replication_has_zero_sd_and_json_round_trips() {
        let mut spec = small_spec();
        spec.replications = 1;
        spec.sweep = vec![0.1];
        let report = run_scenario(&spec).unwrap();
        assert_eq!(report.points[0].eps_hat.sd, 0.0);
        assert!(report.points[0].contexts.iter().all(|c| c.p0.sd == 0.0));
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, dir.path(), ReportFormat::Json).unwrap();
        let back: EstimationReport = serde_json::from_reader(File::open(&files[0]).unwrap()).unwrap();
        assert_eq!(back, report);
        let files = emit_report(&report, dir.path(), ReportFormat::Csv).unwrap();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = EstimationReport {
            name: "empty".into(),
            regime: Regime::Sum,
            sample_size: 0,
            k: 1,
            contexts: Vec::new(),
            points: Vec::new(),
            records: Vec::new(),
            runtime: RuntimeStats { total_seconds: 0.0, mean_replication_seconds: 0.0 },
        };
        let mut buf = Vec::new();
        write_estimates_csv(&report, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{ESTIMATES_HEADER}\n"));
    }

    #[test]
    fn stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.lo95 - 1.075).abs() < 1e-12);
        assert!(Stat::of(&[]).mean.is_nan());
    }
}
