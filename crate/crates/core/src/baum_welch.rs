//! Scaled forward-backward, EM updates, grid-restart fitting and Viterbi.
//!
//! The forward pass normalizes `α` at every step; the normalizers `c_r`
//! multiply to the likelihood, so `log L = Σ_r ln c_r`. The backward pass
//! reuses the same normalizers, which makes `γ_r = α̂_r β̂_r` and
//! `δ_r = α̂_r p* e_{r+1} β̂_{r+1} / c_{r+1}` proper distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{EmissionMatrix, NoiseSpec, Regime};
use crate::error::{Error, Result};
use crate::hmm_embedding::{
    embed_emissions, embed_observations, EmbedMode, EmissionModel, EmissionTable, HmmParams, HmmParamsJson,
    ObservationSeq, TransitionBlock,
};
use crate::scalar::Real;
use crate::sequences::{Alphabet, Symbol, SymbolSequence};
use crate::vlmc_source::empirical_transitions;

/// Output of [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<F = f64> {
    num_states: usize,
    /// Normalized `α̂_r`, row-major by step.
    pub alpha: Vec<F>,
    /// Per-step normalizers `c_r`.
    pub norms: Vec<F>,
    pub loglik: F,
}

impl<F: Real> ForwardPass<F> {
    pub fn alpha(&self, r: usize) -> &[F] {
        &self.alpha[r * self.num_states..(r + 1) * self.num_states]
    }

    pub fn log_scaling(&self) -> Vec<F> {
        self.norms.iter().map(|c| c.ln()).collect()
    }
}

/// Posterior state and pair tables of one E-step.
#[derive(Debug, Clone)]
pub struct PosteriorTables<F = f64> {
    num_states: usize,
    alphabet: Alphabet,
    gamma: Vec<F>,
    /// `δ_r(ω, shift(ω, a))` stored at `[r][ω][a]`, for `r < R-1`.
    delta: Vec<F>,
    /// `ln c_r`.
    pub scaling: Vec<F>,
}

impl<F: Real> PosteriorTables<F> {
    pub fn steps(&self) -> usize {
        self.scaling.len()
    }

    pub fn gamma(&self, r: usize) -> &[F] {
        &self.gamma[r * self.num_states..(r + 1) * self.num_states]
    }

    /// Pair posteriors of step `r` in next-symbol layout.
    pub fn delta(&self, r: usize) -> &[F] {
        let width = self.num_states * self.alphabet.size();
        &self.delta[r * width..(r + 1) * width]
    }

    /// Dense `δ_r(ω, ν)`.
    pub fn delta_pair(&self, r: usize, from: usize, to: usize) -> F {
        let n = self.alphabet.size();
        if to / n == from % (self.num_states / n) {
            self.delta(r)[from * n + to % n]
        } else {
            F::zero()
        }
    }
}

/// Result of one [`em_step`].
#[derive(Debug, Clone)]
pub struct EmStep<F = f64> {
    pub params: HmmParams<F>,
    /// Log-likelihood of the input parameters.
    pub loglik: F,
    pub posteriors: PosteriorTables<F>,
    /// Block states whose transition or emission row had no posterior mass
    /// and was left unchanged.
    pub flagged_rows: Vec<usize>,
}

fn check_compatible<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq) -> Result<()> {
    params.alphabet().ensure_same(obs.alphabet)?;
    if params.k() != obs.k || params.mode() != obs.mode {
        return Err(Error::InvalidParameter(format!(
            "observations (k={}, {:?}) do not match parameters (k={}, {:?})",
            obs.k,
            obs.mode,
            params.k(),
            params.mode()
        )));
    }
    if obs.is_empty() {
        return Err(Error::SequenceTooShort { needed: obs.k, got: 0 });
    }
    Ok(())
}

/// Scaled forward recursion.
pub fn forward<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq) -> Result<ForwardPass<F>> {
    check_compatible(params, obs)?;
    let table = params.emission_table(obs);
    forward_with(params, obs, &table)
}

fn forward_with<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq, table: &EmissionTable<F>) -> Result<ForwardPass<F>> {
    let s = params.num_states();
    let n = params.alphabet().size();
    let steps = obs.len();
    let a = params.transitions.as_slice();
    let mut alpha = vec![F::zero(); steps * s];
    let mut norms = Vec::with_capacity(steps);
    let mut loglik = F::zero();

    for (w, e) in table.at(obs, 0).iter().enumerate() {
        alpha[w] = params.initial[w] * *e;
    }
    for r in 0..steps {
        if r > 0 {
            let (prev, cur) = alpha.split_at_mut(r * s);
            let prev = &prev[(r - 1) * s..];
            let cur = &mut cur[..s];
            match n {
                2 => propagate(prev, a, table.at(obs, r), cur, 2),
                3 => propagate(prev, a, table.at(obs, r), cur, 3),
                4 => propagate(prev, a, table.at(obs, r), cur, 4),
                _ => propagate(prev, a, table.at(obs, r), cur, n),
            }
        }
        let cur = &mut alpha[r * s..(r + 1) * s];
        let c: F = cur.iter().copied().sum();
        if !(c > F::zero()) || !c.is_finite() {
            return Err(Error::ImpossibleObservation { step: r });
        }
        let inv = F::one() / c;
        cur.iter_mut().for_each(|x| *x = *x * inv);
        norms.push(c);
        loglik = loglik + c.ln();
    }
    Ok(ForwardPass { num_states: s, alpha, norms, loglik })
}

/// Scaled backward recursion; `norms` are the forward normalizers `c_r`.
pub fn backward<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq, norms: &[F]) -> Result<Vec<F>> {
    check_compatible(params, obs)?;
    if norms.len() != obs.len() {
        return Err(Error::InvalidParameter("scaling does not match the observation length".into()));
    }
    let table = params.emission_table(obs);
    let s = params.num_states();
    let steps = obs.len();
    let mut beta = vec![F::zero(); steps * s];
    beta[(steps - 1) * s..].iter_mut().for_each(|b| *b = F::one());
    let mut weighted = vec![F::zero(); s];
    for r in (0..steps - 1).rev() {
        let (cur, next) = beta.split_at_mut((r + 1) * s);
        backward_step(&params.transitions, table.at(obs, r + 1), &next[..s], norms[r + 1], &mut weighted, &mut cur[r * s..], None);
    }
    Ok(beta)
}

/// `α'(lo·n + x) = e(lo·n + x) Σ_hi α(hi·upper + lo) p*(x | hi·upper + lo)`.
#[inline(always)]
fn propagate<F: Real>(prev: &[F], probs: &[F], e: &[F], cur: &mut [F], n: usize) {
    let upper = prev.len() / n;
    for lo in 0..upper {
        let out = &mut cur[lo * n..lo * n + n];
        for hi in 0..n {
            let w = hi * upper + lo;
            let pw = prev[w];
            let row = &probs[w * n..w * n + n];
            for x in 0..n {
                out[x] = out[x] + pw * row[x];
            }
        }
        let ev = &e[lo * n..lo * n + n];
        for x in 0..n {
            out[x] = out[x] * ev[x];
        }
    }
}

/// `out(ω) = Σ_a p*(a|ω) e(ν) β(ν) / c` with `ν = shift(ω, a)`; leaves
/// `e ⊙ β / c` in `weighted`. With `alpha` given, also adds the pair
/// posteriors `α̂(ω) p*(a|ω) e(ν) β(ν) / c` into `trans`.
fn backward_step<F: Real>(
    a: &TransitionBlock<F>,
    e: &[F],
    next: &[F],
    c: F,
    weighted: &mut [F],
    out: &mut [F],
    accumulate: Option<(&[F], &mut [F])>,
) {
    let n = a.alphabet().size();
    let inv = F::one() / c;
    for ((wv, ev), bv) in weighted.iter_mut().zip(e).zip(next) {
        *wv = *ev * *bv * inv;
    }
    let probs = a.as_slice();
    match n {
        2 => backward_kernel(probs, weighted, out, accumulate, 2),
        3 => backward_kernel(probs, weighted, out, accumulate, 3),
        4 => backward_kernel(probs, weighted, out, accumulate, 4),
        _ => backward_kernel(probs, weighted, out, accumulate, n),
    }
}

#[inline(always)]
fn backward_kernel<F: Real>(probs: &[F], weighted: &[F], out: &mut [F], accumulate: Option<(&[F], &mut [F])>, n: usize) {
    let s = out.len();
    let upper = s / n;
    match accumulate {
        None => {
            for hi in 0..n {
                for lo in 0..upper {
                    let w = hi * upper + lo;
                    let row = &probs[w * n..w * n + n];
                    let target = &weighted[lo * n..lo * n + n];
                    let mut acc = F::zero();
                    for x in 0..n {
                        acc = acc + row[x] * target[x];
                    }
                    out[w] = acc;
                }
            }
        }
        Some((alpha, trans)) => {
            for hi in 0..n {
                for lo in 0..upper {
                    let w = hi * upper + lo;
                    let row = &probs[w * n..w * n + n];
                    let target = &weighted[lo * n..lo * n + n];
                    let aw = alpha[w];
                    let sums = &mut trans[w * n..w * n + n];
                    let mut acc = F::zero();
                    for x in 0..n {
                        let t = row[x] * target[x];
                        acc = acc + t;
                        sums[x] = sums[x] + aw * t;
                    }
                    out[w] = acc;
                }
            }
        }
    }
}

struct Accumulators<F> {
    pi: Vec<F>,
    trans: Vec<F>,
    emit: Vec<F>,
    loglik: F,
}

/// E-step: forward pass, then a backward sweep that accumulates expected
/// counts (and optionally records the posterior tables).
fn expectation<F: Real>(
    params: &HmmParams<F>,
    obs: &ObservationSeq,
    keep_tables: bool,
    need_emission: bool,
) -> Result<(Accumulators<F>, Option<PosteriorTables<F>>)> {
    check_compatible(params, obs)?;
    let table = params.emission_table(obs);
    let fwd = forward_with(params, obs, &table)?;
    let s = params.num_states();
    let n = params.alphabet().size();
    let upper = s / n;
    let k = params.k();
    let steps = obs.len();
    let a = &params.transitions;
    let probs = a.as_slice();

    let mut trans = vec![F::zero(); s * n];
    let mut emit = match &params.emission {
        EmissionModel::Block { .. } => vec![F::zero(); s * s],
        EmissionModel::Symbol { .. } => vec![F::zero(); n * n],
    };
    let mut gamma_all = if keep_tables { vec![F::zero(); steps * s] } else { Vec::new() };
    let mut delta_all = if keep_tables { vec![F::zero(); steps.saturating_sub(1) * s * n] } else { Vec::new() };

    let mut beta_next = vec![F::one(); s];
    let mut beta_cur = vec![F::zero(); s];
    let mut weighted = vec![F::zero(); s];
    let mut gamma = vec![F::zero(); s];
    let mut marginal = vec![F::zero(); n];
    let mut pi = vec![F::zero(); s];

    for r in (0..steps).rev() {
        let beta = if r + 1 == steps {
            &beta_next
        } else {
            let alpha = fwd.alpha(r);
            backward_step(
                a,
                table.at(obs, r + 1),
                &beta_next,
                fwd.norms[r + 1],
                &mut weighted,
                &mut beta_cur,
                Some((alpha, &mut trans)),
            );
            if keep_tables {
                // δ_r(ω, shift(ω,a)) = α̂_r(ω) p*(a|ω) e(ν) β̂_{r+1}(ν) / c_{r+1}
                for w in 0..s {
                    let lo = w % upper;
                    for x in 0..n {
                        delta_all[(r * s + w) * n + x] = alpha[w] * probs[w * n + x] * weighted[lo * n + x];
                    }
                }
            }
            &beta_cur
        };
        if !(keep_tables || need_emission || r == 0) {
            if r + 1 < steps {
                std::mem::swap(&mut beta_next, &mut beta_cur);
            }
            continue;
        }
        let alpha = fwd.alpha(r);
        let mut total = F::zero();
        for ((g, al), be) in gamma.iter_mut().zip(alpha).zip(beta.iter()) {
            *g = *al * *be;
            total = total + *g;
        }
        if total > F::zero() {
            let inv = F::one() / total;
            gamma.iter_mut().for_each(|g| *g = *g * inv);
        }
        if keep_tables {
            gamma_all[r * s..(r + 1) * s].copy_from_slice(&gamma);
        }
        if need_emission {
            match &params.emission {
                EmissionModel::Block { .. } => {
                    let z = obs.steps[r];
                    for w in 0..s {
                        emit[w * s + z] = emit[w * s + z] + gamma[w];
                    }
                }
                EmissionModel::Symbol { .. } => {
                    let positions = if r == 0 { k } else { 1 };
                    for i in 0..positions {
                        // digit i counted from the newest symbol of the block
                        let t = r + k - 1 - i;
                        let place = n.pow(i as u32);
                        marginal.iter_mut().for_each(|m| *m = F::zero());
                        if i == 0 {
                            for chunk in gamma.chunks(n) {
                                for (m, g) in marginal.iter_mut().zip(chunk) {
                                    *m = *m + *g;
                                }
                            }
                        } else {
                            for w in 0..s {
                                let x = (w / place) % n;
                                marginal[x] = marginal[x] + gamma[w];
                            }
                        }
                        let z = obs.symbol_at(t) as usize;
                        for x in 0..n {
                            emit[x * n + z] = emit[x * n + z] + marginal[x];
                        }
                    }
                }
            }
        }
        if r == 0 {
            pi.copy_from_slice(&gamma);
        }
        if r + 1 < steps {
            std::mem::swap(&mut beta_next, &mut beta_cur);
        }
    }

    let tables = keep_tables.then(|| PosteriorTables {
        num_states: s,
        alphabet: params.alphabet(),
        gamma: gamma_all,
        delta: delta_all,
        scaling: fwd.log_scaling(),
    });
    Ok((Accumulators { pi, trans, emit, loglik: fwd.loglik }, tables))
}

fn normalize_rows<F: Real>(target: &mut [F], counts: &[F], width: usize, flagged: &mut Vec<usize>) {
    for (i, (row, cnt)) in target.chunks_mut(width).zip(counts.chunks(width)).enumerate() {
        let total: F = cnt.iter().copied().sum();
        if total > F::zero() && total.is_finite() {
            for (p, c) in row.iter_mut().zip(cnt) {
                *p = *c / total;
            }
        } else {
            flagged.push(i);
        }
    }
}

fn maximize<F: Real>(params: &HmmParams<F>, acc: &Accumulators<F>, update_emission: bool) -> Result<(HmmParams<F>, Vec<usize>)> {
    let n = params.alphabet().size();
    let mut flagged = Vec::new();
    let mut transitions = params.transitions.clone();
    normalize_rows(transitions.probs_mut(), &acc.trans, n, &mut flagged);
    let emission = if update_emission {
        match &params.emission {
            EmissionModel::Block { probs } => {
                let s = params.num_states();
                let mut probs = probs.clone();
                normalize_rows(&mut probs, &acc.emit, s, &mut flagged);
                EmissionModel::Block { probs }
            }
            EmissionModel::Symbol { matrix } => {
                let mut probs = matrix.as_slice().to_vec();
                let mut unused = Vec::new();
                normalize_rows(&mut probs, &acc.emit, n, &mut unused);
                EmissionModel::Symbol {
                    matrix: EmissionMatrix::from_rows(probs.chunks(n).map(|r| r.to_vec()).collect())?,
                }
            }
        }
    } else {
        params.emission.clone()
    };
    let total: F = acc.pi.iter().copied().sum();
    let initial = acc.pi.iter().map(|p| *p / total).collect();
    flagged.sort_unstable();
    flagged.dedup();
    Ok((HmmParams { transitions, emission, initial }, flagged))
}

/// One full E+M update of `(A*, B*, π*)`.
pub fn em_step<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq) -> Result<EmStep<F>> {
    let (acc, tables) = expectation(params, obs, true, true)?;
    let (new, flagged_rows) = maximize(params, &acc, true)?;
    Ok(EmStep { params: new, loglik: acc.loglik, posteriors: tables.expect("tables requested"), flagged_rows })
}

/// Whether EM re-estimates `B*` or holds it at the grid value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionUpdate {
    /// Emissions stay at `emission(ε_j)`; the grid traces a profile likelihood.
    #[default]
    Fixed,
    /// Emissions are re-estimated freely alongside `A*` and `π*`.
    Free,
}

impl std::str::FromStr for EmissionUpdate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(EmissionUpdate::Fixed),
            "free" => Ok(EmissionUpdate::Free),
            other => Err(Error::Parse(format!("unknown emission update {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub noise_grid: Vec<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub k: usize,
    pub mode: EmbedMode,
    pub regime: Regime,
    #[serde(default)]
    pub emission_update: EmissionUpdate,
}

impl FitConfig {
    pub const DEFAULT_MAX_ITER: usize = 500;
    pub const DEFAULT_REL_TOL: f64 = 1e-6;

    pub fn new(k: usize, regime: Regime) -> Self {
        FitConfig {
            noise_grid: default_grid(),
            max_iter: Self::DEFAULT_MAX_ITER,
            rel_tol: Self::DEFAULT_REL_TOL,
            k,
            mode: EmbedMode::Symbol,
            regime,
            emission_update: EmissionUpdate::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_grid.is_empty() {
            return Err(Error::InvalidParameter("empty noise grid".into()));
        }
        if let Some(bad) = self.noise_grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::InvalidParameter(format!("grid value {bad} outside (0, 1)")));
        }
        if self.max_iter == 0 || !(self.rel_tol > 0.0) || self.k == 0 {
            return Err(Error::InvalidParameter("max_iter, rel_tol and k must be positive".into()));
        }
        Ok(())
    }
}

/// `j/100` for `j = 1..99`.
pub fn default_grid() -> Vec<f64> {
    (1..100).map(|j| j as f64 / 100.0).collect()
}

/// The default grid cut to the levels that are identifiable from `z`.
///
/// With a binary alphabet under the sum regime, noise `ε` on a chain and
/// noise `1-ε` on its complement produce the same observed law, so only
/// `ε < 1/2` is kept. Every other case returns [`default_grid`].
pub fn identifiable_grid(regime: Regime, alphabet: Alphabet) -> Vec<f64> {
    let mut grid = default_grid();
    if regime == Regime::Sum && alphabet.size() == 2 {
        grid.retain(|&e| e < 0.5);
    }
    grid
}

/// Outcome of the EM run started at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub eps: f64,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub implied_eps: Option<f64>,
    /// Log-likelihood at every iteration of this run.
    #[serde(default)]
    pub trace: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitResult<F = f64> {
    pub params: HmmParams<F>,
    pub eps_hat: f64,
    pub loglik: f64,
    pub trace: Vec<f64>,
    pub restart_table: Vec<RestartRecord>,
    /// Noise level read back from the fitted emissions.
    pub implied_eps: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultJson {
    pub eps_hat: f64,
    pub loglik: f64,
    pub implied_eps: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub restart_table: Vec<RestartRecord>,
    pub params: HmmParamsJson,
}

impl<F: Real> FitResult<F> {
    pub fn to_json(&self) -> FitResultJson {
        FitResultJson {
            eps_hat: self.eps_hat,
            loglik: self.loglik,
            implied_eps: self.implied_eps,
            converged: self.converged,
            trace: self.trace.clone(),
            restart_table: self.restart_table.clone(),
            params: self.params.to_json(),
        }
    }
}

struct RunOutcome<F> {
    params: HmmParams<F>,
    loglik: F,
    trace: Vec<f64>,
    converged: bool,
}

fn run_em<F: Real>(start: HmmParams<F>, obs: &ObservationSeq, cfg: &FitConfig) -> Result<RunOutcome<F>> {
    let update_emission = cfg.emission_update == EmissionUpdate::Free;
    let mut params = start;
    let mut trace = Vec::new();
    for _ in 0..cfg.max_iter {
        let (acc, _) = expectation(&params, obs, false, update_emission)?;
        let ll = acc.loglik;
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ((ll.as_f64() - prev) / prev).abs() < cfg.rel_tol {
                trace.push(ll.as_f64());
                return Ok(RunOutcome { params, loglik: ll, trace, converged: true });
            }
        }
        trace.push(ll.as_f64());
        params = maximize(&params, &acc, update_emission)?.0;
    }
    let ll = forward(&params, obs)?.loglik;
    trace.push(ll.as_f64());
    Ok(RunOutcome { params, loglik: ll, trace, converged: false })
}

/// Multi-restart EM over the noise grid.
///
/// Each grid value `ε_j` starts EM from the empirical block transitions of
/// `z`, a uniform initial law and `emission(ε_j)`. The run with the largest
/// final log-likelihood wins (ties go to the smaller `ε_j`) and its grid value
/// is reported as `eps_hat`.
pub fn fit<F: Real>(z: &SymbolSequence, cfg: &FitConfig) -> Result<FitResult<F>> {
    cfg.validate()?;
    if z.len() <= cfg.k {
        return Err(Error::SequenceTooShort { needed: cfg.k + 1, got: z.len() });
    }
    let alphabet = z.alphabet();
    let obs = embed_observations(z, cfg.k, cfg.mode)?;
    let a0 = empirical_transitions::<F>(z, cfg.k)?;
    let states = alphabet.num_strings(cfg.k);
    let pi0 = vec![F::one() / F::lit(states as f64); states];

    let runs: Vec<(f64, Result<RunOutcome<F>>)> = cfg
        .noise_grid
        .par_iter()
        .map(|&eps| {
            let run = NoiseSpec::from_level(cfg.regime, alphabet, F::lit(eps))
                .and_then(|noise| embed_emissions(&noise, cfg.k, cfg.mode))
                .and_then(|b0| HmmParams::new(a0.clone(), b0, pi0.clone()))
                .and_then(|start| run_em(start, &obs, cfg));
            (eps, run)
        })
        .collect();

    let mut restart_table = Vec::with_capacity(runs.len());
    let mut best: Option<(f64, RunOutcome<F>)> = None;
    let mut failures = Vec::new();
    for (eps, run) in runs {
        match run {
            Ok(out) => {
                let ll = out.loglik.as_f64();
                restart_table.push(RestartRecord {
                    eps,
                    loglik: Some(ll),
                    iterations: out.trace.len(),
                    converged: out.converged,
                    implied_eps: Some(out.params.implied_noise_level(cfg.regime).as_f64()),
                    trace: out.trace.clone(),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((best_eps, b)) => {
                        let bl = b.loglik.as_f64();
                        ll > bl || (ll == bl && eps < *best_eps)
                    }
                };
                if ll.is_finite() && better {
                    best = Some((eps, out));
                }
            }
            Err(e) => {
                failures.push(format!("eps={eps}: {e}"));
                restart_table.push(RestartRecord {
                    eps,
                    loglik: None,
                    iterations: 0,
                    converged: false,
                    implied_eps: None,
                    trace: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (eps_hat, out) = best.ok_or_else(|| Error::AllRestartsFailed(failures.join("; ")))?;
    Ok(FitResult {
        implied_eps: out.params.implied_noise_level(cfg.regime).as_f64(),
        eps_hat,
        loglik: out.loglik.as_f64(),
        trace: out.trace,
        restart_table,
        converged: out.converged,
        params: out.params,
    })
}

/// Most probable hidden block path, computed in log space.
///
/// Predecessors are scanned in increasing state index and only a strictly
/// larger score replaces the incumbent, so ties resolve to the lowest index
/// at every step, including the final state.
pub fn viterbi<F: Real>(params: &HmmParams<F>, obs: &ObservationSeq) -> Result<Vec<usize>> {
    check_compatible(params, obs)?;
    let s = params.num_states();
    let n = params.alphabet().size();
    let steps = obs.len();
    let upper = s / n;
    let log_a: Vec<F> = params.transitions.as_slice().iter().map(|p| p.ln()).collect();
    let table = params.emission_table(obs);
    let mut score = vec![F::zero(); s];
    let mut next = vec![F::zero(); s];
    let mut back = vec![0usize; steps.saturating_sub(1) * s];

    for (w, e) in table.at(obs, 0).iter().enumerate() {
        score[w] = params.initial[w].ln() + e.ln();
    }
    if score.iter().all(|x| *x == F::neg_infinity()) {
        return Err(Error::ImpossibleObservation { step: 0 });
    }
    for r in 1..steps {
        let e = table.at(obs, r);
        for v in 0..s {
            let x = v % n;
            let mut best = F::neg_infinity();
            let mut arg = v / n;
            for j in 0..n {
                let w = v / n + j * upper;
                let cand = score[w] + log_a[w * n + x];
                if cand > best {
                    best = cand;
                    arg = w;
                }
            }
            next[v] = best + e[v].ln();
            back[(r - 1) * s + v] = arg;
        }
        if next.iter().all(|x| *x == F::neg_infinity()) {
            return Err(Error::ImpossibleObservation { step: r });
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut state = 0;
    for w in 1..s {
        if score[w] > score[state] {
            state = w;
        }
    }
    let mut path = vec![0usize; steps];
    path[steps - 1] = state;
    for r in (1..steps).rev() {
        state = back[(r - 1) * s + state];
        path[r - 1] = state;
    }
    Ok(path)
}

/// Symbols `x_1..x_T` read off a block path.
pub fn decode_symbols(path: &[usize], k: usize, alphabet: Alphabet) -> Result<SymbolSequence> {
    let n = alphabet.size();
    let mut out = Vec::with_capacity(path.len() + k - 1);
    if let Some(&first) = path.first() {
        out.extend(crate::sequences::ContextString::from_code(alphabet, k, first).symbols());
        out.extend(path[1..].iter().map(|&w| (w % n) as Symbol));
    }
    SymbolSequence::new(alphabet, out)
}
