//! Re-parameterization of an order-`k` hidden VLMC as an HMM over blocks.
//!
//! Hidden states are the `N^k` blocks `X*_r = X_r..X_{r+k-1}`, coded as
//! radix-N integers with the oldest symbol most significant. A block can only
//! move to a block that shares its last `k-1` symbols, so transition rows are
//! stored in next-symbol form: `N` entries per state, with every
//! shift-incompatible entry of the full `N^k x N^k` matrix implicitly zero.

use serde::{Deserialize, Serialize};

use crate::contamination::{emission_matrix, EmissionMatrix, NoiseSpec, Regime};
use crate::context_tree::ContextTree;
use crate::error::{Error, Result};
use crate::scalar::{is_distribution, Real};
use crate::sequences::{Alphabet, ContextString, Symbol, SymbolSequence};

const PARAM_TOL: f64 = 1e-10;

/// How observations are attached to block states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    /// Overlapping observed blocks `z*_r`, one per hidden block.
    Block,
    /// The newest observed symbol per step, with the first step emitting the
    /// whole initial block `z_1..z_k`. Gives the exact model likelihood.
    #[default]
    Symbol,
}

impl std::str::FromStr for EmbedMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(EmbedMode::Block),
            "symbol" => Ok(EmbedMode::Symbol),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

/// A block of `k` symbols as its radix-N code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockState(pub usize);

impl BlockState {
    pub fn from_symbols(alphabet: Alphabet, symbols: &[Symbol]) -> Self {
        BlockState(symbols.iter().fold(0, |acc, &s| acc * alphabet.size() + s as usize))
    }

    pub fn newest(self, alphabet: Alphabet) -> Symbol {
        (self.0 % alphabet.size()) as Symbol
    }

    pub fn to_string(self, alphabet: Alphabet, k: usize) -> ContextString {
        ContextString::from_code(alphabet, k, self.0)
    }
}

/// `A*` in next-symbol form: `probs[ω * N + a] = p*(shift(ω, a) | ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlock<F = f64> {
    alphabet: Alphabet,
    k: usize,
    probs: Vec<F>,
}

impl<F: Real> TransitionBlock<F> {
    pub fn new(alphabet: Alphabet, k: usize, probs: Vec<F>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("block length must be >= 1".into()));
        }
        let n = alphabet.size();
        let states = alphabet.num_strings(k);
        if probs.len() != states * n {
            return Err(Error::InvalidParameter(format!(
                "transition block needs {} entries, got {}",
                states * n,
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(n).enumerate() {
            if !is_distribution(row, PARAM_TOL) {
                return Err(Error::InvalidDistribution(format!(
                    "row {} is not stochastic: {row:?}",
                    ContextString::from_code(alphabet, k, s)
                )));
            }
        }
        Ok(TransitionBlock { alphabet, k, probs })
    }

    pub fn uniform(alphabet: Alphabet, k: usize) -> Self {
        let n = alphabet.size();
        let u = F::one() / F::lit(n as f64);
        TransitionBlock { alphabet, k, probs: vec![u; alphabet.num_strings(k) * n] }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.alphabet.size()
    }

    /// Next-symbol law of block state `state`.
    pub fn row(&self, state: usize) -> &[F] {
        let n = self.alphabet.size();
        &self.probs[state * n..(state + 1) * n]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.probs
    }

    /// Block reached from `state` when `next` is emitted by the chain.
    pub fn shift(&self, state: usize, next: Symbol) -> usize {
        (state * self.alphabet.size() + next as usize) % self.num_states()
    }

    /// Dense entry `p*(to | from)`, zero unless `to` is a shift of `from`.
    pub fn prob(&self, from: usize, to: usize) -> F {
        let n = self.alphabet.size();
        if to / n == from % (self.num_states() / n) {
            self.row(from)[to % n]
        } else {
            F::zero()
        }
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [F] {
        &mut self.probs
    }

    pub fn cast<G: Real>(&self) -> TransitionBlock<G> {
        TransitionBlock { alphabet: self.alphabet, k: self.k, probs: self.probs.iter().map(|p| G::lit(p.as_f64())).collect() }
    }
}

/// Emission block `B*` of the embedded HMM.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionModel<F = f64> {
    /// Free `N^k x N^k` matrix over observed blocks.
    Block { probs: Vec<F> },
    /// Per-symbol matrix tied across blocks: `b_ω(z) = B[ω_last][z]`.
    Symbol { matrix: EmissionMatrix<F> },
}

impl<F: Real> EmissionModel<F> {
    pub fn mode(&self) -> EmbedMode {
        match self {
            EmissionModel::Block { .. } => EmbedMode::Block,
            EmissionModel::Symbol { .. } => EmbedMode::Symbol,
        }
    }

    /// Rows as nested vectors (blocks × blocks, or symbols × symbols).
    pub fn rows(&self) -> Vec<Vec<F>> {
        match self {
            EmissionModel::Block { probs } => {
                let s = (probs.len() as f64).sqrt().round() as usize;
                probs.chunks(s).map(|r| r.to_vec()).collect()
            }
            EmissionModel::Symbol { matrix } => matrix.as_slice().chunks(matrix.size()).map(|r| r.to_vec()).collect(),
        }
    }
}

/// `λ* = (A*, B*, π*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams<F = f64> {
    pub transitions: TransitionBlock<F>,
    pub emission: EmissionModel<F>,
    pub initial: Vec<F>,
}

impl<F: Real> HmmParams<F> {
    pub fn new(transitions: TransitionBlock<F>, emission: EmissionModel<F>, initial: Vec<F>) -> Result<Self> {
        let states = transitions.num_states();
        let n = transitions.alphabet().size();
        if initial.len() != states || !is_distribution(&initial, PARAM_TOL) {
            return Err(Error::InvalidDistribution("initial block law".into()));
        }
        match &emission {
            EmissionModel::Block { probs } => {
                if probs.len() != states * states || !probs.chunks(states).all(|r| is_distribution(r, PARAM_TOL)) {
                    return Err(Error::InvalidDistribution("block emission rows".into()));
                }
            }
            EmissionModel::Symbol { matrix } => {
                if matrix.size() != n || !matrix.as_slice().chunks(n).all(|r| is_distribution(r, PARAM_TOL)) {
                    return Err(Error::InvalidDistribution("symbol emission rows".into()));
                }
            }
        }
        Ok(HmmParams { transitions, emission, initial })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.transitions.alphabet()
    }

    pub fn k(&self) -> usize {
        self.transitions.k()
    }

    pub fn num_states(&self) -> usize {
        self.transitions.num_states()
    }

    pub fn mode(&self) -> EmbedMode {
        self.emission.mode()
    }

    /// Emission likelihood vectors `e_r(·)` for every step of `obs`.
    pub(crate) fn emission_table(&self, obs: &ObservationSeq) -> EmissionTable<F> {
        let n = self.alphabet().size();
        let states = self.num_states();
        let (columns, width) = match &self.emission {
            EmissionModel::Block { probs } => {
                let mut cols = vec![F::zero(); states * states];
                for w in 0..states {
                    for v in 0..states {
                        cols[v * states + w] = probs[w * states + v];
                    }
                }
                (cols, states)
            }
            EmissionModel::Symbol { matrix } => {
                let mut cols = vec![F::zero(); n * states];
                for z in 0..n {
                    for chunk in cols[z * states..(z + 1) * states].chunks_mut(n) {
                        for (x, e) in chunk.iter_mut().enumerate() {
                            *e = matrix.get(x as Symbol, z as Symbol);
                        }
                    }
                }
                (cols, n)
            }
        };
        let first = match &self.emission {
            EmissionModel::Block { .. } => {
                let z = obs.steps[0];
                columns[z * states..(z + 1) * states].to_vec()
            }
            EmissionModel::Symbol { matrix } => (0..states)
                .map(|w| {
                    let mut p = matrix.get((w % n) as Symbol, obs.steps[0] as Symbol);
                    let mut code = w / n;
                    for &zi in obs.prefix.iter().rev() {
                        p = p * matrix.get((code % n) as Symbol, zi);
                        code /= n;
                    }
                    p
                })
                .collect(),
        };
        debug_assert!(obs.steps.iter().all(|&z| z < width));
        EmissionTable { first, columns, states }
    }

    /// Per-symbol emission rows: the tied matrix in `Symbol` mode, or the
    /// newest-position marginal averaged over blocks in `Block` mode.
    pub fn symbol_emissions(&self) -> Vec<Vec<F>> {
        match &self.emission {
            EmissionModel::Symbol { .. } => self.emission.rows(),
            EmissionModel::Block { probs } => {
                let states = self.num_states();
                let n = self.alphabet().size();
                let mut rows = vec![vec![F::zero(); n]; n];
                for w in 0..states {
                    for v in 0..states {
                        rows[w % n][v % n] = rows[w % n][v % n] + probs[w * states + v];
                    }
                }
                let per_symbol = F::lit((states / n) as f64);
                for row in rows.iter_mut() {
                    row.iter_mut().for_each(|p| *p = *p / per_symbol);
                }
                rows
            }
        }
    }

    /// Noise level read back from the emissions: mean corruption mass over
    /// hidden symbols (all of them for the sum regime, the non-zero ones for
    /// the product regime, where a hidden zero is never corrupted).
    pub fn implied_noise_level(&self, regime: Regime) -> F {
        let rows = self.symbol_emissions();
        let first = match regime {
            Regime::Sum => 0,
            Regime::Product => 1,
        };
        let off: F = (first..rows.len()).map(|a| F::one() - rows[a][a]).sum();
        off / F::lit((rows.len() - first) as f64)
    }

    pub fn to_json(&self) -> HmmParamsJson {
        let states = self.num_states();
        HmmParamsJson {
            alphabet: self.alphabet().size(),
            k: self.k(),
            mode: self.mode(),
            initial: self.initial.iter().map(|p| p.as_f64()).collect(),
            transitions: (0..states)
                .map(|w| {
                    self.transitions
                        .row(w)
                        .iter()
                        .enumerate()
                        .map(|(a, p)| (self.transitions.shift(w, a as Symbol), p.as_f64()))
                        .collect()
                })
                .collect(),
            emission: self.emission.rows().into_iter().map(|r| r.into_iter().map(|p| p.as_f64()).collect()).collect(),
        }
    }

    pub fn from_json(json: &HmmParamsJson) -> Result<Self> {
        let alphabet = Alphabet::new(json.alphabet)?;
        let n = alphabet.size();
        let states = alphabet.num_strings(json.k);
        if json.transitions.len() != states {
            return Err(Error::Parse(format!("expected {states} transition rows")));
        }
        let mut probs = vec![F::zero(); states * n];
        for (w, row) in json.transitions.iter().enumerate() {
            for &(to, p) in row {
                if to >= states || to / n != w % (states / n) {
                    return Err(Error::Parse(format!("transition {w} -> {to} is not a block shift")));
                }
                probs[w * n + to % n] = F::lit(p);
            }
        }
        let transitions = TransitionBlock::new(alphabet, json.k, probs)?;
        let emission = match json.mode {
            EmbedMode::Block => EmissionModel::Block {
                probs: json.emission.iter().flatten().map(|&p| F::lit(p)).collect(),
            },
            EmbedMode::Symbol => EmissionModel::Symbol {
                matrix: EmissionMatrix::from_rows(
                    json.emission.iter().map(|r| r.iter().map(|&p| F::lit(p)).collect()).collect(),
                )?,
            },
        };
        Self::new(transitions, emission, json.initial.iter().map(|&p| F::lit(p)).collect())
    }
}

/// Precomputed `e_r(·)`: a special vector for the first step, then one
/// column per observed symbol or block.
pub(crate) struct EmissionTable<F> {
    first: Vec<F>,
    columns: Vec<F>,
    states: usize,
}

impl<F: Real> EmissionTable<F> {
    #[inline]
    pub(crate) fn at<'a>(&'a self, obs: &ObservationSeq, r: usize) -> &'a [F] {
        if r == 0 {
            &self.first
        } else {
            let z = obs.steps[r];
            &self.columns[z * self.states..(z + 1) * self.states]
        }
    }
}

/// On-disk `λ*`: sparse transition rows as `(target block, probability)` lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParamsJson {
    pub alphabet: usize,
    pub k: usize,
    pub mode: EmbedMode,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub emission: Vec<Vec<f64>>,
}

/// Observation sequence of the embedded HMM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeq {
    pub alphabet: Alphabet,
    pub k: usize,
    pub mode: EmbedMode,
    /// Block codes (`Block`) or newest symbols (`Symbol`), one per step.
    pub steps: Vec<usize>,
    /// `z_1..z_{k-1}`, emitted together with the first step in `Symbol` mode.
    pub prefix: Vec<Symbol>,
}

impl ObservationSeq {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Observed symbol at 0-based time `t` of the original sequence.
    pub(crate) fn symbol_at(&self, t: usize) -> Symbol {
        let k = self.k;
        match self.mode {
            EmbedMode::Symbol => {
                if t + 1 < k {
                    self.prefix[t]
                } else {
                    self.steps[t + 1 - k] as Symbol
                }
            }
            EmbedMode::Block => {
                let n = self.alphabet.size();
                if t + 1 < k {
                    ((self.steps[0] / n.pow((k - 1 - t) as u32)) % n) as Symbol
                } else {
                    (self.steps[t + 1 - k] % n) as Symbol
                }
            }
        }
    }

    /// Original sequence length `T`.
    pub fn sequence_len(&self) -> usize {
        self.steps.len() + self.k - 1
    }
}

/// Block (`z*_r`, `r = 1..T-k+1`) or newest-symbol observations.
pub fn embed_observations(z: &SymbolSequence, k: usize, mode: EmbedMode) -> Result<ObservationSeq> {
    if k == 0 {
        return Err(Error::InvalidParameter("block length must be >= 1".into()));
    }
    if z.len() < k {
        return Err(Error::SequenceTooShort { needed: k, got: z.len() });
    }
    let alphabet = z.alphabet();
    let s = z.symbols();
    let (steps, prefix) = match mode {
        EmbedMode::Block => (
            s.windows(k).map(|w| BlockState::from_symbols(alphabet, w).0).collect(),
            Vec::new(),
        ),
        EmbedMode::Symbol => (s[k - 1..].iter().map(|&x| x as usize).collect(), s[..k - 1].to_vec()),
    };
    Ok(ObservationSeq { alphabet, k, mode, steps, prefix })
}

/// `p*(ν | ω) = p(ν_last | context(ω))` for shift-compatible `ν`.
pub fn embed_tree<F: Real>(tree: &ContextTree<F>, k: usize) -> Result<TransitionBlock<F>> {
    if k < tree.depth() || k == 0 {
        return Err(Error::InvalidParameter(format!("block length {k} below tree depth {}", tree.depth())));
    }
    let diag = tree.validate();
    if !diag.complete {
        return Err(Error::InvalidTree(format!("incomplete tree, uncovered {:?}", diag.uncovered)));
    }
    let alphabet = tree.alphabet();
    let mut probs = Vec::with_capacity(alphabet.num_strings(k) * alphabet.size());
    for code in 0..alphabet.num_strings(k) {
        let w = ContextString::from_code(alphabet, k, code);
        probs.extend_from_slice(tree.next_law(w.symbols())?);
    }
    TransitionBlock::new(alphabet, k, probs)
}

/// `B*` from the per-symbol noise law.
pub fn embed_emissions<F: Real>(noise: &NoiseSpec<F>, k: usize, mode: EmbedMode) -> Result<EmissionModel<F>> {
    if k == 0 {
        return Err(Error::InvalidParameter("block length must be >= 1".into()));
    }
    let alphabet = noise.alphabet();
    let b = emission_matrix(noise, alphabet)?;
    Ok(match mode {
        EmbedMode::Symbol => EmissionModel::Symbol { matrix: b },
        EmbedMode::Block => {
            let n = alphabet.size();
            let states = alphabet.num_strings(k);
            let mut probs = vec![F::zero(); states * states];
            for w in 0..states {
                for v in 0..states {
                    let (mut cw, mut cv) = (w, v);
                    let mut p = F::one();
                    for _ in 0..k {
                        p = p * b.get((cw % n) as Symbol, (cv % n) as Symbol);
                        cw /= n;
                        cv /= n;
                    }
                    probs[w * states + v] = p;
                }
            }
            EmissionModel::Block { probs }
        }
    })
}

/// Default block length when the source depth is unknown: `⌈log T / (2 log N)⌉`.
pub fn default_block_length(sample_len: usize, alphabet: Alphabet) -> usize {
    let n2 = alphabet.size().pow(2);
    let mut d = 0usize;
    let mut power = 1usize;
    while power < sample_len {
        power = power.saturating_mul(n2);
        d += 1;
    }
    d.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn bin(s: &str) -> ContextString {
        ContextString::parse(Alphabet::BINARY, s).unwrap()
    }

    #[test]
    fn block_observations_match_worked_example() {
        let z = SymbolSequence::new(Alphabet::BINARY, vec![0, 0, 1, 1, 0, 0, 1]).unwrap();
        let obs = embed_observations(&z, 2, EmbedMode::Block).unwrap();
        let blocks: Vec<String> =
            obs.steps.iter().map(|&c| ContextString::from_code(Alphabet::BINARY, 2, c).to_string()).collect();
        assert_eq!(blocks, ["00", "01", "11", "10", "00", "01"]);
        for t in 0..z.len() {
            assert_eq!(obs.symbol_at(t), z.symbols()[t]);
        }
        let sym = embed_observations(&z, 2, EmbedMode::Symbol).unwrap();
        assert_eq!(sym.prefix, vec![0]);
        assert_eq!(sym.steps, vec![0, 1, 1, 0, 0, 1]);
        for t in 0..z.len() {
            assert_eq!(sym.symbol_at(t), z.symbols()[t]);
        }
    }

    #[test]
    fn k1_and_t_equals_k() {
        let z = SymbolSequence::new(Alphabet::BINARY, vec![1, 0, 1]).unwrap();
        let obs = embed_observations(&z, 1, EmbedMode::Block).unwrap();
        assert_eq!(obs.steps, vec![1, 0, 1]);
        let one = embed_observations(&z, 3, EmbedMode::Block).unwrap();
        assert_eq!(one.steps, vec![5]);
        assert!(matches!(embed_observations(&z, 4, EmbedMode::Symbol), Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn embedded_scenario_one() {
        let a = embed_tree(&presets::scenario1_tree(), 3).unwrap();
        let code = |s: &str| bin(s).code();
        assert_eq!(a.prob(code("110"), code("011")), 0.0);
        assert_eq!(a.prob(code("110"), code("111")), 0.0);
        assert_eq!(a.prob(code("110"), code("100")), 0.87);
        assert_eq!(a.prob(code("110"), code("101")), 0.13);
        assert_eq!(a.prob(code("010"), code("101")), 0.95);
        assert_eq!(a.prob(code("111"), code("110")), 0.38);
        // ≤ N nonzeros per row, summing to one
        for w in 0..8 {
            let nz = (0..8).filter(|&v| a.prob(w, v) != 0.0).count();
            assert!(nz <= 2);
            let s: f64 = (0..8).map(|v| a.prob(w, v)).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn embed_full_order_one_tree() {
        let t = ContextTree::<f64>::from_table(Alphabet::BINARY, &[("0", &[0.9, 0.1]), ("1", &[0.4, 0.6])]).unwrap();
        let a = embed_tree(&t, 1).unwrap();
        assert_eq!(a.as_slice(), &[0.9, 0.1, 0.4, 0.6]);
        assert_eq!(a.prob(0, 1), 0.1);
        assert!(embed_tree(&presets::scenario1_tree(), 2).is_err());
        let incomplete = ContextTree::<f64>::from_table(Alphabet::BINARY, &[("1", &[0.5, 0.5])]).unwrap();
        assert!(embed_tree(&incomplete, 1).is_err());
    }

    #[test]
    fn block_emissions() {
        let noise = NoiseSpec::<f64>::binary(Regime::Sum, 0.1).unwrap();
        let b = embed_emissions(&noise, 2, EmbedMode::Block).unwrap();
        let rows = b.rows();
        assert!((rows[1][1] - 0.81).abs() < 1e-15);
        assert!((rows[1][0] - 0.09).abs() < 1e-15);
        assert!((rows[1][2] - 0.01).abs() < 1e-15);

        let exact = embed_emissions(&NoiseSpec::binary(Regime::Sum, 0.0).unwrap(), 2, EmbedMode::Block).unwrap();
        for (w, row) in exact.rows().iter().enumerate() {
            for (v, &p) in row.iter().enumerate() {
                assert_eq!(p, if v == w { 1.0 } else { 0.0 });
            }
        }

        let b1 = embed_emissions(&noise, 1, EmbedMode::Block).unwrap().rows();
        let s1 = embed_emissions(&noise, 1, EmbedMode::Symbol).unwrap().rows();
        assert_eq!(b1, s1);
    }

    #[test]
    fn params_json_round_trip() {
        let a = embed_tree(&presets::scenario1_tree(), 3).unwrap();
        for mode in [EmbedMode::Symbol, EmbedMode::Block] {
            let b = embed_emissions(&NoiseSpec::binary(Regime::Product, 0.2).unwrap(), 3, mode).unwrap();
            let p = HmmParams::new(a.clone(), b, vec![0.125; 8]).unwrap();
            let json = serde_json::to_string(&p.to_json()).unwrap();
            let back = HmmParams::<f64>::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn default_block_lengths() {
        assert_eq!(default_block_length(10_000, Alphabet::BINARY), 7);
        assert_eq!(default_block_length(16, Alphabet::BINARY), 2);
        assert_eq!(default_block_length(17, Alphabet::BINARY), 3);
        assert_eq!(default_block_length(1, Alphabet::BINARY), 1);
    }

    #[test]
    fn invalid_params_rejected() {
        let a = TransitionBlock::<f64>::uniform(Alphabet::BINARY, 1);
        let b = EmissionModel::Symbol { matrix: EmissionMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap() };
        assert!(HmmParams::new(a.clone(), b.clone(), vec![0.6, 0.6]).is_err());
        assert!(TransitionBlock::<f64>::new(Alphabet::BINARY, 1, vec![0.5, 0.6, 0.5, 0.5]).is_err());
        assert!(HmmParams::new(a, b, vec![0.5, 0.5]).is_ok());
    }
}
