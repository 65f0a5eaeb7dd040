//! Additive (`z = x ⊕ ξ mod N`) and multiplicative (`z = x · ξ`) noise.
//!
//! Both regimes draw `ξ_t` i.i.d. from a weight vector independent of the
//! hidden chain, so the emission law depends only on the current hidden
//! symbol. [`brute_force_likelihood`] sums the exact likelihood over every
//! hidden path and is the test oracle for the forward algorithm.

use serde::{Deserialize, Serialize};

use crate::context_tree::{ContextTree, InitialLaw};
use crate::error::{Error, Result};
use crate::rng::{sample_index, stream_rng};
use crate::scalar::{is_distribution, Real};
use crate::sequences::{Alphabet, Symbol, SymbolSequence};

/// Longest sequence accepted by the exhaustive likelihood.
pub const ORACLE_MAX_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sum,
    Product,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" | "tscm" => Ok(Regime::Sum),
            "product" | "tpcm" => Ok(Regime::Product),
            other => Err(Error::Parse(format!("unknown regime {other:?}"))),
        }
    }
}

/// Which emissions enter the exhaustive likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EmissionConvention {
    /// Every observation `z_1..z_T` is emitted by its hidden symbol.
    #[default]
    AllSteps,
    /// Only `z_{k+1}..z_T` carry emission factors; the first `k` are free.
    AfterInitialBlock,
}

/// Law of the noise `ξ` plus the contamination regime.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<F = f64> {
    regime: Regime,
    weights: Vec<F>,
    product_table: Option<Vec<Vec<Symbol>>>,
}

impl<F: Real> NoiseSpec<F> {
    pub fn new(regime: Regime, weights: Vec<F>) -> Result<Self> {
        if weights.len() < 2 || weights.len() > 256 {
            return Err(Error::InvalidAlphabet(weights.len()));
        }
        if !is_distribution(&weights, 1e-12) {
            return Err(Error::InvalidDistribution(format!("noise weights {weights:?}")));
        }
        Ok(NoiseSpec { regime, weights, product_table: None })
    }

    /// Binary noise at corruption level `eps`: `P(ξ=1) = eps` for the sum
    /// regime (a bit flip) and `P(ξ=0) = eps` for the product regime (a
    /// forced zero).
    pub fn binary(regime: Regime, eps: F) -> Result<Self> {
        if !(eps >= F::zero() && eps <= F::one()) {
            return Err(Error::InvalidParameter(format!("noise level {eps} outside [0, 1]")));
        }
        let weights = match regime {
            Regime::Sum => vec![F::one() - eps, eps],
            Regime::Product => vec![eps, F::one() - eps],
        };
        Self::new(regime, weights)
    }

    /// Scalar noise family over any alphabet. Binary alphabets use
    /// [`NoiseSpec::binary`]; larger sum alphabets spread `eps` evenly over
    /// the non-zero shifts. Larger product alphabets need an explicit table.
    pub fn from_level(regime: Regime, alphabet: Alphabet, eps: F) -> Result<Self> {
        let n = alphabet.size();
        if n == 2 {
            return Self::binary(regime, eps);
        }
        match regime {
            Regime::Sum => {
                if !(eps >= F::zero() && eps <= F::one()) {
                    return Err(Error::InvalidParameter(format!("noise level {eps} outside [0, 1]")));
                }
                let mut w = vec![eps / F::lit((n - 1) as f64); n];
                w[0] = F::one() - eps;
                Self::new(regime, w)
            }
            Regime::Product => Err(Error::ProductClosure(n)),
        }
    }

    /// Closed operation table `table[a][b] = a ∘ b` for products over `N > 2`.
    pub fn with_product_table(mut self, table: Vec<Vec<Symbol>>) -> Result<Self> {
        let n = self.weights.len();
        if table.len() != n || table.iter().any(|row| row.len() != n || row.iter().any(|&c| c as usize >= n)) {
            return Err(Error::InvalidParameter(format!("product table must be {n}x{n} over the alphabet")));
        }
        self.product_table = Some(table);
        Ok(self)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.weights.len()).expect("weights length checked")
    }

    /// Corruption probability: mass off the identity element of the regime.
    pub fn level(&self) -> F {
        match self.regime {
            Regime::Sum => F::one() - self.weights[0],
            Regime::Product => F::one() - self.weights[1],
        }
    }

    /// `a ⊕ b` or `a · b`.
    pub fn combine(&self, a: Symbol, b: Symbol) -> Result<Symbol> {
        let n = self.weights.len();
        match self.regime {
            Regime::Sum => Ok(((a as usize + b as usize) % n) as Symbol),
            Regime::Product => match &self.product_table {
                Some(t) => Ok(t[a as usize][b as usize]),
                None if n == 2 => Ok(a * b),
                None => Err(Error::ProductClosure(n)),
            },
        }
    }

    pub fn cast<G: Real>(&self) -> NoiseSpec<G> {
        NoiseSpec {
            regime: self.regime,
            weights: self.weights.iter().map(|w| G::lit(w.as_f64())).collect(),
            product_table: self.product_table.clone(),
        }
    }
}

/// Per-symbol emission law `b_a(z)`, rows indexed by hidden symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix<F = f64> {
    n: usize,
    entries: Vec<F>,
}

impl<F: Real> EmissionMatrix<F> {
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let n = rows.len();
        Alphabet::new(n)?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("emission matrix must be square".into()));
        }
        Ok(EmissionMatrix { n, entries: rows.into_iter().flatten().collect() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, hidden: Symbol, observed: Symbol) -> F {
        self.entries[hidden as usize * self.n + observed as usize]
    }

    pub fn row(&self, hidden: Symbol) -> &[F] {
        let start = hidden as usize * self.n;
        &self.entries[start..start + self.n]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.entries
    }
}

/// `b_a(z) = Σ_{b : a∘b = z} ε_b`; for the sum regime this is `ε_{(z-a) mod N}`.
pub fn emission_matrix<F: Real>(noise: &NoiseSpec<F>, alphabet: Alphabet) -> Result<EmissionMatrix<F>> {
    alphabet.ensure_same(noise.alphabet())?;
    let n = alphabet.size();
    let mut entries = vec![F::zero(); n * n];
    for a in alphabet.symbols() {
        for (b, &w) in noise.weights.iter().enumerate() {
            let z = noise.combine(a, b as Symbol)?;
            entries[a as usize * n + z as usize] = entries[a as usize * n + z as usize] + w;
        }
    }
    Ok(EmissionMatrix { n, entries })
}

/// Apply i.i.d. noise to `x`; deterministic given `seed`.
pub fn contaminate<F: Real>(x: &SymbolSequence, noise: &NoiseSpec<F>, seed: u64) -> Result<SymbolSequence> {
    x.alphabet().ensure_same(noise.alphabet())?;
    if noise.regime == Regime::Product && noise.product_table.is_none() && x.alphabet().size() > 2 {
        return Err(Error::ProductClosure(x.alphabet().size()));
    }
    let mut rng = stream_rng(seed, 0);
    let z = x
        .symbols()
        .iter()
        .map(|&a| {
            let b = sample_index(&mut rng, &noise.weights) as Symbol;
            noise.combine(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    SymbolSequence::new(x.alphabet(), z)
}

/// Exact log-likelihood of `z` by summing over every hidden path.
///
/// `initial` must be a law over blocks of length `k = d(tree)`. Hidden paths
/// are enumerated over `max(T, k)` symbols, so `T < k` marginalizes the
/// initial block. Exponential cost: `T <= 12` is enforced.
pub fn brute_force_likelihood<F: Real>(
    z: &SymbolSequence,
    tree: &ContextTree<F>,
    initial: &InitialLaw<F>,
    noise: &NoiseSpec<F>,
    convention: EmissionConvention,
) -> Result<F> {
    let alphabet = z.alphabet();
    alphabet.ensure_same(tree.alphabet())?;
    alphabet.ensure_same(noise.alphabet())?;
    let t_len = z.len();
    if t_len == 0 || t_len > ORACLE_MAX_LEN {
        return Err(Error::OracleGuard(format!("sequence length {t_len} outside 1..={ORACLE_MAX_LEN}")));
    }
    let k = tree.depth();
    let block = initial.block_probs(k)?;
    let n = alphabet.size();
    let len = t_len.max(k);
    let first_emitted = match convention {
        EmissionConvention::AllSteps => 0,
        EmissionConvention::AfterInitialBlock => k,
    };

    // noise mass reaching z_t from hidden symbol a: Σ_b P(ξ=b) 1{z_t = a∘b}
    let mut reach = vec![F::zero(); n * t_len];
    for t in 0..t_len {
        for a in alphabet.symbols() {
            let mut s = F::zero();
            for (b, &w) in noise.weights().iter().enumerate() {
                if noise.combine(a, b as Symbol)? == z.symbols()[t] {
                    s = s + w;
                }
            }
            reach[t * n + a as usize] = s;
        }
    }

    let mut path = vec![0 as Symbol; len];
    let mut total = F::zero();
    for code in 0..alphabet.num_strings(len) {
        let mut c = code;
        for slot in path.iter_mut().rev() {
            *slot = (c % n) as Symbol;
            c /= n;
        }
        let init_code = path[..k].iter().fold(0usize, |acc, &s| acc * n + s as usize);
        let mut p = block[init_code];
        if p == F::zero() {
            continue;
        }
        for t in k..len {
            p = p * tree.next_law(&path[..t])?[path[t] as usize];
        }
        for t in first_emitted..t_len {
            p = p * reach[t * n + path[t] as usize];
        }
        total = total + p;
    }
    Ok(total.ln())
}
