//! Sampling a VLMC and estimating transitions from a fully observed sample.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::context_tree::ContextTree;
use crate::error::{Error, Result};
use crate::hmm_embedding::{BlockState, TransitionBlock};
use crate::rng::{sample_index, stream_rng};
use crate::scalar::Real;
use crate::sequences::{Symbol, SymbolSequence};

pub const DEFAULT_BURN_IN: usize = 1000;
const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 100_000;

/// A complete tree with transitions plus the number of discarded warm-up steps.
#[derive(Debug, Clone)]
pub struct VlmcModel<F = f64> {
    tree: ContextTree<F>,
    burn_in: usize,
}

impl<F: Real> VlmcModel<F> {
    pub fn new(tree: ContextTree<F>, burn_in: usize) -> Result<Self> {
        let diag = tree.validate();
        if let Some(ctx) = diag.unset.first() {
            return Err(Error::UnsetTransitions(ctx.symbols().to_vec()));
        }
        if !diag.is_valid() {
            return Err(Error::InvalidTree(format!("{diag:?}")));
        }
        Ok(VlmcModel { tree, burn_in })
    }

    pub fn tree(&self) -> &ContextTree<F> {
        &self.tree
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }
}

/// Draw `x_1^T`: a uniform prefix of `depth` symbols, `burn_in` discarded
/// steps, then `len` kept symbols.
pub fn sample_vlmc<F: Real>(model: &VlmcModel<F>, len: usize, seed: u64) -> Result<SymbolSequence> {
    let tree = model.tree();
    if len < tree.depth() || len == 0 {
        return Err(Error::SequenceTooShort { needed: tree.depth().max(1), got: len });
    }
    let mut rng = stream_rng(seed, 0);
    let n = tree.alphabet().size();
    let prefix: Vec<Symbol> = (0..tree.depth()).map(|_| rng.gen_range(0..n) as Symbol).collect();
    run_chain(model, prefix, len, &mut rng)
}

/// Like [`sample_vlmc`] but starting from a caller-chosen history (oldest first).
pub fn sample_vlmc_from<F: Real>(
    model: &VlmcModel<F>,
    history: &[Symbol],
    len: usize,
    seed: u64,
) -> Result<SymbolSequence> {
    let tree = model.tree();
    if history.len() < tree.depth() {
        return Err(Error::SequenceTooShort { needed: tree.depth(), got: history.len() });
    }
    for &s in history {
        tree.alphabet().check(s as usize)?;
    }
    let mut rng = stream_rng(seed, 0);
    run_chain(model, history.to_vec(), len, &mut rng)
}

fn run_chain<F: Real, R: Rng>(model: &VlmcModel<F>, mut buf: Vec<Symbol>, len: usize, rng: &mut R) -> Result<SymbolSequence> {
    let tree = model.tree();
    let depth = tree.depth();
    let start = buf.len();
    buf.reserve(model.burn_in() + len);
    for _ in 0..model.burn_in() + len {
        let hist = &buf[buf.len() - depth..];
        let next = sample_index(rng, tree.next_law(hist)?) as Symbol;
        buf.push(next);
    }
    let keep = buf.split_off(start + model.burn_in());
    SymbolSequence::new(tree.alphabet(), keep)
}

/// Row `ω ↦ N(ω,a)/N(ω)` for every `ω ∈ E^k`, counting `a` at positions
/// `i > k`; unseen blocks get the uniform row.
pub fn empirical_transitions<F: Real>(sample: &SymbolSequence, k: usize) -> Result<TransitionBlock<F>> {
    if k == 0 {
        return Err(Error::InvalidParameter("block length must be >= 1".into()));
    }
    if sample.len() <= k {
        return Err(Error::SequenceTooShort { needed: k + 1, got: sample.len() });
    }
    let counts = block_transition_counts(sample, k);
    let alphabet = sample.alphabet();
    let n = alphabet.size();
    let mut probs = Vec::with_capacity(counts.len());
    for row in counts.chunks(n) {
        let total: u64 = row.iter().sum();
        if total == 0 {
            probs.extend(std::iter::repeat(F::one() / F::lit(n as f64)).take(n));
        } else {
            probs.extend(row.iter().map(|&c| F::from_count(c) / F::from_count(total)));
        }
    }
    TransitionBlock::new(alphabet, k, probs)
}

/// `N(ω, a)` in next-symbol layout, for `a` at 1-based positions `i > k`.
pub(crate) fn block_transition_counts(sample: &SymbolSequence, k: usize) -> Vec<u64> {
    let alphabet = sample.alphabet();
    let n = alphabet.size();
    let mut counts = vec![0u64; alphabet.num_strings(k) * n];
    for w in sample.symbols().windows(k + 1) {
        let state = BlockState::from_symbols(alphabet, &w[..k]).0;
        counts[state * n + w[k] as usize] += 1;
    }
    counts
}

/// Left fixed vector of the block chain.
///
/// The chain must have a single closed communicating class; otherwise the
/// fixed vector is not unique and `Reducible` is returned with the number of
/// closed classes. Iteration uses the lazy kernel `(I + P)/2`, which has the
/// same fixed vector but no periodicity.
pub fn stationary_distribution<F: Real>(block: &TransitionBlock<F>) -> Result<Vec<F>> {
    let states = block.num_states();
    let n = block.alphabet().size();
    let mut graph = DiGraph::<(), ()>::with_capacity(states, states * n);
    let nodes: Vec<_> = (0..states).map(|_| graph.add_node(())).collect();
    for w in 0..states {
        for (a, p) in block.row(w).iter().enumerate() {
            if *p > F::zero() {
                graph.add_edge(nodes[w], nodes[block.shift(w, a as Symbol)], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; states];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let closed = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|node| graph.neighbors(*node).all(|m| component[m.index()] == *c))
        })
        .count();
    if closed != 1 {
        return Err(Error::Reducible(closed));
    }

    let half = F::lit(0.5);
    let mut v = vec![F::one() / F::lit(states as f64); states];
    let mut next = vec![F::zero(); states];
    for _ in 0..STATIONARY_MAX_ITER {
        next.iter_mut().for_each(|x| *x = F::zero());
        for w in 0..states {
            for (a, &p) in block.row(w).iter().enumerate() {
                next[block.shift(w, a as Symbol)] = next[block.shift(w, a as Symbol)] + v[w] * p;
            }
        }
        let residual: f64 = v.iter().zip(&next).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
        for (x, y) in v.iter_mut().zip(&next) {
            *x = half * (*x + *y);
        }
        if residual < STATIONARY_TOL.max(F::epsilon().as_f64() * 16.0) {
            let total: F = v.iter().copied().sum();
            return Ok(v.into_iter().map(|x| x / total).collect());
        }
    }
    Err(Error::NoConvergence(STATIONARY_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm_embedding::embed_tree;
    use crate::presets;
    use crate::sequences::{count_context, count_pattern, Alphabet, ContextString};

    #[test]
    fn absorbing_chain_stays_put() {
        let tree = ContextTree::<f64>::from_table(Alphabet::BINARY, &[("0", &[1.0, 0.0]), ("1", &[0.0, 1.0])]).unwrap();
        let model = VlmcModel::new(tree, 20).unwrap();
        let x = sample_vlmc_from(&model, &[0], 50, 3).unwrap();
        assert!(x.symbols().iter().all(|&s| s == 0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = VlmcModel::new(presets::scenario1_tree(), DEFAULT_BURN_IN).unwrap();
        let a = sample_vlmc(&model, 500, 9).unwrap();
        let b = sample_vlmc(&model, 500, 9).unwrap();
        let c = sample_vlmc(&model, 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(sample_vlmc(&model, 2, 9).is_err());
    }

    #[test]
    fn unset_transitions_rejected() {
        let tree = ContextTree::<f64>::without_transitions(
            Alphabet::BINARY,
            vec![ContextString::parse(Alphabet::BINARY, "0").unwrap(), ContextString::parse(Alphabet::BINARY, "1").unwrap()],
        )
        .unwrap();
        assert!(matches!(VlmcModel::new(tree, 0), Err(Error::UnsetTransitions(_))));
    }

    #[test]
    fn law_of_large_numbers_on_scenario_one() {
        let tree = presets::scenario1_tree();
        let x = sample_vlmc(&VlmcModel::new(tree.clone(), DEFAULT_BURN_IN).unwrap(), 100_000, 2024).unwrap();
        for (i, ctx) in tree.contexts().iter().enumerate() {
            let total = count_context(&x, ctx, 3).unwrap() as f64;
            let zeros = count_pattern(&x, ctx, 0, 3).unwrap() as f64;
            let p0 = tree.transitions(i).unwrap()[0];
            assert!((zeros / total - p0).abs() < 0.01, "{ctx}: {} vs {p0}", zeros / total);
        }
    }

    #[test]
    fn empirical_alternating() {
        let x = SymbolSequence::new(Alphabet::BINARY, vec![0, 1, 0, 1, 0, 1]).unwrap();
        let a = empirical_transitions::<f64>(&x, 1).unwrap();
        assert_eq!(a.row(0), &[0.0, 1.0]);
        assert_eq!(a.row(1), &[1.0, 0.0]);
        let a2 = empirical_transitions::<f64>(&x, 2).unwrap();
        assert_eq!(a2.row(0), &[0.5, 0.5]); // 00 never seen
        assert!(empirical_transitions::<f64>(&x.prefix(2), 2).is_err());
    }

    #[test]
    fn empirical_iid_rows_near_half() {
        let iid = ContextTree::<f64>::root_only(Alphabet::BINARY, Some(vec![0.5, 0.5])).unwrap();
        let x = sample_vlmc(&VlmcModel::new(iid, 0).unwrap(), 100_000, 5).unwrap();
        let a = empirical_transitions::<f64>(&x, 2).unwrap();
        for w in 0..4 {
            assert!((a.row(w)[0] - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn empirical_converges_to_embedding() {
        let tree = presets::scenario1_tree();
        let model = VlmcModel::new(tree.clone(), DEFAULT_BURN_IN).unwrap();
        for &t in &[10_000usize, 100_000] {
            let x = sample_vlmc(&model, t, 77).unwrap();
            // at k = d(T) the rarest blocks carry too few counts for this
            // bound, so the check runs at the tree depth
            let k = tree.depth();
            let truth = embed_tree(&tree, k).unwrap();
            let est = empirical_transitions::<f64>(&x, k).unwrap();
            let bound = 5.0 * ((t as f64).ln() / t as f64).sqrt();
            let err = truth.as_slice().iter().zip(est.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= bound, "T={t}: {err} > {bound}");
        }
    }

    #[test]
    fn stationary_symmetric_and_periodic() {
        let sym = TransitionBlock::<f64>::new(Alphabet::BINARY, 1, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let pi = stationary_distribution(&sym).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
        let flip = TransitionBlock::<f64>::new(Alphabet::BINARY, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let pi = stationary_distribution(&flip).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
        let ident = TransitionBlock::<f64>::new(Alphabet::BINARY, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(stationary_distribution(&ident), Err(Error::Reducible(2))));
    }

    #[test]
    fn stationary_matches_long_run_frequencies() {
        let tree = presets::scenario2_tree();
        let block = embed_tree(&tree, 4).unwrap();
        let pi = stationary_distribution(&block).unwrap();
        // fixed point check
        for v in 0..16 {
            let s: f64 = (0..16).map(|w| pi[w] * block.prob(w, v)).sum();
            assert!((s - pi[v]).abs() < 1e-10);
        }
        let x = sample_vlmc(&VlmcModel::new(tree, DEFAULT_BURN_IN).unwrap(), 200_000, 8).unwrap();
        let mut freq = vec![0.0; 16];
        for w in x.symbols().windows(4) {
            freq[BlockState::from_symbols(Alphabet::BINARY, w).0] += 1.0;
        }
        let total: f64 = freq.iter().sum();
        for v in 0..16 {
            assert!((freq[v] / total - pi[v]).abs() < 0.01);
        }
    }

    #[test]
    fn f32_stationary() {
        let block = embed_tree(&presets::scenario1_tree().cast::<f32>(), 3).unwrap();
        let pi = stationary_distribution(&block).unwrap();
        let s: f32 = pi.iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
