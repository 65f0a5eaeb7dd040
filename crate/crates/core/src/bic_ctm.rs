//! Bootstrap sampling from the fitted block chain and BIC pruning.
//!
//! Scores live in log space: `P̃_ω = ml(ω) - ((N-1)/2) ln m`, and the
//! maximizing recursion `V_ω = max(P̃_ω, Σ_a V_{aω})` runs bottom-up over the
//! suffix trie of strings seen in the sample. All counts use positions
//! `D < i ≤ m`, so every candidate depth shares one window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context_tree::ContextTree;
use crate::error::{Error, Result};
use crate::hmm_embedding::TransitionBlock;
use crate::rng::{sample_index, stream_rng};
use crate::scalar::{xlogx_ratio, Real};
use crate::sequences::{Alphabet, ContextString, Symbol, SymbolSequence};

/// Largest feasible-tree search the exhaustive oracle accepts.
pub const EXHAUSTIVE_MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub m: usize,
    pub depth: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.m <= self.depth {
            return Err(Error::InvalidParameter(format!(
                "bootstrap needs depth >= 1 and m > depth (m={}, depth={})",
                self.m, self.depth
            )));
        }
        Ok(())
    }
}

/// Draw `m` symbols from the block chain `Â*` started at a `π̂*` draw.
///
/// The first block contributes its `k` symbols, every later step its newest
/// symbol.
pub fn bootstrap_sample<F: Real>(a_star: &TransitionBlock<F>, pi_star: &[F], m: usize, seed: u64) -> Result<SymbolSequence> {
    let k = a_star.k();
    if m <= k {
        return Err(Error::SequenceTooShort { needed: k + 1, got: m });
    }
    if pi_star.len() != a_star.num_states() || !crate::scalar::is_distribution(pi_star, 1e-9) {
        return Err(Error::InvalidDistribution("bootstrap initial law".into()));
    }
    let alphabet = a_star.alphabet();
    let mut rng = stream_rng(seed, 0);
    let mut state = sample_index(&mut rng, pi_star);
    let mut out = Vec::with_capacity(m);
    out.extend_from_slice(ContextString::from_code(alphabet, k, state).symbols());
    while out.len() < m {
        let a = sample_index(&mut rng, a_star.row(state)) as Symbol;
        out.push(a);
        state = a_star.shift(state, a);
    }
    SymbolSequence::new(alphabet, out)
}

/// `max(1, ⌊ln m / (2 ln N)⌋)`, evaluated exactly as the largest `d` with
/// `N^(2d) ≤ m`.
pub fn default_depth(m: usize, alphabet: Alphabet) -> Result<usize> {
    let n2 = alphabet.size() * alphabet.size();
    if m < n2 {
        return Err(Error::SequenceTooShort { needed: n2, got: m });
    }
    let mut d = 0;
    let mut power = 1usize;
    while let Some(next) = power.checked_mul(n2) {
        if next > m {
            break;
        }
        power = next;
        d += 1;
    }
    Ok(d.max(1))
}

#[derive(Debug, Clone)]
struct CountNode {
    symbols: Vec<Symbol>,
    counts: Vec<u64>,
    children: Vec<Option<usize>>,
}

impl CountNode {
    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Transition counts `N̂(ω, a)` for every `ω` with `l(ω) ≤ D` seen in the window.
#[derive(Debug, Clone)]
pub struct CountTrie {
    alphabet: Alphabet,
    depth: usize,
    m: usize,
    nodes: Vec<CountNode>,
}

impl CountTrie {
    pub fn build(sample: &SymbolSequence, depth: usize, m: usize) -> Result<Self> {
        if depth == 0 || m <= depth || m > sample.len() {
            return Err(Error::InvalidParameter(format!(
                "counting needs 1 <= D < m <= sample length (D={depth}, m={m}, len={})",
                sample.len()
            )));
        }
        let alphabet = sample.alphabet();
        let n = alphabet.size();
        let s = sample.symbols();
        let mut nodes = vec![CountNode { symbols: Vec::new(), counts: vec![0; n], children: vec![None; n] }];
        // 1-based position i in (D, m] is 0-based index i-1
        for idx in depth..m {
            let next = s[idx] as usize;
            let mut node = 0;
            nodes[0].counts[next] += 1;
            for l in 1..=depth {
                let older = s[idx - l];
                node = match nodes[node].children[older as usize] {
                    Some(c) => c,
                    None => {
                        let mut symbols = Vec::with_capacity(l);
                        symbols.push(older);
                        symbols.extend_from_slice(&nodes[node].symbols);
                        nodes.push(CountNode { symbols, counts: vec![0; n], children: vec![None; n] });
                        let c = nodes.len() - 1;
                        nodes[node].children[older as usize] = Some(c);
                        c
                    }
                };
                nodes[node].counts[next] += 1;
            }
        }
        Ok(CountTrie { alphabet, depth, m, nodes })
    }

    fn find(&self, symbols: &[Symbol]) -> Option<usize> {
        if symbols.len() > self.depth {
            return None;
        }
        let mut node = 0;
        for &a in symbols.iter().rev() {
            node = self.nodes[node].children[a as usize]?;
        }
        Some(node)
    }

    pub fn counts(&self, ctx: &ContextString) -> Option<&[u64]> {
        self.find(ctx.symbols()).map(|i| self.nodes[i].counts.as_slice())
    }

    /// `N̂(ω)`; zero for unseen or too-long strings.
    pub fn total(&self, ctx: &ContextString) -> u64 {
        self.find(ctx.symbols()).map_or(0, |i| self.nodes[i].total())
    }

    /// Every seen string, shortest first.
    pub fn seen(&self) -> Vec<ContextString> {
        let mut out: Vec<ContextString> = self
            .nodes
            .iter()
            .map(|nd| ContextString::new(self.alphabet, nd.symbols.clone()).expect("symbols in range"))
            .collect();
        out.sort();
        out.sort_by_key(|c| c.len());
        out
    }

    fn ml(&self, node: usize) -> f64 {
        let nd = &self.nodes[node];
        let total = nd.total();
        nd.counts.iter().map(|&c| xlogx_ratio(c as f64, total as f64)).sum()
    }

    fn penalty(&self) -> f64 {
        (self.alphabet.size() as f64 - 1.0) / 2.0 * (self.m as f64).ln()
    }

    fn penalized(&self, node: usize) -> f64 {
        self.ml(node) - self.penalty()
    }
}

/// `Σ_a N̂(ω,a) ln(N̂(ω,a)/N̂(ω))`, zero when `ω` is unseen.
pub fn ml_term(sample: &SymbolSequence, ctx: &ContextString, depth: usize, m: usize) -> Result<f64> {
    let trie = CountTrie::build(sample, depth.max(ctx.len()), m)?;
    Ok(trie.find(ctx.symbols()).map_or(0.0, |i| trie.ml(i)))
}

/// `ml_term - ((N-1)/2) ln m`.
pub fn penalized_term(sample: &SymbolSequence, ctx: &ContextString, depth: usize, m: usize) -> Result<f64> {
    let penalty = (sample.alphabet().size() as f64 - 1.0) / 2.0 * (m as f64).ln();
    Ok(ml_term(sample, ctx, depth, m)? - penalty)
}

#[derive(Debug, Clone)]
pub struct PrunedTreeResult {
    /// Selected tree with maximum-likelihood transitions from the counts.
    pub tree: ContextTree<f64>,
    pub node_values: BTreeMap<ContextString, f64>,
    pub node_flags: BTreeMap<ContextString, bool>,
    /// `-V_∅`, the BIC of the selected tree.
    pub bic_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDump {
    pub context: String,
    pub count: u64,
    pub value: f64,
    pub flag: bool,
}

impl PrunedTreeResult {
    pub fn node_dump(&self, trie: &CountTrie) -> Vec<NodeDump> {
        self.node_values
            .iter()
            .map(|(ctx, &value)| NodeDump {
                context: ctx.to_string(),
                count: trie.total(ctx),
                value,
                flag: self.node_flags[ctx],
            })
            .collect()
    }
}

fn tree_from_counts(trie: &CountTrie, contexts: Vec<ContextString>) -> Result<ContextTree<f64>> {
    let rows = contexts
        .iter()
        .map(|c| {
            let counts = trie.counts(c).expect("selected contexts are seen");
            let total: u64 = counts.iter().sum();
            Some(counts.iter().map(|&x| x as f64 / total as f64).collect())
        })
        .collect();
    ContextTree::new(trie.alphabet, contexts, rows)
}

/// Maximizing-tree recursion over the counts of `sample[..m]` at depth `D`.
pub fn ctm_prune(sample: &SymbolSequence, depth: usize, m: usize) -> Result<PrunedTreeResult> {
    let trie = CountTrie::build(sample, depth, m)?;
    ctm_prune_counts(&trie)
}

pub fn ctm_prune_counts(trie: &CountTrie) -> Result<PrunedTreeResult> {
    let count = trie.nodes.len();
    let mut values = vec![0.0; count];
    let mut flags = vec![false; count];
    // children are always created after their parent
    for node in (0..count).rev() {
        let own = trie.penalized(node);
        let kids: Vec<usize> = trie.nodes[node].children.iter().flatten().copied().collect();
        if kids.is_empty() {
            values[node] = own;
            continue;
        }
        let sum: f64 = kids.iter().map(|&c| values[c]).sum();
        if sum > own {
            values[node] = sum;
            flags[node] = true;
        } else {
            values[node] = own;
        }
    }
    let mut contexts = Vec::new();
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if flags[node] {
            stack.extend(trie.nodes[node].children.iter().flatten().copied());
        } else {
            contexts.push(ContextString::new(trie.alphabet, trie.nodes[node].symbols.clone())?);
        }
    }
    contexts.sort();
    let mut node_values = BTreeMap::new();
    let mut node_flags = BTreeMap::new();
    for (i, nd) in trie.nodes.iter().enumerate() {
        let key = ContextString::new(trie.alphabet, nd.symbols.clone())?;
        node_values.insert(key.clone(), values[i]);
        node_flags.insert(key, flags[i]);
    }
    Ok(PrunedTreeResult { tree: tree_from_counts(trie, contexts)?, node_values, node_flags, bic_score: -values[0] })
}

/// Exhaustive minimization of `-ln ML + ((N-1)|T|/2) ln m` over feasible trees.
///
/// A feasible tree is a suffix-free set of seen strings of length `≤ D` such
/// that every seen string either has a suffix in the tree or is a suffix of a
/// tree context. Candidates are built by backtracking over seen strings,
/// shortest first, and each complete candidate is checked against that
/// definition directly. Among equal scores (within
/// `1e-9`) the tree with the smallest total context length wins.
pub fn exhaustive_bic(sample: &SymbolSequence, depth: usize, m: usize) -> Result<(ContextTree<f64>, f64)> {
    if sample.alphabet().size() != 2 || depth > EXHAUSTIVE_MAX_DEPTH {
        return Err(Error::OracleGuard(format!(
            "exhaustive search needs a binary alphabet and D <= {EXHAUSTIVE_MAX_DEPTH}"
        )));
    }
    let trie = CountTrie::build(sample, depth, m)?;
    let seen = trie.seen();
    let penalty = trie.penalty();
    let scores: Vec<f64> = seen.iter().map(|c| -trie.ml(trie.find(c.symbols()).unwrap()) + penalty).collect();

    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let extendable: Vec<bool> = seen
        .iter()
        .map(|c| seen.iter().any(|s| s.len() == c.len() + 1 && crate::sequences::suffix_of(c.symbols(), s.symbols())))
        .collect();
    let mut chosen = Vec::new();
    search(&seen, &extendable, &scores, 0, &mut chosen, &mut best);
    let (score, _, picks) = best.ok_or_else(|| Error::InvalidTree("no feasible tree".into()))?;
    let mut contexts: Vec<ContextString> = picks.into_iter().map(|i| seen[i].clone()).collect();
    contexts.sort();
    Ok((tree_from_counts(&trie, contexts)?, score))
}

fn search(
    seen: &[ContextString],
    extendable: &[bool],
    scores: &[f64],
    next: usize,
    chosen: &mut Vec<usize>,
    best: &mut Option<(f64, usize, Vec<usize>)>,
) {
    if next == seen.len() {
        if !feasible(seen, chosen) {
            return;
        }
        let score: f64 = chosen.iter().map(|&i| scores[i]).sum();
        let length: usize = chosen.iter().map(|&i| seen[i].len()).sum();
        let better = match best {
            None => true,
            Some((b, bl, _)) => score < *b - 1e-9 || ((score - *b).abs() <= 1e-9 && length < *bl),
        };
        if better {
            *best = Some((score, length, chosen.clone()));
        }
        return;
    }
    // strings come shortest first, so every shorter string is already decided
    let candidate = seen[next].symbols();
    let covered = chosen.iter().any(|&i| crate::sequences::suffix_of(seen[i].symbols(), candidate));
    if covered {
        search(seen, extendable, scores, next + 1, chosen, best);
        return;
    }
    chosen.push(next);
    search(seen, extendable, scores, next + 1, chosen, best);
    chosen.pop();
    // leaving it out only works if a longer seen string can cover it later
    if extendable[next] {
        search(seen, extendable, scores, next + 1, chosen, best);
    }
}

fn feasible(seen: &[ContextString], chosen: &[usize]) -> bool {
    !chosen.is_empty()
        && seen.iter().all(|s| {
            chosen.iter().any(|&i| {
                let c = seen[i].symbols();
                crate::sequences::suffix_of(c, s.symbols()) || crate::sequences::suffix_of(s.symbols(), c)
            })
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm_embedding::embed_tree;
    use crate::presets;
    use crate::vlmc_source::{empirical_transitions, sample_vlmc, stationary_distribution, VlmcModel};

    fn seq(v: &[u8]) -> SymbolSequence {
        SymbolSequence::new(Alphabet::BINARY, v.to_vec()).unwrap()
    }

    fn bin(s: &str) -> ContextString {
        ContextString::parse(Alphabet::BINARY, s).unwrap()
    }

    fn iid(m: usize, seed: u64) -> SymbolSequence {
        let t = ContextTree::<f64>::root_only(Alphabet::BINARY, Some(vec![0.5, 0.5])).unwrap();
        sample_vlmc(&VlmcModel::new(t, 0).unwrap(), m, seed).unwrap()
    }

    #[test]
    fn ml_term_examples() {
        // "1" occurs once with a successor (followed by 0)
        let s = seq(&[0, 1, 0]);
        assert_eq!(ml_term(&s, &bin("1"), 1, 3).unwrap(), 0.0);
        // "0" followed by 0,0,0,1 after the first position
        let s = seq(&[0, 0, 0, 0, 1]);
        let v = ml_term(&s, &bin("0"), 1, 5).unwrap();
        assert!((v - (3.0 * (0.75f64).ln() + (0.25f64).ln())).abs() < 1e-12);
        assert_eq!(ml_term(&s, &bin("11"), 2, 5).unwrap(), 0.0);
    }

    #[test]
    fn penalty_examples() {
        let s = seq(&[0, 1, 0, 1, 1, 0, 1, 0]);
        let m = 7;
        let ml = ml_term(&s, &bin("1"), 1, m).unwrap();
        let pen = penalized_term(&s, &bin("1"), 1, m).unwrap();
        assert!((ml - pen - 0.5 * (m as f64).ln()).abs() < 1e-12);
        let unseen = penalized_term(&s, &bin("00"), 2, m).unwrap();
        assert!((unseen + 0.5 * (m as f64).ln()).abs() < 1e-12);
        // ln(e^2)/2 = 1
        assert!((0.5 * (std::f64::consts::E.powi(2)).ln() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_depths() {
        assert_eq!(default_depth(10_000, Alphabet::BINARY).unwrap(), 6);
        assert_eq!(default_depth(16, Alphabet::BINARY).unwrap(), 2);
        assert_eq!(default_depth(4, Alphabet::BINARY).unwrap(), 1);
        assert_eq!(default_depth(100_000, Alphabet::BINARY).unwrap(), 8);
        assert!(default_depth(3, Alphabet::BINARY).is_err());
    }

    #[test]
    fn iid_prunes_to_root() {
        let x = iid(10_000, 4);
        let res = ctm_prune(&x, 6, 10_000).unwrap();
        assert_eq!(res.tree.context_set(), [ContextString::empty(Alphabet::BINARY)].into_iter().collect());
    }

    #[test]
    fn constant_sample_prunes_to_root() {
        let res = ctm_prune(&seq(&[1; 40]), 3, 40).unwrap();
        assert_eq!(res.tree.len(), 1);
        assert!(res.tree.contexts()[0].is_empty());
    }

    #[test]
    fn alternating_sample_gives_order_one() {
        let x = seq(&(0..40).map(|i| (i % 2) as u8).collect::<Vec<_>>());
        let (tree, _) = exhaustive_bic(&x, 3, 40).unwrap();
        assert_eq!(tree.context_set(), [bin("0"), bin("1")].into_iter().collect());
        assert_eq!(ctm_prune(&x, 3, 40).unwrap().tree.context_set(), tree.context_set());
    }

    #[test]
    fn small_iid_exhaustive_is_root() {
        let mut roots = 0;
        for seed in 0..20 {
            let x = iid(20, seed);
            let (tree, score) = exhaustive_bic(&x, 2, 20).unwrap();
            roots += (tree.len() == 1) as usize;
            let ctm = ctm_prune(&x, 2, 20).unwrap();
            assert_eq!(ctm.tree.context_set(), tree.context_set());
            assert!((ctm.bic_score - score).abs() < 1e-9);
        }
        assert!(roots >= 15, "{roots}/20");
        assert!(exhaustive_bic(&iid(20, 0), 5, 20).is_err());
    }

    #[test]
    fn ctm_matches_exhaustive_on_scenario_samples() {
        let tree = presets::scenario1_tree();
        let model = VlmcModel::new(tree, 100).unwrap();
        for seed in 0..6 {
            let x = sample_vlmc(&model, 400, seed).unwrap();
            let ctm = ctm_prune(&x, 4, 400).unwrap();
            let (oracle, score) = exhaustive_bic(&x, 4, 400).unwrap();
            assert_eq!(ctm.tree.context_set(), oracle.context_set());
            assert!((ctm.bic_score - score).abs() < 1e-9);
            for c in ctm.tree.contexts() {
                assert!(ctm.node_values.contains_key(c));
            }
        }
    }

    #[test]
    fn scenario_one_recovered_at_large_m() {
        let model = VlmcModel::new(presets::scenario1_tree(), 1000).unwrap();
        let mut hits = 0;
        for seed in 0..20 {
            let x = sample_vlmc(&model, 30_000, seed).unwrap();
            let res = ctm_prune(&x, 5, 30_000).unwrap();
            hits += (res.tree.context_set() == presets::scenario1_tree().context_set()) as usize;
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn bootstrap_reproduces_chain_statistics() {
        let tree = presets::scenario1_tree();
        let a = embed_tree(&tree, 3).unwrap();
        let pi = stationary_distribution(&a).unwrap();
        let b = bootstrap_sample(&a, &pi, 100_000, 1).unwrap();
        assert_eq!(b.len(), 100_000);
        let emp = empirical_transitions::<f64>(&b, 3).unwrap();
        for (x, y) in emp.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 0.02);
        }
        assert_eq!(bootstrap_sample(&a, &pi, 100, 1).unwrap(), bootstrap_sample(&a, &pi, 100, 1).unwrap());
    }

    #[test]
    fn bootstrap_deterministic_chain_is_periodic() {
        let a = TransitionBlock::<f64>::new(Alphabet::BINARY, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let b = bootstrap_sample(&a, &[0.0, 1.0, 0.0, 0.0], 10, 3).unwrap();
        assert_eq!(b.symbols(), &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert!(bootstrap_sample(&a, &[0.0, 1.0, 0.0, 0.0], 2, 3).is_err());
        let cfg = BootstrapConfig { m: 3, depth: 3, seed: 0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pruned_contexts_are_seen() {
        let x = iid(300, 2);
        let res = ctm_prune(&x, 4, 300).unwrap();
        let trie = CountTrie::build(&x, 4, 300).unwrap();
        for c in res.tree.contexts() {
            assert!(trie.total(c) >= 1);
        }
        assert!(res.tree.validate().is_suffix_free());
    }
}
