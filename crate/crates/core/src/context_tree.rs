//! Context trees: suffix-free context sets with next-symbol laws.
//!
//! Internally a tree is a suffix trie rooted at the present (the empty
//! string). Children are indexed by the next-older symbol, so resolving the
//! context of a history is a walk backward through it.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{is_distribution, Real};
use crate::sequences::{suffix_of, Alphabet, ContextString, Symbol};

const ROW_TOL: f64 = 1e-12;
const IRREDUCIBLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct TrieNode {
    children: Vec<Option<usize>>,
    context: Option<usize>,
}

#[derive(Debug, Clone)]
struct SuffixTrie {
    nodes: Vec<TrieNode>,
}

impl SuffixTrie {
    fn build(alphabet: Alphabet, contexts: &[ContextString]) -> Result<Self> {
        let n = alphabet.size();
        let mut nodes = vec![TrieNode { children: vec![None; n], context: None }];
        for (idx, ctx) in contexts.iter().enumerate() {
            let mut node = 0;
            for &s in ctx.symbols().iter().rev() {
                node = match nodes[node].children[s as usize] {
                    Some(c) => c,
                    None => {
                        nodes.push(TrieNode { children: vec![None; n], context: None });
                        let c = nodes.len() - 1;
                        nodes[node].children[s as usize] = Some(c);
                        c
                    }
                };
            }
            if nodes[node].context.is_some() {
                return Err(Error::InvalidTree(format!("duplicate context {ctx}")));
            }
            nodes[node].context = Some(idx);
        }
        Ok(SuffixTrie { nodes })
    }
}

/// A context tree with optional per-context next-symbol distributions.
#[derive(Debug, Clone)]
pub struct ContextTree<F = f64> {
    alphabet: Alphabet,
    contexts: Vec<ContextString>,
    transitions: Vec<Option<Vec<F>>>,
    trie: SuffixTrie,
}

/// Findings of [`ContextTree::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreeDiagnostics {
    /// `(shorter, longer)` pairs where the first is a proper suffix of the second.
    pub suffix_violations: Vec<(ContextString, ContextString)>,
    pub non_stochastic: Vec<ContextString>,
    pub unset: Vec<ContextString>,
    pub complete: bool,
    /// Minimal histories that no context matches.
    pub uncovered: Vec<ContextString>,
    /// Internal nodes whose `|E|` children are all contexts with equal laws.
    pub irreducibility_warnings: Vec<ContextString>,
}

impl TreeDiagnostics {
    pub fn is_suffix_free(&self) -> bool {
        self.suffix_violations.is_empty()
    }

    /// Suffix-free, complete and every row set and stochastic.
    pub fn is_valid(&self) -> bool {
        self.is_suffix_free() && self.complete && self.non_stochastic.is_empty() && self.unset.is_empty()
    }
}

impl<F: Real> ContextTree<F> {
    /// Build a tree. Suffix-freeness is not enforced here (see [`validate`]),
    /// but duplicate contexts and malformed rows are rejected.
    ///
    /// [`validate`]: ContextTree::validate
    pub fn new(
        alphabet: Alphabet,
        contexts: Vec<ContextString>,
        transitions: Vec<Option<Vec<F>>>,
    ) -> Result<Self> {
        if contexts.len() != transitions.len() {
            return Err(Error::InvalidTree(format!(
                "{} contexts but {} transition rows",
                contexts.len(),
                transitions.len()
            )));
        }
        for (ctx, row) in contexts.iter().zip(&transitions) {
            alphabet.ensure_same(ctx.alphabet())?;
            if let Some(row) = row {
                if row.len() != alphabet.size() {
                    return Err(Error::InvalidTree(format!(
                        "row for {ctx} has {} entries, expected {}",
                        row.len(),
                        alphabet.size()
                    )));
                }
            }
        }
        let trie = SuffixTrie::build(alphabet, &contexts)?;
        Ok(ContextTree { alphabet, contexts, transitions, trie })
    }

    pub fn without_transitions(alphabet: Alphabet, contexts: Vec<ContextString>) -> Result<Self> {
        let unset = vec![None; contexts.len()];
        Self::new(alphabet, contexts, unset)
    }

    /// Convenience constructor from digit strings and rows, e.g.
    /// `("010", [0.05, 0.95])`.
    pub fn from_table(alphabet: Alphabet, table: &[(&str, &[f64])]) -> Result<Self> {
        let mut contexts = Vec::with_capacity(table.len());
        let mut rows = Vec::with_capacity(table.len());
        for (ctx, row) in table {
            contexts.push(ContextString::parse(alphabet, ctx)?);
            rows.push(Some(row.iter().map(|&p| F::lit(p)).collect()));
        }
        Self::new(alphabet, contexts, rows)
    }

    /// The `L_full` tree: all `|E|^L` strings of length `L`, transitions unset.
    pub fn full(alphabet: Alphabet, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("full tree order must be >= 1".into()));
        }
        let contexts = (0..alphabet.num_strings(order))
            .map(|code| ContextString::from_code(alphabet, order, code))
            .collect();
        Self::without_transitions(alphabet, contexts)
    }

    /// Tree consisting of the empty context alone (an i.i.d. source).
    pub fn root_only(alphabet: Alphabet, row: Option<Vec<F>>) -> Result<Self> {
        Self::new(alphabet, vec![ContextString::empty(alphabet)], vec![row])
    }

    pub fn with_uniform_transitions(mut self) -> Self {
        let u = F::one() / F::lit(self.alphabet.size() as f64);
        for row in &mut self.transitions {
            *row = Some(vec![u; self.alphabet.size()]);
        }
        self
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn contexts(&self) -> &[ContextString] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// `d(T)`: the longest context length.
    pub fn depth(&self) -> usize {
        self.contexts.iter().map(ContextString::len).max().unwrap_or(0)
    }

    pub fn transitions(&self, index: usize) -> Option<&[F]> {
        self.transitions.get(index).and_then(|r| r.as_deref())
    }

    pub fn index_of(&self, ctx: &ContextString) -> Option<usize> {
        let mut node = 0;
        for &s in ctx.symbols().iter().rev() {
            node = self.trie.nodes[node].children[s as usize]?;
        }
        self.trie.nodes[node].context
    }

    /// Next-symbol law of `ctx`, if it is a context with transitions set.
    pub fn transition_of(&self, ctx: &ContextString) -> Option<&[F]> {
        self.index_of(ctx).and_then(|i| self.transitions(i))
    }

    pub fn set_transitions(&mut self, index: usize, row: Vec<F>) -> Result<()> {
        if row.len() != self.alphabet.size() {
            return Err(Error::InvalidTree(format!("row of length {} for alphabet {}", row.len(), self.alphabet.size())));
        }
        self.transitions[index] = Some(row);
        Ok(())
    }

    /// Index of the context matching the history (oldest first), walking
    /// backward from its most recent symbol.
    pub fn lookup_index(&self, history: &[Symbol]) -> Result<usize> {
        let nodes = &self.trie.nodes;
        let mut node = 0;
        let mut consumed = 0;
        loop {
            if let Some(idx) = nodes[node].context {
                return Ok(idx);
            }
            if consumed == history.len() {
                return Err(Error::NoMatchingContext(history.to_vec()));
            }
            let s = history[history.len() - 1 - consumed] as usize;
            match nodes[node].children.get(s).copied().flatten() {
                Some(c) => node = c,
                None => return Err(Error::NoMatchingContext(history.to_vec())),
            }
            consumed += 1;
        }
    }

    /// The unique context that is a suffix of `history`.
    pub fn lookup_context(&self, history: &ContextString) -> Result<ContextString> {
        self.alphabet.ensure_same(history.alphabet())?;
        let idx = self.lookup_index(history.symbols())?;
        Ok(self.contexts[idx].clone())
    }

    /// Next-symbol law for a history; errors when unmatched or unset.
    pub fn next_law(&self, history: &[Symbol]) -> Result<&[F]> {
        let idx = self.lookup_index(history)?;
        self.transitions(idx)
            .ok_or_else(|| Error::UnsetTransitions(self.contexts[idx].symbols().to_vec()))
    }

    pub fn validate(&self) -> TreeDiagnostics {
        let mut diag = TreeDiagnostics::default();

        for (i, short) in self.contexts.iter().enumerate() {
            for (j, long) in self.contexts.iter().enumerate() {
                if i != j && short.len() < long.len() && suffix_of(short.symbols(), long.symbols()) {
                    diag.suffix_violations.push((short.clone(), long.clone()));
                }
            }
        }

        for (ctx, row) in self.contexts.iter().zip(&self.transitions) {
            match row {
                None => diag.unset.push(ctx.clone()),
                Some(r) if !is_distribution(r, ROW_TOL) => diag.non_stochastic.push(ctx.clone()),
                Some(_) => {}
            }
        }

        // completeness: every path from the root reaches a context
        let mut stack = vec![(0usize, ContextString::empty(self.alphabet))];
        while let Some((node, path)) = stack.pop() {
            let tn = &self.trie.nodes[node];
            if tn.context.is_some() {
                continue;
            }
            for a in self.alphabet.symbols() {
                let ext = path.extend_older(a);
                match tn.children[a as usize] {
                    Some(c) => stack.push((c, ext)),
                    None => diag.uncovered.push(ext),
                }
            }
        }
        diag.uncovered.sort();
        diag.complete = diag.uncovered.is_empty();

        // sibling groups whose laws coincide could be merged into the parent
        let mut parents: HashMap<ContextString, Vec<usize>> = HashMap::new();
        for (i, ctx) in self.contexts.iter().enumerate() {
            if !ctx.is_empty() {
                parents.entry(ctx.suffix(ctx.len() - 1)).or_default().push(i);
            }
        }
        for (parent, kids) in parents {
            if kids.len() != self.alphabet.size() {
                continue;
            }
            let rows: Option<Vec<&[F]>> = kids.iter().map(|&i| self.transitions(i)).collect();
            if let Some(rows) = rows {
                let first = rows[0];
                let all_equal = rows.iter().all(|r| {
                    r.iter().zip(first).all(|(x, y)| (x.as_f64() - y.as_f64()).abs() <= IRREDUCIBLE_TOL)
                });
                if all_equal {
                    diag.irreducibility_warnings.push(parent);
                }
            }
        }
        diag.irreducibility_warnings.sort();
        diag
    }

    /// `T|_k`: contexts longer than `k` are replaced by their length-`k`
    /// suffix and merged. Replaced contexts lose their transitions.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("truncation order must be >= 1".into()));
        }
        let mut contexts: Vec<ContextString> = Vec::new();
        let mut rows: Vec<Option<Vec<F>>> = Vec::new();
        let mut seen: HashMap<ContextString, usize> = HashMap::new();
        for (ctx, row) in self.contexts.iter().zip(&self.transitions) {
            let (target, row) = if ctx.len() <= k { (ctx.clone(), row.clone()) } else { (ctx.suffix(k), None) };
            match seen.get(&target) {
                Some(&i) => rows[i] = None,
                None => {
                    seen.insert(target.clone(), contexts.len());
                    contexts.push(target);
                    rows.push(row);
                }
            }
        }
        Self::new(self.alphabet, contexts, rows)
    }

    /// Set equality of the context sets.
    pub fn tree_equal(&self, other: &ContextTree<F>) -> Result<bool> {
        self.alphabet.ensure_same(other.alphabet)?;
        Ok(self.context_set() == other.context_set())
    }

    pub fn context_set(&self) -> BTreeSet<ContextString> {
        self.contexts.iter().cloned().collect()
    }

    /// Same tree with contexts sorted by (length, code).
    pub fn sorted(&self) -> Self {
        let mut order: Vec<usize> = (0..self.contexts.len()).collect();
        order.sort_by_key(|&i| self.contexts[i].key());
        let contexts = order.iter().map(|&i| self.contexts[i].clone()).collect();
        let rows = order.iter().map(|&i| self.transitions[i].clone()).collect();
        Self::new(self.alphabet, contexts, rows).expect("reordering keeps a valid tree")
    }

    pub fn cast<G: Real>(&self) -> ContextTree<G> {
        ContextTree {
            alphabet: self.alphabet,
            contexts: self.contexts.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|r| r.as_ref().map(|r| r.iter().map(|&p| G::lit(p.as_f64())).collect()))
                .collect(),
            trie: self.trie.clone(),
        }
    }

    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            alphabet: self.alphabet.size(),
            contexts: self.contexts.iter().map(|c| c.symbols().to_vec()).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|r| r.as_ref().map(|r| r.iter().map(|p| p.as_f64()).collect()))
                .collect(),
        }
    }

    pub fn from_json(json: &TreeJson) -> Result<Self> {
        let alphabet = Alphabet::new(json.alphabet)?;
        let contexts = json
            .contexts
            .iter()
            .map(|c| ContextString::new(alphabet, c.clone()))
            .collect::<Result<Vec<_>>>()?;
        let transitions = if json.transitions.is_empty() {
            vec![None; contexts.len()]
        } else {
            json.transitions
                .iter()
                .map(|r| r.as_ref().map(|r| r.iter().map(|&p| F::lit(p)).collect()))
                .collect()
        };
        Self::new(alphabet, contexts, transitions)
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let json: TreeJson = serde_json::from_reader(reader)?;
        Self::from_json(&json)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_json())?;
        Ok(())
    }
}

impl<F: Real> Serialize for ContextTree<F> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de, F: Real> Deserialize<'de> for ContextTree<F> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = TreeJson::deserialize(deserializer)?;
        Self::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// On-disk tree layout: contexts as symbol arrays (oldest first) with a
/// parallel array of next-symbol probabilities (`null` when unset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub alphabet: usize,
    pub contexts: Vec<Vec<Symbol>>,
    #[serde(default)]
    pub transitions: Vec<Option<Vec<f64>>>,
}

/// Initial law `π_ω` over a set of strings (the contexts of some tree).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw<F = f64> {
    alphabet: Alphabet,
    entries: Vec<(ContextString, F)>,
}

impl<F: Real> InitialLaw<F> {
    pub fn new(alphabet: Alphabet, entries: Vec<(ContextString, F)>) -> Result<Self> {
        let probs: Vec<F> = entries.iter().map(|(_, p)| *p).collect();
        if !is_distribution(&probs, ROW_TOL) {
            return Err(Error::InvalidDistribution("initial law must sum to 1".into()));
        }
        let mut keys = BTreeSet::new();
        for (ctx, _) in &entries {
            alphabet.ensure_same(ctx.alphabet())?;
            if !keys.insert(ctx.clone()) {
                return Err(Error::InvalidDistribution(format!("duplicate initial entry {ctx}")));
            }
        }
        Ok(InitialLaw { alphabet, entries })
    }

    /// Uniform law over the contexts of `tree`.
    pub fn uniform(tree: &ContextTree<F>) -> Self {
        let p = F::one() / F::lit(tree.len() as f64);
        InitialLaw { alphabet: tree.alphabet(), entries: tree.contexts().iter().map(|c| (c.clone(), p)).collect() }
    }

    /// Law over the `N^k` blocks of length `k`, indexed by block code.
    pub fn blocks(alphabet: Alphabet, k: usize, probs: Vec<F>) -> Result<Self> {
        if probs.len() != alphabet.num_strings(k) {
            return Err(Error::InvalidDistribution(format!(
                "expected {} block probabilities, got {}",
                alphabet.num_strings(k),
                probs.len()
            )));
        }
        let entries = probs
            .into_iter()
            .enumerate()
            .map(|(code, p)| (ContextString::from_code(alphabet, k, code), p))
            .collect();
        Self::new(alphabet, entries)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn entries(&self) -> &[(ContextString, F)] {
        &self.entries
    }

    pub fn prob(&self, ctx: &ContextString) -> F {
        self.entries.iter().find(|(c, _)| c == ctx).map(|(_, p)| *p).unwrap_or_else(F::zero)
    }

    /// Dense block vector when every entry has length `k`.
    pub fn block_probs(&self, k: usize) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.alphabet.num_strings(k)];
        for (ctx, p) in &self.entries {
            if ctx.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "initial law entry {ctx} is not a block of length {k}"
                )));
            }
            out[ctx.code()] = *p;
        }
        Ok(out)
    }
}
