//! Alphabets, symbol strings and transition counting.
//!
//! Strings are stored oldest symbol first, so the most recent symbol of a
//! context is its last element. Counting positions follow the 1-based
//! convention `offset < i <= m`: an occurrence of `ω` "at `i`" means
//! `x[i-l(ω)..=i-1] = ω`, and the symbol at `i` is its successor.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u8;

/// Finite alphabet `{0, .., N-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(usize);

impl Alphabet {
    pub const BINARY: Alphabet = Alphabet(2);

    pub fn new(size: usize) -> Result<Self> {
        if (2..=256).contains(&size) {
            Ok(Alphabet(size))
        } else {
            Err(Error::InvalidAlphabet(size))
        }
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn symbols(self) -> impl Iterator<Item = Symbol> {
        (0..self.0).map(|a| a as Symbol)
    }

    pub fn check(self, symbol: usize) -> Result<Symbol> {
        if symbol < self.0 {
            Ok(symbol as Symbol)
        } else {
            Err(Error::SymbolOutOfRange { symbol, size: self.0 })
        }
    }

    pub fn ensure_same(self, other: Alphabet) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::AlphabetMismatch { left: self.0, right: other.0 })
        }
    }

    /// `N^k`, the number of strings of length `k`.
    pub fn num_strings(self, k: usize) -> usize {
        self.0.pow(k as u32)
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        Alphabet::new(n)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.0
    }
}

/// A finite string over an alphabet, oldest symbol first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextString {
    alphabet: Alphabet,
    symbols: Vec<Symbol>,
}

impl ContextString {
    pub fn new(alphabet: Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        for &s in &symbols {
            alphabet.check(s as usize)?;
        }
        Ok(ContextString { alphabet, symbols })
    }

    pub fn empty(alphabet: Alphabet) -> Self {
        ContextString { alphabet, symbols: Vec::new() }
    }

    /// Parse a digit string such as `"010"` (alphabets up to 10 symbols).
    pub fn parse(alphabet: Alphabet, text: &str) -> Result<Self> {
        let symbols = text
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .ok_or_else(|| Error::Parse(format!("bad symbol {c:?} in {text:?}")))
                    .and_then(|d| alphabet.check(d as usize))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContextString { alphabet, symbols })
    }

    /// Decode the radix-N integer `code` into a string of length `len`.
    pub fn from_code(alphabet: Alphabet, len: usize, mut code: usize) -> Self {
        let n = alphabet.size();
        let mut symbols = vec![0; len];
        for slot in symbols.iter_mut().rev() {
            *slot = (code % n) as Symbol;
            code /= n;
        }
        ContextString { alphabet, symbols }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Most recent symbol.
    pub fn last(&self) -> Option<Symbol> {
        self.symbols.last().copied()
    }

    /// Radix-N code, oldest symbol most significant.
    pub fn code(&self) -> usize {
        let n = self.alphabet.size();
        self.symbols.iter().fold(0, |acc, &s| acc * n + s as usize)
    }

    /// Map key `(length, code)`.
    pub fn key(&self) -> (usize, usize) {
        (self.len(), self.code())
    }

    /// Suffix of length `l` (the `l` most recent symbols).
    pub fn suffix(&self, l: usize) -> ContextString {
        let l = l.min(self.len());
        ContextString { alphabet: self.alphabet, symbols: self.symbols[self.len() - l..].to_vec() }
    }

    /// `a·self`: extend one step further into the past.
    pub fn extend_older(&self, a: Symbol) -> ContextString {
        let mut symbols = Vec::with_capacity(self.len() + 1);
        symbols.push(a);
        symbols.extend_from_slice(&self.symbols);
        ContextString { alphabet: self.alphabet, symbols }
    }

    /// True iff `self` is a suffix of `target`; with `proper`, also requires
    /// `self != target`.
    pub fn is_suffix_of(&self, target: &ContextString, proper: bool) -> Result<bool> {
        self.alphabet.ensure_same(target.alphabet)?;
        Ok(suffix_of(&self.symbols, &target.symbols) && !(proper && self.len() == target.len()))
    }
}

pub(crate) fn suffix_of(candidate: &[Symbol], target: &[Symbol]) -> bool {
    candidate.len() <= target.len() && target.ends_with(candidate)
}

/// Free-function form of [`ContextString::is_suffix_of`].
pub fn is_suffix(candidate: &ContextString, target: &ContextString, proper: bool) -> Result<bool> {
    candidate.is_suffix_of(target, proper)
}

impl fmt::Display for ContextString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.symbols.is_empty() {
            return write!(f, "∅");
        }
        if self.alphabet.size() <= 10 {
            for s in &self.symbols {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

/// An observed or hidden sample `x_1^T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Alphabet,
    symbols: Vec<Symbol>,
}

impl SymbolSequence {
    pub fn new(alphabet: Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= alphabet.size()) {
            return Err(Error::SymbolOutOfRange { symbol: bad as usize, size: alphabet.size() });
        }
        Ok(SymbolSequence { alphabet, symbols })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Symbol> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// First `m` symbols.
    pub fn prefix(&self, m: usize) -> SymbolSequence {
        SymbolSequence { alphabet: self.alphabet, symbols: self.symbols[..m.min(self.len())].to_vec() }
    }

    /// Read the plain-text format: whitespace-separated symbols with an
    /// optional leading `alphabet=N` token. Without a header the alphabet is
    /// `max(2, max symbol + 1)`.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut declared: Option<Alphabet> = None;
        let mut symbols = Vec::new();
        let mut first = true;
        for line in reader.lines() {
            let line = line?;
            for token in line.split_whitespace() {
                if first {
                    first = false;
                    if let Some(n) = token.strip_prefix("alphabet=") {
                        let n = usize::from_str(n)
                            .map_err(|e| Error::Parse(format!("bad alphabet header {token:?}: {e}")))?;
                        declared = Some(Alphabet::new(n)?);
                        continue;
                    }
                }
                let s = usize::from_str(token)
                    .map_err(|e| Error::Parse(format!("bad symbol token {token:?}: {e}")))?;
                if s > 255 {
                    return Err(Error::SymbolOutOfRange { symbol: s, size: 256 });
                }
                symbols.push(s as Symbol);
            }
        }
        let alphabet = match declared {
            Some(a) => a,
            None => Alphabet::new(symbols.iter().map(|&s| s as usize + 1).max().unwrap_or(2).max(2))?,
        };
        SymbolSequence::new(alphabet, symbols)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "alphabet={}", self.alphabet.size())?;
        for chunk in self.symbols.chunks(40) {
            let line: Vec<String> = chunk.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn check_window(sample: &SymbolSequence, pattern: &ContextString, offset: usize) -> Result<()> {
    sample.alphabet.ensure_same(pattern.alphabet)?;
    if offset + pattern.len() > sample.len() {
        return Err(Error::PatternTooLong {
            pattern: pattern.len(),
            window: sample.len().saturating_sub(offset),
        });
    }
    Ok(())
}

/// Positions `i` (1-based, `offset < i <= m`, `i > l(ω)`) where `ω` ends at `i-1`.
fn occurrence_positions<'a>(
    sample: &'a SymbolSequence,
    pattern: &'a ContextString,
    offset: usize,
) -> impl Iterator<Item = usize> + 'a {
    let l = pattern.len();
    let start = offset.max(l) + 1;
    (start..=sample.len()).filter(move |&i| &sample.symbols[i - 1 - l..i - 1] == pattern.symbols())
}

/// `N(ω, a)`: occurrences of `ω` immediately followed by `next` in the window.
pub fn count_pattern(
    sample: &SymbolSequence,
    pattern: &ContextString,
    next: Symbol,
    offset: usize,
) -> Result<u64> {
    check_window(sample, pattern, offset)?;
    sample.alphabet.check(next as usize)?;
    Ok(occurrence_positions(sample, pattern, offset)
        .filter(|&i| sample.symbols[i - 1] == next)
        .count() as u64)
}

/// `N(ω)`: occurrences of `ω` that have a successor in the window, so that
/// `Σ_a N(ω, a) = N(ω)` exactly.
pub fn count_context(sample: &SymbolSequence, pattern: &ContextString, offset: usize) -> Result<u64> {
    check_window(sample, pattern, offset)?;
    Ok(occurrence_positions(sample, pattern, offset).count() as u64)
}

/// Raw substring occurrences of `ω` anywhere in the sample, including a
/// trailing occurrence with no successor.
pub fn count_occurrences(sample: &SymbolSequence, pattern: &ContextString) -> Result<u64> {
    sample.alphabet.ensure_same(pattern.alphabet)?;
    let l = pattern.len();
    if l > sample.len() {
        return Err(Error::PatternTooLong { pattern: l, window: sample.len() });
    }
    Ok((0..=sample.len() - l)
        .filter(|&start| &sample.symbols[start..start + l] == pattern.symbols())
        .count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(s: &str) -> ContextString {
        ContextString::parse(Alphabet::BINARY, s).unwrap()
    }

    fn seq(v: &[u8]) -> SymbolSequence {
        SymbolSequence::new(Alphabet::BINARY, v.to_vec()).unwrap()
    }

    #[test]
    fn suffix_relation() {
        assert!(is_suffix(&bin("10"), &bin("110"), false).unwrap());
        assert!(!is_suffix(&bin("01"), &bin("110"), false).unwrap());
        assert!(is_suffix(&bin(""), &bin("110"), false).unwrap());
        assert!(is_suffix(&bin("110"), &bin("110"), false).unwrap());
        assert!(!is_suffix(&bin("110"), &bin("110"), true).unwrap());
        assert!(is_suffix(&bin("10"), &bin("110"), true).unwrap());
    }

    #[test]
    fn suffix_alphabet_mismatch() {
        let t = ContextString::new(Alphabet::new(3).unwrap(), vec![0, 1]).unwrap();
        assert!(matches!(is_suffix(&bin("1"), &t, false), Err(Error::AlphabetMismatch { .. })));
    }

    #[test]
    fn hand_counts() {
        assert_eq!(count_pattern(&seq(&[0, 1, 0, 1, 0]), &bin("0"), 1, 0).unwrap(), 2);
        assert_eq!(count_pattern(&seq(&[0, 0, 0]), &bin("0"), 0, 0).unwrap(), 2);
        assert_eq!(count_context(&seq(&[0, 1, 0, 1, 0]), &bin("0"), 0).unwrap(), 2);
        assert_eq!(count_occurrences(&seq(&[0, 1, 0, 1, 0]), &bin("0")).unwrap(), 3);
        // offset excludes early positions
        assert_eq!(count_pattern(&seq(&[0, 1, 0, 1, 0]), &bin("0"), 1, 2).unwrap(), 1);
        // the empty context counts every position in the window
        assert_eq!(count_context(&seq(&[0, 1, 1]), &bin(""), 0).unwrap(), 3);
    }

    #[test]
    fn pattern_longer_than_window() {
        let r = count_pattern(&seq(&[0, 1]), &bin("010"), 0, 0);
        assert!(matches!(r, Err(Error::PatternTooLong { .. })));
        let r = count_context(&seq(&[0, 1, 1]), &bin("01"), 2);
        assert!(matches!(r, Err(Error::PatternTooLong { .. })));
    }

    #[test]
    fn codes_round_trip() {
        let a = Alphabet::new(3).unwrap();
        for code in 0..27 {
            let s = ContextString::from_code(a, 3, code);
            assert_eq!(s.code(), code);
        }
        assert_eq!(bin("10").code(), 2);
        assert_eq!(bin("10").key(), (2, 2));
        assert_eq!(bin("").key(), (0, 0));
    }

    #[test]
    fn text_format() {
        let s = SymbolSequence::read_text("alphabet=3\n0 1 2\n2 1".as_bytes()).unwrap();
        assert_eq!(s.alphabet().size(), 3);
        assert_eq!(s.symbols(), &[0, 1, 2, 2, 1]);
        let mut out = Vec::new();
        s.write_text(&mut out).unwrap();
        assert_eq!(SymbolSequence::read_text(out.as_slice()).unwrap(), s);

        let inferred = SymbolSequence::read_text("0 0 0".as_bytes()).unwrap();
        assert_eq!(inferred.alphabet(), Alphabet::BINARY);
        assert!(SymbolSequence::read_text("alphabet=2 0 2".as_bytes()).is_err());
        assert!(SymbolSequence::read_text("0 x".as_bytes()).is_err());
    }
}
