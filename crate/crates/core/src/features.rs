//! Stemming, vocabularies, tf-idf vectors and function-word restriction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::LazyLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::clean::is_canonical_link_token;
use crate::corpus::Label;

pub const DEFAULT_FUNCTION_WORDS: &str = include_str!("../data/function_words.txt");

static STEMMER: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("function word list is empty")]
    EmptyWordList,
    #[error("vocabulary has no documents")]
    EmptyVocabulary,
    #[error("unknown feature set {0:?} (expected full-text or function-words)")]
    UnknownFeatures(String),
    #[error("vocabulary line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// English snowball stem. Canonical link tokens pass through.
pub fn stem(word: &str) -> String {
    if is_canonical_link_token(word) {
        return word.to_owned();
    }
    STEMMER.stem(word).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSet {
    #[default]
    FullText,
    FunctionWords,
}

impl FromStr for FeatureSet {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "full-text" | "fulltext" => Ok(FeatureSet::FullText),
            "function-words" => Ok(FeatureSet::FunctionWords),
            _ => Err(FeatureError::UnknownFeatures(s.to_owned())),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::FullText => "full-text",
            FeatureSet::FunctionWords => "function-words",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FunctionWords {
    words: HashSet<String>,
}

impl Default for FunctionWords {
    fn default() -> Self {
        FunctionWords::parse(DEFAULT_FUNCTION_WORDS).expect("bundled function word list is non-empty")
    }
}

impl FunctionWords {
    /// One word per line; `#` lines are comments.
    pub fn parse(source: &str) -> Result<Self, FeatureError> {
        let words: HashSet<String> = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        if words.is_empty() {
            return Err(FeatureError::EmptyWordList);
        }
        Ok(FunctionWords { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

pub fn filter_function_words(tokens: &[String], list: &FunctionWords) -> Vec<String> {
    tokens.iter().filter(|t| list.contains(&t.to_lowercase())).cloned().collect()
}

/// Restrict to function words if requested, then stem.
pub fn preprocess(tokens: &[String], features: FeatureSet, list: &FunctionWords) -> Vec<String> {
    match features {
        FeatureSet::FullText => tokens.iter().map(|t| stem(t)).collect(),
        FeatureSet::FunctionWords => tokens.iter().filter(|t| list.contains(&t.to_lowercase())).map(|t| stem(t)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<u64>,
    /// Total term frequency per class, indexed by [`Label::index`].
    tf: [Vec<u64>; 2],
    docs: u64,
}

impl Vocabulary {
    /// Count terms over labeled documents. Terms are indexed in sorted order.
    pub fn build<'a, I>(docs: I) -> Vocabulary
    where
        I: IntoIterator<Item = (&'a [String], Label)>,
    {
        let mut counts: BTreeMap<&'a str, (u64, [u64; 2])> = BTreeMap::new();
        let mut n = 0;
        for (tokens, label) in docs {
            n += 1;
            let mut seen = HashSet::new();
            for t in tokens {
                let e = counts.entry(t.as_str()).or_default();
                e.1[label.index()] += 1;
                if seen.insert(t.as_str()) {
                    e.0 += 1;
                }
            }
        }
        let mut v = Vocabulary { docs: n, ..Default::default() };
        for (i, (term, (df, tf))) in counts.into_iter().enumerate() {
            v.terms.push(term.to_owned());
            v.index.insert(term.to_owned(), i);
            v.df.push(df);
            v.tf[0].push(tf[0]);
            v.tf[1].push(tf[1]);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn documents(&self) -> u64 {
        self.docs
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, index: usize) -> u64 {
        self.df[index]
    }

    pub fn tf(&self, index: usize, label: Label) -> u64 {
        self.tf[label.index()][index]
    }

    /// Sum of term frequencies of one class.
    pub fn class_tokens(&self, label: Label) -> u64 {
        self.tf[label.index()].iter().sum()
    }

    pub fn idf(&self, index: usize) -> f64 {
        (self.docs as f64 / self.df[index] as f64).ln()
    }

    /// `term \t index \t df \t tf_pos \t tf_neg`, one line per term.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# documents\t{}", self.docs)?;
        for (i, t) in self.terms.iter().enumerate() {
            writeln!(out, "{t}\t{i}\t{}\t{}\t{}", self.df[i], self.tf[1][i], self.tf[0][i])?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Vocabulary, FeatureError> {
        let mut v = Vocabulary::default();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let err = |message: &str| FeatureError::Parse { line: i + 1, message: message.to_owned() };
            if let Some(rest) = line.strip_prefix("# documents\t") {
                v.docs = rest.trim().parse().map_err(|_| err("bad document count"))?;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(err("expected 5 columns"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| err("bad number"));
            if num(cols[1])? as usize != v.terms.len() {
                return Err(err("indices must be dense and ascending"));
            }
            v.index.insert(cols[0].to_owned(), v.terms.len());
            v.terms.push(cols[0].to_owned());
            v.df.push(num(cols[2])?);
            v.tf[1].push(num(cols[3])?);
            v.tf[0].push(num(cols[4])?);
        }
        Ok(v)
    }
}

/// Sparse vector with strictly increasing indices and no zero weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Sorts by index, sums duplicates and drops zeros.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> SparseVector {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => out.push((i, w)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        SparseVector { entries: out }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    pub fn scaled(&self, c: f64) -> SparseVector {
        SparseVector::from_entries(self.entries.iter().map(|&(i, w)| (i, w * c)).collect())
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }
}

/// In-vocabulary term counts of a token list.
pub fn term_counts(tokens: &[String], vocab: &Vocabulary) -> Vec<(usize, u64)> {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            *counts.entry(i).or_default() += 1;
        }
    }
    counts.into_iter().collect()
}

/// `tf(t) * ln(N / df(t))` for every in-vocabulary term.
pub fn tfidf_vector(tokens: &[String], vocab: &Vocabulary) -> Result<SparseVector, FeatureError> {
    if vocab.documents() == 0 {
        return Err(FeatureError::EmptyVocabulary);
    }
    Ok(SparseVector::from_entries(
        term_counts(tokens, vocab).into_iter().map(|(i, tf)| (i, tf as f64 * vocab.idf(i))).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn stems() {
        assert_eq!(stem("sources"), "sourc");
        assert_eq!(stem("vanity"), "vaniti");
        assert_eq!(stem("keep"), "keep");
        assert_eq!(stem("WPNPA"), "WPNPA");
        for w in ["sources", "vanity", "deletion", "arguing", "personally"] {
            let s = stem(w);
            assert_eq!(stem(&s), s);
        }
    }

    #[test]
    fn vocabulary_counts() {
        let a = toks("a b");
        let b = toks("b");
        let v = Vocabulary::build([(a.as_slice(), Label::Disruptive), (b.as_slice(), Label::Constructive)]);
        assert_eq!(v.documents(), 2);
        assert_eq!(v.df(v.get("a").unwrap()), 1);
        assert_eq!(v.df(v.get("b").unwrap()), 2);
        assert_eq!(v.tf(v.get("b").unwrap(), Label::Disruptive), 1);
        assert_eq!(v.tf(v.get("b").unwrap(), Label::Constructive), 1);

        let empty = Vocabulary::build(std::iter::empty());
        assert_eq!(empty.documents(), 0);
        assert!(empty.is_empty());

        let i = toks("i a");
        let v = Vocabulary::build([(i.as_slice(), Label::Constructive)]);
        assert!(v.get("i").is_some() && v.get("a").is_some());
    }

    #[test]
    fn tfidf_examples() {
        let a = toks("x y");
        let b = toks("x");
        let v = Vocabulary::build([(a.as_slice(), Label::Disruptive), (b.as_slice(), Label::Constructive)]);
        let vec = tfidf_vector(&toks("x y y z"), &v).unwrap();
        assert_eq!(vec.entries().len(), 1);
        assert!((vec.entries()[0].1 - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(tfidf_vector(&[], &v).unwrap().is_empty());
        assert!(tfidf_vector(&a, &Vocabulary::default()).is_err());
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let a = toks("you idiot you");
        let b = toks("keep article");
        let v = Vocabulary::build([(a.as_slice(), Label::Disruptive), (b.as_slice(), Label::Constructive)]);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("you\t3\t1\t2\t0\n"));
        assert_eq!(Vocabulary::read_tsv(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn function_word_list() {
        let fw = FunctionWords::default();
        assert_eq!(fw.len(), 162);
        let digest = Sha256::digest(DEFAULT_FUNCTION_WORDS.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "27c5c11e750e29ea37a4103a107e4061a60d6717bd9d8fe09756f6ca747ad178");
        assert_eq!(filter_function_words(&toks("you are an idiot"), &fw), toks("you are an"));
        assert!(filter_function_words(&[], &fw).is_empty());
        assert!(FunctionWords::parse("# nothing\n\n").is_err());
    }

    #[test]
    fn preprocess_filters_before_stemming() {
        let fw = FunctionWords::default();
        assert_eq!(preprocess(&toks("other being sources"), FeatureSet::FunctionWords, &fw), toks("other be"));
        assert_eq!(preprocess(&toks("sources WPNPA"), FeatureSet::FullText, &fw), toks("sourc WPNPA"));
    }

    #[test]
    fn feature_set_parsing() {
        assert_eq!("function-words".parse::<FeatureSet>().unwrap(), FeatureSet::FunctionWords);
        assert_eq!("full-text".parse::<FeatureSet>().unwrap(), FeatureSet::FullText);
        assert!("bigrams".parse::<FeatureSet>().is_err());
    }
}
