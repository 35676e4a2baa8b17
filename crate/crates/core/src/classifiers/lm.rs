//! Class-conditional n-gram language models with modified Kneser-Ney
//! smoothing and optional skip patterns.
//!
//! A pattern is identified by a mask over the history positions `1..n-1`
//! (bit `p-1` set means position `p` is kept; position `n` is the predicted
//! word). The full mask uses raw counts. Every other mask uses continuation
//! counts: the number of distinct words seen immediately left of the
//! leftmost kept position. A mask interpolates with its children, which drop
//! one kept position. Without skips the only child drops the leftmost kept
//! position; with skips every kept position may be dropped and the children
//! are averaged uniformly. The empty mask interpolates with the uniform
//! distribution over the vocabulary plus the unknown word.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{ClassifierError, Prediction};
use crate::corpus::Label;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const MAX_ORDER: usize = 8;

/// Words shared by both class models, plus the unknown word and the
/// sentence-start padding symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmVocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl LmVocabulary {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: Vec<String> = words.into_iter().map(|w| w.as_ref().to_owned()).collect();
        sorted.sort();
        sorted.dedup();
        sorted.retain(|w| w != UNK && w != BOS);
        let index = sorted.iter().enumerate().map(|(i, w)| (w.clone(), i as u32 + 2)).collect();
        LmVocabulary { words: sorted, index }
    }

    /// Vocabulary of every token in the given posts.
    pub fn from_posts<'a, I>(posts: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        LmVocabulary::new(posts.into_iter().flatten())
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: u32) -> &str {
        match id {
            UNK_ID => UNK,
            BOS_ID => BOS,
            _ => &self.words[id as usize - 2],
        }
    }

    /// Words that can be predicted: the vocabulary plus the unknown word.
    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        std::iter::once(UNK_ID).chain((0..self.words.len() as u32).map(|i| i + 2))
    }

    pub fn support_size(&self) -> usize {
        self.words.len() + 1
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct HistoryStats {
    total: u64,
    /// Number of continuations seen once, twice, three or more times.
    n: [u64; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Node {
    /// Kept history words followed by the predicted word.
    counts: HashMap<Vec<u32>, u64>,
    history: HashMap<Vec<u32>, HistoryStats>,
    discounts: [f64; 3],
}

impl Node {
    fn finish(&mut self) {
        let mut coc = [0u64; 4];
        self.history.clear();
        for (key, &c) in &self.counts {
            if (1..=4).contains(&c) {
                coc[c as usize - 1] += 1;
            }
            let h = self.history.entry(key[..key.len() - 1].to_vec()).or_default();
            h.total += c;
            h.n[(c.min(3) - 1) as usize] += 1;
        }
        self.discounts = modified_kn_discounts(coc);
    }

    fn discount(&self, c: u64) -> f64 {
        match c {
            0 => 0.0,
            1 => self.discounts[0],
            2 => self.discounts[1],
            _ => self.discounts[2],
        }
    }
}

/// Chen and Goodman estimates of D1, D2 and D3+ from the counts of counts
/// `n1..n4`. Degenerate statistics fall back to 0.5; each `D_k` is clamped
/// to `[0, k]`.
pub fn modified_kn_discounts(coc: [u64; 4]) -> [f64; 3] {
    let [n1, n2, n3, n4] = coc.map(|c| c as f64);
    if n1 == 0.0 || n2 == 0.0 {
        return [0.5; 3];
    }
    let y = n1 / (n1 + 2.0 * n2);
    let d1 = 1.0 - 2.0 * y * n2 / n1;
    let d2 = 2.0 - 3.0 * y * n3 / n2;
    let d3 = if n3 == 0.0 { 0.5 } else { 3.0 - 4.0 * y * n4 / n3 };
    [d1.clamp(0.0, 1.0), d2.clamp(0.0, 2.0), d3.clamp(0.0, 3.0)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmModel {
    order: usize,
    skips: bool,
    vocab: Arc<LmVocabulary>,
    nodes: Vec<Node>,
}

fn kept_positions(mask: u32, order: usize) -> impl Iterator<Item = usize> {
    (1..order).filter(move |p| mask & (1 << (p - 1)) != 0)
}

/// Leftmost kept position, or the predicted position for the empty mask.
fn leftmost(mask: u32, order: usize) -> usize {
    kept_positions(mask, order).next().unwrap_or(order)
}

/// Train a model on the posts of one class.
pub fn train_lm<'a, I>(posts: I, vocab: Arc<LmVocabulary>, order: usize, skips: bool) -> Result<LmModel, ClassifierError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(ClassifierError::Parameter(format!("LM order must be in 1..={MAX_ORDER}, got {order}")));
    }
    let masks = 1usize << (order - 1);
    let full = (masks - 1) as u32;
    let mut raw: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut contexts: Vec<HashMap<Vec<u32>, HashSet<u32>>> = vec![HashMap::new(); masks];
    for post in posts {
        let mut ids = vec![BOS_ID; order];
        ids.extend(post.iter().map(|w| vocab.id(w)));
        for t in order..ids.len() {
            for mask in 0..masks as u32 {
                let mut key: Vec<u32> = kept_positions(mask, order).map(|p| ids[t - (order - p)]).collect();
                key.push(ids[t]);
                if mask == full && order >= 2 {
                    *raw.entry(key).or_default() += 1;
                } else {
                    let before = ids[t - (order - leftmost(mask, order) + 1)];
                    contexts[mask as usize].entry(key).or_default().insert(before);
                }
            }
        }
    }
    let mut nodes: Vec<Node> = contexts
        .into_iter()
        .map(|m| Node { counts: m.into_iter().map(|(k, s)| (k, s.len() as u64)).collect(), ..Default::default() })
        .collect();
    if order >= 2 {
        nodes[full as usize].counts = raw;
    }
    for n in &mut nodes {
        n.finish();
    }
    Ok(LmModel { order, skips, vocab, nodes })
}

impl LmModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn skips(&self) -> bool {
        self.skips
    }

    pub fn vocabulary(&self) -> &LmVocabulary {
        &self.vocab
    }

    pub fn full_mask(&self) -> u32 {
        ((1usize << (self.order - 1)) - 1) as u32
    }

    /// Discounts D1, D2, D3+ of one pattern.
    pub fn discounts(&self, mask: u32) -> [f64; 3] {
        self.nodes[mask as usize].discounts
    }

    /// Histories observed for a pattern, as padded full-length id windows
    /// with dropped positions set to the unknown word.
    pub fn observed_histories(&self, mask: u32) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self.nodes[mask as usize]
            .history
            .keys()
            .map(|kept| {
                let mut h = vec![UNK_ID; self.order - 1];
                for (p, &id) in kept_positions(mask, self.order).zip(kept) {
                    h[p - 1] = id;
                }
                h
            })
            .collect();
        out.sort();
        out
    }

    /// Map preceding words to the id window of length `order - 1`, padding
    /// with the start symbol.
    pub fn history_ids(&self, history: &[&str]) -> Vec<u32> {
        let n = self.order - 1;
        let tail = &history[history.len().saturating_sub(n)..];
        let mut h = vec![BOS_ID; n - tail.len()];
        h.extend(tail.iter().map(|w| self.vocab.id(w)));
        h
    }

    fn node_probability(&self, mask: u32, history: &[u32], word: u32, memo: &mut [Option<f64>]) -> f64 {
        if let Some(p) = memo[mask as usize] {
            return p;
        }
        let lower = if mask == 0 {
            1.0 / self.vocab.support_size() as f64
        } else if self.skips {
            let kept: Vec<usize> = kept_positions(mask, self.order).collect();
            let sum: f64 =
                kept.iter().map(|p| self.node_probability(mask & !(1 << (p - 1)), history, word, memo)).sum();
            sum / kept.len() as f64
        } else {
            let p = leftmost(mask, self.order);
            self.node_probability(mask & !(1 << (p - 1)), history, word, memo)
        };
        let node = &self.nodes[mask as usize];
        let mut key: Vec<u32> = kept_positions(mask, self.order).map(|p| history[p - 1]).collect();
        let p = match node.history.get(&key) {
            Some(stats) if stats.total > 0 => {
                key.push(word);
                let c = node.counts.get(&key).copied().unwrap_or(0);
                let a = stats.total as f64;
                let gamma = (node.discounts[0] * stats.n[0] as f64
                    + node.discounts[1] * stats.n[1] as f64
                    + node.discounts[2] * stats.n[2] as f64)
                    / a;
                (c as f64 - node.discount(c)).max(0.0) / a + gamma * lower
            }
            _ => lower,
        };
        memo[mask as usize] = Some(p);
        p
    }

    /// Smoothed probability of `word` id under one pattern given a full
    /// history id window.
    pub fn probability_ids(&self, mask: u32, history: &[u32], word: u32) -> f64 {
        assert_eq!(history.len(), self.order - 1, "history window length");
        let mut memo = vec![None; 1 << (self.order - 1)];
        self.node_probability(mask, history, word, &mut memo)
    }

    /// `P(word | history)` with the full pattern.
    pub fn kn_probability(&self, word: &str, history: &[&str]) -> f64 {
        let h = self.history_ids(history);
        self.probability_ids(self.full_mask(), &h, self.vocab.id(word))
    }

    /// Mean negative log-probability per word.
    pub fn cross_entropy(&self, tokens: &[String]) -> Result<f64, ClassifierError> {
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyPost);
        }
        let n = self.order - 1;
        let mut ids = vec![BOS_ID; n];
        ids.extend(tokens.iter().map(|w| self.vocab.id(w)));
        let full = self.full_mask();
        let total: f64 = (n..ids.len()).map(|t| -self.probability_ids(full, &ids[t - n..t], ids[t]).ln()).sum();
        Ok(total / tokens.len() as f64)
    }

    pub fn perplexity(&self, tokens: &[String]) -> Result<f64, ClassifierError> {
        Ok(self.cross_entropy(tokens)?.exp())
    }

    fn pattern_string(&self, mask: u32) -> String {
        let l = leftmost(mask, self.order);
        (l..self.order).map(|p| if mask & (1 << (p - 1)) != 0 { 'x' } else { '_' }).chain(['x']).collect()
    }

    fn parse_pattern(&self, pattern: &str) -> Option<u32> {
        let chars: Vec<char> = pattern.chars().collect();
        if chars.is_empty() || chars.len() > self.order || *chars.last()? != 'x' || chars[0] != 'x' {
            return None;
        }
        let start = self.order + 1 - chars.len();
        let mut mask = 0u32;
        for (k, c) in chars[..chars.len() - 1].iter().enumerate() {
            match c {
                'x' => mask |= 1 << (start + k - 1),
                '_' => {}
                _ => return None,
            }
        }
        Some(mask)
    }

    /// Header lines followed by `pattern \t ngram \t count`, sorted by
    /// pattern then n-gram. Counts of non-top patterns are continuation
    /// counts.
    pub fn write_counts<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# order\t{}", self.order)?;
        writeln!(out, "# skips\t{}", self.skips)?;
        for w in self.vocab.words() {
            writeln!(out, "# vocab\t{w}")?;
        }
        let mut rows: BTreeMap<(String, Vec<u32>), u64> = BTreeMap::new();
        for (mask, node) in self.nodes.iter().enumerate() {
            let pattern = self.pattern_string(mask as u32);
            for (key, &c) in &node.counts {
                rows.insert((pattern.clone(), key.clone()), c);
            }
        }
        for ((pattern, key), c) in rows {
            let ngram: Vec<&str> = key.iter().map(|&id| self.vocab.word(id)).collect();
            writeln!(out, "{pattern}\t{}\t{c}", ngram.join(" "))?;
        }
        Ok(())
    }

    pub fn read_counts<R: BufRead>(source: R) -> Result<LmModel, ClassifierError> {
        let mut order = None;
        let mut skips = None;
        let mut words = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let bad = || ClassifierError::ModelFormat { line: i + 1, message: line.clone() };
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["# order", n] => order = Some(n.parse::<usize>().map_err(|_| bad())?),
                ["# skips", s] => skips = Some(s.parse::<bool>().map_err(|_| bad())?),
                ["# vocab", w] => words.push((*w).to_owned()),
                [p, g, c] => rows.push((i + 1, p.to_string(), g.to_string(), c.parse::<u64>().map_err(|_| bad())?)),
                [] | [""] => {}
                _ => return Err(bad()),
            }
        }
        let missing = |what: &str| ClassifierError::ModelFormat { line: 0, message: format!("missing {what} header") };
        let order = order.ok_or_else(|| missing("order"))?;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(ClassifierError::Parameter(format!("LM order must be in 1..={MAX_ORDER}, got {order}")));
        }
        let vocab = Arc::new(LmVocabulary::new(words));
        let mut model = LmModel {
            order,
            skips: skips.ok_or_else(|| missing("skips"))?,
            vocab: vocab.clone(),
            nodes: vec![Node::default(); 1 << (order - 1)],
        };
        for (line, pattern, ngram, c) in rows {
            let bad = || ClassifierError::ModelFormat { line, message: format!("{pattern}\t{ngram}") };
            let mask = model.parse_pattern(&pattern).ok_or_else(bad)?;
            let key: Vec<u32> = ngram
                .split(' ')
                .map(|w| match w {
                    UNK => UNK_ID,
                    BOS => BOS_ID,
                    _ => vocab.id(w),
                })
                .collect();
            if key.len() != kept_positions(mask, order).count() + 1 {
                return Err(bad());
            }
            model.nodes[mask as usize].counts.insert(key, c);
        }
        for n in &mut model.nodes {
            n.finish();
        }
        Ok(model)
    }
}

/// Compare the cross-entropies of the disruptive and constructive models.
/// Lower wins; ties go to the constructive class. The score is
/// `H(constructive) - H(disruptive)`.
pub fn predict_lm(disruptive: &LmModel, constructive: &LmModel, tokens: &[String]) -> Result<Prediction, ClassifierError> {
    let h_pos = disruptive.cross_entropy(tokens)?;
    let h_neg = constructive.cross_entropy(tokens)?;
    let label = if h_pos < h_neg { Label::Disruptive } else { Label::Constructive };
    Ok(Prediction { label, score: h_neg - h_pos })
}
