//! Cross-validation, metrics, ROC AUC, timeframe sweeps and corpus
//! statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::TimeDelta;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierError, ClassifierKind, ClassifierSpec};
use crate::clean::CleanPost;
use crate::corpus::{relabel, sample_per_class, BlockIndex, Label, Labeled, SampleError, SampleStrategy};
use crate::dump::BlockEvent;
use crate::duration::format_duration;
use crate::features::{preprocess, FeatureSet, FunctionWords};

/// Printed in place of undefined metrics.
pub const UNDEFINED: &str = "—";

pub const REPORT_COLUMNS: [&str; 8] =
    ["recall+", "recall−", "precision+", "precision−", "F1+", "F1−", "accuracy", "AUC"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{folds} folds exceed the {available} {label} documents")]
    FoldsExceedClass { folds: usize, label: Label, available: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// Shuffle each class, then deal documents to folds round-robin.
    Stratified { seed: u64 },
    /// Split each class into contiguous chunks.
    LinearPerClass,
    /// Split the whole corpus into contiguous chunks.
    LinearGlobal,
}

impl Sampling {
    pub fn parse(name: &str, seed: u64) -> Result<Self, String> {
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "stratified" => Ok(Sampling::Stratified { seed }),
            "linear-per-class" | "linear" => Ok(Sampling::LinearPerClass),
            "linear-global" => Ok(Sampling::LinearGlobal),
            other => Err(format!(
                "unknown sampling {other:?} (expected stratified, linear-per-class or linear-global)"
            )),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Stratified { .. } => f.write_str("stratified"),
            Sampling::LinearPerClass => f.write_str("linear-per-class"),
            Sampling::LinearGlobal => f.write_str("linear-global"),
        }
    }
}

/// Split `0..n` into `parts` contiguous chunks whose sizes differ by at most
/// one, larger chunks first.
fn contiguous(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let (q, r) = (items.len() / parts, items.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = q + usize::from(k < r);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Test-set indices of every fold. Every index appears in exactly one fold.
pub fn assign_folds(labels: &[Label], folds: usize, sampling: Sampling) -> Result<Vec<Vec<usize>>, EvalError> {
    if folds < 2 {
        return Err(EvalError::TooFewFolds(folds));
    }
    let by_class: [Vec<usize>; 2] =
        [Label::Constructive, Label::Disruptive].map(|l| (0..labels.len()).filter(|&i| labels[i] == l).collect());
    for label in [Label::Constructive, Label::Disruptive] {
        let available = by_class[label.index()].len();
        if folds > available {
            return Err(EvalError::FoldsExceedClass { folds, label, available });
        }
    }
    let mut out = vec![Vec::new(); folds];
    match sampling {
        Sampling::Stratified { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut next = 0;
            for class in by_class {
                let mut shuffled = class;
                shuffled.shuffle(&mut rng);
                for i in shuffled {
                    out[next].push(i);
                    next = (next + 1) % folds;
                }
            }
        }
        Sampling::LinearPerClass => {
            for class in &by_class {
                for (k, chunk) in contiguous(class, folds).into_iter().enumerate() {
                    out[k].extend(chunk);
                }
            }
        }
        Sampling::LinearGlobal => {
            let all: Vec<usize> = (0..labels.len()).collect();
            out = contiguous(&all, folds);
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Disruptive, Label::Disruptive) => self.tp += 1,
            (Label::Constructive, Label::Disruptive) => self.fp += 1,
            (Label::Disruptive, Label::Constructive) => self.fn_ += 1,
            (Label::Constructive, Label::Constructive) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion { tp: self.tp + other.tp, fp: self.fp + other.fp, fn_: self.fn_ + other.fn_, tn: self.tn + other.tn }
    }
}

/// Metric values; `None` marks a division by zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall_pos: Option<f64>,
    pub recall_neg: Option<f64>,
    pub precision_pos: Option<f64>,
    pub precision_neg: Option<f64>,
    pub f1_pos: Option<f64>,
    pub f1_neg: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall.
pub fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// Metrics of a confusion matrix; AUC is left undefined.
pub fn metrics(c: &Confusion) -> Metrics {
    let precision_pos = ratio(c.tp, c.tp + c.fp);
    let precision_neg = ratio(c.tn, c.tn + c.fn_);
    let recall_pos = ratio(c.tp, c.tp + c.fn_);
    let recall_neg = ratio(c.tn, c.tn + c.fp);
    Metrics {
        recall_pos,
        recall_neg,
        precision_pos,
        precision_neg,
        f1_pos: f1(precision_pos, recall_pos),
        f1_neg: f1(precision_neg, recall_neg),
        accuracy: ratio(c.tp + c.tn, c.total()),
        auc: None,
    }
}

impl Metrics {
    pub fn values(&self) -> [Option<f64>; 8] {
        [
            self.recall_pos,
            self.recall_neg,
            self.precision_pos,
            self.precision_neg,
            self.f1_pos,
            self.f1_neg,
            self.accuracy,
            self.auc,
        ]
    }

    fn from_values(v: [Option<f64>; 8]) -> Metrics {
        Metrics {
            recall_pos: v[0],
            recall_neg: v[1],
            precision_pos: v[2],
            precision_neg: v[3],
            f1_pos: v[4],
            f1_neg: v[5],
            accuracy: v[6],
            auc: v[7],
        }
    }

    /// Arithmetic mean per metric; undefined if any input is undefined.
    pub fn mean(all: &[Metrics]) -> Metrics {
        let mut out = [None; 8];
        if !all.is_empty() {
            for (k, slot) in out.iter_mut().enumerate() {
                let vals: Option<Vec<f64>> = all.iter().map(|m| m.values()[k]).collect();
                *slot = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
            }
        }
        Metrics::from_values(out)
    }

    /// Tab-separated cells: ratios as percentages with two decimals, AUC
    /// with three.
    pub fn tsv_cells(&self) -> String {
        let vals = self.values();
        vals.iter()
            .enumerate()
            .map(|(k, v)| match v {
                None => UNDEFINED.to_owned(),
                Some(x) if k == 7 => format!("{x:.3}"),
                Some(x) => format!("{:.2}", x * 100.0),
            })
            .collect::<Vec<_>>()
            .join("\t")
    }
}

/// Area under the ROC curve by the trapezoid rule. Tied scores form one
/// diagonal segment. Undefined unless both classes are present.
pub fn roc_auc(scored: &[(f64, Label)]) -> Option<f64> {
    let pos = scored.iter().filter(|s| s.1.is_disruptive()).count() as f64;
    let neg = scored.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut sorted: Vec<(f64, Label)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0.total_cmp(&score).is_eq() {
            if sorted[i].1.is_disruptive() {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
    }
    Some(area / (pos * neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    /// Position in the evaluated corpus.
    pub index: usize,
    pub truth: Label,
    pub predicted: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub confusion: Confusion,
    pub predictions: Vec<ScoredPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub features: String,
    pub sampling: Sampling,
    pub folds: usize,
    pub timeframe: Option<String>,
    pub seed: u64,
    pub aggregation: String,
    pub documents: usize,
    pub dropped_empty: usize,
    pub fold_results: Vec<FoldResult>,
    pub pooled: Confusion,
    pub metrics: Metrics,
}

/// Display name in reports, e.g. `SVM (FW)`.
pub fn classifier_label(spec: &ClassifierSpec) -> String {
    let base = match spec.kind {
        ClassifierKind::Nb => "NB",
        ClassifierKind::Lm => "LM",
        ClassifierKind::Svm => "SVM",
    };
    match spec.features {
        FeatureSet::FullText => base.to_owned(),
        FeatureSet::FunctionWords => format!("{base} (FW)"),
    }
}

/// Restrict and stem every item's tokens. Items left without tokens are
/// dropped; their number is returned alongside.
pub fn prepare_documents<T: Labeled>(
    items: &[T],
    features: FeatureSet,
    function_words: &FunctionWords,
) -> (Vec<(Vec<String>, Label)>, usize) {
    let docs: Vec<(Vec<String>, Label)> =
        items.iter().map(|it| (preprocess(it.tokens(), features, function_words), it.label())).collect();
    let before = docs.len();
    let kept: Vec<_> = docs.into_iter().filter(|d| !d.0.is_empty()).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Train on all but one fold and score the held-out fold, for every fold.
pub fn cross_validate(
    docs: &[(Vec<String>, Label)],
    spec: &ClassifierSpec,
    folds: usize,
    sampling: Sampling,
) -> Result<(Vec<FoldResult>, Confusion, Metrics), EvalError> {
    let labels: Vec<Label> = docs.iter().map(|d| d.1).collect();
    let parts = assign_folds(&labels, folds, sampling)?;
    let results: Vec<Result<FoldResult, EvalError>> = parts
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; docs.len()];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<(&[String], Label)> =
                (0..docs.len()).filter(|&i| !in_test[i]).map(|i| (docs[i].0.as_slice(), docs[i].1)).collect();
            let model = classifiers::train(spec, &train)?;
            let mut confusion = Confusion::default();
            let mut predictions = Vec::with_capacity(test.len());
            for &i in test {
                let p = model.predict(&docs[i].0)?;
                confusion.add(docs[i].1, p.label);
                predictions.push(ScoredPrediction { index: i, truth: docs[i].1, predicted: p.label, score: p.score });
            }
            Ok(FoldResult { confusion, predictions })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let pooled = results.iter().fold(Confusion::default(), |acc, f| acc.merge(&f.confusion));
    let mut m = metrics(&pooled);
    let scored: Vec<(f64, Label)> =
        results.iter().flat_map(|f| f.predictions.iter().map(|p| (p.score, p.truth))).collect();
    m.auc = roc_auc(&scored);
    Ok((results, pooled, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub folds: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub timeframe: Option<TimeDelta>,
}

/// Prepare documents and cross-validate one classifier.
pub fn evaluate<T: Labeled>(
    items: &[T],
    spec: &ClassifierSpec,
    function_words: &FunctionWords,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalError> {
    let (docs, dropped_empty) = prepare_documents(items, spec.features, function_words);
    let (fold_results, pooled, metrics) = cross_validate(&docs, spec, settings.folds, settings.sampling)?;
    Ok(EvalReport {
        classifier: classifier_label(spec),
        features: spec.features.to_string(),
        sampling: settings.sampling,
        folds: settings.folds,
        timeframe: settings.timeframe.map(format_duration),
        seed: settings.seed,
        aggregation: "micro (pooled confusion counts)".into(),
        documents: docs.len(),
        dropped_empty,
        fold_results,
        pooled,
        metrics,
    })
}

pub fn write_report_header<W: Write>(mut out: W, first: &str) -> std::io::Result<()> {
    writeln!(out, "{first}\t{}", REPORT_COLUMNS.join("\t"))
}

/// One header line and one row per report.
pub fn write_reports_tsv<W: Write>(mut out: W, reports: &[EvalReport]) -> std::io::Result<()> {
    write_report_header(&mut out, "classifier")?;
    for r in reports {
        writeln!(out, "{}\t{}", r.classifier, r.metrics.tsv_cells())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub timeframe: String,
    pub disruptive_available: usize,
    /// `None` when the timeframe labels nothing disruptive.
    pub per_classifier: Option<Vec<(String, Metrics)>>,
    pub mean: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sample_per_class: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Relabel the corpus for each timeframe, draw the same number of posts per
/// class for every timeframe and cross-validate every classifier.
///
/// The per-class sample size is the disruptive count of the smallest
/// timeframe that labels anything disruptive.
pub fn timeframe_sweep(
    posts: &[CleanPost],
    blocks: &[BlockEvent],
    timeframes: &[TimeDelta],
    specs: &[ClassifierSpec],
    function_words: &FunctionWords,
    folds: usize,
    seed: u64,
) -> Result<SweepTable, EvalError> {
    let index = BlockIndex::new(blocks);
    let labeled: Vec<_> = timeframes.iter().map(|&tf| relabel(posts.to_vec(), &index, tf)).collect();
    let counts: Vec<usize> = labeled.iter().map(|l| l.iter().filter(|p| p.label.is_disruptive()).count()).collect();
    let mut order: Vec<usize> = (0..timeframes.len()).collect();
    order.sort_by_key(|&i| timeframes[i]);
    let n = order.iter().map(|&i| counts[i]).find(|&c| c > 0).unwrap_or(0);

    let mut rows = Vec::with_capacity(timeframes.len());
    for (k, set) in labeled.iter().enumerate() {
        let name = format_duration(timeframes[k]);
        if counts[k] == 0 {
            rows.push(SweepRow { timeframe: name, disruptive_available: 0, per_classifier: None, mean: None });
            continue;
        }
        let sample = sample_per_class(set, n, SampleStrategy::Random { seed })?;
        let settings =
            EvalSettings { folds, sampling: Sampling::Stratified { seed }, seed, timeframe: Some(timeframes[k]) };
        let mut results = Vec::with_capacity(specs.len());
        for spec in specs {
            let report = evaluate(&sample, spec, function_words, &settings)?;
            results.push((report.classifier, report.metrics));
        }
        let mean = Metrics::mean(&results.iter().map(|r| r.1).collect::<Vec<_>>());
        rows.push(SweepRow { timeframe: name, disruptive_available: counts[k], per_classifier: Some(results), mean: Some(mean) });
    }
    Ok(SweepTable { sample_per_class: n, seed, rows })
}

/// One row per timeframe with the mean over classifiers.
pub fn write_sweep_tsv<W: Write>(mut out: W, table: &SweepTable) -> std::io::Result<()> {
    write_report_header(&mut out, "timeframe")?;
    for row in &table.rows {
        let cells = row.mean.map_or_else(|| [UNDEFINED; 8].join("\t"), |m| m.tsv_cells());
        writeln!(out, "{}\t{cells}", row.timeframe)?;
    }
    Ok(())
}

/// Terms counted by [`corpus_stats`].
pub const PROBE_TERMS: [&str; 10] = ["fucking", "fuck", "shit", "i", "you", "me", "my", "your", "myself", "yourself"];
pub const SWEAR_TERMS: [&str; 3] = ["fucking", "fuck", "shit"];
pub const SELF_OTHER_TERMS: [&str; 7] = ["i", "you", "me", "my", "your", "myself", "yourself"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub posts: usize,
    pub tokens: usize,
    pub length: Option<LengthSummary>,
    /// Occurrences per thousand tokens of the class.
    pub term_permille: BTreeMap<String, Option<f64>>,
    /// Share of posts containing each term.
    pub posts_containing: BTreeMap<String, Option<f64>>,
    pub share_with_i_or_you: Option<f64>,
    pub share_with_any_self_other_term: Option<f64>,
    pub share_with_two_self_other_terms: Option<f64>,
    pub share_with_swear_term: Option<f64>,
    /// Mean of count(i) / count(you) over posts that contain "you".
    pub mean_i_you_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub disruptive: ClassStats,
    pub constructive: ClassStats,
}

fn class_stats<'a>(posts: impl Iterator<Item = &'a [String]>) -> ClassStats {
    let posts: Vec<&[String]> = posts.collect();
    let n = posts.len();
    let share = |k: usize| (n > 0).then(|| k as f64 / n as f64);
    let tokens: usize = posts.iter().map(|p| p.len()).sum();
    let mut lengths: Vec<f64> = posts.iter().map(|p| p.len() as f64).collect();
    lengths.sort_by(f64::total_cmp);
    let length = (n > 0).then(|| LengthSummary {
        mean: tokens as f64 / n as f64,
        min: lengths[0],
        q1: quantile(&lengths, 0.25),
        median: quantile(&lengths, 0.5),
        q3: quantile(&lengths, 0.75),
        max: lengths[n - 1],
    });
    let count = |p: &[String], term: &str| p.iter().filter(|t| t.as_str() == term).count();
    let mut term_permille = BTreeMap::new();
    let mut posts_containing = BTreeMap::new();
    for term in PROBE_TERMS {
        let occurrences: usize = posts.iter().map(|p| count(p, term)).sum();
        term_permille.insert(term.to_owned(), (tokens > 0).then(|| 1000.0 * occurrences as f64 / tokens as f64));
        posts_containing.insert(term.to_owned(), share(posts.iter().filter(|p| count(p, term) > 0).count()));
    }
    let distinct = |p: &[String], set: &[&str]| set.iter().filter(|t| count(p, t) > 0).count();
    let ratios: Vec<f64> = posts
        .iter()
        .filter(|p| count(p, "you") > 0)
        .map(|p| count(p, "i") as f64 / count(p, "you") as f64)
        .collect();
    ClassStats {
        posts: n,
        tokens,
        length,
        term_permille,
        posts_containing,
        share_with_i_or_you: share(posts.iter().filter(|p| distinct(p, &["i", "you"]) > 0).count()),
        share_with_any_self_other_term: share(posts.iter().filter(|p| distinct(p, &SELF_OTHER_TERMS) > 0).count()),
        share_with_two_self_other_terms: share(posts.iter().filter(|p| distinct(p, &SELF_OTHER_TERMS) >= 2).count()),
        share_with_swear_term: share(posts.iter().filter(|p| distinct(p, &SWEAR_TERMS) > 0).count()),
        mean_i_you_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
    }
}

pub fn corpus_stats<T: Labeled>(items: &[T]) -> CorpusStats {
    let of = |label: Label| class_stats(items.iter().filter(move |i| i.label() == label).map(|i| i.tokens()));
    CorpusStats { disruptive: of(Label::Disruptive), constructive: of(Label::Constructive) }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| UNDEFINED.to_owned(), |x| format!("{x:.digits$}"))
}

/// Term table (per mille per class) followed by summary lines.
pub fn write_stats_tsv<W: Write>(mut out: W, stats: &CorpusStats) -> std::io::Result<()> {
    writeln!(out, "term\tdisruptive_permille\tconstructive_permille")?;
    for term in PROBE_TERMS {
        writeln!(
            out,
            "{term}\t{}\t{}",
            cell(stats.disruptive.term_permille[term], 2),
            cell(stats.constructive.term_permille[term], 2)
        )?;
    }
    writeln!(out)?;
    writeln!(out, "statistic\tdisruptive\tconstructive")?;
    let (d, c) = (&stats.disruptive, &stats.constructive);
    let rows: [(&str, Option<f64>, Option<f64>, usize); 11] = [
        ("posts", Some(d.posts as f64), Some(c.posts as f64), 0),
        ("tokens", Some(d.tokens as f64), Some(c.tokens as f64), 0),
        ("length_mean", d.length.map(|l| l.mean), c.length.map(|l| l.mean), 2),
        ("length_q1", d.length.map(|l| l.q1), c.length.map(|l| l.q1), 2),
        ("length_median", d.length.map(|l| l.median), c.length.map(|l| l.median), 2),
        ("length_q3", d.length.map(|l| l.q3), c.length.map(|l| l.q3), 2),
        ("share_i_or_you", d.share_with_i_or_you, c.share_with_i_or_you, 4),
        ("share_any_self_other_term", d.share_with_any_self_other_term, c.share_with_any_self_other_term, 4),
        ("share_two_self_other_terms", d.share_with_two_self_other_terms, c.share_with_two_self_other_terms, 4),
        ("share_swear_term", d.share_with_swear_term, c.share_with_swear_term, 4),
        ("mean_i_you_ratio", d.mean_i_you_ratio, c.mean_i_you_ratio, 4),
    ];
    for (name, a, b, digits) in rows {
        writeln!(out, "{name}\t{}\t{}", cell(a, digits), cell(b, digits))?;
    }
    Ok(())
}
