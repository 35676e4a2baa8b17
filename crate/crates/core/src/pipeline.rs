//! File-level stages shared by the subcommands and the `pipeline` run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::authorship::{attribute_tokens, extract_posts, RawPost};
use crate::blocks::{drop_anonymous, filter_blocks as apply_filter, FilterMode, TermLists};
use crate::classifiers::{self, ClassifierSpec, TrainedModel};
use crate::clean::{CleanPost, CleanStats, Cleaner, PatternList};
use crate::config::{derive_seed, BalanceMode, Config, ConfigError};
use crate::corpus::{
    balance_sample, delta_distribution, label_posts, merge_corpus, write_histogram_csv, Label, Labeled, LabeledPost,
    MergedPost, SampleStrategy,
};
use crate::dump::{parse_block_log, stream_afd_pages, write_block_tsv, BlockEvent, BlockLog, PageHistory};
use crate::evaluate::{
    corpus_stats, evaluate as run_evaluation, prepare_documents, timeframe_sweep, write_reports_tsv, write_stats_tsv,
    write_sweep_tsv, EvalReport, EvalSettings, SweepTable,
};
use crate::features::FunctionWords;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// 1 for configuration and usage problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_owned(), source }
}

pub fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<(), PipelineError> {
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(data)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    finish(w, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(data)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    finish(w, path)
}

fn with_writer(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    f(&mut w).map_err(io_err(path))?;
    finish(w, path)
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// A labeled post or a merged window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusItem {
    Merged(MergedPost),
    Post(LabeledPost),
}

impl Labeled for CorpusItem {
    fn label(&self) -> Label {
        match self {
            CorpusItem::Merged(m) => m.label,
            CorpusItem::Post(p) => p.label,
        }
    }
    fn timestamp(&self) -> chrono::DateTime<chrono::Utc> {
        match self {
            CorpusItem::Merged(m) => m.timestamp(),
            CorpusItem::Post(p) => p.timestamp(),
        }
    }
    fn tokens(&self) -> &[String] {
        match self {
            CorpusItem::Merged(m) => &m.tokens,
            CorpusItem::Post(p) => &p.post.tokens,
        }
    }
}

#[derive(Serialize)]
struct CleanRecord<'a> {
    #[serde(flatten)]
    post: &'a CleanPost,
    clean: bool,
}

/// Resources loaded from optional override files.
pub struct Resources {
    pub cleaner: Cleaner,
    pub terms: TermLists,
    pub function_words: FunctionWords,
}

impl Resources {
    pub fn load(config: &Config) -> Result<Resources, PipelineError> {
        let patterns = |p: &Option<PathBuf>, default: &str| -> Result<PatternList, PipelineError> {
            match p {
                Some(path) => PatternList::parse(&read_text(path)?)
                    .map_err(|e| PipelineError::Input { path: path.clone(), message: e.to_string() }),
                None => PatternList::parse(default).map_err(data),
            }
        };
        let cleaner = Cleaner::new(
            patterns(&config.boilerplate, crate::clean::DEFAULT_BOILERPLATE)?,
            patterns(&config.signatures, crate::clean::DEFAULT_SIGNATURES)?,
        );
        let terms = match &config.block_terms {
            Some(path) => TermLists::parse(&read_text(path)?)
                .map_err(|e| PipelineError::Input { path: path.clone(), message: e.to_string() })?,
            None => TermLists::default(),
        };
        let function_words = match &config.function_words {
            Some(path) => FunctionWords::parse(&read_text(path)?)
                .map_err(|e| PipelineError::Input { path: path.clone(), message: e.to_string() })?,
            None => FunctionWords::default(),
        };
        Ok(Resources { cleaner, terms, function_words })
    }
}

/// Stream AfD pages from a dump into JSON Lines. On a truncated or malformed
/// dump the complete pages are still written before the error is returned.
pub fn extract_afd(dump: &Path, output: &Path, prefix: &str) -> Result<usize, PipelineError> {
    let mut w = create(output)?;
    let mut pages = 0;
    let mut failure = None;
    for page in stream_afd_pages(open(dump)?, prefix) {
        match page {
            Ok(p) => {
                serde_json::to_writer(&mut w, &p).map_err(data)?;
                w.write_all(b"\n").map_err(io_err(output))?;
                pages += 1;
            }
            Err(e) => {
                failure = Some(PipelineError::Input { path: dump.to_owned(), message: e.to_string() });
                break;
            }
        }
    }
    finish(w, output)?;
    failure.map_or(Ok(pages), Err)
}

/// Attribute tokens page by page and emit one post per contributing revision.
pub fn attribute(pages: &Path, output: &Path) -> Result<usize, PipelineError> {
    let histories: Vec<PageHistory> = read_jsonl(pages)?;
    let posts: Vec<Vec<RawPost>> =
        histories.par_iter().map(|h| extract_posts(&h.title, &attribute_tokens(h))).collect();
    let posts: Vec<RawPost> = posts.into_iter().flatten().collect();
    write_jsonl(output, &posts)?;
    Ok(posts.len())
}

/// Clean raw posts. Posts left without tokens are dropped.
pub fn clean(raw: &Path, output: &Path, cleaner: &Cleaner) -> Result<CleanStats, PipelineError> {
    let posts: Vec<RawPost> = read_jsonl(raw)?;
    let mut stats = CleanStats::default();
    let cleaned: Vec<CleanPost> = posts.iter().map(|p| cleaner.clean_post(p, &mut stats)).collect();
    write_jsonl(output, cleaned.iter().filter(|p| !p.tokens.is_empty()).map(|post| CleanRecord { post, clean: true }))?;
    Ok(stats)
}

pub fn read_blocks(path: &Path) -> Result<BlockLog, PipelineError> {
    parse_block_log(open(path)?).map_err(|e| PipelineError::Input { path: path.to_owned(), message: e.to_string() })
}

/// Normalize a block log (XML or TSV) to the TSV form, keeping block actions.
pub fn extract_blocks(log: &Path, output: &Path) -> Result<BlockLog, PipelineError> {
    let parsed = read_blocks(log)?;
    with_writer(output, |w| write_block_tsv(w, &parsed.events))?;
    Ok(parsed)
}

/// Drop anonymous users, then apply the comment filter. Returns the counts
/// before and after.
pub fn filter_blocks(
    input: &Path,
    output: &Path,
    mode: FilterMode,
    terms: &TermLists,
) -> Result<(usize, usize), PipelineError> {
    let events = read_blocks(input)?.events;
    let before = events.len();
    let kept = apply_filter(drop_anonymous(events), mode, terms);
    with_writer(output, |w| write_block_tsv(w, &kept))?;
    Ok((before, kept.len()))
}

pub fn label(posts: &Path, blocks: &Path, timeframe: TimeDelta, output: &Path) -> Result<[usize; 2], PipelineError> {
    let posts: Vec<CleanPost> = read_jsonl(posts)?;
    let blocks = read_blocks(blocks)?.events;
    let labeled = label_posts(posts, &blocks, timeframe);
    write_jsonl(output, &labeled)?;
    Ok(class_counts(&labeled))
}

pub fn class_counts<T: Labeled>(items: &[T]) -> [usize; 2] {
    let d = items.iter().filter(|i| i.label().is_disruptive()).count();
    [items.len() - d, d]
}

pub fn window(input: &Path, window: TimeDelta, output: &Path) -> Result<[usize; 2], PipelineError> {
    let labeled: Vec<LabeledPost> = read_jsonl(input)?;
    let merged = merge_corpus(&labeled, window);
    write_jsonl(output, &merged)?;
    Ok(class_counts(&merged))
}

pub fn sample_strategy(mode: &BalanceMode, seed: u64) -> SampleStrategy {
    match mode {
        BalanceMode::Random => SampleStrategy::Random { seed: derive_seed(seed, "sample") },
        BalanceMode::Chronological => SampleStrategy::Chronological,
    }
}

pub fn sample(input: &Path, strategy: SampleStrategy, output: &Path) -> Result<[usize; 2], PipelineError> {
    let items: Vec<CorpusItem> = read_jsonl(input)?;
    let balanced = balance_sample(&items, strategy).map_err(data)?;
    write_jsonl(output, &balanced)?;
    Ok(class_counts(&balanced))
}

pub fn evaluate(
    input: &Path,
    specs: &[ClassifierSpec],
    function_words: &FunctionWords,
    settings: &EvalSettings,
    tsv: &Path,
    json: Option<&Path>,
) -> Result<Vec<EvalReport>, PipelineError> {
    let items: Vec<CorpusItem> = read_jsonl(input)?;
    let reports = specs
        .iter()
        .map(|spec| run_evaluation(&items, spec, function_words, settings).map_err(data))
        .collect::<Result<Vec<_>, _>>()?;
    with_writer(tsv, |w| write_reports_tsv(w, &reports))?;
    if let Some(json) = json {
        write_json(json, &reports)?;
    }
    Ok(reports)
}

/// Train one classifier on the whole corpus and write its model files.
pub fn train(
    input: &Path,
    spec: &ClassifierSpec,
    function_words: &FunctionWords,
    out_dir: &Path,
    top: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    let items: Vec<CorpusItem> = read_jsonl(input)?;
    let (docs, _) = prepare_documents(&items, spec.features, function_words);
    let refs: Vec<(&[String], Label)> = docs.iter().map(|(t, l)| (t.as_slice(), *l)).collect();
    let model = classifiers::train(spec, &refs).map_err(data)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
        let path = out_dir.join(name);
        with_writer(&path, |w| f(w))?;
        written.push(path);
        Ok::<(), PipelineError>(())
    };
    match &model {
        TrainedModel::Nb { model, vocab } => {
            emit("vocabulary.tsv", &|w| vocab.write_tsv(w))?;
            emit("nb.tsv", &|w| model.write_tsv(w))?;
        }
        TrainedModel::Svm { model, vocab } => {
            emit("vocabulary.tsv", &|w| vocab.write_tsv(w))?;
            emit("svm.tsv", &|w| model.write_tsv(w))?;
        }
        TrainedModel::Lm { disruptive, constructive } => {
            emit("lm_disruptive.counts", &|w| disruptive.write_counts(w))?;
            emit("lm_constructive.counts", &|w| constructive.write_counts(w))?;
        }
    }
    if let Some(weights) = model.term_weights() {
        let lookup: BTreeMap<&str, f64> = weights.iter().copied().collect();
        emit("top_terms.tsv", &|w| {
            writeln!(w, "class\trank\tterm\tweight")?;
            for class in [Label::Disruptive, Label::Constructive] {
                for (rank, term) in classifiers::top_weighted_terms(&weights, top, class).iter().enumerate() {
                    writeln!(w, "{class}\t{}\t{term}\t{}", rank + 1, lookup[term.as_str()])?;
                }
            }
            Ok(())
        })?;
    }
    Ok(written)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    posts: &Path,
    blocks: &Path,
    timeframes: &[TimeDelta],
    specs: &[ClassifierSpec],
    function_words: &FunctionWords,
    folds: usize,
    seed: u64,
    tsv: &Path,
    json: Option<&Path>,
) -> Result<SweepTable, PipelineError> {
    let posts: Vec<CleanPost> = read_jsonl(posts)?;
    let blocks = read_blocks(blocks)?.events;
    let table = timeframe_sweep(&posts, &blocks, timeframes, specs, function_words, folds, derive_seed(seed, "sweep"))
        .map_err(data)?;
    with_writer(tsv, |w| write_sweep_tsv(w, &table))?;
    if let Some(json) = json {
        write_json(json, &table)?;
    }
    Ok(table)
}

pub fn stats(input: &Path, output: &Path) -> Result<(), PipelineError> {
    let items: Vec<CorpusItem> = read_jsonl(input)?;
    let s = corpus_stats(&items);
    with_writer(output, |w| write_stats_tsv(w, &s))
}

pub fn deltas(
    posts: &Path,
    blocks: &Path,
    horizon: TimeDelta,
    bucket: TimeDelta,
    output: &Path,
) -> Result<(), PipelineError> {
    let posts: Vec<CleanPost> = read_jsonl(posts)?;
    let blocks: Vec<BlockEvent> = read_blocks(blocks)?.events;
    let h = delta_distribution(&posts, &blocks, horizon, bucket);
    with_writer(output, |w| write_histogram_csv(w, &h))
}

/// Collect evaluation reports from JSON files into one table.
pub fn report(inputs: &[PathBuf], output: &Path) -> Result<usize, PipelineError> {
    let mut all: Vec<EvalReport> = Vec::new();
    for path in inputs {
        let mut text = String::new();
        open(path)?.read_to_string(&mut text).map_err(io_err(path))?;
        let parsed: Result<Vec<EvalReport>, _> = serde_json::from_str(&text);
        match parsed {
            Ok(v) => all.extend(v),
            Err(_) => all.push(
                serde_json::from_str(&text)
                    .map_err(|e| PipelineError::Input { path: path.clone(), message: e.to_string() })?,
            ),
        }
    }
    with_writer(output, |w| write_reports_tsv(w, &all))?;
    Ok(all.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: Option<String>,
}

/// Provenance of one run. Contains no wall-clock time so that reruns
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputRecord>,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

pub fn file_sha256(path: &Path) -> Option<String> {
    let mut f = File::open(path).ok()?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).ok()?;
    Some(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new(command: &str, config: &Config, inputs: &[&Path]) -> Manifest {
        Manifest {
            tool: "afdforge".into(),
            version: VERSION.into(),
            command: command.into(),
            inputs: inputs
                .iter()
                .map(|p| InputRecord { path: p.display().to_string(), sha256: file_sha256(p) })
                .collect(),
            config: config.to_pairs(),
            seeds: config.stage_seeds(),
            outputs: Vec::new(),
            status: "running".into(),
            failed_stage: None,
            error: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_json(path, self)
    }
}

/// Manifest path written next to an output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Names of the artifacts written by [`run_pipeline`].
pub mod artifact {
    pub const PAGES: &str = "pages.jsonl";
    pub const RAW_POSTS: &str = "raw_posts.jsonl";
    pub const CLEAN_POSTS: &str = "clean_posts.jsonl";
    pub const BLOCKS: &str = "blocks.tsv";
    pub const BLOCKS_FILTERED: &str = "blocks_filtered.tsv";
    pub const LABELED: &str = "labeled.jsonl";
    pub const MERGED: &str = "merged.jsonl";
    pub const SAMPLE: &str = "sample.jsonl";
    pub const REPORT_TSV: &str = "report.tsv";
    pub const REPORT_JSON: &str = "report.json";
    pub const STATS: &str = "stats.tsv";
    pub const DELTAS: &str = "deltas.csv";
    pub const SWEEP_TSV: &str = "sweep.tsv";
    pub const SWEEP_JSON: &str = "sweep.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Run every stage into `out_dir`. The manifest is written even when a
/// stage fails, naming that stage; earlier artifacts stay in place.
pub fn run_pipeline(config: &Config, out_dir: &Path) -> Result<Manifest, PipelineError> {
    let dump = config.dump.clone().ok_or_else(|| ConfigError::Invalid {
        key: "dump".into(),
        value: String::new(),
        origin: "pipeline".into(),
        message: "a dump path is required".into(),
    })?;
    let block_log = config.block_log.clone().ok_or_else(|| ConfigError::Invalid {
        key: "block_log".into(),
        value: String::new(),
        origin: "pipeline".into(),
        message: "a block log path is required".into(),
    })?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = Manifest::new("pipeline", config, &[&dump, &block_log]);
    let manifest_path = out_dir.join(artifact::MANIFEST);
    let result = pipeline_stages(config, &dump, &block_log, out_dir, &mut manifest);
    match &result {
        Ok(()) => manifest.status = "ok".into(),
        Err((stage, e)) => {
            manifest.status = "failed".into();
            manifest.failed_stage = Some((*stage).to_owned());
            manifest.error = Some(e.to_string());
        }
    }
    manifest.write(&manifest_path)?;
    match result {
        Ok(()) => Ok(manifest),
        Err((_, e)) => Err(e),
    }
}

fn pipeline_stages(
    config: &Config,
    dump: &Path,
    block_log: &Path,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<(), (&'static str, PipelineError)> {
    use artifact::*;
    let p = |name: &str| out.join(name);
    let done = |m: &mut Manifest, name: &str| m.outputs.push(name.to_owned());

    let res = Resources::load(config).map_err(|e| ("resources", e))?;
    let stage = |name: &'static str| move |e: PipelineError| (name, e);

    extract_afd(dump, &p(PAGES), &config.title_prefix).map_err(stage("extract-afd"))?;
    done(manifest, PAGES);
    attribute(&p(PAGES), &p(RAW_POSTS)).map_err(stage("attribute"))?;
    done(manifest, RAW_POSTS);
    clean(&p(RAW_POSTS), &p(CLEAN_POSTS), &res.cleaner).map_err(stage("clean"))?;
    done(manifest, CLEAN_POSTS);
    extract_blocks(block_log, &p(BLOCKS)).map_err(stage("extract-blocks"))?;
    done(manifest, BLOCKS);
    filter_blocks(&p(BLOCKS), &p(BLOCKS_FILTERED), config.block_filter, &res.terms).map_err(stage("filter-blocks"))?;
    done(manifest, BLOCKS_FILTERED);
    label(&p(CLEAN_POSTS), &p(BLOCKS_FILTERED), config.timeframe, &p(LABELED)).map_err(stage("label"))?;
    done(manifest, LABELED);
    let corpus = if config.sliding_window {
        window(&p(LABELED), config.window, &p(MERGED)).map_err(stage("window"))?;
        done(manifest, MERGED);
        MERGED
    } else {
        LABELED
    };
    sample(&p(corpus), sample_strategy(&config.balance, config.seed), &p(SAMPLE)).map_err(stage("sample"))?;
    done(manifest, SAMPLE);
    let settings = EvalSettings {
        folds: config.folds,
        sampling: config.sampling_mode(),
        seed: config.seed,
        timeframe: Some(config.timeframe),
    };
    evaluate(&p(SAMPLE), &config.classifier_specs(), &res.function_words, &settings, &p(REPORT_TSV), Some(&p(REPORT_JSON)))
        .map_err(stage("evaluate"))?;
    done(manifest, REPORT_TSV);
    done(manifest, REPORT_JSON);
    stats(&p(corpus), &p(STATS)).map_err(stage("stats"))?;
    done(manifest, STATS);
    deltas(&p(CLEAN_POSTS), &p(BLOCKS_FILTERED), config.horizon, config.bucket, &p(DELTAS)).map_err(stage("stats"))?;
    done(manifest, DELTAS);
    if !config.timeframes.is_empty() {
        sweep(
            &p(CLEAN_POSTS),
            &p(BLOCKS_FILTERED),
            &config.timeframes,
            &config.classifier_specs(),
            &res.function_words,
            config.folds,
            config.seed,
            &p(SWEEP_TSV),
            Some(&p(SWEEP_JSON)),
        )
        .map_err(stage("sweep"))?;
        done(manifest, SWEEP_TSV);
        done(manifest, SWEEP_JSON);
    }
    Ok(())
}
