//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, Config};
use crate::evaluate::EvalSettings;
use crate::pipeline::{self, manifest_path_for, Manifest, PipelineError, Resources};

#[derive(Debug, Parser)]
#[command(name = "afdforge", version, about = "Annotated deletion-discussion corpus builder and classifier evaluation")]
pub struct Cli {
    /// Flat key=value config file, or a manifest JSON to replay.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InOut {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// nb, lm, svm, a comma-separated list, or all.
    #[arg(long)]
    pub classifier: Option<String>,
    /// full-text or function-words.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long)]
    pub lm_order: Option<String>,
    /// Enable or disable skip patterns in the language model.
    #[arg(long)]
    pub lm_skips: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream AfD page histories out of a MediaWiki XML dump.
    ExtractAfd {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Convert a block log (XML or TSV) to TSV, keeping block actions only.
    ExtractBlocks {
        #[command(flatten)]
        io: InOut,
    },
    /// Attribute tokens to authors and emit one post per revision.
    Attribute {
        #[command(flatten)]
        io: InOut,
    },
    /// Strip markup, templates and signatures and normalize tokens.
    Clean {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        boilerplate: Option<PathBuf>,
        #[arg(long)]
        signatures: Option<PathBuf>,
    },
    /// Drop anonymous users and filter blocks by comment terms.
    FilterBlocks {
        #[command(flatten)]
        io: InOut,
        /// blacklist or whitelist.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        terms: Option<PathBuf>,
    },
    /// Label posts by the time to their author's next block.
    Label {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        timeframe: Option<String>,
    },
    /// Merge each author's posts with a sliding window.
    Window {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        window: Option<String>,
    },
    /// Balance classes by sampling constructive posts.
    Sample {
        #[command(flatten)]
        io: InOut,
        /// random or chronological.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Train one classifier on a corpus and write its model files.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        /// Number of top-weighted terms to list per class.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Cross-validate classifiers on a labeled corpus.
    Evaluate {
        #[command(flatten)]
        io: InOut,
        /// Also write the full reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        folds: Option<String>,
        /// stratified, linear-per-class or linear-global.
        #[arg(long)]
        sampling: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        /// Timeframe recorded in the report metadata.
        #[arg(long)]
        timeframe: Option<String>,
    },
    /// Evaluate all classifiers over several timeframes.
    Sweep {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Comma-separated durations such as 13h,1d,1.5d.
        #[arg(long)]
        timeframes: Option<String>,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        folds: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Corpus statistics and, optionally, the post-to-block delta histogram.
    Stats {
        #[command(flatten)]
        io: InOut,
        /// Clean posts for the delta histogram.
        #[arg(long, requires_all = ["blocks", "histogram"])]
        posts: Option<PathBuf>,
        #[arg(long)]
        blocks: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<String>,
        #[arg(long)]
        bucket: Option<String>,
    },
    /// Combine evaluation JSON reports into one table.
    Report {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run every stage from a config file into a directory.
    Pipeline {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        block_log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
    },
}

struct Flags(Vec<(String, String)>);

impl Flags {
    fn new(set: &[String]) -> Result<Flags, PipelineError> {
        let mut pairs = Vec::new();
        for s in set {
            let (k, v) = s.split_once('=').ok_or_else(|| {
                PipelineError::Config(crate::config::ConfigError::Syntax { origin: format!("--set {s}"), line: 1 })
            })?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        Ok(Flags(pairs))
    }

    fn add(&mut self, key: &str, value: &Option<String>) {
        if let Some(v) = value {
            self.0.push((key.to_owned(), v.clone()));
        }
    }

    fn add_path(&mut self, key: &str, value: &Option<PathBuf>) {
        if let Some(v) = value {
            self.0.push((key.to_owned(), v.display().to_string()));
        }
    }

    fn add_model(&mut self, m: &ModelFlags) {
        let classifiers = m.classifier.as_ref().map(|c| if c.trim() == "all" { "nb,lm,svm".to_owned() } else { c.clone() });
        self.add("classifiers", &classifiers);
        self.add("features", &m.features);
        self.add("delta", &m.delta);
        self.add("c", &m.c);
        self.add("lm_order", &m.lm_order);
        self.add("lm_skips", &m.lm_skips);
    }
}

fn with_manifest(
    command: &str,
    config: &Config,
    inputs: &[&Path],
    manifest_at: &Path,
    outputs: &[&Path],
    run: impl FnOnce() -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    let mut manifest = Manifest::new(command, config, inputs);
    let result = run();
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    match &result {
        Ok(()) => manifest.status = "ok".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.failed_stage = Some(command.to_owned());
            manifest.error = Some(e.to_string());
        }
    }
    manifest.write(manifest_at)?;
    result
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut flags = Flags::new(&cli.set)?;
    match &cli.command {
        Command::ExtractAfd { prefix, .. } => flags.add("title_prefix", prefix),
        Command::Clean { boilerplate, signatures, .. } => {
            flags.add_path("boilerplate", boilerplate);
            flags.add_path("signatures", signatures);
        }
        Command::FilterBlocks { mode, terms, .. } => {
            flags.add("block_filter", mode);
            flags.add_path("block_terms", terms);
        }
        Command::Label { timeframe, .. } => flags.add("timeframe", timeframe),
        Command::Window { window, .. } => flags.add("window", window),
        Command::Sample { strategy, seed, .. } => {
            flags.add("balance", strategy);
            flags.add("seed", seed);
        }
        Command::Train { model, .. } => flags.add_model(model),
        Command::Evaluate { model, folds, sampling, seed, timeframe, .. } => {
            flags.add_model(model);
            flags.add("folds", folds);
            flags.add("sampling", sampling);
            flags.add("seed", seed);
            flags.add("timeframe", timeframe);
        }
        Command::Sweep { timeframes, model, folds, seed, .. } => {
            flags.add("timeframes", timeframes);
            flags.add_model(model);
            flags.add("folds", folds);
            flags.add("seed", seed);
        }
        Command::Stats { horizon, bucket, .. } => {
            flags.add("horizon", horizon);
            flags.add("bucket", bucket);
        }
        Command::Pipeline { dump, block_log, seed, .. } => {
            flags.add_path("dump", dump);
            flags.add_path("block_log", block_log);
            flags.add("seed", seed);
        }
        Command::ExtractBlocks { .. } | Command::Attribute { .. } | Command::Report { .. } => {}
    }
    let config = load_config(cli.config.as_deref(), std::env::vars(), &flags.0)?;
    let res = Resources::load(&config)?;

    match &cli.command {
        Command::ExtractAfd { io, .. } => {
            with_manifest("extract-afd", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let n = pipeline::extract_afd(&io.input, &io.output, &config.title_prefix)?;
                eprintln!("{n} pages");
                Ok(())
            })
        }
        Command::ExtractBlocks { io } => {
            with_manifest("extract-blocks", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let log = pipeline::extract_blocks(&io.input, &io.output)?;
                eprintln!(
                    "{} blocks, {} unblock/reblock skipped, {} unknown skipped, {} rejected",
                    log.events.len(),
                    log.skipped_non_block,
                    log.skipped_unknown,
                    log.rejected
                );
                Ok(())
            })
        }
        Command::Attribute { io } => {
            with_manifest("attribute", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let n = pipeline::attribute(&io.input, &io.output)?;
                eprintln!("{n} posts");
                Ok(())
            })
        }
        Command::Clean { io, .. } => {
            with_manifest("clean", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let s = pipeline::clean(&io.input, &io.output, &res.cleaner)?;
                eprintln!(
                    "{} posts, {} empty after cleaning, {} unbalanced templates",
                    s.posts, s.empty_after_cleaning, s.unbalanced_templates
                );
                Ok(())
            })
        }
        Command::FilterBlocks { io, .. } => {
            with_manifest("filter-blocks", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let (before, after) = pipeline::filter_blocks(&io.input, &io.output, config.block_filter, &res.terms)?;
                eprintln!("{after} of {before} blocks kept");
                Ok(())
            })
        }
        Command::Label { posts, blocks, output, .. } => {
            with_manifest("label", &config, &[posts, blocks], &manifest_path_for(output), &[output], || {
                let [c, d] = pipeline::label(posts, blocks, config.timeframe, output)?;
                eprintln!("{d} disruptive, {c} constructive");
                Ok(())
            })
        }
        Command::Window { io, .. } => {
            with_manifest("window", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let [c, d] = pipeline::window(&io.input, config.window, &io.output)?;
                eprintln!("{d} disruptive, {c} constructive merged posts");
                Ok(())
            })
        }
        Command::Sample { io, .. } => {
            with_manifest("sample", &config, &[&io.input], &manifest_path_for(&io.output), &[&io.output], || {
                let strategy = pipeline::sample_strategy(&config.balance, config.seed);
                let [c, d] = pipeline::sample(&io.input, strategy, &io.output)?;
                eprintln!("{d} disruptive, {c} constructive");
                Ok(())
            })
        }
        Command::Train { input, out_dir, model, top } => {
            let specs = config.classifier_specs();
            if specs.len() != 1 || model.classifier.as_deref() == Some("all") {
                return Err(PipelineError::Config(crate::config::ConfigError::Invalid {
                    key: "classifiers".into(),
                    value: config.to_pairs()["classifiers"].clone(),
                    origin: "train".into(),
                    message: "train takes exactly one classifier".into(),
                }));
            }
            let manifest = out_dir.join("manifest.json");
            with_manifest("train", &config, &[input], &manifest, &[out_dir], || {
                for p in pipeline::train(input, &specs[0], &res.function_words, out_dir, *top)? {
                    eprintln!("wrote {}", p.display());
                }
                Ok(())
            })
        }
        Command::Evaluate { io, json, timeframe, .. } => {
            let mut outputs: Vec<&Path> = vec![&io.output];
            if let Some(j) = json {
                outputs.push(j);
            }
            with_manifest("evaluate", &config, &[&io.input], &manifest_path_for(&io.output), &outputs, || {
                let settings = EvalSettings {
                    folds: config.folds,
                    sampling: config.sampling_mode(),
                    seed: config.seed,
                    timeframe: timeframe.as_ref().map(|_| config.timeframe),
                };
                let specs = config.classifier_specs();
                pipeline::evaluate(&io.input, &specs, &res.function_words, &settings, &io.output, json.as_deref())?;
                Ok(())
            })
        }
        Command::Sweep { posts, blocks, output, json, .. } => {
            if config.timeframes.is_empty() {
                return Err(PipelineError::Config(crate::config::ConfigError::Invalid {
                    key: "timeframes".into(),
                    value: String::new(),
                    origin: "sweep".into(),
                    message: "at least one timeframe is required".into(),
                }));
            }
            let mut outputs: Vec<&Path> = vec![output];
            if let Some(j) = json {
                outputs.push(j);
            }
            with_manifest("sweep", &config, &[posts, blocks], &manifest_path_for(output), &outputs, || {
                let t = pipeline::sweep(
                    posts,
                    blocks,
                    &config.timeframes,
                    &config.classifier_specs(),
                    &res.function_words,
                    config.folds,
                    config.seed,
                    output,
                    json.as_deref(),
                )?;
                eprintln!("{} timeframes, {} posts per class", t.rows.len(), t.sample_per_class);
                Ok(())
            })
        }
        Command::Stats { io, posts, blocks, histogram, .. } => {
            let mut inputs: Vec<&Path> = vec![&io.input];
            let mut outputs: Vec<&Path> = vec![&io.output];
            if let (Some(p), Some(b), Some(h)) = (posts, blocks, histogram) {
                inputs.extend([p.as_path(), b.as_path()]);
                outputs.push(h);
            }
            with_manifest("stats", &config, &inputs, &manifest_path_for(&io.output), &outputs, || {
                pipeline::stats(&io.input, &io.output)?;
                if let (Some(p), Some(b), Some(h)) = (posts, blocks, histogram) {
                    pipeline::deltas(p, b, config.horizon, config.bucket, h)?;
                }
                Ok(())
            })
        }
        Command::Report { inputs, output } => {
            let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            with_manifest("report", &config, &ins, &manifest_path_for(output), &[output], || {
                let n = pipeline::report(inputs, output)?;
                eprintln!("{n} reports");
                Ok(())
            })
        }
        Command::Pipeline { out_dir, .. } => {
            let m = pipeline::run_pipeline(&config, out_dir)?;
            eprintln!("{} artifacts in {}", m.outputs.len(), out_dir.display());
            Ok(())
        }
    }
}

/// Parse arguments and run. Returns the process exit code: 0 on success, 1
/// for usage and configuration errors, 2 for data errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
