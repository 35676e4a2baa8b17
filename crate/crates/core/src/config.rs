//! Run configuration: defaults, then a config file, then `AFDFORGE_*`
//! environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::FilterMode;
use crate::classifiers::{ClassifierKind, ClassifierSpec};
use crate::dump::AFD_PREFIX;
use crate::duration::{format_duration, parse_duration};
use crate::evaluate::Sampling;
use crate::features::FeatureSet;

pub const ENV_PREFIX: &str = "AFDFORGE_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key {key:?} ({origin})")]
    UnknownKey { key: String, origin: String },
    #[error("invalid value {value:?} for key {key:?} ({origin}): {message}")]
    Invalid { key: String, value: String, origin: String, message: String },
    #[error("conflicting values for key {key:?} in {origin}: {first:?} and {second:?}")]
    Conflict { key: String, origin: String, first: String, second: String },
    #[error("{origin} line {line}: expected key=value")]
    Syntax { origin: String, line: usize },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path} is not a usable manifest: {message}")]
    Manifest { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceMode {
    Random,
    Chronological,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dump: Option<PathBuf>,
    pub block_log: Option<PathBuf>,
    pub title_prefix: String,
    pub boilerplate: Option<PathBuf>,
    pub signatures: Option<PathBuf>,
    pub block_terms: Option<PathBuf>,
    pub function_words: Option<PathBuf>,
    pub block_filter: FilterMode,
    pub timeframe: TimeDelta,
    pub sliding_window: bool,
    pub window: TimeDelta,
    pub balance: BalanceMode,
    pub classifiers: Vec<ClassifierKind>,
    pub features: FeatureSet,
    pub folds: usize,
    pub sampling: String,
    pub delta: f64,
    pub c: f64,
    pub lm_order: usize,
    pub lm_skips: bool,
    pub seed: u64,
    pub timeframes: Vec<TimeDelta>,
    pub horizon: TimeDelta,
    pub bucket: TimeDelta,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dump: None,
            block_log: None,
            title_prefix: AFD_PREFIX.to_owned(),
            boilerplate: None,
            signatures: None,
            block_terms: None,
            function_words: None,
            block_filter: FilterMode::Blacklist,
            timeframe: TimeDelta::days(1),
            sliding_window: false,
            window: TimeDelta::days(1),
            balance: BalanceMode::Random,
            classifiers: ClassifierKind::ALL.to_vec(),
            features: FeatureSet::FullText,
            folds: 10,
            sampling: "stratified".into(),
            delta: 1.0,
            c: 1.0,
            lm_order: 4,
            lm_skips: true,
            seed: 0,
            timeframes: Vec::new(),
            horizon: TimeDelta::days(7),
            bucket: TimeDelta::hours(1),
        }
    }
}

pub const KEYS: [&str; 24] = [
    "balance",
    "block_filter",
    "block_log",
    "block_terms",
    "boilerplate",
    "bucket",
    "c",
    "classifiers",
    "delta",
    "dump",
    "features",
    "folds",
    "function_words",
    "horizon",
    "lm_order",
    "lm_skips",
    "sampling",
    "seed",
    "signatures",
    "sliding_window",
    "timeframe",
    "timeframes",
    "title_prefix",
    "window",
];

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.trim().is_empty()).then(|| PathBuf::from(v.trim()))
}

impl Config {
    /// Set one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            key: key.to_owned(),
            value: value.to_owned(),
            origin: origin.to_owned(),
            message,
        };
        let dur = |v: &str| parse_duration(v).map_err(|e| e.to_string());
        let v = value.trim();
        match key {
            "dump" => self.dump = optional_path(v),
            "block_log" => self.block_log = optional_path(v),
            "title_prefix" => self.title_prefix = value.to_owned(),
            "boilerplate" => self.boilerplate = optional_path(v),
            "signatures" => self.signatures = optional_path(v),
            "block_terms" => self.block_terms = optional_path(v),
            "function_words" => self.function_words = optional_path(v),
            "block_filter" => self.block_filter = v.parse().map_err(|e: crate::blocks::FilterError| invalid(e.to_string()))?,
            "timeframe" => self.timeframe = dur(v).map_err(invalid)?,
            "sliding_window" => self.sliding_window = parse_bool(v).map_err(invalid)?,
            "window" => self.window = dur(v).map_err(invalid)?,
            "balance" => {
                self.balance = match v.to_ascii_lowercase().as_str() {
                    "random" => BalanceMode::Random,
                    "chronological" => BalanceMode::Chronological,
                    _ => return Err(invalid("expected random or chronological".into())),
                }
            }
            "classifiers" => {
                let list = parse_list(v, |s| s.parse::<ClassifierKind>().map_err(|e| e.to_string())).map_err(invalid)?;
                if list.is_empty() {
                    return Err(invalid("at least one classifier is required".into()));
                }
                self.classifiers = list;
            }
            "features" => self.features = v.parse().map_err(|e: crate::features::FeatureError| invalid(e.to_string()))?,
            "folds" => {
                let n: usize = v.parse().map_err(|_| invalid("expected an integer".into()))?;
                if n < 2 {
                    return Err(invalid("at least 2 folds are required".into()));
                }
                self.folds = n;
            }
            "sampling" => {
                Sampling::parse(v, 0).map_err(invalid)?;
                self.sampling = v.to_ascii_lowercase();
            }
            "delta" | "c" => {
                let x: f64 = v.parse().map_err(|_| invalid("expected a number".into()))?;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(invalid("must be positive".into()));
                }
                if key == "delta" {
                    self.delta = x;
                } else {
                    self.c = x;
                }
            }
            "lm_order" => {
                let n: usize = v.parse().map_err(|_| invalid("expected an integer".into()))?;
                if !(1..=8).contains(&n) {
                    return Err(invalid("must be between 1 and 8".into()));
                }
                self.lm_order = n;
            }
            "lm_skips" => self.lm_skips = parse_bool(v).map_err(invalid)?,
            "seed" => self.seed = v.parse().map_err(|_| invalid("expected a non-negative integer".into()))?,
            "timeframes" => self.timeframes = parse_list(v, dur).map_err(invalid)?,
            "horizon" => self.horizon = dur(v).map_err(invalid)?,
            "bucket" => {
                let d = dur(v).map_err(invalid)?;
                if d <= TimeDelta::zero() {
                    return Err(invalid("must be positive".into()));
                }
                self.bucket = d;
            }
            _ => return Err(ConfigError::UnknownKey { key: key.to_owned(), origin: origin.to_owned() }),
        }
        Ok(())
    }

    /// Canonical textual form of every key, suitable for a manifest.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(String::new, |p| p.display().to_string());
        let list = |v: Vec<String>| v.join(",");
        let pairs = [
            ("balance", match self.balance {
                BalanceMode::Random => "random".to_owned(),
                BalanceMode::Chronological => "chronological".to_owned(),
            }),
            ("block_filter", self.block_filter.to_string()),
            ("block_log", path(&self.block_log)),
            ("block_terms", path(&self.block_terms)),
            ("boilerplate", path(&self.boilerplate)),
            ("bucket", format_duration(self.bucket)),
            ("c", self.c.to_string()),
            ("classifiers", list(self.classifiers.iter().map(|k| k.to_string()).collect())),
            ("delta", self.delta.to_string()),
            ("dump", path(&self.dump)),
            ("features", self.features.to_string()),
            ("folds", self.folds.to_string()),
            ("function_words", path(&self.function_words)),
            ("horizon", format_duration(self.horizon)),
            ("lm_order", self.lm_order.to_string()),
            ("lm_skips", self.lm_skips.to_string()),
            ("sampling", self.sampling.clone()),
            ("seed", self.seed.to_string()),
            ("signatures", path(&self.signatures)),
            ("sliding_window", self.sliding_window.to_string()),
            ("timeframe", format_duration(self.timeframe)),
            ("timeframes", list(self.timeframes.iter().map(|d| format_duration(*d)).collect())),
            ("title_prefix", self.title_prefix.clone()),
            ("window", format_duration(self.window)),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn sampling_mode(&self) -> Sampling {
        Sampling::parse(&self.sampling, derive_seed(self.seed, "folds")).expect("validated when set")
    }

    pub fn classifier_specs(&self) -> Vec<ClassifierSpec> {
        self.classifiers
            .iter()
            .map(|&kind| ClassifierSpec {
                kind,
                features: self.features,
                delta: self.delta,
                c: self.c,
                order: self.lm_order,
                skips: self.lm_skips,
            })
            .collect()
    }

    /// Stage seeds derived from the top-level seed.
    pub fn stage_seeds(&self) -> BTreeMap<String, u64> {
        ["folds", "sample", "sweep"].iter().map(|s| (s.to_string(), derive_seed(self.seed, s))).collect()
    }
}

/// Deterministic per-stage seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Parse `key=value` lines. A key may repeat only with the same value.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((k, v)) = t.split_once('=') else {
            return Err(ConfigError::Syntax { origin: origin.to_owned(), line: i + 1 });
        };
        let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
        if let Some(prev) = seen.get(&k) {
            if prev != &v {
                return Err(ConfigError::Conflict { key: k, origin: origin.to_owned(), first: prev.clone(), second: v });
            }
            continue;
        }
        seen.insert(k.clone(), v.clone());
        out.push((k, v));
    }
    Ok(out)
}

/// Key/value pairs of a config file: either flat `key=value` text or a
/// manifest JSON whose `config` object is replayed.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    let origin = path.display().to_string();
    if text.trim_start().starts_with('{') {
        let manifest_err = |message: String| ConfigError::Manifest { path: path.to_owned(), message };
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))?;
        let obj = v.get("config").and_then(|c| c.as_object()).ok_or_else(|| manifest_err("no config object".into()))?;
        return obj
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                other => Ok((k.clone(), other.to_string())),
            })
            .collect();
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = parse_pairs(&text, &origin)?;
    for (k, v) in &mut pairs {
        if PATH_KEYS.contains(&k.as_str()) && !v.is_empty() && Path::new(v.as_str()).is_relative() {
            *v = base.join(v.as_str()).display().to_string();
        }
    }
    Ok(pairs)
}

/// Keys holding file paths; relative values in a config file are taken
/// relative to the file's directory.
const PATH_KEYS: [&str; 6] = ["dump", "block_log", "boilerplate", "signatures", "block_terms", "function_words"];

/// Resolve defaults < file < environment < flags.
pub fn load_config<I>(file: Option<&Path>, env: I, flags: &[(String, String)]) -> Result<Config, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut config = Config::default();
    if let Some(path) = file {
        let origin = path.display().to_string();
        for (k, v) in read_config_file(path)? {
            config.set(&k, &v, &origin)?;
        }
    }
    let mut env_pairs: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|s| (s.to_ascii_lowercase(), v)))
        .collect();
    env_pairs.sort();
    for (k, v) in env_pairs {
        config.set(&k, &v, &format!("environment {ENV_PREFIX}{}", k.to_ascii_uppercase()))?;
    }
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in flags {
        if let Some(prev) = seen.insert(k, v) {
            if prev != v {
                return Err(ConfigError::Conflict {
                    key: k.clone(),
                    origin: "command line".into(),
                    first: prev.to_owned(),
                    second: v.clone(),
                });
            }
        }
        config.set(k, v, "command line")?;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_config_is_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.conf");
        std::fs::write(&p, "").unwrap();
        let c = load_config(Some(&p), [], &[]).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.timeframe, TimeDelta::days(1));
        assert_eq!(c.folds, 10);
        assert_eq!(c.lm_order, 4);
        assert_eq!(c.block_filter, FilterMode::Blacklist);
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "timeframe = 2d\nfolds=5\nseed=3\n").unwrap();
        let env = [("AFDFORGE_FOLDS".to_string(), "4".to_string()), ("HOME".into(), "/x".into())];
        let c = load_config(Some(&p), env, &flags(&[("timeframe", "1d")])).unwrap();
        assert_eq!(c.timeframe, TimeDelta::days(1));
        assert_eq!(c.folds, 4);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse_pairs("folds=3\nfolds=4\n", "f").unwrap_err();
        assert!(e.to_string().contains("\"folds\""));
        let e = load_config(None, [], &flags(&[("timeframe", "soon")])).unwrap_err();
        assert!(e.to_string().contains("\"timeframe\""));
        let e = load_config(None, [], &flags(&[("colour", "red")])).unwrap_err();
        assert!(e.to_string().contains("\"colour\""));
        let e = load_config(None, [("AFDFORGE_BOGUS".into(), "1".into())], &[]).unwrap_err();
        assert!(e.to_string().contains("\"bogus\""));
        assert!(parse_pairs("folds=3\nfolds=3\n", "f").is_ok());
    }

    #[test]
    fn pairs_round_trip() {
        let mut c = Config::default();
        c.set("timeframes", "13h,1d,1.5d", "t").unwrap();
        c.set("classifiers", "svm,nb", "t").unwrap();
        let mut d = Config::default();
        for (k, v) in c.to_pairs() {
            d.set(&k, &v, "t").unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "folds"), derive_seed(7, "folds"));
        assert_ne!(derive_seed(7, "folds"), derive_seed(7, "sample"));
        assert_ne!(derive_seed(7, "folds"), derive_seed(8, "folds"));
    }
}
