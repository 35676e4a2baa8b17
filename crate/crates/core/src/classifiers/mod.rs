//! Naive Bayes, Kneser-Ney language model and linear SVM classifiers behind
//! one train/predict interface.

pub mod lm;
pub mod nb;
pub mod svm;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::corpus::Label;
use crate::features::{tfidf_vector, FeatureError, FeatureSet, SparseVector, Vocabulary};

pub use lm::{predict_lm, train_lm, LmModel, LmVocabulary};
pub use nb::{train_nb, NbModel};
pub use svm::{train_svm, SvmModel, SvmParams, SvmTrace};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("no training documents of class {0}")]
    EmptyClass(Label),
    #[error("cannot score an empty post")]
    EmptyPost,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown classifier {0:?} (expected nb, lm or svm)")]
    UnknownClassifier(String),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A predicted class with a real-valued score; higher is more disruptive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

/// The `k` terms with the highest (disruptive) or lowest (constructive)
/// weight. Ties are broken by term.
pub fn top_weighted_terms(weights: &[(&str, f64)], k: usize, class: Label) -> Vec<String> {
    let mut sorted: Vec<(&str, f64)> = weights.to_vec();
    sorted.sort_by(|a, b| {
        let by_weight = match class {
            Label::Disruptive => b.1.total_cmp(&a.1),
            Label::Constructive => a.1.total_cmp(&b.1),
        };
        by_weight.then_with(|| a.0.cmp(b.0))
    });
    sorted.into_iter().take(k).map(|(t, _)| t.to_owned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    Nb,
    Lm,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Nb, ClassifierKind::Lm, ClassifierKind::Svm];
}

impl FromStr for ClassifierKind {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nb" | "naive-bayes" => Ok(ClassifierKind::Nb),
            "lm" => Ok(ClassifierKind::Lm),
            "svm" => Ok(ClassifierKind::Svm),
            _ => Err(ClassifierError::UnknownClassifier(s.to_owned())),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Nb => "nb",
            ClassifierKind::Lm => "lm",
            ClassifierKind::Svm => "svm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub features: FeatureSet,
    pub delta: f64,
    pub c: f64,
    pub order: usize,
    pub skips: bool,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec { kind, features: FeatureSet::FullText, delta: 1.0, c: 1.0, order: 4, skips: true }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Nb { model: NbModel, vocab: Vocabulary },
    Lm { disruptive: LmModel, constructive: LmModel },
    Svm { model: SvmModel, vocab: Vocabulary },
}

/// Train on already preprocessed (filtered and stemmed) documents.
pub fn train(spec: &ClassifierSpec, docs: &[(&[String], Label)]) -> Result<TrainedModel, ClassifierError> {
    let mut class_docs = [0u64; 2];
    for (_, l) in docs {
        class_docs[l.index()] += 1;
    }
    for label in [Label::Constructive, Label::Disruptive] {
        if class_docs[label.index()] == 0 {
            return Err(ClassifierError::EmptyClass(label));
        }
    }
    match spec.kind {
        ClassifierKind::Nb => {
            let vocab = Vocabulary::build(docs.iter().copied());
            let model = train_nb(&vocab, class_docs, spec.delta)?;
            Ok(TrainedModel::Nb { model, vocab })
        }
        ClassifierKind::Lm => {
            let vocab = Arc::new(LmVocabulary::from_posts(docs.iter().map(|d| d.0)));
            let of = |label: Label| docs.iter().filter(move |d| d.1 == label).map(|d| d.0);
            Ok(TrainedModel::Lm {
                disruptive: train_lm(of(Label::Disruptive), vocab.clone(), spec.order, spec.skips)?,
                constructive: train_lm(of(Label::Constructive), vocab, spec.order, spec.skips)?,
            })
        }
        ClassifierKind::Svm => {
            let vocab = Vocabulary::build(docs.iter().copied());
            let data = docs
                .iter()
                .map(|(t, l)| Ok((tfidf_vector(t, &vocab)?, *l)))
                .collect::<Result<Vec<(SparseVector, Label)>, ClassifierError>>()?;
            let params = SvmParams { c: spec.c, ..SvmParams::default() };
            let (model, _) = train_svm(vocab.terms(), &data, params)?;
            Ok(TrainedModel::Svm { model, vocab })
        }
    }
}

impl TrainedModel {
    pub fn predict(&self, tokens: &[String]) -> Result<Prediction, ClassifierError> {
        match self {
            TrainedModel::Nb { model, vocab } => Ok(model.predict(&tfidf_vector(tokens, vocab)?)),
            TrainedModel::Lm { disruptive, constructive } => predict_lm(disruptive, constructive, tokens),
            TrainedModel::Svm { model, vocab } => Ok(model.predict(&tfidf_vector(tokens, vocab)?)),
        }
    }

    /// Per-term weights for ranking; language models have none.
    pub fn term_weights(&self) -> Option<Vec<(&str, f64)>> {
        match self {
            TrainedModel::Nb { model, .. } => Some(model.term_weights()),
            TrainedModel::Svm { model, .. } => Some(model.term_weights()),
            TrainedModel::Lm { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking() {
        let w = [("you", 2.0), ("keep", 1.0), ("delet", -3.0)];
        assert_eq!(top_weighted_terms(&w, 1, Label::Disruptive), ["you"]);
        assert_eq!(top_weighted_terms(&w, 1, Label::Constructive), ["delet"]);
        assert_eq!(top_weighted_terms(&w, 10, Label::Disruptive).len(), 3);
    }

    #[test]
    fn unified_training() {
        let toks = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
        let docs_owned = [
            (toks("you are an idiot"), Label::Disruptive),
            (toks("you you stupid"), Label::Disruptive),
            (toks("keep per nom"), Label::Constructive),
            (toks("delete per nom"), Label::Constructive),
        ];
        let docs: Vec<(&[String], Label)> = docs_owned.iter().map(|(t, l)| (t.as_slice(), *l)).collect();
        for kind in ClassifierKind::ALL {
            let m = train(&ClassifierSpec::new(kind), &docs).unwrap();
            assert_eq!(m.predict(&toks("you idiot")).unwrap().label, Label::Disruptive, "{kind}");
            assert_eq!(m.predict(&toks("keep per nom")).unwrap().label, Label::Constructive, "{kind}");
        }
        assert!(matches!(train(&ClassifierSpec::new(ClassifierKind::Nb), &docs[..2]), Err(ClassifierError::EmptyClass(_))));
    }
}
