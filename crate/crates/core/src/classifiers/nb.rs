//! Multinomial naive Bayes with tf-idf exponents and Lidstone smoothing.

use std::io::{BufRead, Write};

use super::{ClassifierError, Prediction};
use crate::corpus::Label;
use crate::features::{SparseVector, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    pub delta: f64,
    terms: Vec<String>,
    log_prior: [f64; 2],
    /// `log P(w | C_k)`, indexed by class then term.
    log_prob: [Vec<f64>; 2],
}

/// Fit priors from document counts per class and term likelihoods from the
/// per-class term frequencies in `vocab`:
/// `P(w|C) = (tf(w,C) + delta) / sum_v (tf(v,C) + delta)`.
pub fn train_nb(vocab: &Vocabulary, class_docs: [u64; 2], delta: f64) -> Result<NbModel, ClassifierError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ClassifierError::Parameter(format!("smoothing delta must be positive, got {delta}")));
    }
    for label in [Label::Constructive, Label::Disruptive] {
        if class_docs[label.index()] == 0 {
            return Err(ClassifierError::EmptyClass(label));
        }
    }
    let total = (class_docs[0] + class_docs[1]) as f64;
    let v = vocab.len() as f64;
    let mut log_prob: [Vec<f64>; 2] = Default::default();
    for label in [Label::Constructive, Label::Disruptive] {
        let k = label.index();
        let denom = (vocab.class_tokens(label) as f64 + delta * v).ln();
        log_prob[k] = (0..vocab.len()).map(|i| (vocab.tf(i, label) as f64 + delta).ln() - denom).collect();
    }
    Ok(NbModel {
        delta,
        terms: vocab.terms().to_vec(),
        log_prior: [(class_docs[0] as f64 / total).ln(), (class_docs[1] as f64 / total).ln()],
        log_prob,
    })
}

impl NbModel {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn log_prior(&self, label: Label) -> f64 {
        self.log_prior[label.index()]
    }

    pub fn log_prob(&self, term: usize, label: Label) -> f64 {
        self.log_prob[label.index()][term]
    }

    /// `log P(C_k) + sum_w x_w log P(w|C_k)` for both classes.
    pub fn scores(&self, x: &SparseVector) -> [f64; 2] {
        [0, 1].map(|k| self.log_prior[k] + x.dot(&self.log_prob[k]))
    }

    /// Ties go to the constructive class.
    pub fn predict(&self, x: &SparseVector) -> Prediction {
        let s = self.scores(x);
        let label = if s[1] > s[0] { Label::Disruptive } else { Label::Constructive };
        Prediction { label, score: s[1] - s[0] }
    }

    /// `ln(P(w|C_1) / P(w|C_0))` per term.
    pub fn term_weights(&self) -> Vec<(&str, f64)> {
        self.terms.iter().enumerate().map(|(i, t)| (t.as_str(), self.log_prob[1][i] - self.log_prob[0][i])).collect()
    }

    /// `term \t log P(w|constructive) \t log P(w|disruptive)` with header lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# delta\t{}", self.delta)?;
        writeln!(out, "# prior\t{}\t{}", self.log_prior[0], self.log_prior[1])?;
        for (i, t) in self.terms.iter().enumerate() {
            writeln!(out, "{t}\t{}\t{}", self.log_prob[0][i], self.log_prob[1][i])?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<NbModel, ClassifierError> {
        let mut m = NbModel { delta: f64::NAN, terms: Vec::new(), log_prior: [f64::NAN; 2], log_prob: Default::default() };
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || ClassifierError::ModelFormat { line: i + 1, message: line.clone() };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            match cols.as_slice() {
                ["# delta", d] => m.delta = num(d)?,
                ["# prior", a, b] => m.log_prior = [num(a)?, num(b)?],
                [t, a, b] if !t.starts_with('#') => {
                    m.terms.push((*t).to_owned());
                    m.log_prob[0].push(num(a)?);
                    m.log_prob[1].push(num(b)?);
                }
                [] | [""] => {}
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tfidf_vector;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn two_doc() -> (Vocabulary, NbModel) {
        let pos = toks("you idiot");
        let neg = toks("keep article");
        let v = Vocabulary::build([(pos.as_slice(), Label::Disruptive), (neg.as_slice(), Label::Constructive)]);
        let m = train_nb(&v, [1, 1], 1.0).unwrap();
        (v, m)
    }

    #[test]
    fn laplace_example() {
        let (v, m) = two_doc();
        let you = v.get("you").unwrap();
        assert!((m.log_prob(you, Label::Disruptive).exp() - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.log_prob(you, Label::Constructive).exp() - 1.0 / 6.0).abs() < 1e-12);
        assert!((m.log_prior(Label::Disruptive).exp() - 0.5).abs() < 1e-12);
        for k in [Label::Constructive, Label::Disruptive] {
            let s: f64 = (0..v.len()).map(|i| m.log_prob(i, k).exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predicts_disruptive_for_you() {
        let (v, m) = two_doc();
        let x = tfidf_vector(&toks("you"), &v).unwrap();
        assert_eq!(m.predict(&x).label, Label::Disruptive);
        assert_eq!(m.predict(&SparseVector::default()).label, Label::Constructive);
        let ranked = super::super::top_weighted_terms(&m.term_weights(), 1, Label::Disruptive);
        assert!(ranked[0] == "you" || ranked[0] == "idiot");
        let w: std::collections::HashMap<_, _> = m.term_weights().into_iter().collect();
        assert!((w["you"].exp() - 2.0).abs() < 1e-12);
        assert!(w["you"] > w["keep"]);
    }

    #[test]
    fn empty_class_is_error() {
        let (v, _) = two_doc();
        assert!(matches!(train_nb(&v, [0, 1], 1.0), Err(ClassifierError::EmptyClass(Label::Constructive))));
        assert!(train_nb(&v, [1, 1], 0.0).is_err());
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let (_, m) = two_doc();
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        assert_eq!(NbModel::read_tsv(buf.as_slice()).unwrap(), m);
    }
}
