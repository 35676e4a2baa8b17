//! Linear soft-margin SVM trained by sequential minimal optimization with
//! second-order working set selection.

use std::io::{BufRead, Write};

use super::{ClassifierError, Prediction};
use crate::corpus::Label;
use crate::features::SparseVector;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, tolerance: 1e-3, max_iterations: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub c: f64,
    terms: Vec<String>,
    weights: Vec<f64>,
    bias: f64,
}

/// Dual objective after every iteration, plus the iteration count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmTrace {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dense(x: &SparseVector, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    for &(i, w) in x.entries() {
        d[i] = w;
    }
    d
}

/// Train on labeled vectors over a vocabulary of `terms`. Disruptive is the
/// positive class.
pub fn train_svm(
    terms: &[String],
    data: &[(SparseVector, Label)],
    params: SvmParams,
) -> Result<(SvmModel, SvmTrace), ClassifierError> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ClassifierError::Parameter(format!("C must be positive, got {}", params.c)));
    }
    let dim = terms.len();
    for (x, _) in data {
        if x.entries().iter().any(|&(i, w)| !w.is_finite() || i >= dim) {
            return Err(ClassifierError::NonFinite);
        }
    }
    let n = data.len();
    let c = params.c;
    let y: Vec<f64> = data.iter().map(|(_, l)| if l.is_disruptive() { 1.0 } else { -1.0 }).collect();
    let diag: Vec<f64> = data.iter().map(|(x, _)| x.norm_sq()).collect();
    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a'Qa - e'a.
    let mut grad = vec![-1.0; n];
    let mut trace = SvmTrace { objective: Vec::new(), iterations: 0, converged: false };

    let column = |i: usize| -> Vec<f64> {
        let xi = dense(&data[i].0, dim);
        (0..n).map(|k| y[i] * y[k] * data[k].0.dot(&xi)).collect()
    };
    let up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    while trace.iterations < params.max_iterations {
        let mut i = None;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = Some(t);
            }
        }
        let Some(i) = i else { break };
        let qi = column(i);
        let mut j = None;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t, &alpha) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * y[i] * y[t] * qi[t];
                let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                if obj < best {
                    best = obj;
                    j = Some(t);
                }
            }
        }
        if gmax - gmin < params.tolerance {
            trace.converged = true;
            break;
        }
        let Some(j) = j else {
            trace.converged = true;
            break;
        };
        let qj = column(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = diag[i] + diag[j] - 2.0 * y[i] * y[j] * qi[j];
            if q > 0.0 { q } else { TAU }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            } else if diff <= 0.0 && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            } else if sum <= c && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            } else if sum <= c && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += qi[k] * di + qj[k] * dj;
        }
        trace.iterations += 1;
        trace.objective.push(0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>());
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_n += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    let mut weights = vec![0.0; dim];
    for (t, (x, _)) in data.iter().enumerate() {
        if alpha[t] != 0.0 {
            for &(i, w) in x.entries() {
                weights[i] += alpha[t] * y[t] * w;
            }
        }
    }
    Ok((SvmModel { c, terms: terms.to_vec(), weights, bias: -rho }, trace))
}

impl SvmModel {
    pub fn from_parts(terms: Vec<String>, weights: Vec<f64>, bias: f64, c: f64) -> Self {
        SvmModel { c, terms, weights, bias }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Positive scores are disruptive; zero maps to constructive.
    pub fn predict(&self, x: &SparseVector) -> Prediction {
        let score = self.decision(x);
        Prediction { label: if score > 0.0 { Label::Disruptive } else { Label::Constructive }, score }
    }

    pub fn term_weights(&self) -> Vec<(&str, f64)> {
        self.terms.iter().map(String::as_str).zip(self.weights.iter().copied()).collect()
    }

    /// `term \t weight` lines preceded by C and bias header lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# C\t{}", self.c)?;
        writeln!(out, "# bias\t{}", self.bias)?;
        for (t, w) in self.terms.iter().zip(&self.weights) {
            writeln!(out, "{t}\t{w}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<SvmModel, ClassifierError> {
        let mut m = SvmModel { c: f64::NAN, terms: Vec::new(), weights: Vec::new(), bias: f64::NAN };
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let bad = || ClassifierError::ModelFormat { line: i + 1, message: line.clone() };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                ["# C", v] => m.c = num(v)?,
                ["# bias", v] => m.bias = num(v)?,
                [t, w] if !t.starts_with('#') => {
                    m.terms.push((*t).to_owned());
                    m.weights.push(num(w)?);
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

    fn pt(x: f64, y: f64, label: Label) -> (SparseVector, Label) {
        (SparseVector::from_entries(vec![(0, x), (1, y)]), label)
    }

    fn terms() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn four_points() -> Vec<(SparseVector, Label)> {
        vec![
            pt(5.0, 2.0, Label::Disruptive),
            pt(6.0, 3.0, Label::Disruptive),
            pt(7.0, 0.0, Label::Constructive),
            pt(8.0, 1.0, Label::Constructive),
        ]
    }

    #[test]
    fn four_point_optimum() {
        let (m, trace) = train_svm(&terms(), &four_points(), SvmParams::default()).unwrap();
        assert!(trace.converged);
        assert!((m.weights()[0] + 0.5).abs() < 1e-2, "{:?}", m.weights());
        assert!((m.weights()[1] - 0.5).abs() < 1e-2);
        assert!((m.bias() - 2.5).abs() < 5e-2, "{}", m.bias());
        for (x, l) in four_points() {
            assert_eq!(m.predict(&x).label, l);
        }
    }

    #[test]
    fn objective_never_increases() {
        let (_, trace) = train_svm(&terms(), &four_points(), SvmParams::default()).unwrap();
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn negated_labels_negate_scores() {
        let data = four_points();
        let flipped: Vec<_> = data
            .iter()
            .map(|(x, l)| (x.clone(), if l.is_disruptive() { Label::Constructive } else { Label::Disruptive }))
            .collect();
        let (a, _) = train_svm(&terms(), &data, SvmParams::default()).unwrap();
        let (b, _) = train_svm(&terms(), &flipped, SvmParams::default()).unwrap();
        for (x, _) in &data {
            assert!((a.decision(x) + b.decision(x)).abs() < 1e-2);
        }
    }

    #[test]
    fn identical_features_give_no_signal() {
        let data: Vec<_> = (0..4)
            .map(|i| pt(1.0, 1.0, if i % 2 == 0 { Label::Disruptive } else { Label::Constructive }))
            .collect();
        let (m, _) = train_svm(&terms(), &data, SvmParams::default()).unwrap();
        let correct = data.iter().filter(|(x, l)| m.predict(x).label == *l).count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = vec![(SparseVector::from_entries(vec![(0, f64::NAN)]), Label::Disruptive)];
        assert!(matches!(train_svm(&terms(), &bad, SvmParams::default()), Err(ClassifierError::NonFinite)));
        let p = SvmParams { c: 0.0, ..Default::default() };
        assert!(train_svm(&terms(), &four_points(), p).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let (m, _) = train_svm(&terms(), &four_points(), SvmParams::default()).unwrap();
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        assert_eq!(SvmModel::read_tsv(buf.as_slice()).unwrap(), m);
    }
}
