//! Relation loss, evidence losses, and their weighted joint objective.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before logarithms.
pub const PROB_EPS: f64 = 1e-12;

pub const DEFAULT_LAMBDA1: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the attention-guided evidence loss.
    pub lambda1: f64,
    /// Adds `lambda2 * L_Evi` (the plain evidence predictor) when set.
    pub include_plain_evidence_loss: bool,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: DEFAULT_LAMBDA1,
            include_plain_evidence_loss: false,
            lambda2: DEFAULT_LAMBDA1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::Config(format!("lambda1 must be >= 0, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Config(format!("lambda2 must be >= 0, got {}", self.lambda2)));
        }
        Ok(())
    }
}

/// Gold evidence indicators, one N_s vector per supervised (pair, relation) term.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvidenceTargets {
    pub terms: Vec<Array1<f64>>,
}

impl EvidenceTargets {
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Mean binary cross-entropy of a probability matrix against labels.
pub fn relation_loss(predictions: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64> {
    if predictions.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs labels {:?}",
            predictions.dim(),
            labels.dim()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let p = tape.constant(predictions.to_owned());
    let l = tape.bce_mean(p, labels.to_owned(), PROB_EPS);
    Ok(tape.scalar(l))
}

/// Averages binary cross-entropy over every term and sentence; zero when
/// there are no relation-bearing terms.
pub fn evidence_loss(predictions: &[Array1<f64>], targets: &EvidenceTargets) -> Result<f64> {
    if predictions.len() != targets.terms.len() {
        return Err(Error::Shape(format!(
            "{} prediction vectors for {} evidence terms",
            predictions.len(),
            targets.terms.len()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let ns = targets.terms[0].len();
    for (p, y) in predictions.iter().zip(&targets.terms) {
        if p.len() != ns || y.len() != ns {
            return Err(Error::Shape(format!(
                "evidence vectors of length {} / {} for N_s = {ns}",
                p.len(),
                y.len()
            )));
        }
    }
    let flat_p: Vec<f64> = predictions.iter().flatten().copied().collect();
    let flat_y: Vec<f64> = targets.terms.iter().flatten().copied().collect();
    let n = flat_p.len();
    let no_params: [Mat; 0] = [];
    let mut tape = Tape::new(&no_params);
    let p = tape.constant(Mat::from_shape_vec((n, 1), flat_p).expect("length"));
    let l = tape.bce_mean(p, Mat::from_shape_vec((n, 1), flat_y).expect("length"), PROB_EPS);
    Ok(tape.scalar(l))
}

/// `L_RE + lambda1 * L_Evi^a`, plus `lambda2 * L_Evi` when enabled.
pub fn joint_loss(relation: f64, attention_evidence: f64, plain_evidence: f64, weights: &LossWeights) -> f64 {
    let mut total = relation + weights.lambda1 * attention_evidence;
    if weights.include_plain_evidence_loss {
        total += weights.lambda2 * plain_evidence;
    }
    total
}

/// Tape form of [`joint_loss`]. Zero weights add no node, so gradients of
/// absent terms are exactly zero.
pub fn joint_loss_var(
    tape: &mut Tape,
    relation: Var,
    attention_evidence: Option<Var>,
    plain_evidence: Option<Var>,
    weights: &LossWeights,
) -> Var {
    let mut total = relation;
    if let Some(e) = attention_evidence.filter(|_| weights.lambda1 != 0.0) {
        let scaled = tape.scale(e, weights.lambda1);
        total = tape.add(total, scaled);
    }
    if weights.include_plain_evidence_loss {
        if let Some(e) = plain_evidence.filter(|_| weights.lambda2 != 0.0) {
            let scaled = tape.scale(e, weights.lambda2);
            total = tape.add(total, scaled);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use std::f64::consts::LN_2;

    #[test]
    fn relation_loss_fixtures() {
        let half = Array2::from_elem((3, 4), 0.5);
        let y = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 7 + j) % 3 == 0) as u8 as f64);
        assert_abs_diff_eq!(relation_loss(half.view(), y.view()).unwrap(), LN_2, epsilon = 1e-12);

        let exact = relation_loss(y.view(), y.view()).unwrap();
        assert!((0.0..1e-11).contains(&exact), "{exact}");

        let got = relation_loss(array![[0.9, 0.2]].view(), array![[1.0, 0.0]].view()).unwrap();
        let oracle = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.164252, epsilon = 1e-6);

        assert!(relation_loss(half.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn evidence_loss_fixtures() {
        assert_eq!(evidence_loss(&[], &EvidenceTargets::default()).unwrap(), 0.0);
        let targets = EvidenceTargets {
            terms: vec![array![1.0, 0.0, 1.0], array![0.0, 0.0, 1.0]],
        };
        let half = vec![Array1::from_elem(3, 0.5); 2];
        assert_abs_diff_eq!(evidence_loss(&half, &targets).unwrap(), LN_2, epsilon = 1e-12);

        let one = EvidenceTargets {
            terms: vec![array![1.0, 0.0]],
        };
        let got = evidence_loss(&[array![0.8, 0.3]], &one).unwrap();
        assert_abs_diff_eq!(got, -(0.8f64.ln() + 0.7f64.ln()) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.289909, epsilon = 1e-6);

        assert!(evidence_loss(&[array![0.5]], &one).is_err());
        assert!(evidence_loss(&half, &one).is_err());
    }

    #[test]
    fn joint_loss_fixtures() {
        let w0 = LossWeights {
            lambda1: 0.0,
            ..LossWeights::default()
        };
        assert_eq!(joint_loss(0.123, 9.0, 0.0, &w0).to_bits(), 0.123f64.to_bits());
        let w = LossWeights {
            lambda1: 0.1,
            ..LossWeights::default()
        };
        assert_abs_diff_eq!(joint_loss(0.5, 0.3, 0.0, &w), 0.53, epsilon = 1e-15);
        assert_eq!(LossWeights::default().lambda1, 1e-4);
        let with_plain = LossWeights {
            lambda1: 0.1,
            include_plain_evidence_loss: true,
            lambda2: 0.5,
        };
        assert_abs_diff_eq!(joint_loss(0.5, 0.3, 0.2, &with_plain), 0.63, epsilon = 1e-15);
        assert!(LossWeights { lambda1: -1.0, ..LossWeights::default() }.validate().is_err());
    }
}
