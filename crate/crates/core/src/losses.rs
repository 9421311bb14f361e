//! Segmentation, depth and total training losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no unmasked entries to average over")]
    EmptyMask,
    #[error("depth at index {index} is not positive ({value})")]
    NonPositiveDepth { index: usize, value: f64 },
    #[error("input lengths differ: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("fixed loss weights must be non-negative")]
    NegativeWeight,
}

/// A scalar loss and its gradient with respect to the first input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn unmasked(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

fn check_lengths(a: usize, b: usize, mask: Option<&[bool]>) -> Result<(), LossError> {
    if a != b {
        return Err(LossError::ShapeMismatch(a, b));
    }
    if let Some(m) = mask {
        if m.len() != a {
            return Err(LossError::ShapeMismatch(a, m.len()));
        }
    }
    Ok(())
}

/// Mean binary cross-entropy on logits over unmasked entries.
///
/// Uses `max(x, 0) − x·y + ln(1 + e^{−|x|})`, which stays finite for any
/// finite logit. Targets are `0` or `1`.
pub fn bce_loss(logits: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<LossValue, LossError> {
    check_lengths(logits.len(), target.len(), mask)?;
    let count = (0..logits.len()).filter(|&i| unmasked(mask, i)).count();
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (&x, &y)) in logits.iter().zip(target).enumerate() {
        if !unmasked(mask, i) {
            continue;
        }
        value += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad[i] = (crate::camera::sigmoid(x) - y) * inv;
    }
    Ok(LossValue {
        value: value * inv,
        grad,
    })
}

/// Mean absolute log-depth error; the gradient is with respect to `pred`.
///
/// The subgradient at equality is zero. Swapping `pred` and `truth` leaves
/// the value unchanged.
pub fn depth_loss(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<LossValue, LossError> {
    check_lengths(pred.len(), truth.len(), mask)?;
    let mut count = 0usize;
    for i in 0..pred.len() {
        if !unmasked(mask, i) {
            continue;
        }
        for v in [pred[i], truth[i]] {
            if !(v > 0.0) {
                return Err(LossError::NonPositiveDepth { index: i, value: v });
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if !unmasked(mask, i) {
            continue;
        }
        let diff = pred[i].ln() - truth[i].ln();
        value += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad[i] = sign / pred[i] * inv;
    }
    Ok(LossValue {
        value: value * inv,
        grad,
    })
}

/// The loss terms that enter the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    /// Segmentation BCE after the BeV backbone.
    Sem,
    /// Segmentation BCE on the rasterizer output (early supervision).
    SemEarly,
    Depth,
}

impl LossTerm {
    pub const ALL: [LossTerm; 3] = [LossTerm::Sem, LossTerm::SemEarly, LossTerm::Depth];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Values of the individual loss terms; absent terms are skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub sem: Option<f64>,
    pub sem_early: Option<f64>,
    pub depth: Option<f64>,
}

impl LossParts {
    pub fn get(&self, term: LossTerm) -> Option<f64> {
        match term {
            LossTerm::Sem => self.sem,
            LossTerm::SemEarly => self.sem_early,
            LossTerm::Depth => self.depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightMode {
    /// `λ_bce·(L_sem + L_sem_early) + λ_depth·L_depth`.
    Fixed,
    /// `Σ exp(−s_i)·L_i + s_i`, one log-variance per term.
    Uncertainty { log_vars: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub depth: f64,
    pub mode: WeightMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            bce: 1.0,
            depth: 0.05,
            mode: WeightMode::Fixed,
        }
    }
}

impl LossWeights {
    pub fn check(&self) -> Result<(), LossError> {
        if matches!(self.mode, WeightMode::Fixed) && !(self.bce >= 0.0 && self.depth >= 0.0) {
            return Err(LossError::NegativeWeight);
        }
        Ok(())
    }
}

/// Total loss with derivatives with respect to each part and, in
/// uncertainty mode, each log-variance. Entries for absent terms are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub d_parts: [f64; 3],
    pub d_log_vars: [f64; 3],
}

impl TotalLoss {
    pub fn d_part(&self, term: LossTerm) -> f64 {
        self.d_parts[term.slot()]
    }

    pub fn d_log_var(&self, term: LossTerm) -> f64 {
        self.d_log_vars[term.slot()]
    }
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> TotalLoss {
    let mut out = TotalLoss {
        value: 0.0,
        d_parts: [0.0; 3],
        d_log_vars: [0.0; 3],
    };
    for term in LossTerm::ALL {
        let Some(l) = parts.get(term) else { continue };
        let k = term.slot();
        match weights.mode {
            WeightMode::Fixed => {
                let w = match term {
                    LossTerm::Sem | LossTerm::SemEarly => weights.bce,
                    LossTerm::Depth => weights.depth,
                };
                out.value += w * l;
                out.d_parts[k] = w;
            }
            WeightMode::Uncertainty { log_vars } => {
                let s = log_vars[k];
                let precision = (-s).exp();
                out.value += precision * l + s;
                out.d_parts[k] = precision;
                out.d_log_vars[k] = 1.0 - precision * l;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn bce_examples() {
        let l = bce_loss(&[0.0], &[1.0], None).unwrap();
        assert_relative_eq!(l.value, LN_2, epsilon = 1e-15);
        assert_eq!(l.grad, vec![-0.5]);
        assert!(bce_loss(&[50.0], &[1.0], None).unwrap().value < 1e-9);
        for x in [-500.0, 500.0] {
            for y in [0.0, 1.0] {
                assert!(bce_loss(&[x], &[y], None).unwrap().value.is_finite());
            }
        }
    }

    #[test]
    fn bce_mask() {
        let l = bce_loss(&[0.0, 100.0], &[1.0, 0.0], Some(&[true, false])).unwrap();
        assert_relative_eq!(l.value, LN_2, epsilon = 1e-15);
        assert_eq!(l.grad[1], 0.0);
        assert_eq!(bce_loss(&[0.0], &[1.0], Some(&[false])), Err(LossError::EmptyMask));
        assert!(matches!(bce_loss(&[0.0], &[1.0, 0.0], None), Err(LossError::ShapeMismatch(..))));
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth_loss(&[2.0], &[2.0], None).unwrap().value, 0.0);
        assert_relative_eq!(depth_loss(&[E * 3.0], &[3.0], None).unwrap().value, 1.0, epsilon = 1e-15);
        assert_relative_eq!(depth_loss(&[3.0 / (E * E)], &[3.0], None).unwrap().value, 2.0, epsilon = 1e-15);
        assert_eq!(depth_loss(&[2.0], &[2.0], None).unwrap().grad, vec![0.0]);
        assert_eq!(
            depth_loss(&[1.0, -1.0], &[1.0, 1.0], None),
            Err(LossError::NonPositiveDepth { index: 1, value: -1.0 })
        );
        assert!(depth_loss(&[1.0, -1.0], &[1.0, 1.0], Some(&[true, false])).is_ok());
    }

    #[test]
    fn total_examples() {
        let parts = LossParts {
            sem: Some(0.5),
            sem_early: Some(0.3),
            depth: Some(0.2),
        };
        let fixed = LossWeights {
            bce: 1.0,
            depth: 1.0,
            mode: WeightMode::Fixed,
        };
        assert_relative_eq!(total_loss(&parts, &fixed).value, 1.0, epsilon = 1e-15);
        let unc = LossWeights {
            mode: WeightMode::Uncertainty { log_vars: [0.0; 3] },
            ..fixed
        };
        let t = total_loss(&parts, &unc);
        assert_relative_eq!(t.value, 1.0, epsilon = 1e-15);
        let s = [0.3, -0.2, 1.1];
        let t = total_loss(&parts, &LossWeights { mode: WeightMode::Uncertainty { log_vars: s }, ..fixed });
        for (k, term) in LossTerm::ALL.into_iter().enumerate() {
            let l = parts.get(term).unwrap();
            assert_relative_eq!(t.d_log_var(term), -(-s[k]).exp() * l + 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn absent_terms_are_skipped() {
        let parts = LossParts {
            sem_early: Some(0.4),
            ..Default::default()
        };
        let t = total_loss(&parts, &LossWeights::default());
        assert_eq!(t.value, 0.4);
        assert_eq!(t.d_parts, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn negative_fixed_weight_rejected() {
        let w = LossWeights {
            bce: -1.0,
            ..Default::default()
        };
        assert_eq!(w.check(), Err(LossError::NegativeWeight));
    }
}
