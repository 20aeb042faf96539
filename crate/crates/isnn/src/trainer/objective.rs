//! The two ISNN objectives.
//!
//! Label-consistent: L = L1 + lambda * L2 with L1 = CE(legal, labels) and
//! L2 = -mean_i min(CE_i(illegal, labels), cap). The cap bounds the otherwise
//! unbounded negated term per sample; a sample's gradient vanishes once its
//! CE clears the cap, while still-correct samples keep getting pushed.
//! Label-inconsistent: L = L1 + lambda * CE(illegal, deranged).

use crate::error::{IsnnError, Result};
use crate::nn::{softmax, softmax_cross_entropy, softmax_xent_grad};

/// Scalar loss plus its decomposition for logging.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub total: f64,
    pub l1: f64,
    /// L2 (lc, includes the minus sign) or L3 (li).
    pub l2_or_l3: f64,
    /// Per-illegal-sample cap mask (lc only); capped rows carry no gradient.
    pub capped: Vec<bool>,
}

/// Per-sample cross-entropies, -log softmax(logits)[label].
fn per_sample_ce(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let probs = softmax(logits, num_classes);
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= num_classes {
                return Err(IsnnError::LabelOutOfRange {
                    label: y,
                    num_classes,
                });
            }
            Ok(-probs[i * num_classes + y].ln())
        })
        .collect()
}

pub fn loss_label_consistent(
    logits_t: &[f64],
    labels_t: &[usize],
    logits_f: &[f64],
    labels_f: &[usize],
    num_classes: usize,
    lambda: f64,
    cap: f64,
) -> Result<LossParts> {
    let l1 = softmax_cross_entropy(logits_t, labels_t, num_classes)?;
    let ce_f = per_sample_ce(logits_f, labels_f, num_classes)?;
    let capped: Vec<bool> = ce_f.iter().map(|&c| c >= cap).collect();
    let l2 = -ce_f.iter().map(|&c| c.min(cap)).sum::<f64>() / ce_f.len() as f64;
    Ok(LossParts {
        total: l1 + lambda * l2,
        l1,
        l2_or_l3: l2,
        capped,
    })
}

pub fn loss_label_inconsistent(
    logits_t: &[f64],
    labels_t: &[usize],
    logits_f: &[f64],
    shuffled_labels_f: Option<&[usize]>,
    num_classes: usize,
    lambda: f64,
) -> Result<LossParts> {
    let shuffled = shuffled_labels_f.ok_or(IsnnError::InvalidArgument(
        "label-inconsistent loss requires shuffled labels L'".into(),
    ))?;
    let l1 = softmax_cross_entropy(logits_t, labels_t, num_classes)?;
    let l3 = softmax_cross_entropy(logits_f, shuffled, num_classes)?;
    Ok(LossParts {
        total: l1 + lambda * l3,
        l1,
        l2_or_l3: l3,
        capped: Vec::new(),
    })
}

/// Logit gradients for the lc objective: the legal half is plain CE descent;
/// illegal rows are negated CE (ascent), zeroed where the cap pins them.
pub fn grad_label_consistent(
    logits_t: &[f64],
    labels_t: &[usize],
    logits_f: &[f64],
    labels_f: &[usize],
    num_classes: usize,
    lambda: f64,
    capped: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    let dt = softmax_xent_grad(logits_t, labels_t, num_classes, 1.0);
    let mut df = softmax_xent_grad(logits_f, labels_f, num_classes, -lambda);
    for (i, &pinned) in capped.iter().enumerate() {
        if pinned {
            df[i * num_classes..(i + 1) * num_classes].fill(0.0);
        }
    }
    (dt, df)
}

/// Logit gradients for the li objective: both halves are CE descent, the
/// illegal half toward the deranged labels.
pub fn grad_label_inconsistent(
    logits_t: &[f64],
    labels_t: &[usize],
    logits_f: &[f64],
    shuffled_labels_f: &[usize],
    num_classes: usize,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let dt = softmax_xent_grad(logits_t, labels_t, num_classes, 1.0);
    let df = softmax_xent_grad(logits_f, shuffled_labels_f, num_classes, lambda);
    (dt, df)
}
