use crate::error::{IsnnError, Result};

/// Row-wise softmax, stabilized by max subtraction.
pub fn softmax(logits: &[f64], num_classes: usize) -> Vec<f64> {
    assert_eq!(logits.len() % num_classes, 0);
    let mut out = vec![0.0; logits.len()];
    for (row, orow) in logits
        .chunks_exact(num_classes)
        .zip(out.chunks_exact_mut(num_classes))
    {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, &l) in orow.iter_mut().zip(row.iter()) {
            *o = (l - m).exp();
            z += *o;
        }
        for o in orow.iter_mut() {
            *o /= z;
        }
    }
    out
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(IsnnError::Empty("cross-entropy batch"));
    }
    if logits.len() != labels.len() * num_classes {
        return Err(IsnnError::ShapeMismatch {
            expected: vec![labels.len(), num_classes],
            actual: vec![logits.len()],
        });
    }
    let mut total = 0.0;
    for (row, &label) in logits.chunks_exact(num_classes).zip(labels.iter()) {
        if label >= num_classes {
            return Err(IsnnError::LabelOutOfRange {
                label,
                num_classes,
            });
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of mean softmax cross-entropy w.r.t. the logits:
/// `(softmax - onehot) / N`, scaled by `weight`.
pub fn softmax_xent_grad(
    logits: &[f64],
    labels: &[usize],
    num_classes: usize,
    weight: f64,
) -> Vec<f64> {
    let n = labels.len();
    let mut g = softmax(logits, num_classes);
    for (i, &label) in labels.iter().enumerate() {
        g[i * num_classes + label] -= 1.0;
    }
    let s = weight / n as f64;
    for v in &mut g {
        *v *= s;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = vec![0.5; 10];
        let loss = softmax_cross_entropy(&logits, &[3], 10).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_drive_loss_to_zero() {
        let mut logits = vec![0.0; 10];
        logits[7] = 1e4;
        let loss = softmax_cross_entropy(&logits, &[7], 10).unwrap();
        assert!(loss < 1e-10);
    }

    #[test]
    fn fixed_example_123() {
        // logits [1,2,3], label 2: loss = lse(1,2,3) - 3.
        let loss = softmax_cross_entropy(&[1.0, 2.0, 3.0], &[2], 3).unwrap();
        assert!((loss - 0.40760596444438).abs() < 1e-8);
    }

    #[test]
    fn label_out_of_range_rejected() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 0.0], &[2], 2),
            Err(IsnnError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64) - 8.0).collect();
        let s = softmax(&logits, 8);
        for row in s.chunks_exact(8) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_permutation_leaves_mean_loss_unchanged() {
        let logits = vec![
            1.0, -2.0, 0.3, //
            0.2, 0.9, -1.5, //
            -0.7, 0.1, 2.2,
        ];
        let labels = [0usize, 1, 2];
        let a = softmax_cross_entropy(&logits, &labels, 3).unwrap();
        let permuted = vec![
            -0.7, 0.1, 2.2, //
            1.0, -2.0, 0.3, //
            0.2, 0.9, -1.5,
        ];
        let b = softmax_cross_entropy(&permuted, &[2, 0, 1], 3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
