use rand::seq::SliceRandom;
use serde::Serialize;

use super::report::{AttackKind, AttackReport, AttackRow};
use crate::datapipe::{DatasetKind, LabeledDataset};
use crate::error::{IsnnError, Result};
use crate::evaluator::{accuracy, LabelSource};
use crate::keying::{Origin, Perturbation};
use crate::nn::{softmax_xent_grad, Model};
use crate::rng::{chacha, namespaced_seed, per_index_seed};

#[derive(Debug, Clone, Copy)]
pub struct UapConfig {
    pub epsilon: i64,
    pub iterations: usize,
    /// Sign-step size; defaults to epsilon / 10 when None.
    pub alpha: Option<f64>,
    pub batch_size: usize,
    /// Fraction of the training set the adversary holds.
    pub data_fraction: f64,
    pub seed: u64,
}

impl Default for UapConfig {
    fn default() -> Self {
        UapConfig {
            epsilon: 8,
            iterations: 10,
            alpha: None,
            batch_size: 64,
            data_fraction: 0.1,
            seed: 0,
        }
    }
}

/// The universal field under search, kept in pixel units.
#[derive(Debug, Clone, Serialize)]
pub struct UapState {
    pub v: Vec<f64>,
    pub epsilon: i64,
    pub alpha: f64,
    pub iterations: usize,
    pub data_fraction: f64,
}

impl UapState {
    pub fn linf_norm(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Integer field actually stamped onto byte images.
    pub fn rounded(&self, shape: [usize; 3]) -> Perturbation {
        Perturbation {
            values: self.v.iter().map(|&x| x.round() as i16).collect(),
            shape,
            epsilon: self.epsilon as u8,
            scale: self.epsilon as f64 / 127.5,
            origin: Origin::IllegalRandom,
        }
    }
}

fn stamped(ds: &LabeledDataset, pert: &Perturbation) -> Result<LabeledDataset> {
    let s = ds.sample_len();
    let mut images = vec![0u8; ds.images.len()];
    for i in 0..ds.len() {
        pert.stamp(ds.image(i), &mut images[i * s..(i + 1) * s]);
    }
    LabeledDataset::new(images, ds.labels.clone(), ds.shape, DatasetKind::Illegal)
}

/// Search for a universal perturbation that restores correct classification,
/// by universal sign-gradient descent on the cross-entropy of true labels.
///
/// Returns the final field and the per-iteration success-rate curve measured
/// on the held-out clean test set with the (rounded) field applied.
pub fn uap_attack(
    stolen: &Model,
    clean_train: &LabeledDataset,
    clean_test: &LabeledDataset,
    baseline_t: f64,
    cfg: &UapConfig,
    init: Option<&Perturbation>,
) -> Result<(UapState, AttackReport)> {
    if cfg.epsilon <= 0 || cfg.epsilon > 16 {
        return Err(IsnnError::InvalidArgument(format!(
            "uap needs a positive budget, got epsilon {}",
            cfg.epsilon
        )));
    }
    if !(0.0..=1.0).contains(&cfg.data_fraction) || cfg.data_fraction == 0.0 {
        return Err(IsnnError::InvalidArgument(format!(
            "data_fraction must be in (0,1], got {}",
            cfg.data_fraction
        )));
    }
    if cfg.batch_size == 0 || cfg.iterations == 0 {
        return Err(IsnnError::InvalidArgument(
            "batch_size and iterations must be positive".into(),
        ));
    }
    let eps = cfg.epsilon as f64;
    let alpha = cfg.alpha.unwrap_or(eps / 10.0);
    let in_len = stolen.input_len();
    let c = stolen.num_classes();
    let attack_seed = namespaced_seed(cfg.seed, "attack");

    // The adversary's slice of the training data: a seeded random subset.
    let k = ((clean_train.len() as f64 * cfg.data_fraction).ceil() as usize)
        .clamp(1, clean_train.len());
    let mut all: Vec<usize> = (0..clean_train.len()).collect();
    all.shuffle(&mut chacha(per_index_seed(attack_seed, 0)));
    let subset: Vec<usize> = all.into_iter().take(k).collect();

    let mut v = vec![0.0f64; in_len];
    if let Some(p) = init {
        if p.values.len() != in_len {
            return Err(IsnnError::ShapeMismatch {
                expected: vec![in_len],
                actual: vec![p.values.len()],
            });
        }
        for (dst, &src) in v.iter_mut().zip(&p.values) {
            *dst = f64::from(src).clamp(-eps, eps);
        }
    }

    let success = |field: &[f64]| -> Result<f64> {
        let pert = Perturbation {
            values: field.iter().map(|&x| x.round() as i16).collect(),
            shape: clean_test.shape,
            epsilon: cfg.epsilon as u8,
            scale: eps / 127.5,
            origin: Origin::IllegalRandom,
        };
        accuracy(stolen, &stamped(clean_test, &pert)?, LabelSource::True)
    };

    let mut rows = vec![AttackRow {
        step: 0,
        acc_clean: f64::NAN,
        acc_legal: f64::NAN,
        acc_attacker: success(&v)?,
    }];

    let mut order = subset;
    for iter in 0..cfg.iterations {
        order.shuffle(&mut chacha(per_index_seed(attack_seed, 1 + iter as u64)));
        for batch in order.chunks(cfg.batch_size) {
            // Forward on clamped byte images so the model sees valid pixels;
            // the gradient path treats the clamp as identity.
            let mut x = vec![0.0f64; batch.len() * in_len];
            let mut labels = Vec::with_capacity(batch.len());
            for (bi, &i) in batch.iter().enumerate() {
                let img = clean_train.image(i);
                for (j, &p) in img.iter().enumerate() {
                    x[bi * in_len + j] = (f64::from(p) + v[j]).clamp(0.0, 255.0) / 255.0;
                }
                labels.push(clean_train.labels[i] as usize);
            }
            let (logits, cache) = stolen.forward_chunk(&x, batch.len(), true);
            let dlogits = softmax_xent_grad(&logits, &labels, c, 1.0);
            let (_, input_grad) = stolen.backward(&cache, &dlogits, true)?;
            let input_grad = input_grad.expect("requested input gradient");
            // Universal field: sum per-sample gradients, then take the sign.
            for j in 0..in_len {
                let mut g = 0.0;
                for bi in 0..batch.len() {
                    g += input_grad[bi * in_len + j];
                }
                if g != 0.0 {
                    v[j] = (v[j] - alpha * g.signum()).clamp(-eps, eps);
                }
            }
            debug_assert!(v.iter().all(|x| x.abs() <= eps));
        }
        rows.push(AttackRow {
            step: iter + 1,
            acc_clean: f64::NAN,
            acc_legal: f64::NAN,
            acc_attacker: success(&v)?,
        });
    }

    let state = UapState {
        v,
        epsilon: cfg.epsilon,
        alpha,
        iterations: cfg.iterations,
        data_fraction: cfg.data_fraction,
    };
    let report = AttackReport::from_rows(AttackKind::Uap, rows, baseline_t)?;
    Ok((state, report))
}
