use super::report::{AttackConfig, AttackKind, AttackReport, AttackRow};
use crate::datapipe::LabeledDataset;
use crate::error::Result;
use crate::evaluator::{accuracy, LabelSource};
use crate::nn::Model;
use crate::rng::namespaced_seed;
use crate::trainer::{train_plain, EvalSets, Method, TrainConfig, TrainOutcome};

fn acc_opt(model: &Model, ds: Option<&LabeledDataset>) -> Result<f64> {
    match ds {
        Some(d) => accuracy(model, d, LabelSource::True),
        None => Ok(f64::NAN),
    }
}

pub(super) fn plain_finetune(
    stolen: &Model,
    clean_train: &LabeledDataset,
    clean_test: &LabeledDataset,
    legal_test: Option<&LabeledDataset>,
    cfg: &AttackConfig,
) -> Result<(TrainOutcome, Vec<AttackRow>)> {
    let tc = TrainConfig {
        method: Method::Lc,
        lambda: 0.0,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        seed: namespaced_seed(cfg.seed, "attack"),
        ..TrainConfig::default()
    };
    let eval = EvalSets {
        legal: legal_test,
        illegal: None,
        clean: Some(clean_test),
    };
    let mut rows = vec![AttackRow {
        step: 0,
        acc_clean: acc_opt(stolen, Some(clean_test))?,
        acc_legal: acc_opt(stolen, legal_test)?,
        acc_attacker: f64::NAN,
    }];
    let out = train_plain(stolen.clone(), clean_train, &eval, &tc)?;
    for (e, h) in out.history.iter().enumerate() {
        rows.push(AttackRow {
            step: e + 1,
            acc_clean: h.acc_clean,
            acc_legal: h.acc_legal,
            acc_attacker: f64::NAN,
        });
    }
    Ok((out, rows))
}

/// Fine-tune the stolen model with plain cross-entropy on clean data; the
/// adversary's accuracy is read on a held-out clean test set after each epoch.
pub fn retrain_attack(
    stolen: &Model,
    clean_train: &LabeledDataset,
    clean_test: &LabeledDataset,
    legal_test: Option<&LabeledDataset>,
    baseline_t: f64,
    cfg: &AttackConfig,
) -> Result<(Model, AttackReport)> {
    let (model, rows) = plain_finetune(stolen, clean_train, clean_test, legal_test, cfg)?;
    let report = AttackReport::from_rows(AttackKind::Retrain, rows, baseline_t)?;
    Ok((model.model, report))
}
