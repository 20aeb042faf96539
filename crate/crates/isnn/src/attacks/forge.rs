use super::report::{AttackConfig, AttackKind, AttackReport, AttackRow};
use super::retrain::plain_finetune;
use crate::datapipe::{build_forged, build_illegal, LabelMode, LabeledDataset};
use crate::error::Result;
use crate::evaluator::{accuracy, LabelSource};
use crate::keying::NoiseType;
use crate::nn::Model;
use crate::rng::{namespaced_seed, per_index_seed};
use crate::trainer::{train, EvalSets, LambdaMode, Method, TrainConfig};

/// Retrain the stolen model with the label-consistent objective over a forged
/// keyed set built from a uniform noise field the attacker invented.
///
/// The curve tracks the forged set, the owner's true keyed set, and the clean
/// test set. With `epsilon = 0` the forged set equals the clean data, so the
/// attack degenerates to plain retraining and is run as such.
pub fn forge_attack(
    stolen: &Model,
    clean_train: &LabeledDataset,
    clean_test: &LabeledDataset,
    legal_test: Option<&LabeledDataset>,
    epsilon: i64,
    baseline_t: f64,
    cfg: &AttackConfig,
) -> Result<(Model, AttackReport)> {
    if epsilon == 0 {
        let (model, mut rows) = plain_finetune(stolen, clean_train, clean_test, legal_test, cfg)?;
        for r in &mut rows {
            r.acc_attacker = r.acc_clean; // the forged set IS the clean set
        }
        let report = AttackReport::from_rows(AttackKind::Forge, rows, baseline_t)?;
        return Ok((model.model, report));
    }

    let attack_seed = namespaced_seed(cfg.seed, "attack");
    let forge_seed = per_index_seed(attack_seed, 1);
    let forged_train = build_forged(clean_train, epsilon, forge_seed)?;
    // Same seed and shape => same noise field stamped onto the test split.
    let forged_test = build_forged(clean_test, epsilon, forge_seed)?;
    let illegal_train = build_illegal(
        clean_train,
        epsilon,
        NoiseType::Uniform,
        LabelMode::Lc,
        per_index_seed(attack_seed, 2),
    )?;

    let tc = TrainConfig {
        method: Method::Lc,
        lambda: 1.0,
        lambda_mode: LambdaMode::Fixed,
        epsilon,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        seed: attack_seed,
        ..TrainConfig::default()
    };
    let eval = EvalSets {
        legal: legal_test,
        illegal: Some(&forged_test),
        clean: Some(clean_test),
    };
    let acc_opt = |m: &Model, ds: Option<&LabeledDataset>| -> Result<f64> {
        match ds {
            Some(d) => accuracy(m, d, LabelSource::True),
            None => Ok(f64::NAN),
        }
    };
    let mut rows = vec![AttackRow {
        step: 0,
        acc_clean: acc_opt(stolen, Some(clean_test))?,
        acc_legal: acc_opt(stolen, legal_test)?,
        acc_attacker: acc_opt(stolen, Some(&forged_test))?,
    }];
    let out = train(stolen.clone(), &forged_train, &illegal_train, &eval, &tc)?;
    for (e, h) in out.history.iter().enumerate() {
        rows.push(AttackRow {
            step: e + 1,
            acc_clean: h.acc_clean,
            acc_legal: h.acc_legal,
            acc_attacker: h.acc_illegal, // the forged test set rode in that slot
        });
    }
    let report = AttackReport::from_rows(AttackKind::Forge, rows, baseline_t)?;
    Ok((out.model, report))
}
