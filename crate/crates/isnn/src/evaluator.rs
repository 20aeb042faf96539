//! Metrics and design-goal verdicts: accuracy, the usability baseline, the
//! five protection predicates, and ownership verification.

use serde::Serialize;

use crate::datapipe::{build_legal, DatasetKind, LabeledDataset};
use crate::error::{IsnnError, Result};
use crate::keying::{
    derive_perturbation, encrypt_copyright, sample_noise, CopyrightPayload, KeyMaterial,
    NoiseType, EPSILON_MAX,
};
use crate::nn::Model;
use crate::pgm::GrayImage;
use crate::rng::{chacha, namespaced_seed, per_index_seed};

/// Which labels to score against. `Shuffled` measures agreement with the
/// deranged label map carried by label-inconsistent illegal sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    True,
    Shuffled,
}

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy(model: &Model, dataset: &LabeledDataset, source: LabelSource) -> Result<f64> {
    if dataset.is_empty() {
        return Err(IsnnError::Empty("dataset"));
    }
    if dataset.sample_len() != model.input_len() {
        return Err(IsnnError::ShapeMismatch {
            expected: vec![model.input_len()],
            actual: vec![dataset.sample_len()],
        });
    }
    let labels: &[u8] = match source {
        LabelSource::True => &dataset.labels,
        LabelSource::Shuffled => dataset.shuffled_labels.as_deref().ok_or(
            IsnnError::InvalidArgument("dataset carries no shuffled labels".into()),
        )?,
    };
    let c = model.num_classes();
    let logits = model.forward_slice(&dataset.all_normalized(), dataset.len());
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * c..(i + 1) * c];
        // argmax with first-index tie-breaking
        let mut pred = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[pred] {
                pred = j;
            }
        }
        if pred == label as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// Usability baseline: ten points under the unprotected optimum, floored at 0.
pub fn compute_baseline(p_opt: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_opt) || p_opt.is_nan() {
        return Err(IsnnError::InvalidArgument(format!(
            "p_opt must be in [0,1], got {p_opt}"
        )));
    }
    Ok((p_opt - 0.10).max(0.0))
}

/// Internal verdict rule shared by [`verify_ownership`]; split out so the
/// tau-monotonicity property can be checked directly.
pub fn ownership_verdict(acc_legal: f64, best_competitor: f64, tau: f64, baseline_t: f64) -> bool {
    acc_legal - best_competitor >= tau && acc_legal >= baseline_t
}

#[derive(Debug, Clone, Serialize)]
pub struct OwnershipEvidence {
    pub owned: bool,
    pub acc_legal: f64,
    pub acc_clean: f64,
    pub acc_random: Vec<f64>,
    pub gap: f64,
    pub tau: f64,
    pub baseline_t: f64,
}

/// Re-derive the key perturbation and test whether only it unlocks the model.
///
/// OWNED iff the keyed accuracy beats both the clean holdout and five random
/// same-budget noise fields by at least `tau`, and also clears the baseline.
pub fn verify_ownership(
    model: &Model,
    key: &KeyMaterial,
    copyright_image: &GrayImage,
    clean_holdout: &LabeledDataset,
    epsilon: i64,
    tau: f64,
    baseline_t: f64,
    seed: u64,
) -> Result<OwnershipEvidence> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(IsnnError::InvalidArgument(format!(
            "tau must be in [0,1], got {tau}"
        )));
    }
    let payload = encrypt_copyright(key, copyright_image, clean_holdout.shape)?;
    let delta = derive_perturbation(&payload, epsilon)?;
    let legal = build_legal(clean_holdout, &delta)?;
    let acc_legal = accuracy(model, &legal, LabelSource::True)?;
    let acc_clean = accuracy(model, clean_holdout, LabelSource::True)?;

    let trial_seed = namespaced_seed(seed, "verify");
    let mut acc_random = Vec::with_capacity(5);
    for t in 0..5u64 {
        let mut rng = chacha(per_index_seed(trial_seed, t));
        let noise = sample_noise(&mut rng, epsilon, NoiseType::Uniform, clean_holdout.shape)?;
        let mut images = vec![0u8; clean_holdout.images.len()];
        let s = clean_holdout.sample_len();
        for i in 0..clean_holdout.len() {
            noise.stamp(clean_holdout.image(i), &mut images[i * s..(i + 1) * s]);
        }
        let trial = LabeledDataset::new(
            images,
            clean_holdout.labels.clone(),
            clean_holdout.shape,
            DatasetKind::Illegal,
        )?;
        acc_random.push(accuracy(model, &trial, LabelSource::True)?);
    }
    let best_competitor = acc_random
        .iter()
        .copied()
        .fold(acc_clean, f64::max);
    let gap = acc_legal - best_competitor;
    Ok(OwnershipEvidence {
        owned: ownership_verdict(acc_legal, best_competitor, tau, baseline_t),
        acc_legal,
        acc_clean,
        acc_random,
        gap,
        tau,
        baseline_t,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GoalVerdict {
    pub pass: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoalVerdicts {
    pub fidelity: GoalVerdict,
    pub effectiveness: GoalVerdict,
    pub security: GoalVerdict,
    pub crypticity: GoalVerdict,
    pub verifiability: GoalVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub p_opt: f64,
    pub baseline_t: f64,
    pub p_buyer: f64,
    pub p_adv_clean: f64,
    pub p_adv_illegal: f64,
    pub goal_verdicts: GoalVerdicts,
    pub ownership: OwnershipEvidence,
}

/// Evaluation inputs; `holdout` feeds ownership verification and must be
/// disjoint from the training data.
pub struct GoalInputs<'a> {
    pub legal: &'a LabeledDataset,
    pub illegal: &'a LabeledDataset,
    pub clean: &'a LabeledDataset,
    pub holdout: &'a LabeledDataset,
}

/// Score all five design goals for one consistent protected run.
///
/// `attack_sups` are (attack name, supremum adversary accuracy) pairs from
/// the attack harness; the set may be empty, in which case security passes
/// vacuously.
#[allow(clippy::too_many_arguments)]
pub fn design_goal_report(
    model: &Model,
    key: &KeyMaterial,
    payload: &CopyrightPayload,
    copyright_image: &GrayImage,
    sets: &GoalInputs,
    p_opt: f64,
    epsilon: i64,
    attack_sups: &[(String, f64)],
    tau: f64,
    seed: u64,
) -> Result<EvalReport> {
    if i64::from(sets.legal.epsilon_used) != epsilon
        || i64::from(sets.illegal.epsilon_used) != epsilon
    {
        return Err(IsnnError::RunMismatch(format!(
            "legal/illegal sets built at eps {}/{}, expected {}",
            sets.legal.epsilon_used, sets.illegal.epsilon_used, epsilon
        )));
    }
    let fresh = encrypt_copyright(key, copyright_image, payload.shape)?;
    if fresh.sha256_hex() != payload.sha256_hex() {
        return Err(IsnnError::RunMismatch(
            "payload does not match this key and copyright image".into(),
        ));
    }
    let baseline_t = compute_baseline(p_opt)?;
    let p_buyer = accuracy(model, sets.legal, LabelSource::True)?;
    let p_adv_clean = accuracy(model, sets.clean, LabelSource::True)?;
    let p_adv_illegal = accuracy(model, sets.illegal, LabelSource::True)?;

    let fidelity = GoalVerdict {
        pass: p_buyer >= baseline_t,
        evidence: format!("p_buyer {p_buyer:.4} vs baseline {baseline_t:.4}"),
    };
    let worst_adv = p_adv_clean.max(p_adv_illegal);
    let effectiveness = GoalVerdict {
        pass: worst_adv < baseline_t,
        evidence: format!(
            "clean {p_adv_clean:.4}, illegal {p_adv_illegal:.4} vs baseline {baseline_t:.4}"
        ),
    };
    let security_pass = attack_sups.iter().all(|(_, sup)| *sup <= baseline_t);
    let security = GoalVerdict {
        pass: security_pass,
        evidence: if attack_sups.is_empty() {
            "no attack reports supplied".into()
        } else {
            attack_sups
                .iter()
                .map(|(name, sup)| format!("{name} sup {sup:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        },
    };
    let delta = derive_perturbation(payload, epsilon)?;
    let crypticity = GoalVerdict {
        pass: epsilon <= i64::from(EPSILON_MAX) && i64::from(delta.linf_norm()) <= epsilon,
        evidence: format!("eps {epsilon}, max|delta| {}", delta.linf_norm()),
    };
    let ownership = verify_ownership(
        model,
        key,
        copyright_image,
        sets.holdout,
        epsilon,
        tau,
        baseline_t,
        seed,
    )?;
    let verifiability = GoalVerdict {
        pass: ownership.owned,
        evidence: format!(
            "acc_legal {:.4}, gap {:.4}, tau {:.2}",
            ownership.acc_legal, ownership.gap, ownership.tau
        ),
    };

    Ok(EvalReport {
        p_opt,
        baseline_t,
        p_buyer,
        p_adv_clean,
        p_adv_illegal,
        goal_verdicts: GoalVerdicts {
            fidelity,
            effectiveness,
            security,
            crypticity,
            verifiability,
        },
        ownership,
    })
}

/// Render a report as a small fixed-width table.
pub fn report_table(report: &EvalReport) -> String {
    let v = &report.goal_verdicts;
    let row = |name: &str, g: &GoalVerdict| {
        format!(
            "{:<15} {:<5} {}\n",
            name,
            if g.pass { "pass" } else { "FAIL" },
            g.evidence
        )
    };
    let mut out = format!(
        "p_opt {:.4}  baseline {:.4}  p_buyer {:.4}  p_adv(clean) {:.4}  p_adv(illegal) {:.4}\n",
        report.p_opt, report.baseline_t, report.p_buyer, report.p_adv_clean, report.p_adv_illegal
    );
    out.push_str(&row("fidelity", &v.fidelity));
    out.push_str(&row("effectiveness", &v.effectiveness));
    out.push_str(&row("security", &v.security));
    out.push_str(&row("crypticity", &v.crypticity));
    out.push_str(&row("verifiability", &v.verifiability));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{build_illegal, synth, LabelMode};
    use crate::keying::generate_key;
    use crate::nn::{cnn_s, LayerSpec, Model};

    fn tiny_model() -> Model {
        // Dense 4 -> 3 on flat inputs; all-zero params => always predicts 0.
        Model::new(
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 3,
                },
            ],
            [1, 2, 2],
            3,
        )
        .unwrap()
    }

    fn tiny_dataset(labels: Vec<u8>) -> LabeledDataset {
        let n = labels.len();
        let mut images = Vec::with_capacity(n * 4);
        for i in 0..n {
            images.extend_from_slice(&[i as u8, 10, 20, 30]);
        }
        LabeledDataset::new(images, labels, [1, 2, 2], DatasetKind::Clean).unwrap()
    }

    #[test]
    fn constant_classifier_scores_class_zero_share() {
        let model = tiny_model();
        let ds = tiny_dataset(vec![0, 0, 1, 2, 0, 1, 2, 1, 2, 0]);
        let acc = accuracy(&model, &ds, LabelSource::True).unwrap();
        assert_eq!(acc, 0.40);
    }

    #[test]
    fn accuracy_invariant_under_duplication() {
        let mut model = tiny_model();
        model.init_kaiming(3);
        let ds = tiny_dataset(vec![0, 1, 2, 1, 0]);
        let mut images2 = ds.images.clone();
        images2.extend_from_slice(&ds.images);
        let mut labels2 = ds.labels.clone();
        labels2.extend_from_slice(&ds.labels);
        let doubled =
            LabeledDataset::new(images2, labels2, ds.shape, DatasetKind::Clean).unwrap();
        let a = accuracy(&model, &ds, LabelSource::True).unwrap();
        let b = accuracy(&model, &doubled, LabelSource::True).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn accuracy_matches_per_sample_loop() {
        let mut model = cnn_s([1, 28, 28], 10).unwrap();
        model.init_kaiming(11);
        let ds = synth::generate(100, 5).unwrap();
        let fast = accuracy(&model, &ds, LabelSource::True).unwrap();
        let mut hits = 0;
        for i in 0..ds.len() {
            let x: Vec<f64> = ds.image(i).iter().map(|&p| f64::from(p) / 255.0).collect();
            let (logits, _) = model.forward_chunk(&x, 1, false);
            let pred = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == ds.labels[i] as usize {
                hits += 1;
            }
        }
        assert_eq!(fast, hits as f64 / ds.len() as f64);
    }

    #[test]
    fn shuffled_source_requires_shuffled_labels() {
        let model = tiny_model();
        let ds = tiny_dataset(vec![0, 1, 2]);
        assert!(accuracy(&model, &ds, LabelSource::Shuffled).is_err());
    }

    #[test]
    fn shuffled_source_scores_against_derangement() {
        let model = tiny_model(); // always predicts class 0
        let clean = tiny_dataset(vec![0, 0, 1, 2]);
        let illegal = build_illegal(&clean, 4, NoiseType::Uniform, LabelMode::Li, 9).unwrap();
        let sl = illegal.shuffled_labels.as_ref().unwrap();
        let expected = sl.iter().filter(|&&y| y == 0).count() as f64 / sl.len() as f64;
        let acc = accuracy(&model, &illegal, LabelSource::Shuffled).unwrap();
        assert_eq!(acc, expected);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let model = tiny_model();
        let ds = LabeledDataset::new(Vec::new(), Vec::new(), [1, 2, 2], DatasetKind::Clean);
        // The constructor itself may reject empties; accept either failure point.
        match ds {
            Ok(d) => assert!(accuracy(&model, &d, LabelSource::True).is_err()),
            Err(_) => {}
        }
    }

    #[test]
    fn baseline_values() {
        assert_eq!(compute_baseline(0.9268).unwrap(), 0.9268 - 0.10);
        assert!((compute_baseline(0.9268).unwrap() - 0.8268).abs() < 1e-12);
        assert_eq!(compute_baseline(1.0).unwrap(), 0.90);
        assert_eq!(compute_baseline(0.05).unwrap(), 0.0);
        assert!(compute_baseline(1.5).is_err());
        assert!(compute_baseline(-0.1).is_err());
    }

    #[test]
    fn verdict_monotone_in_tau() {
        for &(legal, comp, t) in &[(0.9, 0.1, 0.5), (0.8, 0.45, 0.7), (0.95, 0.6, 0.9)] {
            let mut prev = true;
            for tau in [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0] {
                let owned = ownership_verdict(legal, comp, tau, t);
                // once it flips to false it must stay false as tau grows
                assert!(prev || !owned, "verdict not monotone at tau={tau}");
                prev = owned;
            }
        }
    }

    #[test]
    fn untrained_model_is_not_owned() {
        let mut model = cnn_s([1, 28, 28], 10).unwrap();
        model.init_kaiming(2);
        let holdout = synth::generate(60, 77).unwrap();
        let key = generate_key(&[7u8; 48]).unwrap();
        let img = synth::copyright_image(16);
        let ev =
            verify_ownership(&model, &key, &img, &holdout, 8, 0.30, 0.5, 123).unwrap();
        assert!(!ev.owned);
        assert!(ev.gap < 0.30);
    }

    #[test]
    fn verification_leaves_parameters_untouched() {
        let mut model = cnn_s([1, 28, 28], 10).unwrap();
        model.init_kaiming(4);
        let before = model.params().to_vec();
        let holdout = synth::generate(40, 3).unwrap();
        let key = generate_key(&[1u8; 48]).unwrap();
        let img = synth::copyright_image(16);
        verify_ownership(&model, &key, &img, &holdout, 8, 0.30, 0.5, 1).unwrap();
        accuracy(&model, &holdout, LabelSource::True).unwrap();
        assert_eq!(model.params(), &before[..]);
    }

    #[test]
    fn report_rejects_mixed_epsilon() {
        let mut model = cnn_s([1, 28, 28], 10).unwrap();
        model.init_kaiming(6);
        let clean = synth::generate(20, 1).unwrap();
        let holdout = synth::generate(20, 2).unwrap();
        let key = generate_key(&[9u8; 48]).unwrap();
        let img = synth::copyright_image(16);
        let payload = encrypt_copyright(&key, &img, clean.shape).unwrap();
        let delta = derive_perturbation(&payload, 8).unwrap();
        let legal = build_legal(&clean, &delta).unwrap();
        let illegal =
            build_illegal(&clean, 4, NoiseType::Uniform, LabelMode::Lc, 5).unwrap();
        let sets = GoalInputs {
            legal: &legal,
            illegal: &illegal,
            clean: &clean,
            holdout: &holdout,
        };
        let err = design_goal_report(
            &model, &key, &payload, &img, &sets, 0.9, 8, &[], 0.30, 1,
        )
        .unwrap_err();
        assert!(matches!(err, IsnnError::RunMismatch(_)));
    }

    #[test]
    fn report_booleans_match_stored_accuracies() {
        let mut model = cnn_s([1, 28, 28], 10).unwrap();
        model.init_kaiming(8);
        let clean = synth::generate(30, 10).unwrap();
        let holdout = synth::generate(30, 11).unwrap();
        let key = generate_key(&[3u8; 48]).unwrap();
        let img = synth::copyright_image(16);
        let payload = encrypt_copyright(&key, &img, clean.shape).unwrap();
        let delta = derive_perturbation(&payload, 8).unwrap();
        let legal = build_legal(&clean, &delta).unwrap();
        let illegal =
            build_illegal(&clean, 8, NoiseType::Uniform, LabelMode::Lc, 5).unwrap();
        let sets = GoalInputs {
            legal: &legal,
            illegal: &illegal,
            clean: &clean,
            holdout: &holdout,
        };
        let sups = vec![("retrain".to_string(), 0.2), ("uap".to_string(), 0.1)];
        let r = design_goal_report(
            &model, &key, &payload, &img, &sets, 0.9, 8, &sups, 0.30, 1,
        )
        .unwrap();
        assert_eq!(r.baseline_t, 0.9 - 0.10);
        assert_eq!(r.goal_verdicts.fidelity.pass, r.p_buyer >= r.baseline_t);
        assert_eq!(
            r.goal_verdicts.effectiveness.pass,
            r.p_adv_clean.max(r.p_adv_illegal) < r.baseline_t
        );
        assert_eq!(
            r.goal_verdicts.security.pass,
            sups.iter().all(|(_, s)| *s <= r.baseline_t)
        );
        assert_eq!(r.goal_verdicts.verifiability.pass, r.ownership.owned);
        for a in [r.p_buyer, r.p_adv_clean, r.p_adv_illegal] {
            assert!((0.0..=1.0).contains(&a));
        }
    }
}
