//! The adversary harness: retraining, copyright forging, and universal
//! perturbation search against a stolen model.

mod forge;
mod report;
mod retrain;
mod uap;

pub use forge::forge_attack;
pub use report::{AttackConfig, AttackKind, AttackReport, AttackRow};
pub use retrain::retrain_attack;
pub use uap::{uap_attack, UapConfig, UapState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{build_legal, DatasetKind, LabeledDataset};
    use crate::evaluator::{accuracy, LabelSource};
    use crate::keying::{derive_perturbation, encrypt_copyright, generate_key};
    use crate::nn::cnn_s;
    use crate::rng::chacha;

    fn toy_clean(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = chacha(seed);
        let mut images = Vec::with_capacity(n * 64);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let base: u8 = if label == 0 { 60 } else { 190 };
            for _ in 0..64 {
                let jitter: i16 = rand::Rng::random_range(&mut rng, -25..=25);
                images.push((i16::from(base) + jitter).clamp(0, 255) as u8);
            }
            labels.push(label);
        }
        LabeledDataset::new(images, labels, [1, 8, 8], DatasetKind::Clean).unwrap()
    }

    fn toy_model(seed: u64) -> crate::nn::Model {
        let mut m = cnn_s([1, 8, 8], 2).unwrap();
        m.init_kaiming(seed);
        m
    }

    #[test]
    fn zero_epoch_retrain_reports_the_stolen_models_accuracy() {
        let model = toy_model(1);
        let train = toy_clean(16, 1);
        let test = toy_clean(16, 2);
        let cfg = AttackConfig {
            epochs: 0,
            ..AttackConfig::default()
        };
        let (_, r) = retrain_attack(&model, &train, &test, None, 0.8, &cfg).unwrap();
        let direct = accuracy(&model, &test, LabelSource::True).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.final_adv_accuracy, direct);
        assert_eq!(r.secure, direct <= 0.8);
    }

    #[test]
    fn retrain_restores_accuracy_on_a_toy_model() {
        let model = toy_model(2);
        let train = toy_clean(64, 3);
        let test = toy_clean(32, 4);
        let cfg = AttackConfig {
            epochs: 6,
            batch_size: 16,
            learning_rate: 0.05,
            ..AttackConfig::default()
        };
        let (_, r) = retrain_attack(&model, &train, &test, None, 0.8, &cfg).unwrap();
        assert_eq!(r.rows.len(), 7);
        assert!(r.final_adv_accuracy > 0.8, "got {}", r.final_adv_accuracy);
        assert!(!r.secure);
        let recomputed = r
            .rows
            .iter()
            .map(|x| x.acc_clean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.final_adv_accuracy, recomputed);
    }

    #[test]
    fn forge_at_zero_epsilon_degenerates_to_retraining() {
        let model = toy_model(5);
        let train = toy_clean(32, 6);
        let test = toy_clean(16, 7);
        let cfg = AttackConfig {
            epochs: 2,
            batch_size: 16,
            ..AttackConfig::default()
        };
        let (_, f) = forge_attack(&model, &train, &test, None, 0, 0.8, &cfg).unwrap();
        let (_, r) = retrain_attack(&model, &train, &test, None, 0.8, &cfg).unwrap();
        assert_eq!(f.kind, AttackKind::Forge);
        assert_eq!(f.rows.len(), r.rows.len());
        for (a, b) in f.rows.iter().zip(&r.rows) {
            assert_eq!(a.acc_clean.to_bits(), b.acc_clean.to_bits());
            assert_eq!(a.acc_attacker.to_bits(), a.acc_clean.to_bits());
        }
    }

    #[test]
    fn forge_curve_tracks_all_three_sets() {
        let model = toy_model(8);
        let train = toy_clean(32, 9);
        let test = toy_clean(16, 10);
        let key = generate_key(&[2u8; 48]).unwrap();
        let img = crate::datapipe::synth::copyright_image(16);
        let payload = encrypt_copyright(&key, &img, test.shape).unwrap();
        let delta = derive_perturbation(&payload, 8).unwrap();
        let legal_test = build_legal(&test, &delta).unwrap();
        let cfg = AttackConfig {
            epochs: 2,
            batch_size: 16,
            ..AttackConfig::default()
        };
        let (_, r) = forge_attack(&model, &train, &test, Some(&legal_test), 8, 0.8, &cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        for row in &r.rows {
            assert!(row.acc_clean.is_finite());
            assert!(row.acc_legal.is_finite());
            assert!(row.acc_attacker.is_finite());
        }
    }

    #[test]
    fn uap_rejects_zero_budget() {
        let model = toy_model(11);
        let train = toy_clean(8, 12);
        let test = toy_clean(8, 13);
        let cfg = UapConfig {
            epsilon: 0,
            ..UapConfig::default()
        };
        assert!(uap_attack(&model, &train, &test, 0.8, &cfg, None).is_err());
    }

    #[test]
    fn uap_field_stays_inside_the_budget() {
        let model = toy_model(14);
        let train = toy_clean(32, 15);
        let test = toy_clean(16, 16);
        let cfg = UapConfig {
            epsilon: 8,
            iterations: 3,
            batch_size: 8,
            data_fraction: 0.5,
            ..UapConfig::default()
        };
        let (state, report) = uap_attack(&model, &train, &test, 0.8, &cfg, None).unwrap();
        assert!(state.linf_norm() <= 8.0);
        let rounded = state.rounded(test.shape);
        assert!(rounded.linf_norm() <= 8);
        assert_eq!(report.rows.len(), 4);
        assert_eq!(state.alpha, 0.8);
    }

    #[test]
    fn uap_seeded_with_the_true_key_matches_legal_accuracy_at_step_zero() {
        let model = toy_model(17);
        let train = toy_clean(32, 18);
        let test = toy_clean(16, 19);
        let key = generate_key(&[4u8; 48]).unwrap();
        let img = crate::datapipe::synth::copyright_image(16);
        let payload = encrypt_copyright(&key, &img, test.shape).unwrap();
        let delta = derive_perturbation(&payload, 8).unwrap();
        let legal_test = build_legal(&test, &delta).unwrap();
        let cfg = UapConfig {
            epsilon: 8,
            iterations: 1,
            batch_size: 8,
            data_fraction: 0.25,
            ..UapConfig::default()
        };
        let (_, report) = uap_attack(&model, &train, &test, 0.8, &cfg, Some(&delta)).unwrap();
        let legal_acc = accuracy(&model, &legal_test, LabelSource::True).unwrap();
        assert_eq!(report.rows[0].acc_attacker, legal_acc);
    }
}
