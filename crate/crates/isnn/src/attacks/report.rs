use serde::Serialize;

use crate::error::{IsnnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Retrain,
    Forge,
    Uap,
}

/// One point on the attack curve. Columns that do not apply to the attack
/// (e.g. `acc_attacker` for plain retraining) are NaN and serialize to null.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AttackRow {
    pub step: usize,
    /// Accuracy on the clean held-out test set.
    pub acc_clean: f64,
    /// Accuracy on the owner's true keyed test set.
    pub acc_legal: f64,
    /// Accuracy on the attacker's own data: the forged set, or clean + v.
    pub acc_attacker: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub rows: Vec<AttackRow>,
    /// Supremum of the adversary's usable accuracy over the whole curve.
    pub final_adv_accuracy: f64,
    pub baseline_t: f64,
    pub secure: bool,
}

impl AttackReport {
    /// Assemble a report; step 0 must be the pre-attack state. The adversary
    /// metric for each row is max(acc_clean, acc_attacker) ignoring NaN.
    pub fn from_rows(kind: AttackKind, rows: Vec<AttackRow>, baseline_t: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(IsnnError::Empty("attack curve"));
        }
        let adv = |r: &AttackRow| {
            [r.acc_clean, r.acc_attacker]
                .into_iter()
                .filter(|a| !a.is_nan())
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let final_adv_accuracy = rows.iter().map(adv).fold(f64::NEG_INFINITY, f64::max);
        if !final_adv_accuracy.is_finite() {
            return Err(IsnnError::NonFinite("attack curve accuracies".into()));
        }
        Ok(AttackReport {
            kind,
            rows,
            final_adv_accuracy,
            baseline_t,
            secure: final_adv_accuracy <= baseline_t,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,acc_clean,acc_legal,acc_attacker\n");
        let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.step,
                fmt(r.acc_clean),
                fmt(r.acc_legal),
                fmt(r.acc_attacker)
            ));
        }
        out
    }
}

/// Knobs shared by the retraining and forging attacks.
#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, clean: f64, legal: f64, att: f64) -> AttackRow {
        AttackRow {
            step,
            acc_clean: clean,
            acc_legal: legal,
            acc_attacker: att,
        }
    }

    #[test]
    fn supremum_spans_the_whole_curve_including_step_zero() {
        let rows = vec![
            row(0, 0.70, 0.9, f64::NAN),
            row(1, 0.40, 0.8, f64::NAN),
            row(2, 0.55, 0.8, f64::NAN),
        ];
        let r = AttackReport::from_rows(AttackKind::Retrain, rows, 0.60).unwrap();
        assert_eq!(r.final_adv_accuracy, 0.70);
        assert!(!r.secure);
    }

    #[test]
    fn verdict_matches_recomputation_from_rows() {
        let rows = vec![row(0, 0.10, 0.9, 0.20), row(1, 0.30, 0.9, 0.55)];
        let r = AttackReport::from_rows(AttackKind::Forge, rows, 0.60).unwrap();
        let recomputed = r
            .rows
            .iter()
            .flat_map(|x| [x.acc_clean, x.acc_attacker])
            .filter(|a| !a.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.final_adv_accuracy, recomputed);
        assert_eq!(r.secure, recomputed <= r.baseline_t);
        assert!(r.secure);
    }

    #[test]
    fn empty_curve_is_rejected() {
        assert!(AttackReport::from_rows(AttackKind::Uap, Vec::new(), 0.5).is_err());
    }

    #[test]
    fn csv_blanks_nan_columns() {
        let r = AttackReport::from_rows(
            AttackKind::Retrain,
            vec![row(0, 0.5, f64::NAN, f64::NAN)],
            0.9,
        )
        .unwrap();
        assert_eq!(r.to_csv(), "step,acc_clean,acc_legal,acc_attacker\n0,0.5,,\n");
    }
}
