//! The mixed-batch SGD training loop.

use rand::seq::SliceRandom;

use super::config::{LambdaMode, Method, TrainConfig};
use super::objective::{
    grad_label_consistent, grad_label_inconsistent, loss_label_consistent,
    loss_label_inconsistent, LossParts,
};
use crate::datapipe::{build_illegal, mixed_batches, LabelMode, LabeledDataset};
use crate::error::{IsnnError, Result};
use crate::evaluator::{accuracy, LabelSource};
use crate::exec;
use crate::keying::NoiseType;
use crate::nn::{softmax_cross_entropy, softmax_xent_grad, Model, OptimizerState};
use crate::rng::{chacha, namespaced_seed, per_index_seed};

/// One row of training history.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Accuracy on the legal eval set (NaN when not applicable).
    pub acc_legal: f64,
    pub acc_illegal: f64,
    pub acc_clean: f64,
    pub loss1: f64,
    pub loss2_or_3: f64,
    pub lambda: f64,
}

/// Immutable datasets evaluated after every epoch for the history log.
#[derive(Default, Clone, Copy)]
pub struct EvalSets<'a> {
    pub legal: Option<&'a LabeledDataset>,
    pub illegal: Option<&'a LabeledDataset>,
    pub clean: Option<&'a LabeledDataset>,
}

/// Final model plus history; `aborted` carries the diagnostic when the run
/// stopped early on a non-finite loss (the model is the last good state).
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub aborted: Option<String>,
}

fn eval_row(model: &Model, eval: &EvalSets, epoch: usize, parts: (f64, f64, f64)) -> Result<EpochStats> {
    let acc = |ds: Option<&LabeledDataset>, src: LabelSource| -> Result<f64> {
        match ds {
            Some(d) => accuracy(model, d, src),
            None => Ok(f64::NAN),
        }
    };
    Ok(EpochStats {
        epoch,
        acc_legal: acc(eval.legal, LabelSource::True)?,
        acc_illegal: acc(eval.illegal, LabelSource::True)?,
        acc_clean: acc(eval.clean, LabelSource::True)?,
        loss1: parts.0,
        loss2_or_3: parts.1,
        lambda: parts.2,
    })
}

/// Forward a normalized buffer in chunks keeping caches, then backprop the
/// given logit gradients, reducing chunk gradients in chunk order.
fn forward_backward(
    model: &Model,
    x: &[f64],
    n: usize,
    mut dlogits_of: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let in_len = model.input_len();
    let c = model.num_classes();
    let ranges = exec::chunk_ranges(n, exec::DEFAULT_CHUNK);
    let fwd = exec::map_vec(ranges, |r| {
        let (logits, cache) = model.forward_chunk(&x[r.start * in_len..r.end * in_len], r.len(), true);
        (r, logits, cache)
    });
    let mut logits = Vec::with_capacity(n * c);
    for (_, l, _) in &fwd {
        logits.extend_from_slice(l);
    }
    let dlogits = dlogits_of(&logits)?;
    let chunk_grads = exec::map_vec(fwd, |(r, _, cache)| {
        model
            .backward(&cache, &dlogits[r.start * c..r.end * c], false)
            .map(|(g, _)| g)
    });
    let mut grads = vec![0.0; model.num_params()];
    for cg in chunk_grads {
        let cg = cg?;
        for (a, b) in grads.iter_mut().zip(cg.iter()) {
            *a += b;
        }
    }
    Ok((grads, logits))
}

/// Where the illegal half of each batch comes from.
///
/// `Fixed` uses one dataset for the whole run. `RefreshedPerEpoch` stamps a
/// fresh noise field onto the clean data every epoch (deterministically from
/// the run seed), so the model never sees the same wrong perturbation twice —
/// a strictly harder rejection target.
pub enum IllegalSpec<'a> {
    Fixed(&'a LabeledDataset),
    RefreshedPerEpoch {
        clean: &'a LabeledDataset,
        noise: NoiseType,
        mode: LabelMode,
    },
}

/// Train an ISNN over mixed 50/50 batches with the configured objective.
pub fn train(
    model: Model,
    legal: &LabeledDataset,
    illegal: &LabeledDataset,
    eval: &EvalSets,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_isnn(model, legal, &IllegalSpec::Fixed(illegal), eval, cfg)
}

/// [`train`] with an explicit illegal-data source.
pub fn train_isnn(
    mut model: Model,
    legal: &LabeledDataset,
    illegal_spec: &IllegalSpec,
    eval: &EvalSets,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let refresh_seed = namespaced_seed(cfg.seed, "illegal-refresh");
    let epoch_zero;
    let illegal: &LabeledDataset = match illegal_spec {
        IllegalSpec::Fixed(ds) => ds,
        IllegalSpec::RefreshedPerEpoch { clean, noise, mode } => {
            epoch_zero = build_illegal(clean, cfg.epsilon, *noise, *mode, per_index_seed(refresh_seed, 0))?;
            &epoch_zero
        }
    };
    // The derangement L' is part of the keying decision, so refreshed epochs
    // reuse the epoch-0 mapping instead of drawing a new one.
    let pinned_shuffled = illegal.shuffled_labels.clone();
    if i64::from(legal.epsilon_used) != cfg.epsilon || i64::from(illegal.epsilon_used) != cfg.epsilon {
        return Err(IsnnError::RunMismatch(format!(
            "datasets built at eps {}/{} but config says {}",
            legal.epsilon_used, illegal.epsilon_used, cfg.epsilon
        )));
    }
    if cfg.method == Method::Li && illegal.shuffled_labels.is_none() {
        return Err(IsnnError::InvalidArgument(
            "label-inconsistent training requires shuffled labels".into(),
        ));
    }
    let c = model.num_classes();
    let cap = cfg.l2_cap_gamma * (c as f64).ln();
    let stream = mixed_batches(legal, illegal, cfg.batch_size, namespaced_seed(cfg.seed, "batch-order"))?;
    let mut opt = OptimizerState::new(cfg.learning_rate, cfg.momentum, model.num_params())?;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let refreshed: Option<LabeledDataset> = match illegal_spec {
            IllegalSpec::Fixed(_) => None,
            IllegalSpec::RefreshedPerEpoch { clean, noise, mode } if epoch > 0 => {
                let mut ds =
                    build_illegal(clean, cfg.epsilon, *noise, *mode, per_index_seed(refresh_seed, epoch as u64))?;
                ds.shuffled_labels = pinned_shuffled.clone();
                Some(ds)
            }
            IllegalSpec::RefreshedPerEpoch { .. } => None,
        };
        let illegal: &LabeledDataset = refreshed.as_ref().unwrap_or(illegal);
        let last_good = model.params().to_vec();
        let mut sum_l1 = 0.0;
        let mut sum_l23 = 0.0;
        let mut sum_lambda = 0.0;
        let mut batches_done = 0usize;
        let mut abort: Option<String> = None;

        for batch in stream.epoch(epoch) {
            let nl = batch.legal.len();
            let nf = batch.illegal.len();
            let mut x = legal.gather_normalized(&batch.legal);
            x.extend(illegal.gather_normalized(&batch.illegal));
            let labels_t: Vec<usize> = batch.legal.iter().map(|&i| legal.labels[i] as usize).collect();
            let labels_f: Vec<usize> = batch.illegal.iter().map(|&i| illegal.labels[i] as usize).collect();
            let shuffled_f: Option<Vec<usize>> = illegal
                .shuffled_labels
                .as_ref()
                .map(|sl| batch.illegal.iter().map(|&i| sl[i] as usize).collect());

            let mut parts_out: Option<(LossParts, f64)> = None;
            let result = forward_backward(&model, &x, nl + nf, |logits| {
                let (logits_t, logits_f) = logits.split_at(nl * c);
                let parts = match cfg.method {
                    Method::Lc => loss_label_consistent(
                        logits_t, &labels_t, logits_f, &labels_f, c, cfg.lambda, cap,
                    )?,
                    Method::Li => loss_label_inconsistent(
                        logits_t,
                        &labels_t,
                        logits_f,
                        shuffled_f.as_deref(),
                        c,
                        cfg.lambda,
                    )?,
                };
                let lambda_used = match cfg.lambda_mode {
                    LambdaMode::Fixed => cfg.lambda,
                    LambdaMode::Ratio => parts.l1 / (parts.l2_or_l3.abs() + 1e-8),
                };
                let total = parts.l1 + lambda_used * parts.l2_or_l3;
                if !total.is_finite() {
                    return Err(IsnnError::NonFinite(format!("loss at epoch {epoch}")));
                }
                let (dt, df) = match cfg.method {
                    Method::Lc => grad_label_consistent(
                        logits_t, &labels_t, logits_f, &labels_f, c, lambda_used, &parts.capped,
                    ),
                    Method::Li => grad_label_inconsistent(
                        logits_t,
                        &labels_t,
                        logits_f,
                        shuffled_f.as_deref().expect("validated above"),
                        c,
                        lambda_used,
                    ),
                };
                parts_out = Some((parts, lambda_used));
                let mut d = dt;
                d.extend(df);
                Ok(d)
            });
            let step_result = result.and_then(|(grads, _)| opt.step(model.params_mut(), &grads));
            match step_result {
                Ok(()) => {
                    let (parts, lambda_used) = parts_out.expect("set on success");
                    sum_l1 += parts.l1;
                    sum_l23 += parts.l2_or_l3;
                    sum_lambda += lambda_used;
                    batches_done += 1;
                }
                Err(IsnnError::NonFinite(msg)) => {
                    abort = Some(msg);
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        if let Some(msg) = abort {
            // Roll back to the last epoch boundary and stop.
            model.set_params(last_good)?;
            return Ok(TrainOutcome {
                model,
                history,
                aborted: Some(msg),
            });
        }
        let nb = batches_done.max(1) as f64;
        history.push(eval_row(
            &model,
            eval,
            epoch,
            (sum_l1 / nb, sum_l23 / nb, sum_lambda / nb),
        )?);
    }

    Ok(TrainOutcome {
        model,
        history,
        aborted: None,
    })
}

/// Plain CE training on clean data; establishes the unprotected baseline.
pub fn train_plain(
    mut model: Model,
    clean: &LabeledDataset,
    eval: &EvalSets,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let c = model.num_classes();
    let mut opt = OptimizerState::new(cfg.learning_rate, cfg.momentum, model.num_params())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let order_seed = namespaced_seed(cfg.seed, "plain-order");

    for epoch in 0..cfg.epochs {
        let last_good = model.params().to_vec();
        let mut indices: Vec<usize> = (0..clean.len()).collect();
        indices.shuffle(&mut chacha(per_index_seed(order_seed, epoch as u64)));
        let mut sum_l1 = 0.0;
        let mut batches_done = 0usize;
        let mut abort: Option<String> = None;

        for batch in indices.chunks(cfg.batch_size) {
            let x = clean.gather_normalized(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| clean.labels[i] as usize).collect();
            let mut loss_val = 0.0;
            let result = forward_backward(&model, &x, batch.len(), |logits| {
                let loss = softmax_cross_entropy(logits, &labels, c)?;
                if !loss.is_finite() {
                    return Err(IsnnError::NonFinite(format!("loss at epoch {epoch}")));
                }
                loss_val = loss;
                Ok(softmax_xent_grad(logits, &labels, c, 1.0))
            });
            match result.and_then(|(grads, _)| opt.step(model.params_mut(), &grads)) {
                Ok(()) => {
                    sum_l1 += loss_val;
                    batches_done += 1;
                }
                Err(IsnnError::NonFinite(msg)) => {
                    abort = Some(msg);
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        if let Some(msg) = abort {
            model.set_params(last_good)?;
            return Ok(TrainOutcome {
                model,
                history,
                aborted: Some(msg),
            });
        }
        let nb = batches_done.max(1) as f64;
        history.push(eval_row(&model, eval, epoch, (sum_l1 / nb, f64::NAN, f64::NAN))?);
    }

    Ok(TrainOutcome {
        model,
        history,
        aborted: None,
    })
}

/// History CSV: epoch, acc_legal, acc_illegal, acc_clean, loss1, loss2or3, lambda.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,acc_legal,acc_illegal,acc_clean,loss1,loss2or3,lambda\n");
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
    for row in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.epoch,
            fmt(row.acc_legal),
            fmt(row.acc_illegal),
            fmt(row.acc_clean),
            fmt(row.loss1),
            fmt(row.loss2_or_3),
            fmt(row.lambda)
        ));
    }
    out
}
