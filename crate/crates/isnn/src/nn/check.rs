//! Finite-difference gradient oracle.
//!
//! Central differences over the forward pass only, so it stays independent of
//! the backprop implementation it is used to check.

use super::loss::softmax_cross_entropy;
use super::model::Model;

/// Loss as a pure function of (params, input): used as the scalar field for
/// finite differencing.
fn loss_of(model: &Model, x: &[f64], batch: usize, labels: &[usize]) -> f64 {
    let (logits, _) = model.forward_chunk(x, batch, false);
    softmax_cross_entropy(&logits, labels, model.num_classes()).expect("valid labels")
}

/// Central finite-difference gradient of the CE loss w.r.t. every parameter.
pub fn fd_param_grad(model: &Model, x: &[f64], batch: usize, labels: &[usize], step: f64) -> Vec<f64> {
    let mut m = model.clone();
    let n = m.num_params();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + step;
        let up = loss_of(&m, x, batch, labels);
        m.params_mut()[i] = orig - step;
        let down = loss_of(&m, x, batch, labels);
        m.params_mut()[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Central finite-difference gradient of the CE loss w.r.t. the input batch.
pub fn fd_input_grad(model: &Model, x: &[f64], batch: usize, labels: &[usize], step: f64) -> Vec<f64> {
    let mut xv = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xv[i];
        xv[i] = orig + step;
        let up = loss_of(model, &xv, batch, labels);
        xv[i] = orig - step;
        let down = loss_of(model, &xv, batch, labels);
        xv[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Max relative error between two gradient vectors, with an absolute floor so
/// near-zero entries do not blow up the ratio.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
