//! Entity-attention layer, saliency and generation losses, and gradient checks.
//!
//! For encoder states `H` (one row per source position) the layer computes
//!
//! ```text
//! e_j = v . tanh(U h_j + b)
//! a_j = sigmoid(e_j)
//! ```
//!
//! and is trained against binary saliency targets with the mean binary
//! cross-entropy. All arithmetic is `f64`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Projection, `hidden x d`.
    pub u: Array2<f64>,
    pub b: Array1<f64>,
    pub v: Array1<f64>,
}

impl AttentionParams {
    pub fn hidden(&self) -> usize {
        self.u.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    fn check(&self, states: &ArrayView2<f64>) -> Result<()> {
        let hidden = self.u.nrows();
        if hidden == 0 {
            return Err(Error::InvalidArgument("attention hidden size must be at least 1".into()));
        }
        if self.b.len() != hidden {
            return Err(Error::LengthMismatch {
                what: "bias vs projection rows",
                left: self.b.len(),
                right: hidden,
            });
        }
        if self.v.len() != hidden {
            return Err(Error::LengthMismatch {
                what: "scoring vector vs projection rows",
                left: self.v.len(),
                right: hidden,
            });
        }
        if states.ncols() != self.u.ncols() {
            return Err(Error::LengthMismatch {
                what: "encoder state width vs projection columns",
                left: states.ncols(),
                right: self.u.ncols(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Pre-activation scores `e`.
    pub scores: Array1<f64>,
    /// Sigmoid activations `a`.
    pub activations: Array1<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// `tanh(H U^T + b)`, one row per source position.
fn hidden_activations(states: &ArrayView2<f64>, params: &AttentionParams) -> Array2<f64> {
    let mut z = states.dot(&params.u.t());
    z += &params.b;
    z.mapv_inplace(f64::tanh);
    z
}

pub fn entity_attention_forward(
    states: ArrayView2<f64>,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    params.check(&states)?;
    let scores = hidden_activations(&states, params).dot(&params.v);
    let activations = scores.mapv(sigmoid);
    Ok(AttentionOutput { scores, activations })
}

fn check_targets(len: usize, targets: &ArrayView1<f64>) -> Result<()> {
    if targets.len() != len {
        return Err(Error::LengthMismatch {
            what: "saliency targets vs source positions",
            left: targets.len(),
            right: len,
        });
    }
    if len == 0 {
        return Err(Error::InvalidArgument("no source positions".into()));
    }
    if targets.iter().any(|&s| s != 0.0 && s != 1.0) {
        return Err(Error::InvalidArgument("saliency targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy of probabilities `a` against binary targets.
pub fn bce_loss(a: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    check_targets(a.len(), &targets)?;
    let total: f64 = Zip::from(&a)
        .and(&targets)
        .fold(0.0, |acc, &p, &s| acc - (s * p.ln() + (1.0 - s) * (1.0 - p).ln()));
    Ok(total / a.len() as f64)
}

/// Same loss computed from the scores `e` without forming the sigmoid,
/// finite for any finite score.
pub fn bce_with_logits(scores: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    check_targets(scores.len(), &targets)?;
    let total: f64 = Zip::from(&scores).and(&targets).fold(0.0, |acc, &e, &s| {
        acc + e.max(0.0) - s * e + (-e.abs()).exp().ln_1p()
    });
    Ok(total / scores.len() as f64)
}

/// Mean negative log-likelihood of the gold-token probabilities.
pub fn nll_loss(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("no decoding steps".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "step probability {p} outside (0, 1]"
        )));
    }
    Ok(-probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64)
}

/// `delta * saliency_loss + (1 - delta) * nll`.
pub fn hybrid_loss(saliency_loss: f64, nll: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside [0, 1]")));
    }
    Ok(delta * saliency_loss + (1.0 - delta) * nll)
}

/// Saliency loss of the layer on `states`, evaluated through the scores.
pub fn attention_loss(
    states: ArrayView2<f64>,
    params: &AttentionParams,
    targets: ArrayView1<f64>,
) -> Result<f64> {
    let out = entity_attention_forward(states, params)?;
    bce_with_logits(out.scores.view(), targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGradients {
    pub u: Array2<f64>,
    pub b: Array1<f64>,
    pub v: Array1<f64>,
    pub states: Array2<f64>,
}

/// Analytic gradients of [`attention_loss`].
pub fn attention_gradients(
    states: ArrayView2<f64>,
    params: &AttentionParams,
    targets: ArrayView1<f64>,
) -> Result<AttentionGradients> {
    params.check(&states)?;
    check_targets(states.nrows(), &targets)?;
    let t = hidden_activations(&states, params);
    let scores = t.dot(&params.v);
    let n = states.nrows() as f64;
    // dL/de_j
    let g = Zip::from(&scores)
        .and(&targets)
        .map_collect(|&e, &s| (sigmoid(e) - s) / n);

    let dv = t.t().dot(&g);
    // dL/dz = g_j * v * (1 - t^2)
    let mut dz = t.mapv(|x| 1.0 - x * x);
    dz *= &params.v;
    dz *= &g.view().insert_axis(Axis(1));
    Ok(AttentionGradients {
        u: dz.t().dot(&states),
        b: dz.sum_axis(Axis(0)),
        v: dv,
        states: dz.dot(&params.u),
    })
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub const RELATIVE_FLOOR: f64 = 1e-8;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` at `x`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest relative error between `grad` and central differences of `f`.
pub fn max_relative_error<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64], grad: &[f64], step: f64) -> f64 {
    assert_eq!(x.len(), grad.len(), "gradient length");
    central_difference(f, x, step)
        .iter()
        .zip(grad)
        .map(|(&n, &a)| relative_error(a, n))
        .fold(0.0, f64::max)
}

fn flatten(states: &ArrayView2<f64>, params: &AttentionParams) -> Vec<f64> {
    params
        .u
        .iter()
        .chain(&params.b)
        .chain(&params.v)
        .chain(states.iter())
        .copied()
        .collect()
}

fn unflatten(x: &[f64], rows: usize, hidden: usize, dim: usize) -> (Array2<f64>, AttentionParams) {
    let (u, rest) = x.split_at(hidden * dim);
    let (b, rest) = rest.split_at(hidden);
    let (v, h) = rest.split_at(hidden);
    let params = AttentionParams {
        u: Array2::from_shape_vec((hidden, dim), u.to_vec()).expect("shape"),
        b: Array1::from(b.to_vec()),
        v: Array1::from(v.to_vec()),
    };
    (Array2::from_shape_vec((rows, dim), h.to_vec()).expect("shape"), params)
}

/// Compare [`attention_gradients`] against central differences over every
/// scalar of `U`, `b`, `v` and `H`; returns the largest relative error.
pub fn finite_difference_check(
    states: ArrayView2<f64>,
    params: &AttentionParams,
    targets: ArrayView1<f64>,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step {step} must be positive")));
    }
    let grads = attention_gradients(states, params, targets)?;
    let analytic = flatten(&grads.states.view(), &AttentionParams {
        u: grads.u,
        b: grads.b,
        v: grads.v,
    });
    let (rows, dim, hidden) = (states.nrows(), states.ncols(), params.hidden());
    let x = flatten(&states, params);
    let loss = |x: &[f64]| {
        let (h, p) = unflatten(x, rows, hidden, dim);
        attention_loss(h.view(), &p, targets).expect("shapes checked above")
    };
    Ok(max_relative_error(loss, &x, &analytic, step))
}

/// A random problem instance: states, parameters and binary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckInstance {
    pub states: Array2<f64>,
    pub params: AttentionParams,
    pub targets: Array1<f64>,
}

/// Sizes drawn from 1..=8 (widths) and 1..=10 (positions), entries uniform
/// in [-1, 1].
pub fn random_instance<R: Rng>(rng: &mut R) -> GradcheckInstance {
    let dim = rng.gen_range(1..=8);
    let hidden = rng.gen_range(1..=8);
    let rows = rng.gen_range(1..=10);
    let mut draw = |shape: usize| (0..shape).map(|_| rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>();
    let u = Array2::from_shape_vec((hidden, dim), draw(hidden * dim)).expect("shape");
    let b = Array1::from(draw(hidden));
    let v = Array1::from(draw(hidden));
    let states = Array2::from_shape_vec((rows, dim), draw(rows * dim)).expect("shape");
    let targets = (0..rows).map(|_| f64::from(rng.gen_bool(0.5) as u8)).collect();
    GradcheckInstance {
        states,
        params: AttentionParams { u, b, v },
        targets,
    }
}

impl GradcheckInstance {
    pub fn check(&self, step: f64) -> Result<f64> {
        finite_difference_check(self.states.view(), &self.params, self.targets.view(), step)
    }
}
