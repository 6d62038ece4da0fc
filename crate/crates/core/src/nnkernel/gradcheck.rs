//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Mode, ModelGraph};
use super::tensor::Tensor;
use crate::Result;

/// Upper bound on the number of parameter entries probed per check.
pub const MAX_PROBES: usize = 400;
const DROPOUT_SEED: u64 = 0x6772_6164;

/// Scalar loss of a network output together with its output gradient.
pub trait Loss {
    fn evaluate(&self, output: &Tensor) -> (f64, Tensor);
}

impl<F> Loss for F
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    fn evaluate(&self, output: &Tensor) -> (f64, Tensor) {
        self(output)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Parameter entries to probe: all of them for small models, otherwise a
/// seeded sample of [`MAX_PROBES`]. Entries are `(param index, element)`.
pub fn probe_points(model: &ModelGraph, seed: u64) -> Vec<(usize, usize)> {
    let flat: Vec<(usize, usize)> = model
        .parameters()
        .iter()
        .enumerate()
        .flat_map(|(p, (_, t))| (0..t.len()).map(move |e| (p, e)))
        .collect();
    if flat.len() <= MAX_PROBES {
        return flat;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, flat.len(), MAX_PROBES).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| flat[i]).collect()
}

/// Central differences of `objective` with respect to the probed entries of
/// `model`. The step actually taken in f32 is used as the denominator.
pub fn numeric_gradient<F>(model: &mut ModelGraph, probes: &[(usize, usize)], epsilon: f64, mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&ModelGraph) -> Result<f64>,
{
    let mut out = Vec::with_capacity(probes.len());
    for &(p, e) in probes {
        let original = model.parameters()[p].1.values()[e];
        let plus = (f64::from(original) + epsilon) as f32;
        let minus = (f64::from(original) - epsilon) as f32;
        set_entry(model, p, e, plus);
        let up = objective(model)?;
        set_entry(model, p, e, minus);
        let down = objective(model)?;
        set_entry(model, p, e, original);
        out.push((up - down) / (f64::from(plus) - f64::from(minus)));
    }
    Ok(out)
}

fn set_entry(model: &mut ModelGraph, p: usize, e: usize, value: f32) {
    let frozen = model.is_frozen();
    model.unfreeze();
    model
        .modify_parameters(|i, vals| {
            if i == p {
                vals[e] = value;
            }
        })
        .expect("unfrozen");
    if frozen {
        model.freeze();
    }
}

/// Maximum relative error between backpropagated and finite-difference
/// gradients of `loss(model(batch)) + L2 penalty` over probed parameters.
///
/// The forward pass runs in training mode with a fixed dropout seed so the
/// objective is a deterministic function of the parameters.
pub fn gradient_check(model: &ModelGraph, batch: &Tensor, loss: &dyn Loss, epsilon: f64) -> Result<f64> {
    let (out, cache) = model.forward(batch, Mode::Train, DROPOUT_SEED)?;
    let (_, grad_out) = loss.evaluate(&out);
    let grads = model.backward(&cache, &grad_out)?;
    let probes = probe_points(model, 17);
    let analytic: Vec<f64> = probes.iter().map(|&(p, e)| grads.params[p].values()[e]).collect();
    let mut probe_model = model.clone();
    let numeric = numeric_gradient(&mut probe_model, &probes, epsilon, |m| {
        let (o, _) = m.forward(batch, Mode::Train, DROPOUT_SEED)?;
        Ok(loss.evaluate(&o).0 + m.l2_penalty())
    })?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max))
}

/// Same check for the gradient with respect to the input batch.
pub fn input_gradient_check(model: &ModelGraph, batch: &Tensor, loss: &dyn Loss, epsilon: f64) -> Result<f64> {
    let (out, cache) = model.forward(batch, Mode::Train, DROPOUT_SEED)?;
    let (_, grad_out) = loss.evaluate(&out);
    let grads = model.backward(&cache, &grad_out)?;
    let analytic = grads.input.expect("input gradient requested");
    let mut worst: f64 = 0.0;
    let mut probe = batch.clone();
    for i in 0..batch.len().min(MAX_PROBES) {
        let v = batch.values()[i];
        probe.values_mut()[i] = v + epsilon;
        let up = loss.evaluate(&model.forward(&probe, Mode::Train, DROPOUT_SEED)?.0).0;
        probe.values_mut()[i] = v - epsilon;
        let down = loss.evaluate(&model.forward(&probe, Mode::Train, DROPOUT_SEED)?.0).0;
        probe.values_mut()[i] = v;
        worst = worst.max(relative_error(analytic.values()[i], (up - down) / (2.0 * epsilon)));
    }
    Ok(worst)
}
