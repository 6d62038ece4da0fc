//! Minibatch gradient descent with a deterministic chunked reduction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::cross_entropy_with_grad;
use crate::evaluation::{argmax_rows, Metrics};
use crate::nnkernel::{
    chunk_ranges, mix_seed, predict_batched, update, BackwardOptions, Gradients, Mode, ModelGraph, OptimizerState,
    Tensor,
};
use crate::{exec, Error, Result};

/// Samples per gradient chunk; chunks are reduced in index order.
pub const CHUNK: usize = 16;

/// Windows as a `[n, 1, M, W]` batch with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub users: Vec<usize>,
    pub activities: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Tensor, users: Vec<usize>, activities: Vec<usize>) -> Result<Self> {
        if x.rows() != users.len() || x.rows() != activities.len() {
            return Err(Error::ContractViolation(format!(
                "{} inputs for {} identity and {} activity labels",
                x.rows(),
                users.len(),
                activities.len()
            )));
        }
        Ok(Dataset { x, users, activities })
    }

    pub fn from_windows(windows: &[crate::ingest::LabeledWindow]) -> Result<Self> {
        Dataset::new(
            crate::models::stack_windows(windows)?,
            windows.iter().map(|w| w.identity.index()).collect(),
            windows.iter().map(|w| w.activity.index()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Same labels with different inputs (e.g. a transformed copy).
    pub fn with_inputs(&self, x: Tensor) -> Result<Self> {
        Dataset::new(x, self.users.clone(), self.activities.clone())
    }

    pub fn labels(&self, target: Target) -> &[usize] {
        match target {
            Target::Identity => &self.users,
            Target::Activity => &self.activities,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Identity,
    Activity,
}

/// Seeded permutations split into minibatches.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64)));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Sums per-chunk gradients in chunk order.
pub(crate) fn reduce(parts: impl IntoIterator<Item = Gradients>) -> Gradients {
    let mut total = Gradients { params: Vec::new(), input: None };
    for g in parts {
        total.accumulate(&g);
    }
    total
}

pub(crate) fn add_l2(grads: &mut Gradients, model: &ModelGraph) {
    let l2 = model.l2_gradients();
    if grads.params.is_empty() {
        *grads = l2;
        return;
    }
    grads.accumulate(&l2);
}

/// Mean cross-entropy and its parameter gradient over a minibatch.
pub fn classifier_gradients(model: &ModelGraph, x: &Tensor, labels: &[usize], seed: u64) -> Result<(f64, Gradients)> {
    let n = x.rows();
    let k = crate::nnkernel::volume(model.output_dims());
    let parts = exec::try_map(&chunk_ranges(n, CHUNK), |r| -> Result<(f64, Gradients)> {
        let xb = x.slice_rows(r.clone());
        let (p, cache) = model.forward(&xb, Mode::Train, mix_seed(seed, r.start as u64))?;
        let mut g = vec![0.0; p.len()];
        let mut loss = 0.0;
        for (i, s) in r.clone().enumerate() {
            loss += cross_entropy_with_grad(labels[s], &p.values()[i * k..(i + 1) * k], &mut g[i * k..(i + 1) * k]);
        }
        g.iter_mut().for_each(|v| *v /= n as f64);
        let opts = BackwardOptions { params: true, input: false, l2: false };
        let grads = model.backward_with(&cache, &Tensor::new(p.shape().to_vec(), g)?, opts)?;
        Ok((loss, grads))
    })?;
    let loss = parts.iter().map(|(l, _)| l).sum::<f64>() / n as f64;
    let mut grads = reduce(parts.into_iter().map(|(_, g)| g));
    add_l2(&mut grads, model);
    Ok((loss + model.l2_penalty(), grads))
}

/// Trains `model` on `(x, labels)` with cross-entropy; returns mean loss
/// per epoch.
pub fn fit_classifier(
    model: &mut ModelGraph,
    opt: &mut OptimizerState,
    x: &Tensor,
    labels: &[usize],
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if x.rows() != labels.len() {
        return Err(Error::ContractViolation("inputs and labels differ in length".into()));
    }
    let classes = crate::nnkernel::volume(model.output_dims());
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::ContractViolation(format!("label {bad} exceeds head width {classes}")));
    }
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for (step, idx) in epoch_batches(x.rows(), batch_size, seed, epoch).iter().enumerate() {
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let step_seed = mix_seed(mix_seed(seed, 0xF17 + epoch as u64), step as u64);
            let (loss, grads) = classifier_gradients(model, &xb, &yb, step_seed)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("`{}` loss is {loss} at epoch {epoch}", model.name())));
            }
            update(model, &grads, opt)?;
            total += loss * idx.len() as f64;
        }
        history.push(total / x.rows().max(1) as f64);
    }
    Ok(history)
}

/// Arg-max predictions in inference mode.
pub fn predict_classes(model: &ModelGraph, x: &Tensor) -> Result<Vec<usize>> {
    let p = predict_batched(model, x, 256)?;
    Ok(argmax_rows(p.values(), p.row_len()))
}

pub fn classifier_metrics(model: &ModelGraph, x: &Tensor, labels: &[usize]) -> Result<Metrics> {
    let classes = crate::nnkernel::volume(model.output_dims());
    Metrics::from_predictions(labels, &predict_classes(model, x)?, classes)
}

/// Runs `phase` on a scratch copy of `state`; on divergence retries once
/// with half the learning rate, and fails on a second divergence.
pub(crate) fn guarded<S: Clone, T>(
    state: &mut S,
    lr_halver: impl Fn(&mut S),
    mut phase: impl FnMut(&mut S) -> Result<T>,
) -> Result<T> {
    let snapshot = state.clone();
    match phase(state) {
        Err(Error::Divergence(msg)) => {
            log::warn!("{msg}; retrying phase with halved learning rate");
            *state = snapshot;
            lr_halver(state);
            phase(state)
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::LayerSpec;
    use rand::Rng;

    fn toy(n: usize, seed: u64, shuffle_labels: bool) -> (Tensor, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let values = labels
            .iter()
            .flat_map(|&l| (0..8).map(move |_| l as f64))
            .map(|v| v + rng.gen_range(-0.05..0.05))
            .collect();
        if shuffle_labels {
            labels.shuffle(&mut rng);
        }
        (Tensor::new(vec![n, 1, 1, 8], values).unwrap(), labels)
    }

    fn small_classifier(classes: usize, seed: u64) -> ModelGraph {
        let specs = vec![LayerSpec::conv(4, [1, 3]), LayerSpec::ReLU, LayerSpec::Flatten, LayerSpec::dense(classes), LayerSpec::Softmax];
        ModelGraph::new("toy", [1, 1, 8], specs, seed).unwrap()
    }

    #[test]
    fn chunked_gradients_equal_a_single_pass() {
        let (x, y) = toy(37, 1, false);
        let m = small_classifier(2, 2);
        let (loss, g) = classifier_gradients(&m, &x, &y, 0).unwrap();
        let (p, cache) = m.forward(&x, Mode::Train, 0).unwrap();
        let mut go = vec![0.0; p.len()];
        let mut l = 0.0;
        for i in 0..37 {
            l += cross_entropy_with_grad(y[i], &p.values()[i * 2..i * 2 + 2], &mut go[i * 2..i * 2 + 2]);
        }
        go.iter_mut().for_each(|v| *v /= 37.0);
        let full = m.backward(&cache, &Tensor::new(p.shape().to_vec(), go).unwrap()).unwrap();
        assert!((loss - l / 37.0).abs() < 1e-12);
        for (a, b) in g.params.iter().zip(&full.params) {
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_and_sequential_fits_are_bit_identical() {
        let (x, y) = toy(64, 3, false);
        let run = |s| {
            exec::set_strategy(s);
            let mut m = small_classifier(2, 4);
            fit_classifier(&mut m, &mut OptimizerState::adam(1e-2), &x, &y, 2, 16, 9).unwrap();
            exec::set_strategy(exec::Strategy::Parallel);
            m
        };
        assert_eq!(run(exec::Strategy::Sequential), run(exec::Strategy::Parallel));
    }

    #[test]
    fn separable_toy_is_learned() {
        let (x, y) = toy(200, 5, false);
        let mut m = small_classifier(2, 6);
        fit_classifier(&mut m, &mut OptimizerState::adam(1e-2), &x, &y, 5, 16, 1).unwrap();
        assert_eq!(classifier_metrics(&m, &x, &y).unwrap().accuracy, 1.0);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let (x, mut y) = toy(4, 5, false);
        y[0] = 7;
        let mut m = small_classifier(2, 6);
        assert!(fit_classifier(&mut m, &mut OptimizerState::sgd(0.1), &x, &y, 1, 4, 0).is_err());
    }

    #[test]
    fn divergence_guard_retries_once() {
        let mut lr = 1.0f64;
        let mut calls = 0;
        let out = guarded(&mut lr, |l| *l /= 2.0, |l| {
            calls += 1;
            if *l > 0.75 {
                Err(Error::Divergence("boom".into()))
            } else {
                Ok(*l)
            }
        });
        assert_eq!(out.unwrap(), 0.5);
        assert_eq!(calls, 2);
        let mut lr = 4.0f64;
        let out = guarded(&mut lr, |l| *l /= 2.0, |_| -> Result<()> { Err(Error::Divergence("x".into())) });
        assert!(matches!(out, Err(Error::Divergence(_))));
    }
}
