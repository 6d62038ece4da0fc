//! Alternating optimisation of the anonymizer against its regularizers.
//!
//! Each round trains the three regularizers on the current latent codes and
//! reconstructions, freezes them, then trains encoder and decoder on the
//! combined objective with gradients flowing through the frozen heads.

use serde::{Deserialize, Serialize};

use super::fit::{add_l2, classifier_metrics, epoch_batches, fit_classifier, guarded, reduce, Dataset, CHUNK};
use super::loss::{cross_entropy_with_grad, identity_loss_with_grad, LossComponents, TradeoffWeights};
use super::{Thresholds, TrainingMode, TrainingSchedule};
use crate::models::{build_models, ArchitectureConfig, ModelSet};
use crate::nnkernel::{
    chunk_ranges, mix_seed, numeric_gradient, predict_batched, probe_points, relative_error, update, volume, BackwardOptions,
    Gradients, Mode, OptimizerState, Tensor,
};
use crate::{exec, Error, Result};

const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub activity_f1: f64,
    pub identity_accuracy_enc: f64,
    pub identity_accuracy_dec: f64,
    pub mse: f64,
    /// Mean validation loss terms.
    pub losses: LossComponents,
    /// Mean training objective of the last AAE epoch.
    pub train_objective: f64,
}

impl RoundMetrics {
    pub fn identity_accuracy(&self) -> f64 {
        self.identity_accuracy_enc.max(self.identity_accuracy_dec)
    }

    /// Selection criterion: activity F1 minus the stronger identity head.
    pub fn score(&self) -> f64 {
        self.activity_f1 - self.identity_accuracy()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Both thresholds met.
    Converged,
    /// No score improvement within the patience window.
    Patience,
    /// Round budget exhausted.
    MaxRounds,
    /// Autoencoder-only mode has no adversarial rounds.
    Completed,
}

impl StopReason {
    pub fn non_convergence(self) -> bool {
        matches!(self, StopReason::Patience | StopReason::MaxRounds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(StopReason),
}

pub fn convergence_check(history: &[RoundMetrics], t: &Thresholds) -> Decision {
    let Some(last) = history.last() else {
        return Decision::Continue;
    };
    if last.identity_accuracy() <= t.identity_ceiling && last.activity_f1 >= t.activity_floor {
        return Decision::Stop(StopReason::Converged);
    }
    let mut best = 0;
    for (i, m) in history.iter().enumerate() {
        if m.score() > history[best].score() + 1e-12 {
            best = i;
        }
    }
    if t.patience > 0 && history.len() - 1 - best >= t.patience {
        return Decision::Stop(StopReason::Patience);
    }
    Decision::Continue
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial_validation_mse: f64,
    pub final_validation_mse: f64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub models: ModelSet,
    pub pretrain: PretrainReport,
    pub history: Vec<RoundMetrics>,
    /// Index into `history` of the returned models.
    pub best_round: usize,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn best(&self) -> &RoundMetrics {
        &self.history[self.best_round]
    }
}

/// Models plus one optimizer per model (encoder, decoder, three heads).
#[derive(Clone)]
struct Trainer {
    set: ModelSet,
    opt: [OptimizerState; 5],
}

impl Trainer {
    fn new(set: ModelSet, schedule: &TrainingSchedule) -> Self {
        let r = schedule.regularizer_optimizer();
        Trainer {
            set,
            opt: [schedule.optimizer(), schedule.optimizer(), r.clone(), r.clone(), r],
        }
    }

    fn halve_learning_rates(&mut self) {
        for o in &mut self.opt {
            o.learning_rate *= 0.5;
        }
    }
}

fn reconstruction_mse(set: &ModelSet, x: &Tensor) -> Result<f64> {
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let y = predict_batched(&set.encoder, x, PREDICT_CHUNK)?;
    let xr = predict_batched(&set.decoder, &y, PREDICT_CHUNK)?;
    Ok(xr.values().iter().zip(x.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Which heads enter the anonymizer objective.
#[derive(Clone, Copy)]
struct HeadMask {
    enc: bool,
    dec: bool,
    act: bool,
}

impl HeadMask {
    fn for_mode(mode: TrainingMode, w: &TradeoffWeights) -> Self {
        let id = w.beta_i > 0.0;
        match mode {
            TrainingMode::Full => HeadMask {
                enc: id && w.identity_heads[0] > 0.0,
                dec: id && w.identity_heads[1] > 0.0,
                act: w.beta_a > 0.0,
            },
            TrainingMode::RepOnly => HeadMask {
                enc: id && w.identity_heads[0] > 0.0,
                dec: false,
                act: false,
            },
            TrainingMode::AutoencoderOnly => HeadMask { enc: false, dec: false, act: false },
        }
    }
}

/// Maximum relative error between the encoder/decoder gradients of the full
/// anonymizer objective (all three heads, L2 included) and central
/// differences. Entries whose derivative is at f32 round-off scale are skipped.
pub fn objective_gradient_check(set: &ModelSet, data: &Dataset, w: &TradeoffWeights, epsilon: f64) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let heads = HeadMask { enc: true, dec: true, act: true };
    let objective = |s: &ModelSet| -> Result<f64> {
        let (c, _, _) = anonymizer_gradients(s, data, &idx, w, heads)?;
        Ok(c.combine(w) + s.encoder.l2_penalty() + s.decoder.l2_penalty())
    };
    let (_, ge, gd) = anonymizer_gradients(set, data, &idx, w, heads)?;
    let mut worst: f64 = 0.0;
    for (decoder, grads) in [(false, &ge), (true, &gd)] {
        let model = if decoder { &set.decoder } else { &set.encoder };
        let probes = probe_points(model, 2);
        let mut probe_set = set.clone();
        let mut m = model.clone();
        let numeric = numeric_gradient(&mut m, &probes, epsilon, |g| {
            if decoder {
                probe_set.decoder = g.clone();
            } else {
                probe_set.encoder = g.clone();
            }
            objective(&probe_set)
        })?;
        for (&(p, e), n) in probes.iter().zip(&numeric) {
            let a = grads.params[p].values()[e];
            if a.abs().max(n.abs()) > 1e-6 {
                worst = worst.max(relative_error(a, *n));
            }
        }
    }
    Ok(worst)
}

/// Objective value and encoder/decoder gradients over one minibatch.
fn anonymizer_gradients(
    set: &ModelSet,
    data: &Dataset,
    idx: &[usize],
    w: &TradeoffWeights,
    heads: HeadMask,
) -> Result<(LossComponents, Gradients, Gradients)> {
    let n = idx.len();
    let nf = n as f64;
    let n_users = volume(set.enc_reg.output_dims());
    let n_acts = volume(set.act_reg.output_dims());
    let input_only = BackwardOptions { params: false, input: true, l2: false };
    let parts = exec::try_map(&chunk_ranges(n, CHUNK), |r| -> Result<(LossComponents, Gradients, Gradients)> {
        let rows = &idx[r.clone()];
        let x = data.x.select_rows(rows);
        let (y, c_enc) = set.encoder.forward(&x, Mode::Train, 0)?;
        let (xr, c_dec) = set.decoder.forward(&y, Mode::Train, 0)?;
        let mut comps = LossComponents::default();

        let per = x.row_len();
        let mut g_xr: Vec<f64> = Vec::with_capacity(xr.len());
        for (a, b) in xr.values().iter().zip(x.values()) {
            g_xr.push(w.beta_d * 2.0 * (a - b) / (per as f64 * nf));
        }
        comps.distortion = xr.values().iter().zip(x.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / per as f64;

        let mut g_y = vec![0.0; y.len()];
        if heads.enc {
            let (p, cache) = set.enc_reg.forward(&y, Mode::Inference, 0)?;
            let mut g = vec![0.0; p.len()];
            for (i, &s) in rows.iter().enumerate() {
                let span = i * n_users..(i + 1) * n_users;
                comps.identity_enc += identity_loss_with_grad(data.users[s], &p.values()[span.clone()], &mut g[span]);
            }
            let scale = w.beta_i * w.identity_heads[0] / nf;
            g.iter_mut().for_each(|v| *v *= scale);
            let back = set.enc_reg.backward_with(&cache, &Tensor::new(p.shape().to_vec(), g)?, input_only)?;
            g_y = back.input.expect("input gradient").into_values();
        }
        if heads.dec {
            let (p, cache) = set.dec_reg.forward(&xr, Mode::Inference, 0)?;
            let mut g = vec![0.0; p.len()];
            for (i, &s) in rows.iter().enumerate() {
                let span = i * n_users..(i + 1) * n_users;
                comps.identity_dec += identity_loss_with_grad(data.users[s], &p.values()[span.clone()], &mut g[span]);
            }
            let scale = w.beta_i * w.identity_heads[1] / nf;
            g.iter_mut().for_each(|v| *v *= scale);
            let back = set.dec_reg.backward_with(&cache, &Tensor::new(p.shape().to_vec(), g)?, input_only)?;
            for (a, b) in g_xr.iter_mut().zip(back.input.expect("input gradient").values()) {
                *a += b;
            }
        }
        if heads.act {
            let (p, cache) = set.act_reg.forward(&xr, Mode::Inference, 0)?;
            let mut g = vec![0.0; p.len()];
            for (i, &s) in rows.iter().enumerate() {
                let span = i * n_acts..(i + 1) * n_acts;
                comps.activity += cross_entropy_with_grad(data.activities[s], &p.values()[span.clone()], &mut g[span]);
            }
            let scale = w.beta_a / nf;
            g.iter_mut().for_each(|v| *v *= scale);
            let back = set.act_reg.backward_with(&cache, &Tensor::new(p.shape().to_vec(), g)?, input_only)?;
            for (a, b) in g_xr.iter_mut().zip(back.input.expect("input gradient").values()) {
                *a += b;
            }
        }

        let no_l2 = BackwardOptions { params: true, input: true, l2: false };
        let dec = set.decoder.backward_with(&c_dec, &Tensor::new(xr.shape().to_vec(), g_xr)?, no_l2)?;
        for (a, b) in g_y.iter_mut().zip(dec.input.as_ref().expect("input gradient").values()) {
            *a += b;
        }
        let params_only = BackwardOptions { params: true, input: false, l2: false };
        let enc = set.encoder.backward_with(&c_enc, &Tensor::new(y.shape().to_vec(), g_y)?, params_only)?;
        Ok((comps, enc, dec))
    })?;
    let mut comps = LossComponents::default();
    let (mut encs, mut decs) = (Vec::new(), Vec::new());
    for (c, e, d) in parts {
        comps.add(&c);
        encs.push(e);
        decs.push(d);
    }
    let mut enc = reduce(encs);
    let mut dec = reduce(decs);
    add_l2(&mut enc, &set.encoder);
    add_l2(&mut dec, &set.decoder);
    Ok((comps.scaled(1.0 / nf), enc, dec))
}

/// Trains encoder and decoder for `epochs`; returns the mean objective of
/// each epoch.
fn anonymizer_epochs(
    tr: &mut Trainer,
    data: &Dataset,
    w: &TradeoffWeights,
    heads: HeadMask,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for idx in epoch_batches(data.len(), batch_size, seed, epoch) {
            let (comps, ge, gd) = anonymizer_gradients(&tr.set, data, &idx, w, heads)?;
            let objective = comps.combine(w) + tr.set.encoder.l2_penalty() + tr.set.decoder.l2_penalty();
            if !objective.is_finite() {
                return Err(Error::Divergence(format!("anonymizer objective is {objective} at epoch {epoch}")));
            }
            let [oe, od, ..] = &mut tr.opt;
            update(&mut tr.set.encoder, &ge, oe)?;
            update(&mut tr.set.decoder, &gd, od)?;
            total += objective * idx.len() as f64;
        }
        out.push(total / data.len().max(1) as f64);
    }
    Ok(out)
}

fn pretrain_with(tr: &mut Trainer, train: &Tensor, validation: &Tensor, schedule: &TrainingSchedule) -> Result<PretrainReport> {
    let initial = reconstruction_mse(&tr.set, validation)?;
    let data = Dataset::new(train.clone(), vec![0; train.rows()], vec![0; train.rows()])?;
    let w = TradeoffWeights::new(0.0, 0.0, 1.0);
    let none = HeadMask { enc: false, dec: false, act: false };
    let seed = mix_seed(schedule.seed, 0x5052_4554);
    let epoch_losses = guarded(tr, Trainer::halve_learning_rates, |t| {
        anonymizer_epochs(t, &data, &w, none, schedule.pretrain_epochs, schedule.batch_size, seed)
    })?;
    let final_validation_mse = reconstruction_mse(&tr.set, validation)?;
    log::info!("pretrain: validation mse {initial:.5} -> {final_validation_mse:.5}");
    Ok(PretrainReport {
        initial_validation_mse: initial,
        final_validation_mse,
        epoch_losses,
    })
}

/// Trains the autoencoder on reconstruction alone.
pub fn pretrain_autoencoder(
    set: &mut ModelSet,
    train: &Tensor,
    validation: &Tensor,
    schedule: &TrainingSchedule,
) -> Result<PretrainReport> {
    let mut tr = Trainer::new(set.clone(), schedule);
    let report = pretrain_with(&mut tr, train, validation, schedule)?;
    *set = tr.set;
    Ok(report)
}

fn regularizer_phase(
    tr: &mut Trainer,
    y: &Tensor,
    x_rec: &Tensor,
    data: &Dataset,
    schedule: &TrainingSchedule,
    round: usize,
) -> Result<[Vec<f64>; 3]> {
    tr.set.encoder.freeze();
    tr.set.decoder.freeze();
    let seed = |k: u64| mix_seed(mix_seed(schedule.seed, 0x5245_4700 + k), round as u64);
    let (e, b) = (schedule.regularizer_epochs, schedule.batch_size);
    let result = (|| {
        let [_, _, o_enc, o_dec, o_act] = &mut tr.opt;
        let enc = fit_classifier(&mut tr.set.enc_reg, o_enc, y, &data.users, e, b, seed(0))?;
        let dec = fit_classifier(&mut tr.set.dec_reg, o_dec, x_rec, &data.users, e, b, seed(1))?;
        let act = fit_classifier(&mut tr.set.act_reg, o_act, x_rec, &data.activities, e, b, seed(2))?;
        Ok([enc, dec, act])
    })();
    tr.set.encoder.unfreeze();
    tr.set.decoder.unfreeze();
    result
}

/// Fits EncReg on `(Y, U)`, DecReg on `(X′, U)` and ActReg on `(X′, T)`
/// with the encoder and decoder held fixed.
pub fn train_regularizers(set: &mut ModelSet, train: &Dataset, schedule: &TrainingSchedule) -> Result<[Vec<f64>; 3]> {
    let y = predict_batched(&set.encoder, &train.x, PREDICT_CHUNK)?;
    let x_rec = predict_batched(&set.decoder, &y, PREDICT_CHUNK)?;
    let mut tr = Trainer::new(set.clone(), schedule);
    let losses = guarded(&mut tr, Trainer::halve_learning_rates, |t| regularizer_phase(t, &y, &x_rec, train, schedule, 0))?;
    *set = tr.set;
    Ok(losses)
}

fn round_metrics(set: &ModelSet, val: &Dataset, round: usize, train_objective: f64) -> Result<RoundMetrics> {
    let y = predict_batched(&set.encoder, &val.x, PREDICT_CHUNK)?;
    let xr = predict_batched(&set.decoder, &y, PREDICT_CHUNK)?;
    let enc = classifier_metrics(&set.enc_reg, &y, &val.users)?;
    let dec = classifier_metrics(&set.dec_reg, &xr, &val.users)?;
    let act = classifier_metrics(&set.act_reg, &xr, &val.activities)?;
    let pe = predict_batched(&set.enc_reg, &y, PREDICT_CHUNK)?;
    let pd = predict_batched(&set.dec_reg, &xr, PREDICT_CHUNK)?;
    let pa = predict_batched(&set.act_reg, &xr, PREDICT_CHUNK)?;
    let (nu, na, per) = (pe.row_len(), pa.row_len(), val.x.row_len());
    let mut sum = LossComponents::default();
    let mut scratch = vec![0.0; nu.max(na)];
    for i in 0..val.len() {
        let x = val.x.row(i);
        let r = xr.row(i);
        sum.add(&LossComponents {
            identity_enc: identity_loss_with_grad(val.users[i], &pe.values()[i * nu..(i + 1) * nu], &mut scratch[..nu]),
            identity_dec: identity_loss_with_grad(val.users[i], &pd.values()[i * nu..(i + 1) * nu], &mut scratch[..nu]),
            activity: cross_entropy_with_grad(val.activities[i], &pa.values()[i * na..(i + 1) * na], &mut scratch[..na]),
            distortion: x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / per as f64,
        });
    }
    let losses = sum.scaled(1.0 / val.len().max(1) as f64);
    Ok(RoundMetrics {
        round,
        activity_f1: act.macro_f1,
        identity_accuracy_enc: enc.accuracy,
        identity_accuracy_dec: dec.accuracy,
        mse: losses.distortion,
        losses,
        train_objective,
    })
}

/// Adversarial rounds starting from an (already pretrained) model set.
pub fn adversarial_rounds(
    set: ModelSet,
    pretrain: PretrainReport,
    train: &Dataset,
    validation: &Dataset,
    schedule: &TrainingSchedule,
    w: &TradeoffWeights,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    w.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let mut tr = Trainer::new(set, schedule);
    let heads = HeadMask::for_mode(schedule.mode, w);
    let mut history = Vec::new();

    // The first round's regularizers see raw windows as X′.
    let mut y = predict_batched(&tr.set.encoder, &train.x, PREDICT_CHUNK)?;
    let mut x_rec = train.x.clone();

    if schedule.mode == TrainingMode::AutoencoderOnly {
        x_rec = predict_batched(&tr.set.decoder, &y, PREDICT_CHUNK)?;
        guarded(&mut tr, Trainer::halve_learning_rates, |t| regularizer_phase(t, &y, &x_rec, train, schedule, 0))?;
        history.push(round_metrics(&tr.set, validation, 0, f64::NAN)?);
        return Ok(TrainOutcome {
            models: tr.set,
            pretrain,
            history,
            best_round: 0,
            stop: StopReason::Completed,
        });
    }

    let mut best: Option<(usize, ModelSet)> = None;
    let mut stop = StopReason::MaxRounds;
    for round in 0..schedule.max_rounds {
        guarded(&mut tr, Trainer::halve_learning_rates, |t| regularizer_phase(t, &y, &x_rec, train, schedule, round))?;

        for g in [&mut tr.set.enc_reg, &mut tr.set.dec_reg, &mut tr.set.act_reg] {
            g.freeze();
        }
        let seed = mix_seed(mix_seed(schedule.seed, 0x4141_4500), round as u64);
        let phase = guarded(&mut tr, Trainer::halve_learning_rates, |t| {
            anonymizer_epochs(t, train, w, heads, schedule.aae_epochs, schedule.batch_size, seed)
        });
        for g in [&mut tr.set.enc_reg, &mut tr.set.dec_reg, &mut tr.set.act_reg] {
            g.unfreeze();
        }
        let objective = *phase?.last().expect("at least one epoch");

        y = predict_batched(&tr.set.encoder, &train.x, PREDICT_CHUNK)?;
        x_rec = predict_batched(&tr.set.decoder, &y, PREDICT_CHUNK)?;

        let m = round_metrics(&tr.set, validation, round, objective)?;
        log::info!(
            "round {round}: act F1 {:.3}, id acc enc {:.3} dec {:.3}, mse {:.4}",
            m.activity_f1,
            m.identity_accuracy_enc,
            m.identity_accuracy_dec,
            m.mse
        );
        let improved = best.as_ref().is_none_or(|(b, _)| m.score() > history[*b].score() + 1e-12);
        history.push(m);
        let decision = convergence_check(&history, &schedule.thresholds);
        if improved || decision == Decision::Stop(StopReason::Converged) {
            best = Some((round, tr.set.clone()));
        }
        if let Decision::Stop(reason) = decision {
            stop = reason;
            break;
        }
    }
    let (best_round, models) = best.expect("at least one round");
    if stop.non_convergence() {
        log::warn!("training stopped without convergence ({stop:?}); returning round {best_round}");
    }
    Ok(TrainOutcome {
        models,
        pretrain,
        history,
        best_round,
        stop,
    })
}

/// Builds, pretrains and adversarially trains a model set.
pub fn train_aae(
    cfg: &ArchitectureConfig,
    train: &Dataset,
    validation: &Dataset,
    schedule: &TrainingSchedule,
    w: &TradeoffWeights,
) -> Result<TrainOutcome> {
    let (set, pretrain) = pretrained_models(cfg, train, validation, schedule)?;
    adversarial_rounds(set, pretrain, train, validation, schedule, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub beta_i: Vec<f64>,
    pub beta_a: Vec<f64>,
    pub beta_d: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            beta_i: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            beta_a: vec![1.0],
            beta_d: vec![1.0],
        }
    }
}

impl SweepGrid {
    pub fn points(&self) -> Vec<TradeoffWeights> {
        let mut out = Vec::new();
        for &bi in &self.beta_i {
            for &ba in &self.beta_a {
                for &bd in &self.beta_d {
                    out.push(TradeoffWeights::new(bi, ba, bd));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weights: TradeoffWeights,
    pub best: RoundMetrics,
    pub stop: StopReason,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub selected: usize,
    pub outcome: TrainOutcome,
}

/// Builds and pretrains a model set; the shared start of every run.
pub fn pretrained_models(
    cfg: &ArchitectureConfig,
    train: &Dataset,
    validation: &Dataset,
    schedule: &TrainingSchedule,
) -> Result<(ModelSet, PretrainReport)> {
    let mut set = build_models(cfg, mix_seed(schedule.seed, 0x4255_494C))?;
    let pretrain = pretrain_autoencoder(&mut set, &train.x, &validation.x, schedule)?;
    Ok((set, pretrain))
}

/// Trains one anonymizer per grid point from a shared pretrained start and
/// keeps the one with the best validation score (first on ties).
pub fn sweep(
    cfg: &ArchitectureConfig,
    train: &Dataset,
    validation: &Dataset,
    schedule: &TrainingSchedule,
    grid: &SweepGrid,
) -> Result<SweepResult> {
    if grid.points().is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let (set, pretrain) = pretrained_models(cfg, train, validation, schedule)?;
    sweep_from(&set, &pretrain, train, validation, schedule, grid)
}

/// [`sweep`] starting from an already pretrained model set.
pub fn sweep_from(
    set: &ModelSet,
    pretrain: &PretrainReport,
    train: &Dataset,
    validation: &Dataset,
    schedule: &TrainingSchedule,
    grid: &SweepGrid,
) -> Result<SweepResult> {
    let weights = grid.points();
    if weights.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut points = Vec::new();
    let mut chosen: Option<(usize, TrainOutcome)> = None;
    for (i, w) in weights.iter().enumerate() {
        log::info!("sweep point {i}: {w:?}");
        let outcome = adversarial_rounds(set.clone(), pretrain.clone(), train, validation, schedule, w)?;
        points.push(SweepPoint {
            weights: *w,
            best: outcome.best().clone(),
            stop: outcome.stop,
        });
        let better = chosen.as_ref().is_none_or(|(_, c)| outcome.best().score() > c.best().score() + 1e-12);
        if better {
            chosen = Some((i, outcome));
        }
    }
    let (selected, outcome) = chosen.expect("non-empty grid");
    Ok(SweepResult { points, selected, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassifierConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metrics(id: f64, f1: f64) -> RoundMetrics {
        RoundMetrics {
            round: 0,
            activity_f1: f1,
            identity_accuracy_enc: id,
            identity_accuracy_dec: id,
            mse: 0.1,
            losses: LossComponents::default(),
            train_objective: 0.0,
        }
    }

    #[test]
    fn convergence_rules() {
        let t = Thresholds { identity_ceiling: 0.10, activity_floor: 0.90, patience: 3 };
        assert_eq!(convergence_check(&[metrics(0.05, 0.93)], &t), Decision::Stop(StopReason::Converged));
        assert_eq!(convergence_check(&[metrics(0.50, 0.93)], &t), Decision::Continue);
        let flat = vec![metrics(0.5, 0.8); 4];
        let d = convergence_check(&flat, &t);
        assert_eq!(d, Decision::Stop(StopReason::Patience));
        assert!(matches!(d, Decision::Stop(r) if r.non_convergence()));
        assert_eq!(convergence_check(&flat[..3], &t), Decision::Continue);
        let mut improving = flat.clone();
        improving[3] = metrics(0.4, 0.8);
        assert_eq!(convergence_check(&improving, &t), Decision::Continue);
    }

    pub(crate) fn tiny_cfg(users: usize, acts: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            input_channels: 2,
            window: 16,
            latent_length: 8,
            encoder_filters: vec![2],
            encoder_kernel: 3,
            pool: 2,
            autoencoder_l2: 0.0,
            classifier: ClassifierConfig {
                filters: vec![3],
                kernel_width: 3,
                dense_units: 6,
                dropout: 0.25,
                l2: 1e-3,
            },
            num_users: users,
            num_activities: acts,
        }
    }

    /// Users differ by DC offset, activities by frequency.
    pub(crate) fn toy_dataset(per_cell: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut values, mut users, mut acts) = (Vec::new(), Vec::new(), Vec::new());
        for u in 0..2 {
            for a in 0..2 {
                for _ in 0..per_cell {
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    let freq = if a == 0 { 1.0 } else { 4.0 };
                    for ch in 0..2 {
                        for t in 0..16 {
                            let s = (freq * std::f64::consts::TAU * t as f64 / 16.0 + phase + ch as f64).sin();
                            values.push(s + if u == 0 { -1.0 } else { 1.0 } + rng.gen_range(-0.05..0.05));
                        }
                    }
                    users.push(u);
                    acts.push(a);
                }
            }
        }
        let n = users.len();
        Dataset::new(Tensor::new(vec![n, 1, 2, 16], values).unwrap(), users, acts).unwrap()
    }

    fn quick_schedule() -> TrainingSchedule {
        TrainingSchedule {
            pretrain_epochs: 3,
            regularizer_epochs: 2,
            aae_epochs: 2,
            max_rounds: 2,
            batch_size: 16,
            seed: 5,
            learning_rate: 5e-3,
            regularizer_learning_rate: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn objective_gradient_through_frozen_heads_matches_differences() {
        let mut cfg = tiny_cfg(2, 2);
        cfg.autoencoder_l2 = 1e-3;
        let mut set = build_models(&cfg, 3).unwrap();
        for g in [&mut set.enc_reg, &mut set.dec_reg, &mut set.act_reg] {
            g.freeze();
        }
        let data = toy_dataset(2, 1);
        let w = TradeoffWeights::new(0.7, 1.3, 0.4);
        let worst = objective_gradient_check(&set, &data, &w, 1e-4).unwrap();
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_pretraining_epochs_leave_parameters_unchanged() {
        let mut set = build_models(&tiny_cfg(2, 2), 1).unwrap();
        let before = set.clone();
        let data = toy_dataset(4, 0);
        let s = TrainingSchedule { pretrain_epochs: 0, ..quick_schedule() };
        pretrain_autoencoder(&mut set, &data.x, &data.x, &s).unwrap();
        assert_eq!(set, before);
    }

    #[test]
    fn pretraining_reduces_validation_error() {
        let mut set = build_models(&tiny_cfg(2, 2), 1).unwrap();
        let train = toy_dataset(16, 0);
        let val = toy_dataset(4, 9);
        let r = pretrain_autoencoder(&mut set, &train.x, &val.x, &quick_schedule()).unwrap();
        assert!(r.final_validation_mse < r.initial_validation_mse);
    }

    #[test]
    fn constant_zero_data_is_reconstructed_exactly() {
        let mut set = build_models(&tiny_cfg(2, 2), 1).unwrap();
        let x = Tensor::zeros(vec![64, 1, 2, 16]);
        let s = TrainingSchedule { pretrain_epochs: 150, learning_rate: 1e-2, ..quick_schedule() };
        let r = pretrain_autoencoder(&mut set, &x, &x, &s).unwrap();
        assert!(r.final_validation_mse < 1e-6, "{}", r.final_validation_mse);
    }

    #[test]
    fn regularizer_phase_isolates_autoencoder() {
        let mut set = build_models(&tiny_cfg(2, 2), 1).unwrap();
        let (enc, dec) = (set.encoder.clone(), set.decoder.clone());
        let data = toy_dataset(8, 0);
        train_regularizers(&mut set, &data, &quick_schedule()).unwrap();
        assert_eq!(set.encoder, enc);
        assert_eq!(set.decoder, dec);
    }

    #[test]
    fn constant_user_windows_are_separable() {
        let mut cfg = tiny_cfg(2, 2);
        cfg.classifier.dropout = 0.0;
        cfg.classifier.filters = vec![8];
        cfg.classifier.dense_units = 16;
        let mut set = build_models(&cfg, 1).unwrap();
        let n = 64;
        let values = (0..n).flat_map(|i| std::iter::repeat((i % 2) as f64).take(32)).collect();
        let x = Tensor::new(vec![n, 1, 2, 16], values).unwrap();
        let users: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut opt = OptimizerState::adam(1e-2);
        fit_classifier(&mut set.dec_reg, &mut opt, &x, &users, 20, 16, 0).unwrap();
        assert_eq!(classifier_metrics(&set.dec_reg, &x, &users).unwrap().accuracy, 1.0);
    }

    #[test]
    fn shuffled_identities_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, classes) = (2400, 6);
        let values = (0..n * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![n, 1, 2, 16], values).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let mut set = build_models(&tiny_cfg(classes, 2), 1).unwrap();
        let mut opt = OptimizerState::adam(1e-3);
        fit_classifier(&mut set.dec_reg, &mut opt, &x, &labels, 1, 64, 0).unwrap();
        let acc = classifier_metrics(&set.dec_reg, &x, &labels).unwrap().accuracy;
        assert!((acc - 1.0 / classes as f64).abs() < 0.06, "{acc}");
    }

    #[test]
    fn frozen_heads_are_untouched_by_the_anonymizer_phase() {
        let cfg = tiny_cfg(2, 2);
        let mut tr = Trainer::new(build_models(&cfg, 2).unwrap(), &quick_schedule());
        let data = toy_dataset(4, 0);
        for g in [&mut tr.set.enc_reg, &mut tr.set.dec_reg, &mut tr.set.act_reg] {
            g.freeze();
        }
        let before = [tr.set.enc_reg.clone(), tr.set.dec_reg.clone(), tr.set.act_reg.clone()];
        let enc = tr.set.encoder.clone();
        let heads = HeadMask { enc: true, dec: true, act: true };
        anonymizer_epochs(&mut tr, &data, &TradeoffWeights::default(), heads, 2, 8, 0).unwrap();
        assert_eq!([tr.set.enc_reg.clone(), tr.set.dec_reg.clone(), tr.set.act_reg.clone()], before);
        assert_ne!(tr.set.encoder, enc);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let cfg = tiny_cfg(2, 2);
        let train = toy_dataset(8, 0);
        let val = toy_dataset(3, 1);
        let s = quick_schedule();
        let a = train_aae(&cfg, &train, &val, &s, &TradeoffWeights::default()).unwrap();
        let b = train_aae(&cfg, &train, &val, &s, &TradeoffWeights::default()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.models, b.models);
        assert!(!a.history.is_empty() && a.history.len() <= s.max_rounds);
    }

    #[test]
    fn distortion_dominated_objective_keeps_reconstruction() {
        let cfg = tiny_cfg(2, 2);
        let train = toy_dataset(16, 0);
        let val = toy_dataset(4, 1);
        let s = quick_schedule();
        let w = TradeoffWeights::new(0.01, 0.01, 100.0);
        let out = train_aae(&cfg, &train, &val, &s, &w).unwrap();
        let after = reconstruction_mse(&out.models, &val.x).unwrap();
        assert!(after <= out.pretrain.final_validation_mse * 1.1, "{after} vs {}", out.pretrain.final_validation_mse);
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let cfg = tiny_cfg(2, 2);
        let d = toy_dataset(2, 0);
        let w = TradeoffWeights::new(0.0, 0.0, 0.0);
        assert!(matches!(train_aae(&cfg, &d, &d, &quick_schedule(), &w), Err(Error::Config(_))));
    }
}
