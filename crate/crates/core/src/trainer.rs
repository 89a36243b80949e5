//! Relative-L2 objective, Adam, and the seeded epoch loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{augment_systems, SystemRecord, TrainSample};
use crate::error::{Error, Result};
use crate::model::{kernel_on_tape, predict_on_tape, Checkpoint, NipsModel};
use crate::randfield::split_seed;
use crate::tensor::{peak_alloc_bytes, reset_peak_alloc, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// The rate is multiplied by `lr_decay` every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Permutation draws per training system.
    pub n_rand: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            weight_decay: 0.0,
            epochs: 100,
            batch_size: 8,
            lr_decay: 0.5,
            lr_decay_every: 100,
            n_rand: 25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps_adam > 0.0) {
            return Err(Error::Config("need lr > 0, 0 < beta1, beta2 < 1, eps > 0".into()));
        }
        if self.batch_size == 0 || self.n_rand == 0 || self.lr_decay_every == 0 {
            return Err(Error::Config("batch_size, n_rand and lr_decay_every must be positive".into()));
        }
        if !(self.lr_decay > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr_decay must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Mean over columns of `‖pred_j − target_j‖ / ‖target_j‖` on the tape.
pub fn relative_l2_on_tape(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    let tv = tape.constant(target.clone());
    let inv = inverse_column_norms(target)?;
    let diff = tape.sub(pred, tv)?;
    let num = tape.col_norms(diff)?;
    let w = tape.constant(inv);
    let ratios = tape.mul(num, w)?;
    Ok(tape.mean(ratios))
}

fn inverse_column_norms(target: &Tensor) -> Result<Tensor> {
    let (r, c) = target.dims2()?;
    let mut sq = vec![0.0; c];
    for i in 0..r {
        for (j, s) in sq.iter_mut().enumerate() {
            *s += target.data()[i * c + j].powi(2);
        }
    }
    if let Some(j) = sq.iter().position(|&s| s == 0.0) {
        return Err(Error::contract(format!("target column {j} has zero norm")));
    }
    Tensor::new(&[c], sq.into_iter().map(|s| 1.0 / s.sqrt()).collect())
}

/// Relative L2 error; the `h²` quadrature weight cancels in the ratio.
pub fn relative_l2_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let l = relative_l2_on_tape(&mut tape, p, target)?;
    tape.value(l).item()
}

/// Bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }
}

pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &TrainConfig, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::contract("parameter, gradient and state counts differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::dim(format!("state shape {:?} vs parameter {:?}", m.shape(), p.shape())));
        }
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for k in 0..pd.len() {
            let gk = g.data()[k] + cfg.weight_decay * pd[k];
            md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gk;
            vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gk * gk;
            pd[k] -= lr * (md[k] / c1) / ((vd[k] / c2).sqrt() + cfg.eps_adam);
        }
    }
    Ok(())
}

/// Loss of one sample: the kernel built from its `d` pairs predicts them all.
pub fn sample_loss_and_grads(model: &NipsModel, g: &Tensor, u: &Tensor, want_grads: bool) -> Result<(f64, Option<Vec<Tensor>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, want_grads);
    let gv = tape.constant(g.clone());
    let uv = tape.constant(u.clone());
    let (a, b) = kernel_on_tape(&mut tape, &model.cfg, &bound, gv, uv)?;
    let pred = predict_on_tape(&mut tape, &model.cfg, a, b, gv)?;
    let loss = relative_l2_on_tape(&mut tape, pred, u)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Diagnostic(format!(
            "non-finite loss; max |K factor| = {:.3e}, {:.3e}",
            tape.value(a).max_abs(),
            tape.value(b).max_abs()
        )));
    }
    if !want_grads {
        return Ok((value, None));
    }
    let mut grads = tape.backward(loss)?;
    let out = bound
        .vars()
        .into_iter()
        .zip(model.tensors())
        .map(|(v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, Some(out)))
}

fn record_for<'a>(systems: &'a [SystemRecord], s: &TrainSample) -> Result<&'a SystemRecord> {
    systems
        .iter()
        .find(|r| r.system_id == s.system_id)
        .ok_or_else(|| Error::contract(format!("sample refers to unknown system {}", s.system_id)))
}

/// Mean loss and mean gradient over a set of samples.
pub fn batch_loss_and_grads(
    model: &NipsModel,
    samples: &[TrainSample],
    systems: &[SystemRecord],
) -> Result<(f64, Vec<Tensor>)> {
    let mut total = 0.0;
    let mut acc: Vec<Tensor> = model.tensors().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for s in samples {
        let (g, u) = s.materialize(record_for(systems, s)?)?;
        let (l, grads) = sample_loss_and_grads(model, &g, &u, true).map_err(|e| e.in_system(s.system_id))?;
        total += l;
        for (a, g) in acc.iter_mut().zip(grads.expect("requested")) {
            a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
        }
    }
    let w = 1.0 / samples.len().max(1) as f64;
    Ok((total * w, acc.into_iter().map(|a| a.scale(w)).collect()))
}

pub fn mean_loss(model: &NipsModel, samples: &[TrainSample], systems: &[SystemRecord]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let (g, u) = s.materialize(record_for(systems, s)?)?;
        total += sample_loss_and_grads(model, &g, &u, false).map_err(|e| e.in_system(s.system_id))?.0;
    }
    Ok(total / samples.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based; zero is the untrained model.
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub time_s: f64,
    pub peak_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub samples: usize,
    pub params: usize,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,time_s,peak_bytes\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{:.16e},{:.16e},{}\n", r.epoch, r.loss, r.time_s, r.peak_bytes));
        }
        out
    }
}

/// Training state that checkpoints and resumes bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: NipsModel,
    pub cfg: TrainConfig,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Loss of the untrained model followed by each epoch's mean loss.
    pub history: Vec<f64>,
}

impl Trainer {
    pub fn new(model: NipsModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.check_shapes()?;
        let adam = AdamState::new(&model.tensors());
        Ok(Trainer { model, cfg, adam, epoch: 0, history: Vec::new() })
    }

    pub fn samples(&self, systems: &[SystemRecord]) -> Result<Vec<TrainSample>> {
        augment_systems(systems, self.model.cfg.d, self.cfg.n_rand, self.cfg.seed)
    }

    /// One pass over all samples in a seeded order with a step per batch.
    pub fn run_epoch(&mut self, samples: &[TrainSample], systems: &[SystemRecord]) -> Result<EpochRecord> {
        let start = Instant::now();
        reset_peak_alloc();
        let lr = self.cfg.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed(self.cfg.seed, self.epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grads) = batch_loss_and_grads(&self.model, &batch, systems)?;
            total += loss * batch.len() as f64;
            adam_step(&mut self.model.tensors_mut(), &grads, &mut self.adam, &self.cfg, lr)?;
        }
        self.epoch += 1;
        let loss = total / samples.len().max(1) as f64;
        self.history.push(loss);
        Ok(EpochRecord { epoch: self.epoch, loss, lr, time_s: start.elapsed().as_secs_f64(), peak_bytes: peak_alloc_bytes() })
    }

    /// Trains until `cfg.epochs` epochs are complete, calling `on_epoch`
    /// after each one (for checkpointing and logging).
    pub fn fit(
        &mut self,
        systems: &[SystemRecord],
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<TrainReport> {
        let samples = self.samples(systems)?;
        if samples.is_empty() {
            return Err(Error::contract("no training samples"));
        }
        if self.history.is_empty() {
            self.history.push(mean_loss(&self.model, &samples, systems)?);
        }
        let mut records = Vec::new();
        while self.epoch < self.cfg.epochs {
            let rec = self.run_epoch(&samples, systems)?;
            on_epoch(self, &rec)?;
            records.push(rec);
        }
        Ok(TrainReport {
            initial_loss: self.history[0],
            final_loss: *self.history.last().expect("initial loss recorded"),
            samples: samples.len(),
            params: self.model.param_count(),
            epochs: records,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            self.model.clone(),
            self.epoch,
            self.adam.step,
            self.history.clone(),
            vec![self.adam.m.clone(), self.adam.v.clone()],
            serde_json::json!({ "train": serde_json::to_value(&self.cfg)? }),
        ))
    }

    /// Restores a run; `cfg` may extend `epochs` but should otherwise match.
    pub fn from_checkpoint(ck: Checkpoint, cfg: Option<TrainConfig>) -> Result<Self> {
        let cfg = match cfg {
            Some(c) => c,
            None => serde_json::from_value(ck.header.extra.get("train").cloned().unwrap_or_default())
                .map_err(|e| Error::Format { offset: 12, reason: format!("checkpoint lacks a training config: {e}") })?,
        };
        cfg.validate()?;
        let mut state = ck.state.into_iter();
        let (m, v) = match (state.next(), state.next()) {
            (Some(m), Some(v)) => (m, v),
            _ => {
                let fresh = AdamState::new(&ck.model.tensors());
                (fresh.m, fresh.v)
            }
        };
        Ok(Trainer {
            model: ck.model,
            cfg,
            adam: AdamState { step: ck.header.optimizer_step, m, v },
            epoch: ck.header.epoch,
            history: ck.header.loss_history,
        })
    }
}
