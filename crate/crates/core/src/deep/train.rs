//! Deep SVDD training: standardization, center initialization, the
//! weight-decayed loss and Adam with a milestone learning-rate schedule.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{Network, NetworkSpec, TapeForward};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{DsvddModel, Standardization};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamFactory};
use crate::CVector;

/// Center coordinates smaller than this in magnitude are pushed out to it.
pub const CENTER_FLOOR: f64 = 0.1;

/// Rows per evaluation-mode chunk when embedding many cells.
pub(crate) const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs (0-based) from which the rate is multiplied by `lr_factor`.
    pub milestones: Vec<usize>,
    pub lr_factor: f64,
    /// Weight-decay coefficient β of the loss term `(β/2) Σ ‖W‖²`.
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 64,
            learning_rate: 1e-3,
            milestones: vec![5, 10],
            lr_factor: 0.1,
            weight_decay: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 2025,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.lr_factor > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate and factor must be positive, weight decay nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam moments must lie in [0, 1) and eps be positive".into());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("milestones {:?} must be strictly increasing", self.milestones));
        }
        if self.milestones.iter().any(|&e| e == 0 || e >= self.epochs) {
            return bad(format!("milestones {:?} must lie in 1..{}", self.milestones, self.epochs));
        }
        Ok(())
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.learning_rate * self.lr_factor.powi(passed as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Stacks standardized cells into a `(B, 2, m)` batch.
pub(crate) fn stack(cells: &[&CVector], norm: &Standardization) -> Result<Tensor> {
    let m = cells.first().ok_or(Error::EmptyInput("batch"))?.len();
    let mut data = Vec::with_capacity(cells.len() * 2 * m);
    for z in cells {
        if z.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: z.len() });
        }
        data.extend(z.as_slice().iter().map(|c| (c.re - norm.mean[0]) / norm.std[0]));
        data.extend(z.as_slice().iter().map(|c| (c.im - norm.mean[1]) / norm.std[1]));
    }
    Tensor::new(vec![cells.len(), 2, m], data)
}

/// Evaluation-mode embeddings of `cells`, computed in parallel chunks and
/// returned in input order.
pub(crate) fn embed_all(net: &Network, norm: &Standardization, cells: &[CVector]) -> Result<Vec<Tensor>> {
    cells
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<&CVector> = chunk.iter().collect();
            net.forward_eval(&stack(&refs, norm)?)
        })
        .collect()
}

/// Mean evaluation-mode embedding with small coordinates pushed to
/// `±CENTER_FLOOR` (zero goes to `+`).
pub fn init_center(net: &Network, norm: &Standardization, cells: &[CVector]) -> Result<Vec<f64>> {
    if cells.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    center_of(&embed_all(net, norm, cells)?, net.spec().embed_dim)
}

/// Clamped mean of the rows of `(B, d)` embedding chunks, summed in order.
pub fn center_of(chunks: &[Tensor], d: usize) -> Result<Vec<f64>> {
    let mut c = vec![0.0; d];
    let mut n = 0usize;
    for out in chunks {
        if out.shape().len() != 2 || out.shape()[1] != d {
            return Err(Error::InvalidData(format!("embedding chunk of shape {:?}", out.shape())));
        }
        for row in out.data().chunks(d) {
            for (acc, v) in c.iter_mut().zip(row) {
                *acc += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("embeddings"));
    }
    Ok(c.into_iter().map(|v| clamp_center(v / n as f64)).collect())
}

pub(crate) fn clamp_center(v: f64) -> f64 {
    if v.abs() >= CENTER_FLOOR {
        v
    } else if v < 0.0 {
        -CENTER_FLOOR
    } else {
        CENTER_FLOOR
    }
}

/// Records `(1/B) Σ ‖ψ(x_b) − c‖² + (β/2) Σ ‖W‖²` on `tape`.
pub fn record_loss(
    net: &Network,
    tape: &mut Tape,
    batch: Tensor,
    center: &[f64],
    beta: f64,
    train: bool,
) -> Result<(Var, TapeForward)> {
    let input = tape.leaf(batch);
    let fwd = net.forward_tape(tape, input, train)?;
    let dist = tape.mean_sq_dist(fwd.output, center)?;
    let penalty = tape.penalty(&fwd.params, beta);
    let loss = tape.add(dist, penalty)?;
    Ok((loss, fwd))
}

/// Value of the Deep SVDD loss on one standardized batch.
pub fn dsvdd_loss(net: &Network, batch: &Tensor, center: &[f64], beta: f64, train: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let (loss, _) = record_loss(net, &mut tape, batch.clone(), center, beta, train)?;
    Ok(tape.value(loss).item())
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Fits a Deep SVDD model on target-free cells.
pub fn train(spec: &NetworkSpec, cells: &[CVector], cfg: &TrainConfig) -> Result<DsvddModel> {
    cfg.validate()?;
    spec.validate()?;
    let m = cells.first().ok_or(Error::EmptyInput("training set"))?.len();
    spec.check_length(m)?;
    let norm = Standardization::fit(cells)?;
    let mut net = Network::init(spec, cfg.seed)?;
    let center = init_center(&net, &norm, cells)?;
    let mut adam = Adam::new(net.params());
    let shuffle = StreamFactory::new(cfg.seed);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut shuffle.stream(Domain::BatchShuffle, 0, epoch as u64));
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&CVector> = idx.iter().map(|&i| &cells[i]).collect();
            let batch = stack(&refs, &norm)?;
            let mut tape = Tape::new();
            let (loss, fwd) = record_loss(&net, &mut tape, batch, &center, cfg.weight_decay, true)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::TrainingFailure { epoch: epoch + 1, loss: value });
            }
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = fwd.params.iter().map(|&p| grads.take(p, &tape)).collect();
            net.update_running(&tape, &fwd);
            adam.step(net.params_mut(), &g, lr, cfg);
            total += value;
            batches += 1;
        }
        let mean_loss = total / batches as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingFailure { epoch: epoch + 1, loss: mean_loss });
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            mean_loss,
            lr,
        });
    }
    DsvddModel::new(net, center, norm, log)
}
