use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::{Gradients, Network, NoiseKey};
use crate::datasets::Dataset;
use crate::error::{Error, Result};

/// One evaluation record. The gap is derived from the two accuracies.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainMetrics {
    pub step: u64,
    pub epoch: usize,
    /// Mean training loss over the steps since the previous record.
    pub loss: f64,
    pub acc_relaxed: f64,
    pub acc_discrete: f64,
    pub wallclock_ms: u64,
    pub mode: String,
}

impl TrainMetrics {
    pub fn gap(&self) -> f64 {
        self.acc_relaxed - self.acc_discrete
    }
}

impl Serialize for TrainMetrics {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TrainMetrics", 8)?;
        st.serialize_field("step", &self.step)?;
        st.serialize_field("epoch", &self.epoch)?;
        st.serialize_field("loss", &self.loss)?;
        st.serialize_field("acc_relaxed", &self.acc_relaxed)?;
        st.serialize_field("acc_discrete", &self.acc_discrete)?;
        st.serialize_field("gap", &self.gap())?;
        st.serialize_field("wallclock_ms", &self.wallclock_ms)?;
        st.serialize_field("mode", &self.mode)?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Record cadence in steps; 0 records at the end of every epoch only.
    pub eval_every: u64,
    /// Stop after this many steps (across epochs).
    pub max_steps: Option<u64>,
    /// Record real elapsed time; when false `wallclock_ms` is 0 so runs are
    /// byte-reproducible.
    pub wallclock: bool,
    /// Record an evaluation before the first update.
    pub eval_at_start: bool,
}

impl TrainOptions {
    pub fn from_config(net: &Network) -> Self {
        Self {
            epochs: net.config.epochs,
            eval_every: net.config.eval_every,
            max_steps: None,
            wallclock: true,
            eval_at_start: true,
        }
    }
}

/// Adaptive moment estimation over every trainable tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier on `lr` for threshold parameters.
    pub encoder_lr_scale: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network) -> Self {
        let o = &net.config.optimizer;
        let mut shapes: Vec<usize> = net.layers.iter().map(|l| l.params.len()).collect();
        if let crate::encoder::Thresholds::Learnable { base, deltas } = net.encoder.thresholds() {
            shapes.push(base.len());
            shapes.push(deltas.len());
        }
        Self {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            encoder_lr_scale: net.config.encoder.effective_lr_scale(),
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.t += 1;
        let n = net.layers.len();
        for k in 0..n {
            let lr = self.lr;
            self.update(k, &mut net.layers[k].params, &grads.layers[k], lr);
        }
        let enc_lr = self.lr * self.encoder_lr_scale;
        if let Some((base, deltas)) = net.encoder.params_mut() {
            self.update(n, base, &grads.encoder.dbase, enc_lr);
            self.update(n + 1, deltas, &grads.encoder.ddeltas, enc_lr);
        }
    }
}

fn evaluate(
    net: &Network,
    val: &Dataset,
    step: u64,
    epoch: usize,
    loss: f64,
    started: Instant,
    opts: &TrainOptions,
) -> Result<TrainMetrics> {
    let acc_relaxed = net.relaxed_accuracy(val)?;
    let acc_discrete = net.discrete_accuracy(val)?;
    Ok(TrainMetrics {
        step,
        epoch,
        loss,
        acc_relaxed,
        acc_discrete,
        wallclock_ms: if opts.wallclock { started.elapsed().as_millis() as u64 } else { 0 },
        mode: net.config.mode_label(),
    })
}

/// Trains with minibatch Adam on softmax cross-entropy over GroupSum scores.
/// `sink` receives each record as it is produced, in step order.
pub fn train(
    net: &mut Network,
    train_set: &Dataset,
    val: &Dataset,
    opts: &TrainOptions,
    mut sink: impl FnMut(&TrainMetrics) -> Result<()>,
) -> Result<Vec<TrainMetrics>> {
    if train_set.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if train_set.feature_count != net.input_features() {
        return Err(Error::WidthMismatch {
            expected: net.input_features(),
            actual: train_set.feature_count,
        });
    }
    let started = Instant::now();
    let batch = net.config.optimizer.batch_size;
    let d = train_set.feature_count;
    let mut adam = Adam::new(net);
    let mut records = Vec::new();
    let mut emit = |m: TrainMetrics, records: &mut Vec<TrainMetrics>| -> Result<()> {
        sink(&m)?;
        records.push(m);
        Ok(())
    };

    if opts.eval_at_start {
        let n0 = batch.min(train_set.len());
        let (loss, _) = net.loss_and_grad(
            &train_set.features[..n0 * d],
            &train_set.labels[..n0],
            Some(NoiseKey { seed: net.config.seed, step: 0 }),
        )?;
        emit(evaluate(net, val, 0, 0, loss, started, opts)?, &mut records)?;
    }

    let mut step = 0u64;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut current_epoch = 0;
    let mut feats = Vec::with_capacity(batch * d);
    let mut labels = Vec::with_capacity(batch);
    'outer: for epoch in 1..=opts.epochs {
        current_epoch = epoch;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(net.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if opts.max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            feats.clear();
            labels.clear();
            for &i in chunk {
                feats.extend_from_slice(train_set.row(i));
                labels.push(train_set.labels[i]);
            }
            step += 1;
            let key = NoiseKey { seed: net.config.seed, step };
            let (loss, grads) = net.loss_and_grad(&feats, &labels, Some(key))?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    reason: format!("loss became {loss}"),
                });
            }
            adam.step(net, &grads);
            if let Some((k, _)) = net
                .layers
                .iter()
                .enumerate()
                .find(|(_, l)| l.params.iter().any(|p| !p.is_finite()))
            {
                return Err(Error::Diverged {
                    step,
                    reason: format!("non-finite parameter in layer {k}"),
                });
            }
            loss_sum += loss;
            loss_count += 1;
            if opts.eval_every > 0 && step % opts.eval_every == 0 {
                let m = evaluate(net, val, step, epoch, loss_sum / loss_count as f64, started, opts)?;
                loss_sum = 0.0;
                loss_count = 0;
                emit(m, &mut records)?;
            }
        }
        if opts.eval_every == 0 && loss_count > 0 {
            let m = evaluate(net, val, step, epoch, loss_sum / loss_count as f64, started, opts)?;
            loss_sum = 0.0;
            loss_count = 0;
            emit(m, &mut records)?;
        }
    }
    if loss_count > 0 {
        let m = evaluate(net, val, step, current_epoch, loss_sum / loss_count as f64, started, opts)?;
        emit(m, &mut records)?;
    }
    Ok(records)
}
