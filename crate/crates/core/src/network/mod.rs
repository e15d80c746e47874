//! Layered logic networks with fixed random wiring and a GroupSum head.
//!
//! Sample-major evaluation: a batch is cut into fixed-size chunks that run in
//! parallel; per-chunk gradients are reduced in chunk order, so results do not
//! depend on the number of worker threads. Logistic noise is counter-based,
//! keyed by (seed, step) with one stream per layer and a fixed word offset per
//! sample, so a sample's draws are independent of batch composition and
//! sharding.

mod kernels;
mod train;

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use train::{train, Adam, TrainMetrics, TrainOptions};

use crate::config::{EncoderConfig, EncoderKind, LayerConfig, NetworkConfig};
use crate::datasets::Dataset;
use crate::discrete::Netlist;
use crate::encoder::{PlanGrad, ThresholdPlan};
use crate::error::{Error, Result};
use crate::hadamard::{lut_to_theta, theta_to_lut, LutTable, WalshCoeffs};
use crate::neurons::{
    dlgn_residual_c, residual_init, sample_logistic, DlgnNeuron, DwnNeuron, ForwardMode,
    LlnnNeuron, Neuron, Parametrization, WarpNeuron, ID_A, ID_B,
};
use kernels::{LayerView, Scratch};

/// Samples per parallel work unit. Fixed so reductions are thread-count independent.
pub const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: Parametrization,
    pub mode: ForwardMode,
    pub arity: usize,
    pub tau: f64,
    pub neurons: usize,
    pub input_width: usize,
    /// `neurons × arity` indices into the previous layer's outputs.
    pub connections: Vec<u32>,
    /// `neurons × param_count`.
    pub params: Vec<f64>,
    /// Inputs are shifted by `-0.5` before addressing (DWN fed by probabilities).
    pub centered_inputs: bool,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        self.kind.param_count(self.arity)
    }

    pub fn inputs_of(&self, i: usize) -> &[u32] {
        &self.connections[i * self.arity..(i + 1) * self.arity]
    }

    pub fn neuron_params(&self, i: usize) -> &[f64] {
        let p = self.param_count();
        &self.params[i * p..(i + 1) * p]
    }

    /// Owned neuron `i`.
    pub fn neuron(&self, i: usize) -> Neuron {
        let raw = self.neuron_params(i).to_vec();
        match self.kind {
            Parametrization::Warp => Neuron::Warp(
                WarpNeuron::new(WalshCoeffs::new(self.arity, raw).expect("finite parameters"), self.tau)
                    .expect("validated temperature"),
            ),
            Parametrization::Dlgn => Neuron::Dlgn(DlgnNeuron::new(self.arity, raw).expect("validated arity")),
            Parametrization::Llnn => Neuron::Llnn(LlnnNeuron::new(self.arity, raw).expect("validated arity")),
            Parametrization::Dwn => Neuron::Dwn(DwnNeuron::new(self.arity, raw).expect("validated arity")),
        }
    }

    pub fn discretize_neuron(&self, i: usize) -> LutTable {
        match self.kind {
            Parametrization::Warp => {
                theta_to_lut(&WalshCoeffs::new(self.arity, self.neuron_params(i).to_vec()).expect("finite parameters"))
            }
            _ => self.neuron(i).discretize(),
        }
    }

    pub fn luts(&self) -> Vec<LutTable> {
        (0..self.neurons).map(|i| self.discretize_neuron(i)).collect()
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let err = |reason: String| Err(Error::Layer { layer: idx, reason });
        if self.arity == 0 || self.arity > crate::hadamard::MAX_ARITY {
            return err(format!("arity {} unsupported", self.arity));
        }
        if self.kind == Parametrization::Dlgn && self.arity != 2 {
            return err("DLGN supports arity 2 only".into());
        }
        if !(self.tau > 0.0) {
            return err(format!("temperature must be positive, got {}", self.tau));
        }
        if self.connections.len() != self.neurons * self.arity {
            return err(format!(
                "{} connections for {} neurons of arity {}",
                self.connections.len(),
                self.neurons,
                self.arity
            ));
        }
        if let Some(&c) = self.connections.iter().find(|&&c| c as usize >= self.input_width) {
            return err(format!("connection {c} out of range for input width {}", self.input_width));
        }
        if self.params.len() != self.neurons * self.param_count() {
            return err(format!(
                "{} parameters, expected {}",
                self.params.len(),
                self.neurons * self.param_count()
            ));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return err("non-finite parameter".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    pub encoder: ThresholdPlan,
    pub layers: Vec<Layer>,
}

/// Gradients for every trainable tensor of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<f64>>,
    pub encoder: PlanGrad,
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        Self {
            layers: net.layers.iter().map(|l| vec![0.0; l.params.len()]).collect(),
            encoder: PlanGrad::zeros_like(&net.encoder),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.encoder.add(&other.encoder);
    }

    pub fn layer_norm(&self, layer: usize) -> f64 {
        self.layers[layer].iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Fits the configured threshold plan on training features.
pub fn fit_encoder(cfg: &EncoderConfig, features: &[f64], d: usize) -> Result<ThresholdPlan> {
    let l = cfg.bits_per_feature;
    let plan = match cfg.kind {
        EncoderKind::Uniform => {
            let ranges = crate::encoder::feature_ranges(features, d)?;
            ThresholdPlan::fit_uniform(&ranges, l, cfg.sharing, cfg.rho)?
        }
        EncoderKind::Distributive | EncoderKind::Learnable => {
            ThresholdPlan::fit_distributive(features, d, l, cfg.sharing, cfg.rho)?
        }
    };
    let plan = if cfg.feature_scaling {
        plan.with_feature_scaling(features)?
    } else {
        plan
    };
    if cfg.kind == EncoderKind::Learnable {
        plan.into_learnable(cfg.min_gap)
    } else {
        Ok(plan)
    }
}

/// Fits the encoder on `train` and builds the network.
pub fn build_network(config: NetworkConfig, train: &Dataset) -> Result<Network> {
    let plan = fit_encoder(&config.encoder, &train.features, train.feature_count)?;
    Network::build(config, plan)
}

/// Noise key of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
    pub step: u64,
}

impl NoiseKey {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.step.to_le_bytes());
        key[16..24].copy_from_slice(b"logicnet");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }

    /// Fills `out` with the logistic draws of row `row` of `stream`.
    fn fill(rng: &mut ChaCha8Rng, row: u64, out: &mut [f64]) {
        rng.set_word_pos(row as u128 * out.len() as u128 * 2);
        for o in out.iter_mut() {
            *o = sample_logistic(rng);
        }
    }
}

/// Per-step derived state (softmax/sigmoid weights, decoded tables).
pub(crate) struct LayerCache {
    derived: Vec<f64>,
    luts: Vec<bool>,
}

/// How a forward pass treats each layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pass {
    /// Declared modes, with noise if a key is supplied.
    Train,
    /// Noiseless counterpart of each declared mode.
    Eval,
}

struct ChunkState {
    /// `acts[0]` holds encoded inputs; `acts[k + 1]` holds layer `k` outputs.
    acts: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

impl Network {
    /// Builds a network from a validated config and a fitted encoder.
    pub fn build(config: NetworkConfig, encoder: ThresholdPlan) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut width = encoder.output_width();
        let mut prev_kind: Option<Parametrization> = None;
        let mut layers = Vec::new();
        for (idx, lc) in config.expanded_layers().iter().enumerate() {
            let layer = build_layer(lc, idx, width, prev_kind, config.residual_p, &mut rng)?;
            width = layer.neurons;
            prev_kind = Some(layer.kind);
            layers.push(layer);
        }
        Self::from_parts(config, encoder, layers)
    }

    /// Assembles a network from explicit layers, checking every width.
    pub fn from_parts(config: NetworkConfig, encoder: ThresholdPlan, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut width = encoder.output_width();
        for (idx, layer) in layers.iter().enumerate() {
            if layer.input_width != width {
                return Err(Error::Layer {
                    layer: idx,
                    reason: format!("input width {} but previous output width {width}", layer.input_width),
                });
            }
            if idx > 0 && layers[idx - 1].kind == Parametrization::Dwn && layer.kind != Parametrization::Dwn {
                return Err(Error::Layer {
                    layer: idx,
                    reason: "only DWN layers may follow a DWN layer".into(),
                });
            }
            layer.validate(idx)?;
            width = layer.neurons;
        }
        let last = layers.len() - 1;
        if width % config.classes != 0 {
            return Err(Error::Layer {
                layer: last,
                reason: format!("{width} neurons not divisible into {} groups", config.classes),
            });
        }
        Ok(Self { config, encoder, layers })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.neurons)
    }

    pub fn group_size(&self) -> usize {
        self.output_width() / self.classes()
    }

    pub fn input_features(&self) -> usize {
        self.encoder.features()
    }

    /// Trainable neuron parameters, `sum neurons * param_count`.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    /// Parameters a gate-softmax network of the same shape would need.
    pub fn dlgn_equivalent_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.neurons * Parametrization::Dlgn.param_count(l.arity))
            .sum()
    }

    pub fn encoder_param_count(&self) -> usize {
        match self.encoder.thresholds() {
            crate::encoder::Thresholds::Learnable { base, deltas } => base.len() + deltas.len(),
            crate::encoder::Thresholds::Fixed { .. } => 0,
        }
    }

    fn max_arity(&self) -> usize {
        self.layers.iter().map(|l| l.arity).max().unwrap_or(1)
    }

    fn caches(&self, pass: Pass) -> Vec<LayerCache> {
        self.layers
            .iter()
            .map(|l| {
                let mode = effective_mode(l, pass);
                let luts = if mode.is_ste() {
                    let len = 1 << l.arity;
                    let mut bits = Vec::with_capacity(l.neurons * len);
                    for i in 0..l.neurons {
                        bits.extend_from_slice(l.discretize_neuron(i).bits());
                    }
                    bits
                } else {
                    Vec::new()
                };
                LayerCache {
                    derived: kernels::derive(l.kind, l.arity, &l.params),
                    luts,
                }
            })
            .collect()
    }

    fn view<'a>(&'a self, k: usize, cache: &'a LayerCache, pass: Pass) -> LayerView<'a> {
        let l = &self.layers[k];
        LayerView {
            kind: l.kind,
            mode: effective_mode(l, pass),
            arity: l.arity,
            inv_tau: 1.0 / l.tau,
            params: &l.params,
            derived: &cache.derived,
            luts: &cache.luts,
        }
    }

    /// Whether relaxed evaluation feeds soft encoder outputs.
    fn soft_encoding(&self, pass: Pass) -> bool {
        self.encoder.is_learnable()
            && (pass == Pass::Train || !self.layers[0].mode.is_ste())
    }

    /// Encodes raw features for relaxed evaluation: soft for learnable plans
    /// feeding a non-STE first layer, hard 0/1 otherwise.
    pub fn encode_relaxed(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.encode(features, Pass::Eval)
    }

    /// Hard thermometer codes as 0/1 reals.
    pub fn encode_hard(&self, features: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_features();
        if features.len() % d != 0 {
            return Err(Error::WidthMismatch { expected: d, actual: features.len() % d });
        }
        let omega = self.encoder.realize_thresholds();
        let l = self.encoder.bits_per_feature();
        let w = self.encoder.output_width();
        let mut out = vec![0.0; features.len() / d * w];
        let mut bits = vec![false; w];
        for (row, o) in features.chunks_exact(d).zip(out.chunks_exact_mut(w)) {
            crate::encoder::encode_hard_into(&omega, l, d, row, &mut bits);
            for (v, &b) in o.iter_mut().zip(&bits) {
                *v = b as u8 as f64;
            }
        }
        Ok(out)
    }

    fn encode(&self, features: &[f64], pass: Pass) -> Result<Vec<f64>> {
        if !self.soft_encoding(pass) {
            return self.encode_hard(features);
        }
        let d = self.input_features();
        if features.len() % d != 0 {
            return Err(Error::WidthMismatch { expected: d, actual: features.len() % d });
        }
        let omega = self.encoder.realize_thresholds();
        let w = self.encoder.output_width();
        let mut out = vec![0.0; features.len() / d * w];
        for (row, o) in features.chunks_exact(d).zip(out.chunks_exact_mut(w)) {
            self.encoder.encode_soft_into(&omega, row, None, o);
        }
        Ok(out)
    }

    /// Forward over one chunk, recording activations (and noise, if any).
    fn forward_chunk(
        &self,
        caches: &[LayerCache],
        pass: Pass,
        input: Vec<f64>,
        rows: &[u64],
        key: Option<NoiseKey>,
        scratch: &mut Scratch,
    ) -> ChunkState {
        let samples = rows.len();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut noise = Vec::with_capacity(self.layers.len());
        acts.push(input);
        for (k, layer) in self.layers.iter().enumerate() {
            let view = self.view(k, &caches[k], pass);
            let noisy = key.is_some() && view.mode.is_noisy() && layer.kind != Parametrization::Dwn;
            let mut g = Vec::new();
            if noisy {
                g = vec![0.0; samples * layer.neurons];
                let mut rng = key.unwrap().rng(k as u64 + 1);
                for (s, &row) in rows.iter().enumerate() {
                    NoiseKey::fill(&mut rng, row, &mut g[s * layer.neurons..(s + 1) * layer.neurons]);
                }
            }
            let prev = &acts[k];
            let w_in = layer.input_width;
            let mut out = vec![0.0; samples * layer.neurons];
            for s in 0..samples {
                let x_in = &prev[s * w_in..(s + 1) * w_in];
                for i in 0..layer.neurons {
                    gather(layer, i, x_in, &mut scratch.x);
                    let gi = if noisy { g[s * layer.neurons + i] } else { 0.0 };
                    out[s * layer.neurons + i] = view.forward(i, gi, scratch);
                }
            }
            acts.push(out);
            noise.push(g);
        }
        ChunkState { acts, noise }
    }

    /// Class scores `group sum / tau_gs` for encoded inputs, noiseless.
    pub fn forward_relaxed(&self, encoded: &[f64]) -> Result<Vec<f64>> {
        let w0 = self.encoder.output_width();
        if encoded.len() % w0 != 0 {
            return Err(Error::WidthMismatch { expected: w0, actual: encoded.len() % w0 });
        }
        let caches = self.caches(Pass::Eval);
        let samples = encoded.len() / w0;
        let chunks: Vec<Vec<f64>> = (0..samples.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(samples);
                let rows: Vec<u64> = (lo as u64..hi as u64).collect();
                let mut scratch = Scratch::new(self.max_arity());
                let st = self.forward_chunk(
                    &caches,
                    Pass::Eval,
                    encoded[lo * w0..hi * w0].to_vec(),
                    &rows,
                    None,
                    &mut scratch,
                );
                self.group_sums(st.acts.last().unwrap(), hi - lo)
            })
            .collect();
        let inv = 1.0 / self.config.tau_gs;
        Ok(chunks.concat().into_iter().map(|v| v * inv).collect())
    }

    fn group_sums(&self, out: &[f64], samples: usize) -> Vec<f64> {
        let classes = self.classes();
        let g = self.group_size();
        let w = self.output_width();
        let mut sums = vec![0.0; samples * classes];
        for s in 0..samples {
            for c in 0..classes {
                sums[s * classes + c] = out[s * w + c * g..s * w + (c + 1) * g].iter().sum();
            }
        }
        sums
    }

    /// Relaxed predictions (argmax of scores, lowest class on ties).
    pub fn predict_encoded(&self, encoded: &[f64]) -> Result<Vec<usize>> {
        let scores = self.forward_relaxed(encoded)?;
        Ok(scores.chunks_exact(self.classes()).map(argmax).collect())
    }

    pub fn predict_relaxed(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        self.check_dataset(dataset)?;
        self.predict_encoded(&self.encode_relaxed(&dataset.features)?)
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.feature_count != self.input_features() {
            return Err(Error::WidthMismatch {
                expected: self.input_features(),
                actual: dataset.feature_count,
            });
        }
        if dataset.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        Ok(())
    }

    pub fn relaxed_accuracy(&self, dataset: &Dataset) -> Result<f64> {
        let pred = self.predict_relaxed(dataset)?;
        Ok(accuracy(&pred, &dataset.labels))
    }

    /// Frozen netlist of the current parameters.
    pub fn compile(&self) -> Netlist {
        Netlist::compile(self)
    }

    pub fn discrete_accuracy(&self, dataset: &Dataset) -> Result<f64> {
        self.check_dataset(dataset)?;
        let pred = self.compile().predict(&dataset.features)?;
        Ok(accuracy(&pred, &dataset.labels))
    }

    /// Relaxed minus discrete validation accuracy.
    pub fn discretization_gap(&self, dataset: &Dataset) -> Result<f64> {
        Ok(self.relaxed_accuracy(dataset)? - self.discrete_accuracy(dataset)?)
    }

    /// Copy in which every neuron is the WARP neuron of its own decoded table,
    /// evaluated in soft mode at a temperature small enough that the relaxed
    /// output at Boolean inputs is exactly 0 or 1.
    pub fn discretized_copy(&self) -> Network {
        let mut net = self.clone();
        for layer in &mut net.layers {
            let mut params = Vec::with_capacity(layer.neurons << layer.arity);
            for i in 0..layer.neurons {
                params.extend_from_slice(lut_to_theta(&layer.discretize_neuron(i)).theta());
            }
            layer.kind = Parametrization::Warp;
            layer.mode = ForwardMode::Soft;
            layer.tau = 1e-3;
            layer.params = params;
            layer.centered_inputs = false;
        }
        net
    }

    /// Mean cross-entropy of a batch and its gradient. Noise rows are the
    /// samples' positions within the batch.
    pub fn loss_and_grad(
        &self,
        features: &[f64],
        labels: &[usize],
        key: Option<NoiseKey>,
    ) -> Result<(f64, Gradients)> {
        let d = self.input_features();
        let samples = labels.len();
        if features.len() != samples * d || samples == 0 {
            return Err(Error::WidthMismatch { expected: samples * d, actual: features.len() });
        }
        let caches = self.caches(Pass::Train);
        let omega = self.encoder.realize_thresholds();
        let soft_enc = self.soft_encoding(Pass::Train);
        let enc_noise = soft_enc && self.config.encoder.noise && key.is_some();
        let results: Vec<(f64, Gradients)> = (0..samples.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(samples);
                self.chunk_loss_and_grad(
                    &caches,
                    &omega,
                    soft_enc,
                    enc_noise,
                    &features[lo * d..hi * d],
                    &labels[lo..hi],
                    lo as u64,
                    samples,
                    key,
                )
            })
            .collect();
        let mut total = Gradients::zeros(self);
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            total.add(g);
        }
        Ok((loss / samples as f64, total))
    }

    #[allow(clippy::too_many_arguments)]
    fn chunk_loss_and_grad(
        &self,
        caches: &[LayerCache],
        omega: &[f64],
        soft_enc: bool,
        enc_noise: bool,
        features: &[f64],
        labels: &[usize],
        first_row: u64,
        batch: usize,
        key: Option<NoiseKey>,
    ) -> (f64, Gradients) {
        let d = self.input_features();
        let w0 = self.encoder.output_width();
        let samples = labels.len();
        let rows: Vec<u64> = (first_row..first_row + samples as u64).collect();
        let mut scratch = Scratch::new(self.max_arity());

        let mut enc_g = Vec::new();
        let mut input = vec![0.0; samples * w0];
        if soft_enc {
            if enc_noise {
                enc_g = vec![0.0; samples * w0];
                let mut rng = key.unwrap().rng(0);
                for (s, &row) in rows.iter().enumerate() {
                    NoiseKey::fill(&mut rng, row, &mut enc_g[s * w0..(s + 1) * w0]);
                }
            }
            for s in 0..samples {
                let noise = enc_noise.then(|| &enc_g[s * w0..(s + 1) * w0]);
                let f = noise.map(|n| move |b: usize| n[b]);
                let fref = f.as_ref().map(|f| f as &dyn Fn(usize) -> f64);
                self.encoder.encode_soft_into(omega, &features[s * d..(s + 1) * d], fref, &mut input[s * w0..(s + 1) * w0]);
            }
        } else {
            let l = self.encoder.bits_per_feature();
            let mut bits = vec![false; w0];
            for s in 0..samples {
                crate::encoder::encode_hard_into(omega, l, d, &features[s * d..(s + 1) * d], &mut bits);
                for (v, &b) in input[s * w0..(s + 1) * w0].iter_mut().zip(&bits) {
                    *v = b as u8 as f64;
                }
            }
        }

        let st = self.forward_chunk(caches, Pass::Train, input, &rows, key, &mut scratch);

        // GroupSum + softmax cross-entropy
        let classes = self.classes();
        let g = self.group_size();
        let w = self.output_width();
        let inv_tau = 1.0 / self.config.tau_gs;
        let sums = self.group_sums(st.acts.last().unwrap(), samples);
        let mut loss = 0.0;
        let mut dout = vec![0.0; samples * w];
        for s in 0..samples {
            let scores: Vec<f64> = sums[s * classes..(s + 1) * classes].iter().map(|v| v * inv_tau).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - scores[labels[s]];
            for c in 0..classes {
                let p = (scores[c] - lse).exp();
                let ds = (p - (c == labels[s]) as u8 as f64) / batch as f64;
                for v in &mut dout[s * w + c * g..s * w + (c + 1) * g] {
                    *v = ds * inv_tau;
                }
            }
        }

        let mut grads = Gradients::zeros(self);
        let mut dact = dout;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let view = self.view(k, &caches[k], Pass::Train);
            let need_dx = k > 0 || soft_enc;
            let w_in = layer.input_width;
            let mut din = if need_dx { vec![0.0; samples * w_in] } else { Vec::new() };
            let p = layer.param_count();
            let noise = &st.noise[k];
            for s in 0..samples {
                let x_in = &st.acts[k][s * w_in..(s + 1) * w_in];
                for i in 0..layer.neurons {
                    let dy = dact[s * layer.neurons + i];
                    if dy == 0.0 {
                        continue;
                    }
                    gather(layer, i, x_in, &mut scratch.x);
                    let gi = if noise.is_empty() { 0.0 } else { noise[s * layer.neurons + i] };
                    let y = st.acts[k + 1][s * layer.neurons + i];
                    view.backward(i, gi, y, dy, &mut grads.layers[k][i * p..(i + 1) * p], &mut scratch);
                    if need_dx {
                        for (j, &c) in layer.inputs_of(i).iter().enumerate() {
                            din[s * w_in + c as usize] += scratch.dx[j];
                        }
                    }
                }
            }
            dact = din;
        }

        if soft_enc && self.encoder.is_learnable() {
            let mut domega = vec![0.0; omega.len() / self.input_features() * self.encoder.columns()];
            for s in 0..samples {
                let noise = enc_noise.then(|| &enc_g[s * w0..(s + 1) * w0]);
                let f = noise.map(|n| move |b: usize| n[b]);
                let fref = f.as_ref().map(|f| f as &dyn Fn(usize) -> f64);
                self.encoder.backward(
                    omega,
                    &features[s * d..(s + 1) * d],
                    fref,
                    &dact[s * w0..(s + 1) * w0],
                    &mut grads.encoder,
                    &mut domega,
                );
            }
        }
        (loss, grads)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported checkpoint {} v{}", ck.format, ck.version),
            });
        }
        let net = ck.network;
        Network::from_parts(net.config, net.encoder, net.layers)
    }
}

const CHECKPOINT_FORMAT: &str = "logic-network-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    network: Network,
}

fn effective_mode(layer: &Layer, pass: Pass) -> ForwardMode {
    match pass {
        Pass::Train => layer.mode,
        Pass::Eval => layer.mode.noiseless(),
    }
}

#[inline]
fn gather(layer: &Layer, i: usize, x_in: &[f64], out: &mut [f64]) {
    let shift = if layer.centered_inputs { 0.5 } else { 0.0 };
    for (o, &c) in out.iter_mut().zip(layer.inputs_of(i)) {
        *o = x_in[c as usize] - shift;
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

fn build_layer(
    lc: &LayerConfig,
    idx: usize,
    input_width: usize,
    prev_kind: Option<Parametrization>,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Layer> {
    let n = lc.arity;
    if input_width < n {
        return Err(Error::Layer {
            layer: idx,
            reason: format!("arity {n} exceeds input width {input_width}"),
        });
    }
    let mut connections = Vec::with_capacity(lc.neurons * n);
    for _ in 0..lc.neurons {
        connections.extend(sample_indices(rng, input_width, n).into_iter().map(|c| c as u32));
    }
    let tau = lc.effective_tau();
    let pc = lc.kind.param_count(n);
    let mut params = Vec::with_capacity(lc.neurons * pc);
    match lc.kind {
        Parametrization::Warp => {
            for _ in 0..lc.neurons {
                let k = rng.random_range(1..=n);
                params.extend(residual_init(n, p, tau, k)?.into_theta());
            }
        }
        Parametrization::Dlgn => {
            let c = dlgn_residual_c(n, p)?;
            for _ in 0..lc.neurons {
                // input 1 is the gate's `b`, input 2 its `a`
                let gate = if rng.random_range(1..=n) == 1 { ID_B } else { ID_A };
                let mut raw = vec![0.0; pc];
                raw[gate] = c;
                params.extend(raw);
            }
        }
        Parametrization::Llnn | Parametrization::Dwn => {
            params.extend((0..lc.neurons * pc).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
    }
    Ok(Layer {
        kind: lc.kind,
        mode: lc.mode,
        arity: n,
        tau,
        neurons: lc.neurons,
        input_width,
        connections,
        params,
        centered_inputs: lc.kind == Parametrization::Dwn && prev_kind != Some(Parametrization::Dwn),
    })
}
