//! Frozen LUT netlists and bit-exact discrete inference.
//!
//! Evaluation is word-parallel: 64 samples share one `u64` per wire, and each
//! node computes the OR over its true addresses of the AND of the matching
//! input literals. Class scores are per-group popcounts; ties go to the
//! lowest class index.

mod format;
mod summary;

pub use format::{export_netlist, import_netlist, ParseError, FORMAT_HEADER};
pub use summary::{LayerSummary, NetlistSummary};

use crate::error::{Error, Result};
use crate::hadamard::LutTable;
use crate::network::Network;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock {
    pub features: usize,
    pub bits_per_feature: usize,
    /// Realized thresholds, `l × d` row-major; bit `(i, j)` is `omega[i][j] <= x_j`
    /// at wire `j * l + i`.
    pub omega: Vec<f64>,
}

impl EncoderBlock {
    pub fn output_width(&self) -> usize {
        self.features * self.bits_per_feature
    }

    /// Hard thermometer bits of one sample.
    pub fn encode(&self, x: &[f64], out: &mut [bool]) {
        crate::encoder::encode_hard_into(&self.omega, self.bits_per_feature, self.features, x, out);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// Wire indices into the previous layer (or encoder bits for layer 0).
    pub inputs: Vec<u32>,
    pub lut: LutTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetLayer {
    pub input_width: usize,
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSumBlock {
    pub classes: usize,
    pub group_size: usize,
    /// Metadata only: discrete scores are integer popcounts.
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Netlist {
    pub seed: u64,
    pub config_digest: String,
    pub encoder: EncoderBlock,
    pub layers: Vec<NetLayer>,
    pub group_sum: GroupSumBlock,
}

/// Encoder-bit batch packed 64 samples per word: `words[wire * stride + w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedBits {
    pub wires: usize,
    pub samples: usize,
    words: Vec<u64>,
}

impl PackedBits {
    pub fn stride(&self) -> usize {
        self.samples.div_ceil(64)
    }

    pub fn from_rows(rows: &[Vec<bool>], wires: usize) -> Result<Self> {
        let mut p = Self::zeros(wires, rows.len());
        for (s, row) in rows.iter().enumerate() {
            if row.len() != wires {
                return Err(Error::WidthMismatch { expected: wires, actual: row.len() });
            }
            p.set_row(s, row);
        }
        Ok(p)
    }

    fn zeros(wires: usize, samples: usize) -> Self {
        Self {
            wires,
            samples,
            words: vec![0; wires * samples.div_ceil(64)],
        }
    }

    fn set_row(&mut self, s: usize, row: &[bool]) {
        let stride = self.stride();
        for (w, &b) in row.iter().enumerate() {
            if b {
                self.words[w * stride + s / 64] |= 1 << (s % 64);
            }
        }
    }

    pub fn wire(&self, w: usize) -> &[u64] {
        let stride = self.stride();
        &self.words[w * stride..(w + 1) * stride]
    }

    pub fn get(&self, wire: usize, sample: usize) -> bool {
        (self.wire(wire)[sample / 64] >> (sample % 64)) & 1 == 1
    }
}

impl Netlist {
    /// Replaces every neuron by its decoded table; wiring is copied verbatim.
    pub fn compile(net: &Network) -> Netlist {
        let omega = net.encoder.realize_thresholds();
        let layers = net
            .layers
            .iter()
            .map(|l| NetLayer {
                input_width: l.input_width,
                nodes: (0..l.neurons)
                    .map(|i| Node {
                        inputs: l.inputs_of(i).to_vec(),
                        lut: l.discretize_neuron(i),
                    })
                    .collect(),
            })
            .collect();
        Netlist {
            seed: net.config.seed,
            config_digest: net.config.digest(),
            encoder: EncoderBlock {
                features: net.encoder.features(),
                bits_per_feature: net.encoder.bits_per_feature(),
                omega,
            },
            layers,
            group_sum: GroupSumBlock {
                classes: net.classes(),
                group_size: net.group_size(),
                tau: net.config.tau_gs,
            },
        }
    }

    pub fn input_bits(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_bits(), |l| l.nodes.len())
    }

    /// Checks structural invariants: widths chain, wires point backwards,
    /// table sizes match arities, GroupSum covers the last layer.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_bits();
        if self.encoder.omega.len() != width {
            return Err(Error::InvalidInput(format!(
                "encoder has {} thresholds, expected {width}",
                self.encoder.omega.len()
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.input_width != width {
                return Err(Error::Layer {
                    layer: k,
                    reason: format!("input width {} but previous width {width}", layer.input_width),
                });
            }
            for (i, node) in layer.nodes.iter().enumerate() {
                if node.lut.arity() != node.inputs.len() {
                    return Err(Error::Layer {
                        layer: k,
                        reason: format!("node {i} has {} inputs but a table of arity {}", node.inputs.len(), node.lut.arity()),
                    });
                }
                if let Some(&w) = node.inputs.iter().find(|&&w| w as usize >= width) {
                    return Err(Error::Layer {
                        layer: k,
                        reason: format!("node {i} reads wire {w} of {width}"),
                    });
                }
            }
            width = layer.nodes.len();
        }
        let gs = &self.group_sum;
        if gs.classes == 0 || gs.classes * gs.group_size != width {
            return Err(Error::InvalidInput(format!(
                "GroupSum of {} × {} does not cover width {width}",
                gs.classes, gs.group_size
            )));
        }
        Ok(())
    }

    /// Hard-encodes and packs raw feature rows (`samples × d`).
    pub fn encode_pack(&self, features: &[f64]) -> Result<PackedBits> {
        let d = self.encoder.features;
        if features.len() % d != 0 {
            return Err(Error::WidthMismatch { expected: d, actual: features.len() % d });
        }
        let samples = features.len() / d;
        let w = self.input_bits();
        let mut packed = PackedBits::zeros(w, samples);
        let mut bits = vec![false; w];
        for (s, row) in features.chunks_exact(d).enumerate() {
            self.encoder.encode(row, &mut bits);
            packed.set_row(s, &bits);
        }
        Ok(packed)
    }

    /// Per-sample, per-class popcounts of a packed batch (`samples × classes`).
    pub fn class_counts(&self, batch: &PackedBits) -> Result<Vec<u32>> {
        if batch.wires != self.input_bits() {
            return Err(Error::WidthMismatch { expected: self.input_bits(), actual: batch.wires });
        }
        let stride = batch.stride();
        let mut current: Vec<u64> = batch.words.clone();
        for layer in &self.layers {
            let mut next = vec![0u64; layer.nodes.len() * stride];
            let mut operands: Vec<&[u64]> = Vec::new();
            for (i, node) in layer.nodes.iter().enumerate() {
                operands.clear();
                operands.extend(node.inputs.iter().map(|&w| &current[w as usize * stride..(w as usize + 1) * stride]));
                let out = &mut next[i * stride..(i + 1) * stride];
                eval_node(&node.lut, &operands, out);
            }
            current = next;
        }
        let gs = &self.group_sum;
        let mut counts = vec![0u32; batch.samples * gs.classes];
        for c in 0..gs.classes {
            for j in c * gs.group_size..(c + 1) * gs.group_size {
                let words = &current[j * stride..(j + 1) * stride];
                for (wi, &word) in words.iter().enumerate() {
                    let mut bits = word;
                    while bits != 0 {
                        let b = bits.trailing_zeros() as usize;
                        let s = wi * 64 + b;
                        if s < batch.samples {
                            counts[s * gs.classes + c] += 1;
                        }
                        bits &= bits - 1;
                    }
                }
            }
        }
        Ok(counts)
    }

    /// Predicted classes of a packed batch.
    pub fn eval_bitpacked(&self, batch: &PackedBits) -> Result<Vec<usize>> {
        let counts = self.class_counts(batch)?;
        Ok(counts.chunks_exact(self.group_sum.classes).map(argmax_u32).collect())
    }

    /// Encodes, packs and evaluates raw feature rows.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<usize>> {
        let packed = self.encode_pack(features)?;
        self.eval_bitpacked(&packed)
    }

    /// Predictions for a dataset whose rows must have the encoder's width.
    pub fn predict_dataset(&self, dataset: &crate::Dataset) -> Result<Vec<usize>> {
        if dataset.feature_count != self.encoder.features {
            return Err(Error::WidthMismatch { expected: self.encoder.features, actual: dataset.feature_count });
        }
        self.predict(&dataset.features)
    }

    /// Reference evaluation of one encoded sample, one wire at a time.
    pub fn eval_naive(&self, bits: &[bool]) -> Result<usize> {
        if bits.len() != self.input_bits() {
            return Err(Error::WidthMismatch { expected: self.input_bits(), actual: bits.len() });
        }
        let mut current = bits.to_vec();
        for layer in &self.layers {
            current = layer
                .nodes
                .iter()
                .map(|node| {
                    let addr = node
                        .inputs
                        .iter()
                        .enumerate()
                        .fold(0usize, |a, (k, &w)| a | ((current[w as usize] as usize) << k));
                    node.lut.get(addr)
                })
                .collect();
        }
        let gs = &self.group_sum;
        let counts: Vec<u32> = (0..gs.classes)
            .map(|c| current[c * gs.group_size..(c + 1) * gs.group_size].iter().filter(|&&b| b).count() as u32)
            .collect();
        Ok(argmax_u32(&counts))
    }

    /// Predicted class for every one of the `2^input_bits` encoder patterns,
    /// indexed by the pattern with wire 0 as the least significant bit.
    pub fn truth_table(&self) -> Result<Vec<usize>> {
        let w = self.input_bits();
        if w > 16 {
            return Err(Error::Unsupported(format!("truth table of {w} input bits")));
        }
        (0..1usize << w)
            .map(|p| {
                let bits: Vec<bool> = (0..w).map(|k| (p >> k) & 1 == 1).collect();
                self.eval_naive(&bits)
            })
            .collect()
    }

    /// Packs every input pattern (as [`Netlist::truth_table`] orders them).
    pub fn all_patterns(&self) -> Result<PackedBits> {
        let w = self.input_bits();
        if w > 16 {
            return Err(Error::Unsupported(format!("enumerating {w} input bits")));
        }
        let n = 1usize << w;
        let mut p = PackedBits::zeros(w, n);
        for s in 0..n {
            let row: Vec<bool> = (0..w).map(|k| (s >> k) & 1 == 1).collect();
            p.set_row(s, &row);
        }
        Ok(p)
    }

    /// Output bits of every node for one sample (diagnostics).
    pub fn node_values(&self, bits: &[bool]) -> Vec<Vec<bool>> {
        let mut layers = Vec::new();
        let mut current = bits.to_vec();
        for layer in &self.layers {
            current = layer
                .nodes
                .iter()
                .map(|node| {
                    let addr = node
                        .inputs
                        .iter()
                        .enumerate()
                        .fold(0usize, |a, (k, &w)| a | ((current[w as usize] as usize) << k));
                    node.lut.get(addr)
                })
                .collect();
            layers.push(current.clone());
        }
        layers
    }
}

/// Sum of products over the table's true addresses.
fn eval_node(lut: &LutTable, inputs: &[&[u64]], out: &mut [u64]) {
    let n = inputs.len();
    for (a, &bit) in lut.bits().iter().enumerate() {
        if !bit {
            continue;
        }
        for (w, o) in out.iter_mut().enumerate() {
            let mut term = u64::MAX;
            for (k, input) in inputs.iter().enumerate().take(n) {
                let v = input[w];
                term &= if (a >> k) & 1 == 1 { v } else { !v };
            }
            *o |= term;
        }
    }
}

fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Random netlist with node arities in `1..=max_arity`, distinct wires per
/// node, uniform tables, and an identity-like unit-width encoder
/// (`bits_per_feature = 1`, thresholds 0.5). `widths` lists the layer sizes;
/// the last must be divisible by `classes`.
pub fn random_netlist<R: rand::Rng + ?Sized>(rng: &mut R, inputs: usize, widths: &[usize], classes: usize, max_arity: usize) -> Netlist {
    let mut width = inputs;
    let mut layers = Vec::new();
    for &w in widths {
        let nodes = (0..w)
            .map(|_| {
                let n = rng.random_range(1..=max_arity.min(width));
                let ins = rand::seq::index::sample(rng, width, n).into_iter().map(|c| c as u32).collect();
                let bits = (0..1 << n).map(|_| rng.random::<bool>()).collect();
                Node { inputs: ins, lut: LutTable::new(n, bits).unwrap() }
            })
            .collect();
        layers.push(NetLayer { input_width: width, nodes });
        width = w;
    }
    Netlist {
        seed: 1,
        config_digest: "test".into(),
        encoder: EncoderBlock {
            features: inputs,
            bits_per_feature: 1,
            omega: vec![0.5; inputs],
        },
        layers,
        group_sum: GroupSumBlock { classes, group_size: width / classes, tau: 1.0 },
    }
}
