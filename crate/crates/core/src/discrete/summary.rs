//! Structural statistics of a netlist: gate usage and table entropy.

use serde::Serialize;

use super::Netlist;
use crate::neurons::{Parametrization, GATE_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerSummary {
    pub index: usize,
    pub input_width: usize,
    pub nodes: usize,
    /// Node count per arity `1..=6` (index 0 is arity 1).
    pub arity_counts: Vec<usize>,
    /// Two-input gate usage in lexicographic gate order (see [`GATE_NAMES`]).
    pub gate_counts: [usize; 16],
    /// Binary entropy of each table's fraction of true entries, in bits.
    pub entropy_mean: f64,
    pub entropy_min: f64,
    pub entropy_max: f64,
    /// Nodes whose table is constant.
    pub constant_nodes: usize,
    /// Nodes whose table copies one of its inputs.
    pub pass_through_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetlistSummary {
    pub features: usize,
    pub bits_per_feature: usize,
    pub classes: usize,
    pub group_size: usize,
    pub layers: Vec<LayerSummary>,
    /// Walsh coefficients needed to represent every node (`2^n` per node).
    pub warp_params: usize,
    /// Weights of a gate-mixture network of the same shape (`2^(2^n)` per
    /// node), saturating at `usize::MAX`.
    pub dlgn_equivalent_params: usize,
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

impl Netlist {
    pub fn summary(&self) -> NetlistSummary {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(index, layer)| {
                let mut s = LayerSummary {
                    index,
                    input_width: layer.input_width,
                    nodes: layer.nodes.len(),
                    arity_counts: vec![0; 6],
                    gate_counts: [0; 16],
                    entropy_mean: 0.0,
                    entropy_min: f64::INFINITY,
                    entropy_max: 0.0,
                    constant_nodes: 0,
                    pass_through_nodes: 0,
                };
                for node in &layer.nodes {
                    let n = node.lut.arity();
                    s.arity_counts[n - 1] += 1;
                    if n == 2 {
                        s.gate_counts[node.lut.lex_index() as usize] += 1;
                    }
                    let ones = node.lut.bits().iter().filter(|&&b| b).count();
                    let h = binary_entropy(ones as f64 / node.lut.bits().len() as f64);
                    s.entropy_mean += h;
                    s.entropy_min = s.entropy_min.min(h);
                    s.entropy_max = s.entropy_max.max(h);
                    if ones == 0 || ones == node.lut.bits().len() {
                        s.constant_nodes += 1;
                    }
                    if node.lut.pass_through_input().is_some() {
                        s.pass_through_nodes += 1;
                    }
                }
                s.entropy_mean /= layer.nodes.len().max(1) as f64;
                if layer.nodes.is_empty() {
                    s.entropy_min = 0.0;
                }
                s
            })
            .collect();
        let node_arities = || self.layers.iter().flat_map(|l| l.nodes.iter().map(|n| n.lut.arity()));
        NetlistSummary {
            features: self.encoder.features,
            bits_per_feature: self.encoder.bits_per_feature,
            classes: self.group_sum.classes,
            group_size: self.group_sum.group_size,
            layers,
            warp_params: node_arities().map(|n| Parametrization::Warp.param_count(n)).sum(),
            dlgn_equivalent_params: node_arities()
                .map(|n| if n < 6 { Parametrization::Dlgn.param_count(n) } else { usize::MAX })
                .fold(0, usize::saturating_add),
        }
    }
}

impl LayerSummary {
    /// `(name, count)` for every two-input gate that occurs, most frequent first.
    pub fn gate_histogram(&self) -> Vec<(&'static str, usize)> {
        let mut h: Vec<_> = GATE_NAMES
            .iter()
            .zip(self.gate_counts)
            .filter(|(_, c)| *c > 0)
            .map(|(n, c)| (*n, c))
            .collect();
        h.sort_by(|a, b| b.1.cmp(&a.1));
        h
    }
}
