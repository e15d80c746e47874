//! Neuron parametrizations and their relaxed forward/backward passes.
//!
//! Each parametrization exposes slice-level kernels used by the network layers
//! (no per-call allocation beyond a caller-provided scratch buffer) and a small
//! owned type for standalone use and testing.

mod dlgn;
mod dwn;
mod llnn;
mod warp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dlgn::{
    convert_dlgn_to_warp, dlgn_residual_c, DlgnGrad, DlgnNeuron, GATE_NAMES, GATE_SURROGATES,
    ID_A, ID_B,
};
pub use dwn::{DwnGrad, DwnNeuron};
pub use llnn::{convert_llnn_to_warp, LlnnGrad, LlnnNeuron};
pub use warp::{residual_init, WarpGrad, WarpNeuron};

pub(crate) use dlgn::kernel as dlgn_kernel;
pub(crate) use dwn::kernel as dwn_kernel;
pub(crate) use llnn::kernel as llnn_kernel;
pub(crate) use warp::kernel as warp_kernel;

use crate::error::{invalid, Result};
use crate::hadamard::LutTable;

/// How a neuron is evaluated during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardMode {
    Soft,
    GumbelSoft,
    SoftSte,
    GumbelSte,
}

impl ForwardMode {
    pub const ALL: [ForwardMode; 4] = [
        ForwardMode::Soft,
        ForwardMode::GumbelSoft,
        ForwardMode::SoftSte,
        ForwardMode::GumbelSte,
    ];

    pub fn is_ste(self) -> bool {
        matches!(self, ForwardMode::SoftSte | ForwardMode::GumbelSte)
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, ForwardMode::GumbelSoft | ForwardMode::GumbelSte)
    }

    /// The deterministic mode used for validation: noise removed, STE kept.
    pub fn noiseless(self) -> Self {
        if self.is_ste() {
            ForwardMode::SoftSte
        } else {
            ForwardMode::Soft
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ForwardMode::Soft => "soft",
            ForwardMode::GumbelSoft => "gumbel-soft",
            ForwardMode::SoftSte => "soft-ste",
            ForwardMode::GumbelSte => "gumbel-ste",
        }
    }
}

impl std::str::FromStr for ForwardMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        ForwardMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown forward mode {s:?}")))
    }
}

impl std::fmt::Display for ForwardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    Warp,
    Dlgn,
    Llnn,
    Dwn,
}

impl Parametrization {
    /// Trainable reals per neuron.
    pub fn param_count(self, arity: usize) -> usize {
        match self {
            Parametrization::Dlgn => 1 << (1 << arity),
            _ => 1 << arity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Parametrization::Warp => "warp",
            Parametrization::Dlgn => "dlgn",
            Parametrization::Llnn => "llnn",
            Parametrization::Dwn => "dwn",
        }
    }
}

impl std::str::FromStr for Parametrization {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Parametrization::Warp,
            Parametrization::Dlgn,
            Parametrization::Llnn,
            Parametrization::Dwn,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| invalid(format!("unknown parametrization {s:?}")))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Standard logistic variate from a uniform draw in `(0, 1)`. Equal in
/// distribution to the difference of two standard Gumbel variates.
#[inline]
pub fn logistic_from_uniform(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

pub fn sample_logistic<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return logistic_from_uniform(u);
        }
    }
}

/// Address formed by thresholding each input at 0.5.
#[inline]
pub fn hard_address(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |a, (k, &v)| a | (((v > 0.5) as usize) << k))
}

/// Inputs thresholded at 0.5, as 0/1 reals.
pub fn harden(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect()
}

pub(crate) fn check_unit_inputs(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(k) => Err(invalid(format!(
            "input {k} = {} outside [0, 1]",
            x[k]
        ))),
        None => Ok(()),
    }
}

/// Wraps a probability in logistic noise: `sigmoid(logit(p) + g)`. Returns the
/// sample and `d sample / d p`.
#[inline]
pub(crate) fn perturb_probability(p: f64, noise: f64) -> (f64, f64) {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    let y = sigmoid(logit(p) + noise);
    (y, y * (1.0 - y) / (p * (1.0 - p)))
}

/// Any of the four parametrizations.
#[derive(Clone, Debug)]
pub enum Neuron {
    Warp(WarpNeuron),
    Dlgn(DlgnNeuron),
    Llnn(LlnnNeuron),
    Dwn(DwnNeuron),
}

impl Neuron {
    pub fn discretize(&self) -> LutTable {
        match self {
            Neuron::Warp(n) => n.discretize(),
            Neuron::Dlgn(n) => n.discretize(),
            Neuron::Llnn(n) => n.discretize(),
            Neuron::Dwn(n) => n.discretize(),
        }
    }

    pub fn parametrization(&self) -> Parametrization {
        match self {
            Neuron::Warp(_) => Parametrization::Warp,
            Neuron::Dlgn(_) => Parametrization::Dlgn,
            Neuron::Llnn(_) => Parametrization::Llnn,
            Neuron::Dwn(_) => Parametrization::Dwn,
        }
    }
}

/// Discretize any parametrization to its LUT.
pub fn discretize(neuron: &Neuron) -> LutTable {
    neuron.discretize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_parsing_roundtrip() {
        for m in ForwardMode::ALL {
            assert_eq!(m.name().parse::<ForwardMode>().unwrap(), m);
        }
        assert!("hard".parse::<ForwardMode>().is_err());
        assert_eq!(ForwardMode::GumbelSte.noiseless(), ForwardMode::SoftSte);
        assert_eq!(ForwardMode::GumbelSoft.noiseless(), ForwardMode::Soft);
    }

    #[test]
    fn softplus_inverse() {
        for y in [1e-6, 0.01, 0.5, 1.0, 7.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_noise_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut mean = 0.0;
        let mut var = 0.0;
        for _ in 0..n {
            let g = sample_logistic(&mut rng);
            mean += g;
            var += g * g;
        }
        mean /= n as f64;
        var = var / n as f64 - mean * mean;
        // standard logistic: mean 0, variance pi^2 / 3
        assert!(mean.abs() < 0.02);
        assert!((var - std::f64::consts::PI.powi(2) / 3.0).abs() < 0.05);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }
}
