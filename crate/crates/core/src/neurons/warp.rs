use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_unit_inputs, hard_address, harden, logit, sample_logistic, sigmoid, ForwardMode};
use crate::error::{invalid, Result};
use crate::hadamard::{theta_to_lut, LutTable, WalshCoeffs};

pub(crate) mod kernel {
    /// `phi[i] = prod_{k in i} (1 - 2 x_k)`, built from shared partial products.
    #[inline]
    pub fn monomials(x: &[f64], phi: &mut [f64]) {
        phi[0] = 1.0;
        let mut width = 1;
        for &xk in x {
            let s = 1.0 - 2.0 * xk;
            let (lo, hi) = phi[..2 * width].split_at_mut(width);
            for (h, l) in hi.iter_mut().zip(lo.iter()) {
                *h = l * s;
            }
            width *= 2;
        }
    }

    #[inline]
    pub fn preactivation(theta: &[f64], phi: &[f64]) -> f64 {
        theta.iter().zip(phi).map(|(t, p)| t * p).sum()
    }

    /// Accumulates gradients given `du = dL/du` with `u = z / tau + noise`.
    #[inline]
    pub fn backward(
        theta: &[f64],
        inv_tau: f64,
        phi: &[f64],
        du: f64,
        dtheta: &mut [f64],
        dx: &mut [f64],
    ) {
        let dz = du * inv_tau;
        for (g, p) in dtheta.iter_mut().zip(phi) {
            *g += dz * p;
        }
        for (k, d) in dx.iter_mut().enumerate() {
            let bit = 1usize << k;
            let mut dz_ds = 0.0;
            let mut i = bit;
            while i < theta.len() {
                // iterate indices with bit k set
                let block_end = i + bit;
                for j in i..block_end {
                    dz_ds += theta[j] * phi[j ^ bit];
                }
                i = block_end + bit;
            }
            *d += dz * -2.0 * dz_ds;
        }
    }
}

/// A WARP neuron: `sigmoid((1/tau) * sum_i theta_i * phi_i(1 - 2x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpNeuron {
    pub coeffs: WalshCoeffs,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpGrad {
    pub dtheta: Vec<f64>,
    pub dx: Vec<f64>,
}

impl WarpNeuron {
    pub fn new(coeffs: WalshCoeffs, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        Ok(Self { coeffs, tau })
    }

    pub fn arity(&self) -> usize {
        self.coeffs.arity()
    }

    fn check_inputs(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arity() {
            return Err(invalid(format!(
                "expected {} inputs, got {}",
                self.arity(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Scaled pre-activation `z / tau` at `x`.
    pub fn preactivation(&self, x: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.coeffs.theta().len()];
        kernel::monomials(x, &mut phi);
        kernel::preactivation(self.coeffs.theta(), &phi) / self.tau
    }

    /// Forward pass with an explicit logistic noise value (ignored by the
    /// noiseless modes).
    pub fn forward_with_noise(&self, x: &[f64], mode: ForwardMode, noise: f64) -> Result<f64> {
        self.check_inputs(x)?;
        match mode {
            ForwardMode::Soft => {
                check_unit_inputs(x)?;
                Ok(sigmoid(self.preactivation(x)))
            }
            ForwardMode::GumbelSoft => {
                check_unit_inputs(x)?;
                Ok(sigmoid(self.preactivation(x) + noise))
            }
            ForwardMode::SoftSte => Ok(self.discretize().get(hard_address(x)) as u8 as f64),
            ForwardMode::GumbelSte => {
                let u = self.preactivation(&harden(x)) + noise;
                Ok((u > 0.0) as u8 as f64)
            }
        }
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], mode: ForwardMode, rng: &mut R) -> Result<f64> {
        let noise = if mode.is_noisy() { sample_logistic(rng) } else { 0.0 };
        self.forward_with_noise(x, mode, noise)
    }

    /// Exact reverse-mode gradient of the relaxed output. STE modes return the
    /// gradient of their soft counterpart evaluated at the hardened inputs,
    /// passing `dx` straight through the input threshold.
    pub fn grad(&self, x: &[f64], mode: ForwardMode, noise: f64, upstream: f64) -> Result<WarpGrad> {
        self.check_inputs(x)?;
        let x_eval = if mode.is_ste() { harden(x) } else { x.to_vec() };
        let noise = if mode.is_noisy() { noise } else { 0.0 };
        let theta = self.coeffs.theta();
        let mut phi = vec![0.0; theta.len()];
        kernel::monomials(&x_eval, &mut phi);
        let u = kernel::preactivation(theta, &phi) / self.tau + noise;
        let y = sigmoid(u);
        let du = upstream * y * (1.0 - y);
        let mut dtheta = vec![0.0; theta.len()];
        let mut dx = vec![0.0; x.len()];
        kernel::backward(theta, 1.0 / self.tau, &phi, du, &mut dtheta, &mut dx);
        Ok(WarpGrad { dtheta, dx })
    }

    pub fn discretize(&self) -> LutTable {
        theta_to_lut(&self.coeffs)
    }
}

/// Coefficients making the neuron agree with the pass-through of input `k`
/// (1-based) with probability `p` at every corner.
pub fn residual_init(arity: usize, p: f64, tau: f64, k: usize) -> Result<WalshCoeffs> {
    if !(p > 0.5 && p < 1.0) {
        return Err(invalid(format!(
            "residual probability must lie in (0.5, 1), got {p}"
        )));
    }
    if k == 0 || k > arity {
        return Err(invalid(format!("designated input {k} out of range 1..={arity}")));
    }
    if !(tau > 0.0) {
        return Err(invalid(format!("temperature must be positive, got {tau}")));
    }
    let mut theta = vec![0.0; 1 << arity];
    theta[1 << (k - 1)] = tau * logit(1.0 - p);
    WalshCoeffs::new(arity, theta)
}
