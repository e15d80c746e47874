use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_unit_inputs, hard_address, harden, perturb_probability, sample_logistic, sigmoid,
    ForwardMode,
};
use crate::error::{invalid, Result};
use crate::hadamard::{fwht_in_place, LutTable, WalshCoeffs};

pub(crate) mod kernel {
    use super::sigmoid;

    /// Indicator weights `w[a] = prod_k x_k^{a_k} (1 - x_k)^{1 - a_k}`.
    #[inline]
    pub fn indicators(x: &[f64], w: &mut [f64]) {
        w[0] = 1.0;
        let mut width = 1;
        for &xk in x {
            let (lo, hi) = w[..2 * width].split_at_mut(width);
            for (h, l) in hi.iter_mut().zip(lo.iter_mut()) {
                *h = *l * xk;
                *l *= 1.0 - xk;
            }
            width *= 2;
        }
    }

    /// Multilinear extension of `values` at `x`; clobbers `values`.
    #[inline]
    pub fn multilinear(values: &mut [f64], x: &[f64]) -> f64 {
        for k in (0..x.len()).rev() {
            let half = 1 << k;
            for a in 0..half {
                values[a] = values[a] * (1.0 - x[k]) + values[a + half] * x[k];
            }
        }
        values[0]
    }

    /// `d/dx_k` of the multilinear extension of `table` at `x`, accumulated
    /// into `dx` after scaling by `scale`. `tmp` holds at least `table.len() / 2`.
    pub fn multilinear_input_grad(table: &[f64], x: &[f64], scale: f64, tmp: &mut [f64], xs: &mut [f64], dx: &mut [f64]) {
        let n = x.len();
        for k in 0..n {
            let bit = 1usize << k;
            let low = bit - 1;
            for (r, t) in tmp[..table.len() / 2].iter_mut().enumerate() {
                // r enumerates addresses over the remaining variables
                let a = ((r & !low) << 1) | (r & low);
                *t = table[a | bit] - table[a];
            }
            let mut m = 0;
            for (j, &xj) in x.iter().enumerate() {
                if j != k {
                    xs[m] = xj;
                    m += 1;
                }
            }
            dx[k] += scale * multilinear(&mut tmp[..table.len() / 2], &xs[..n - 1]);
        }
    }

    /// Effective weights `gamma = sigmoid(raw)`.
    #[inline]
    pub fn gammas(raw: &[f64], gamma: &mut [f64]) {
        for (g, r) in gamma.iter_mut().zip(raw) {
            *g = sigmoid(*r);
        }
    }
}

/// LLNN neuron: sigmoid-constrained weights on the indicator basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlnnNeuron {
    pub arity: usize,
    pub raw_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlnnGrad {
    pub draw: Vec<f64>,
    pub dx: Vec<f64>,
}

impl LlnnNeuron {
    pub fn new(arity: usize, raw_weights: Vec<f64>) -> Result<Self> {
        if arity == 0 || arity > crate::hadamard::MAX_ARITY || raw_weights.len() != 1 << arity {
            return Err(invalid(format!(
                "LLNN of arity {arity} needs {} weights, got {}",
                1usize << arity.min(30),
                raw_weights.len()
            )));
        }
        Ok(Self { arity, raw_weights })
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.raw_weights.iter().map(|&r| sigmoid(r)).collect()
    }

    /// Relaxed output without noise.
    pub fn soft(&self, x: &[f64]) -> f64 {
        let mut w = vec![0.0; self.raw_weights.len()];
        kernel::indicators(x, &mut w);
        self.gammas().iter().zip(&w).map(|(g, w)| g * w).sum()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arity {
            return Err(invalid(format!("expected {} inputs, got {}", self.arity, x.len())));
        }
        Ok(())
    }

    pub fn forward_with_noise(&self, x: &[f64], mode: ForwardMode, noise: f64) -> Result<f64> {
        self.check(x)?;
        match mode {
            ForwardMode::Soft => {
                check_unit_inputs(x)?;
                Ok(self.soft(x))
            }
            ForwardMode::GumbelSoft => {
                check_unit_inputs(x)?;
                Ok(perturb_probability(self.soft(x), noise).0)
            }
            ForwardMode::SoftSte => Ok(self.discretize().get(hard_address(x)) as u8 as f64),
            ForwardMode::GumbelSte => {
                let p = self.soft(&harden(x));
                Ok((perturb_probability(p, noise).0 > 0.5) as u8 as f64)
            }
        }
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], mode: ForwardMode, rng: &mut R) -> Result<f64> {
        let noise = if mode.is_noisy() { sample_logistic(rng) } else { 0.0 };
        self.forward_with_noise(x, mode, noise)
    }

    pub fn grad(&self, x: &[f64], mode: ForwardMode, noise: f64, upstream: f64) -> Result<LlnnGrad> {
        self.check(x)?;
        let x_eval = if mode.is_ste() { harden(x) } else { x.to_vec() };
        let len = self.raw_weights.len();
        let gamma = self.gammas();
        let mut w = vec![0.0; len];
        kernel::indicators(&x_eval, &mut w);
        let f: f64 = gamma.iter().zip(&w).map(|(g, w)| g * w).sum();
        let scale = if mode.is_noisy() {
            upstream * perturb_probability(f, noise).1
        } else {
            upstream
        };
        let draw = gamma
            .iter()
            .zip(&w)
            .map(|(g, w)| scale * w * g * (1.0 - g))
            .collect();
        let mut dx = vec![0.0; self.arity];
        let mut tmp = vec![0.0; len / 2];
        let mut xs = vec![0.0; self.arity];
        kernel::multilinear_input_grad(&gamma, &x_eval, scale, &mut tmp, &mut xs, &mut dx);
        Ok(LlnnGrad { draw, dx })
    }

    /// Bit `a` is set iff `gamma_a > 0.5`, i.e. the raw weight is positive.
    pub fn discretize(&self) -> LutTable {
        LutTable::new(self.arity, self.raw_weights.iter().map(|&r| r > 0.0).collect())
            .expect("arity validated at construction")
    }
}

/// Walsh coefficients `2^-n * H * (2 gamma - 1)`.
pub fn convert_llnn_to_warp(neuron: &LlnnNeuron) -> WalshCoeffs {
    let len = neuron.raw_weights.len();
    let mut theta: Vec<f64> = neuron.gammas().iter().map(|g| 2.0 * g - 1.0).collect();
    fwht_in_place(&mut theta);
    theta.iter_mut().for_each(|t| *t /= len as f64);
    WalshCoeffs::new(neuron.arity, theta).expect("finite")
}
