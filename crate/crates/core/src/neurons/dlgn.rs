use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_unit_inputs, hard_address, harden, perturb_probability, sample_logistic, ForwardMode,
};
use crate::error::{invalid, Result, Error};
use crate::hadamard::{fwht_in_place, LutTable, WalshCoeffs};

/// Gate names in lexicographic truth-table order (`f(00) f(01) f(10) f(11)`,
/// where the first character is `a = x2` and the second is `b = x1`).
pub const GATE_NAMES: [&str; 16] = [
    "CONST0", "AND", "A_AND_NOT_B", "ID_A", "NOT_A_AND_B", "ID_B", "XOR", "OR", "NOR", "XNOR",
    "NOT_B", "B_IMPLIES_A", "NOT_A", "A_IMPLIES_B", "NAND", "CONST1",
];

/// Surrogate polynomials as coefficients of `(1, a, b, ab)`.
pub const GATE_SURROGATES: [[f64; 4]; 16] = [
    [0.0, 0.0, 0.0, 0.0],   // 0
    [0.0, 0.0, 0.0, 1.0],   // ab
    [0.0, 1.0, 0.0, -1.0],  // a(1 - b)
    [0.0, 1.0, 0.0, 0.0],   // a
    [0.0, 0.0, 1.0, -1.0],  // (1 - a)b
    [0.0, 0.0, 1.0, 0.0],   // b
    [0.0, 1.0, 1.0, -2.0],  // a + b - 2ab
    [0.0, 1.0, 1.0, -1.0],  // a + b - ab
    [1.0, -1.0, -1.0, 1.0], // 1 - a - b + ab
    [1.0, -1.0, -1.0, 2.0], // 1 - a - b + 2ab
    [1.0, 0.0, -1.0, 0.0],  // 1 - b
    [1.0, 0.0, -1.0, 1.0],  // 1 - b + ab
    [1.0, -1.0, 0.0, 0.0],  // 1 - a
    [1.0, -1.0, 0.0, 1.0],  // 1 - a + ab
    [1.0, 0.0, 0.0, -1.0],  // 1 - ab
    [1.0, 0.0, 0.0, 0.0],   // 1
];

/// Gate index of the pass-through of `a = x2`.
pub const ID_A: usize = 3;
/// Gate index of the pass-through of `b = x1`.
pub const ID_B: usize = 5;

const GATES: usize = 16;

pub(crate) mod kernel {
    use super::{GATES, GATE_SURROGATES};

    /// Softmax of the raw weights into `alpha`.
    #[inline]
    pub fn alphas(raw: &[f64], alpha: &mut [f64]) {
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (a, r) in alpha.iter_mut().zip(raw) {
            *a = (r - max).exp();
            sum += *a;
        }
        alpha.iter_mut().for_each(|a| *a /= sum);
    }

    /// Mixture polynomial coefficients `sum_j alpha_j * c_j`.
    #[inline]
    pub fn mixture(alpha: &[f64]) -> [f64; 4] {
        let mut c = [0.0; 4];
        for (a, s) in alpha.iter().zip(GATE_SURROGATES.iter()) {
            for t in 0..4 {
                c[t] += a * s[t];
            }
        }
        c
    }

    #[inline]
    pub fn eval(c: &[f64; 4], x: &[f64]) -> f64 {
        let (b, a) = (x[0], x[1]);
        c[0] + c[1] * a + c[2] * b + c[3] * a * b
    }

    /// Accumulates gradients given `df = dL/df`.
    #[inline]
    pub fn backward(alpha: &[f64], c: &[f64; 4], x: &[f64], df: f64, draw: &mut [f64], dx: &mut [f64]) {
        let (b, a) = (x[0], x[1]);
        let f = eval(c, x);
        for j in 0..GATES {
            let s = &GATE_SURROGATES[j];
            let sj = s[0] + s[1] * a + s[2] * b + s[3] * a * b;
            draw[j] += df * alpha[j] * (sj - f);
        }
        dx[0] += df * (c[2] + c[3] * a);
        dx[1] += df * (c[1] + c[3] * b);
    }
}

/// DLGN neuron: softmax mixture over all sixteen two-input gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlgnNeuron {
    pub raw_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DlgnGrad {
    pub draw: Vec<f64>,
    pub dx: Vec<f64>,
}

impl DlgnNeuron {
    pub const ARITY: usize = 2;

    pub fn new(arity: usize, raw_weights: Vec<f64>) -> Result<Self> {
        if arity != Self::ARITY {
            return Err(Error::Unsupported(format!(
                "DLGN neurons have 2^(2^n) parameters; only n = 2 is supported, got n = {arity}"
            )));
        }
        if raw_weights.len() != GATES {
            return Err(invalid(format!("DLGN needs 16 weights, got {}", raw_weights.len())));
        }
        Ok(Self { raw_weights })
    }

    /// Parameter count `2^(2^n)` for comparison with the `2^n` of a WARP neuron.
    pub const fn param_count(arity: usize) -> usize {
        1 << (1 << arity)
    }

    pub fn alphas(&self) -> Vec<f64> {
        let mut a = vec![0.0; GATES];
        kernel::alphas(&self.raw_weights, &mut a);
        a
    }

    pub fn soft(&self, x: &[f64]) -> f64 {
        kernel::eval(&kernel::mixture(&self.alphas()), x)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != Self::ARITY {
            return Err(invalid(format!("expected 2 inputs, got {}", x.len())));
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

    pub fn grad(&self, x: &[f64], mode: ForwardMode, noise: f64, upstream: f64) -> Result<DlgnGrad> {
        self.check(x)?;
        let x_eval = if mode.is_ste() { harden(x) } else { x.to_vec() };
        let alpha = self.alphas();
        let c = kernel::mixture(&alpha);
        let f = kernel::eval(&c, &x_eval);
        let df = if mode.is_noisy() {
            upstream * perturb_probability(f, noise).1
        } else {
            upstream
        };
        let mut draw = vec![0.0; GATES];
        let mut dx = vec![0.0; 2];
        kernel::backward(&alpha, &c, &x_eval, df, &mut draw, &mut dx);
        Ok(DlgnGrad { draw, dx })
    }

    /// Index of the largest weight; the lowest index wins ties.
    pub fn argmax_gate(&self) -> usize {
        let mut best = 0;
        for (j, &w) in self.raw_weights.iter().enumerate() {
            if w > self.raw_weights[best] {
                best = j;
            }
        }
        best
    }

    pub fn discretize(&self) -> LutTable {
        gate_table(self.argmax_gate())
    }
}

pub(crate) fn gate_table(gate: usize) -> LutTable {
    LutTable::from_lex_index(2, gate as u64).expect("gate index < 16")
}

/// Raw pass-through weight `c` such that a one-hot-biased softmax agrees with
/// the pass-through gate with probability `p` at every corner.
pub fn dlgn_residual_c(arity: usize, p: f64) -> Result<f64> {
    if arity == 0 || arity > 2 {
        return Err(Error::Unsupported(format!(
            "DLGN residual constant only defined for n <= 2, got {arity}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let gates = (1u64 << (1 << arity)) as f64;
    let arg = (gates / 2.0) / (1.0 - p) - gates + 1.0;
    if !(arg > 0.0) {
        return Err(invalid(format!(
            "no residual constant for p = {p}: logarithm argument {arg} <= 0"
        )));
    }
    Ok(arg.ln())
}

/// Project the gate mixture onto corner probabilities `q = P alpha`, then take
/// Walsh coefficients `2^-n * H * (2q - 1)`.
pub fn convert_dlgn_to_warp(neuron: &DlgnNeuron) -> WalshCoeffs {
    let alpha = neuron.alphas();
    let mut q = [0.0f64; 4];
    for (j, a) in alpha.iter().enumerate() {
        let t = gate_table(j);
        for (addr, qa) in q.iter_mut().enumerate() {
            if t.get(addr) {
                *qa += a;
            }
        }
    }
    let mut theta: Vec<f64> = q.iter().map(|v| 2.0 * v - 1.0).collect();
    fwht_in_place(&mut theta);
    theta.iter_mut().for_each(|t| *t /= 4.0);
    WalshCoeffs::new(2, theta).expect("finite")
}
