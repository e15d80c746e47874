use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hadamard::LutTable;

pub(crate) mod kernel {
    /// Address with bit `k` set iff `x_k > 0`.
    #[inline]
    pub fn address(x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .fold(0, |a, (k, &v)| a | (((v > 0.0) as usize) << k))
    }

    /// Surrogate backward: unit gradient on the addressed entry, and for each
    /// input half the difference between the two entries reached by flipping
    /// that input's bit.
    #[inline]
    pub fn backward(beta: &[f64], addr: usize, up: f64, dbeta: &mut [f64], dx: &mut [f64]) {
        dbeta[addr] += up;
        for (k, d) in dx.iter_mut().enumerate() {
            let bit = 1 << k;
            *d += up * 0.5 * (beta[addr | bit] - beta[addr & !bit]);
        }
    }
}

/// DWN neuron: the real table entry addressed by the signs of the inputs.
///
/// Its input gradient is a finite-difference surrogate, not the derivative of
/// the forward map (which is zero almost everywhere).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwnNeuron {
    pub arity: usize,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DwnGrad {
    pub dbeta: Vec<f64>,
    pub dx: Vec<f64>,
}

impl DwnNeuron {
    pub fn new(arity: usize, beta: Vec<f64>) -> Result<Self> {
        if arity == 0 || arity > crate::hadamard::MAX_ARITY || beta.len() != 1 << arity {
            return Err(invalid(format!(
                "DWN of arity {arity} needs {} entries, got {}",
                1usize << arity.min(30),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("DWN entries must be finite"));
        }
        Ok(Self { arity, beta })
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity {
            return Err(invalid(format!("expected {} inputs, got {}", self.arity, x.len())));
        }
        Ok(self.beta[kernel::address(x)])
    }

    pub fn grad(&self, x: &[f64], upstream: f64) -> Result<DwnGrad> {
        if x.len() != self.arity {
            return Err(invalid(format!("expected {} inputs, got {}", self.arity, x.len())));
        }
        let mut dbeta = vec![0.0; self.beta.len()];
        let mut dx = vec![0.0; self.arity];
        kernel::backward(&self.beta, kernel::address(x), upstream, &mut dbeta, &mut dx);
        Ok(DwnGrad { dbeta, dx })
    }

    /// Bit `a` is set iff `beta_a > 0`.
    pub fn discretize(&self) -> LutTable {
        LutTable::new(self.arity, self.beta.iter().map(|&b| b > 0.0).collect())
            .expect("arity validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn addressing() {
        let n = DwnNeuron::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(n.forward(&[0.3, -0.7]).unwrap(), 1.0);
        assert_eq!(n.forward(&[0.3, 0.7]).unwrap(), 3.0);
        assert_eq!(n.forward(&[-0.3, -0.7]).unwrap(), 0.0);
    }

    #[test]
    fn surrogate_sign_matches_flip_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = 3;
            let beta: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let neuron = DwnNeuron::new(n, beta.clone()).unwrap();
            let g = neuron.grad(&x, 1.0).unwrap();
            let addr = kernel::address(&x);
            assert_eq!(g.dbeta.iter().filter(|&&d| d != 0.0).count(), 1);
            assert_eq!(g.dbeta[addr], 1.0);
            for k in 0..n {
                let diff = beta[addr | (1 << k)] - beta[addr & !(1 << k)];
                assert_eq!(g.dx[k].signum(), diff.signum());
            }
        }
    }

    #[test]
    fn discretize_by_sign() {
        let n = DwnNeuron::new(2, vec![-0.1, 0.2, 0.0, 5.0]).unwrap();
        assert_eq!(n.discretize().bits(), &[false, true, false, true]);
    }
}
