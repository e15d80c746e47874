//! Walsh–Hadamard basis over Boolean truth tables.
//!
//! Sign convention, fixed for the whole crate:
//!
//! * inputs enter the parity monomials through `s = 1 - 2x`, so bit 0 maps to
//!   `+1` and bit 1 maps to `-1`;
//! * outputs leave through `2t - 1`, so an output bit of 1 is `+1`. With this
//!   choice `sigmoid(z / tau)` is the probability that the neuron outputs 1.
//!
//! The unnormalized Hadamard matrix is `H[a][i] = (-1)^popcount(a & i)`.
//! Analysis is `theta = 2^-n * H * out(bits)`, synthesis is `z = H * theta`,
//! so an exact LUT has corner pre-activations of exactly `±1`.
//!
//! Address bit `k` (LSB first) carries input `x_{k+1}`; a basis index `i`
//! names the monomial over the inputs whose bits are set in `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported neuron arity.
pub const MAX_ARITY: usize = 8;

/// `x ↦ 1 - 2x`, the input map onto the symmetric hypercube.
#[inline]
pub fn btp(x: f64) -> f64 {
    1.0 - 2.0 * x
}

/// Truth table of an `n`-input Boolean function.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LutTable {
    arity: usize,
    bits: Vec<bool>,
}

impl LutTable {
    pub fn new(arity: usize, bits: Vec<bool>) -> Result<Self> {
        check_arity(arity)?;
        if bits.len() != 1 << arity {
            return Err(invalid(format!(
                "LUT of arity {arity} needs {} bits, got {}",
                1usize << arity,
                bits.len()
            )));
        }
        Ok(Self { arity, bits })
    }

    /// Table from a bit mask where bit `a` of `mask` is the output at address `a`.
    pub fn from_mask(arity: usize, mask: u64) -> Result<Self> {
        check_arity(arity)?;
        if arity > 6 {
            return Err(invalid("from_mask supports arity <= 6"));
        }
        let bits = (0..1usize << arity).map(|a| (mask >> a) & 1 == 1).collect();
        Ok(Self { arity, bits })
    }

    /// Table number `index` in lexicographic order of the truth strings
    /// `f(0) f(1) … f(2^n - 1)`, i.e. address 0 is the most significant bit.
    /// For `n = 2` this is the usual listing of the sixteen two-input gates.
    pub fn from_lex_index(arity: usize, index: u64) -> Result<Self> {
        check_arity(arity)?;
        if arity > 6 {
            return Err(invalid("from_lex_index supports arity <= 6"));
        }
        let len = 1usize << arity;
        if len < 64 && index >> len != 0 {
            return Err(invalid(format!("table index {index} out of range")));
        }
        let bits = (0..len).map(|a| (index >> (len - 1 - a)) & 1 == 1).collect();
        Ok(Self { arity, bits })
    }

    /// Inverse of [`LutTable::from_lex_index`].
    pub fn lex_index(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    /// The 1-based input `k` this table copies, if it is a pass-through.
    pub fn pass_through_input(&self) -> Option<usize> {
        (1..=self.arity).find(|&k| self.bits.iter().enumerate().all(|(a, &b)| b == ((a >> (k - 1)) & 1 == 1)))
    }

    pub fn constant(arity: usize, value: bool) -> Result<Self> {
        check_arity(arity)?;
        Ok(Self {
            arity,
            bits: vec![value; 1 << arity],
        })
    }

    /// The function `f(x) = x_k` (1-based `k`).
    pub fn pass_through(arity: usize, k: usize) -> Result<Self> {
        check_arity(arity)?;
        if k == 0 || k > arity {
            return Err(invalid(format!("input {k} out of range 1..={arity}")));
        }
        let bits = (0..1usize << arity).map(|a| (a >> (k - 1)) & 1 == 1).collect();
        Ok(Self { arity, bits })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, address: usize) -> bool {
        self.bits[address]
    }

    /// Low 64 bits of the table as a mask, address 0 in bit 0.
    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .take(64)
            .enumerate()
            .fold(0u64, |m, (a, &b)| m | ((b as u64) << a))
    }

    pub fn complement(&self) -> Self {
        Self {
            arity: self.arity,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// `g(x) = f(!x)`: every input negated.
    pub fn input_complement(&self) -> Self {
        let all = self.bits.len() - 1;
        Self {
            arity: self.arity,
            bits: (0..self.bits.len()).map(|a| self.bits[a ^ all]).collect(),
        }
    }

    /// `±1` output values, `+1` where the bit is set.
    pub fn signs(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
    }

    /// Hex string with address 0 at the least significant bit of the last digit.
    pub fn to_hex(&self) -> String {
        let digits = self.bits.len().div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut v = 0u32;
            for b in 0..4 {
                let a = d * 4 + b;
                if a < self.bits.len() && self.bits[a] {
                    v |= 1 << b;
                }
            }
            out.push(char::from_digit(v, 16).unwrap());
        }
        out
    }

    pub fn from_hex(arity: usize, hex: &str) -> Result<Self> {
        check_arity(arity)?;
        let len = 1usize << arity;
        let digits = len.div_ceil(4);
        if hex.len() != digits {
            return Err(invalid(format!(
                "arity {arity} LUT needs {digits} hex digits, got {}",
                hex.len()
            )));
        }
        let mut bits = vec![false; len];
        for (pos, ch) in hex.chars().enumerate() {
            let v = ch
                .to_digit(16)
                .ok_or_else(|| invalid(format!("invalid hex digit {ch:?}")))?;
            let d = digits - 1 - pos;
            for b in 0..4 {
                let a = d * 4 + b;
                let set = (v >> b) & 1 == 1;
                if a < len {
                    bits[a] = set;
                } else if set {
                    return Err(invalid("hex LUT sets bits beyond the table length"));
                }
            }
        }
        Ok(Self { arity, bits })
    }
}

impl fmt::Debug for LutTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LutTable(n={}, ", self.arity)?;
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

/// Walsh coefficients `theta`, one per parity monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalshCoeffs {
    arity: usize,
    theta: Vec<f64>,
}

impl WalshCoeffs {
    pub fn new(arity: usize, theta: Vec<f64>) -> Result<Self> {
        check_arity(arity)?;
        if theta.len() != 1 << arity {
            return Err(invalid(format!(
                "arity {arity} needs {} coefficients, got {}",
                1usize << arity,
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(invalid(format!("coefficient {i} is not finite")));
        }
        Ok(Self { arity, theta })
    }

    pub fn zeros(arity: usize) -> Result<Self> {
        Self::new(arity, vec![0.0; 1 << arity])
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    /// Number of reals a neuron of this arity stores: `2^n`.
    pub const fn param_count(arity: usize) -> usize {
        1 << arity
    }

    pub fn negated(&self) -> Self {
        Self {
            arity: self.arity,
            theta: self.theta.iter().map(|t| -t).collect(),
        }
    }

    /// Negates coefficients of odd-degree monomials.
    pub fn odd_negated(&self) -> Self {
        Self {
            arity: self.arity,
            theta: self
                .theta
                .iter()
                .enumerate()
                .map(|(i, t)| if i.count_ones() % 2 == 1 { -t } else { *t })
                .collect(),
        }
    }

    /// Corner pre-activations `H * theta`, indexed by address.
    pub fn corner_preactivations(&self) -> Vec<f64> {
        let mut z = self.theta.clone();
        fwht_in_place(&mut z);
        z
    }
}

fn check_arity(arity: usize) -> Result<()> {
    if arity == 0 || arity > MAX_ARITY {
        return Err(invalid(format!(
            "arity {arity} outside supported range 1..={MAX_ARITY}"
        )));
    }
    Ok(())
}

/// In-place unnormalized Walsh–Hadamard butterfly. Length must be a power of two.
pub fn fwht_in_place(values: &mut [f64]) {
    debug_assert!(values.len().is_power_of_two());
    let len = values.len();
    let mut half = 1;
    while half < len {
        for block in (0..len).step_by(half * 2) {
            for i in block..block + half {
                let a = values[i];
                let b = values[i + half];
                values[i] = a + b;
                values[i + half] = a - b;
            }
        }
        half *= 2;
    }
}

/// Unnormalized transform `H * values`.
pub fn fwht(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() || !values.len().is_power_of_two() {
        return Err(invalid(format!(
            "transform length {} is not a power of two",
            values.len()
        )));
    }
    let mut out = values.to_vec();
    fwht_in_place(&mut out);
    Ok(out)
}

/// `theta = 2^-n * H * out(bits)`.
pub fn lut_to_theta(lut: &LutTable) -> WalshCoeffs {
    let mut theta = lut.signs();
    fwht_in_place(&mut theta);
    let scale = 1.0 / lut.len() as f64;
    theta.iter_mut().for_each(|t| *t *= scale);
    WalshCoeffs {
        arity: lut.arity,
        theta,
    }
}

/// Nearest LUT: bit `a` is set iff `(H * theta)[a] > 0`. A zero pre-activation decodes to 0.
pub fn theta_to_lut(theta: &WalshCoeffs) -> LutTable {
    let z = theta.corner_preactivations();
    LutTable {
        arity: theta.arity,
        bits: z.iter().map(|&v| v > 0.0).collect(),
    }
}
