//! Brute-force reference computations for the test suite.
//!
//! Nothing here calls into [`crate::hadamard`]'s transform: corner values are
//! computed with an explicitly materialized Hadamard matrix so that agreement
//! with the fast path is evidence rather than tautology. Everything is
//! exponential in the arity.

use crate::error::{invalid, Result};
use crate::hadamard::{LutTable, WalshCoeffs};

/// Largest arity [`enumerate_luts`] accepts.
pub const MAX_ENUM_ARITY: usize = 4;

/// Dense `2^n × 2^n` matrix with entries `(-1)^popcount(a & i)`, row-major.
pub fn dense_hadamard(arity: usize) -> Vec<Vec<f64>> {
    let len = 1usize << arity;
    (0..len)
        .map(|a| {
            (0..len)
                .map(|i| if (a & i).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Every table of arity `n`, each once, ascending in lexicographic truth-string order.
pub fn enumerate_luts(arity: usize) -> Result<impl Iterator<Item = LutTable>> {
    if arity == 0 || arity > MAX_ENUM_ARITY {
        return Err(invalid(format!(
            "cannot enumerate all tables of arity {arity} (max {MAX_ENUM_ARITY})"
        )));
    }
    let len = 1usize << arity;
    let count = 1u64 << len;
    Ok((0..count).map(move |idx| {
        let bits = (0..len).map(|a| (idx >> (len - 1 - a)) & 1 == 1).collect();
        LutTable::new(arity, bits).expect("valid arity")
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Inf];

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L1 => diffs.sum(),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Inf => diffs.fold(0.0, f64::max),
        }
    }
}

/// `sigmoid((H theta)[a] / tau)` for every address, via the dense matrix.
pub fn sigmoid_corner_values(theta: &WalshCoeffs, tau: f64) -> Vec<f64> {
    let h = dense_hadamard(theta.arity());
    mat_vec(&h, theta.theta())
        .into_iter()
        .map(|z| 1.0 / (1.0 + (-z / tau).exp()))
        .collect()
}

#[derive(Clone, Debug)]
pub struct NearestLuts {
    pub minimizers: Vec<LutTable>,
    pub distance: f64,
}

impl NearestLuts {
    pub fn contains(&self, lut: &LutTable) -> bool {
        self.minimizers.contains(lut)
    }
}

/// All tables minimizing `‖sigmoid-corner-values − t‖_p`. Distances within a
/// relative `1e-12` of the minimum count as ties.
pub fn brute_nearest_lut(theta: &WalshCoeffs, norm: Norm, tau: f64) -> Result<NearestLuts> {
    let corners = sigmoid_corner_values(theta, tau);
    let scored: Vec<(LutTable, f64)> = enumerate_luts(theta.arity())?
        .map(|t| {
            let tv: Vec<f64> = t.bits().iter().map(|&b| b as u8 as f64).collect();
            let d = norm.distance(&corners, &tv);
            (t, d)
        })
        .collect();
    let best = scored.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.max(1.0);
    let minimizers = scored
        .into_iter()
        .filter(|(_, d)| *d <= best + tol)
        .map(|(t, _)| t)
        .collect();
    Ok(NearestLuts {
        minimizers,
        distance: best,
    })
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_diff<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        let orig = x[k];
        x[k] = orig + step;
        let hi = f(&x);
        x[k] = orig - step;
        let lo = f(&x);
        x[k] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(invalid(format!(
                "function not finite around coordinate {k} ({lo}, {hi})"
            )));
        }
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
