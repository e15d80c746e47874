//! Thermometer binarization of real-valued features.
//!
//! Feature `j` becomes `l` bits, bit `i` being `1{omega[i][j] <= x_j}`. Encoded
//! vectors are feature-major: bit `(i, j)` lives at index `j * l + i`, so each
//! feature's bits are contiguous and set bits form a prefix.
//!
//! Fixed plans store realized thresholds directly (non-decreasing; equal
//! thresholds are allowed for constant features). Learnable plans store a free
//! base threshold per column plus `l - 1` pre-softplus first differences, so
//! realized thresholds are strictly increasing whatever the parameter values.
//! The soft relaxation is `sigmoid((x_j - omega[i][j]) / (rho * scale_j) + g)`;
//! `scale_j` is 1 unless the plan was fit with per-feature scaling, and it
//! multiplies the learnable parametrization too, so that one temperature and
//! one learning rate fit features of very different magnitudes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::neurons::{sigmoid, softplus, softplus_inv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sharing {
    /// One threshold column per feature.
    PerFeature,
    /// A single column shared by every feature.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Thresholds {
    Fixed {
        /// `l × columns`, row-major.
        omega: Vec<f64>,
    },
    Learnable {
        base: Vec<f64>,
        /// `(l - 1) × columns`, row-major.
        deltas: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    bits_per_feature: usize,
    features: usize,
    sharing: Sharing,
    pub rho: f64,
    scale: Vec<f64>,
    thresholds: Thresholds,
}

/// Gradient with respect to a learnable plan's parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanGrad {
    pub dbase: Vec<f64>,
    pub ddeltas: Vec<f64>,
}

impl PlanGrad {
    pub fn zeros_like(plan: &ThresholdPlan) -> Self {
        match &plan.thresholds {
            Thresholds::Learnable { base, deltas } => PlanGrad {
                dbase: vec![0.0; base.len()],
                ddeltas: vec![0.0; deltas.len()],
            },
            Thresholds::Fixed { .. } => PlanGrad::default(),
        }
    }

    pub fn add(&mut self, other: &PlanGrad) {
        for (a, b) in self.dbase.iter_mut().zip(&other.dbase) {
            *a += b;
        }
        for (a, b) in self.ddeltas.iter_mut().zip(&other.ddeltas) {
            *a += b;
        }
    }
}

/// Per-feature `(min, max)`.
pub fn feature_ranges(features: &[f64], d: usize) -> Result<Vec<(f64, f64)>> {
    if d == 0 || features.is_empty() || features.len() % d != 0 {
        return Err(invalid("cannot compute feature ranges of empty data"));
    }
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for row in features.chunks_exact(d) {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    Ok(ranges)
}

fn column_count(sharing: Sharing, features: usize) -> usize {
    match sharing {
        Sharing::PerFeature => features,
        Sharing::Global => 1,
    }
}

/// Linear interpolation between order statistics at `q * (N - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_bits(l: usize) -> Result<()> {
    if l == 0 {
        return Err(invalid("bits per feature must be at least 1"));
    }
    Ok(())
}

impl ThresholdPlan {
    /// A fixed plan from explicit thresholds (`l × columns`, row-major).
    pub fn fixed(
        bits_per_feature: usize,
        features: usize,
        sharing: Sharing,
        omega: Vec<f64>,
        rho: f64,
    ) -> Result<Self> {
        check_bits(bits_per_feature)?;
        let cols = column_count(sharing, features);
        if omega.len() != bits_per_feature * cols {
            return Err(invalid(format!(
                "expected {} thresholds, got {}",
                bits_per_feature * cols,
                omega.len()
            )));
        }
        for j in 0..cols {
            for i in 1..bits_per_feature {
                if omega[i * cols + j] < omega[(i - 1) * cols + j] {
                    return Err(invalid(format!("thresholds of column {j} decrease at row {i}")));
                }
            }
        }
        let plan = Self {
            bits_per_feature,
            features,
            sharing,
            rho,
            scale: vec![1.0; cols],
            thresholds: Thresholds::Fixed { omega },
        };
        plan.validate()?;
        Ok(plan)
    }

    /// A learnable plan from a base per column and `(l - 1) × columns` deltas.
    pub fn learnable(
        bits_per_feature: usize,
        features: usize,
        sharing: Sharing,
        base: Vec<f64>,
        deltas: Vec<f64>,
        rho: f64,
    ) -> Result<Self> {
        check_bits(bits_per_feature)?;
        let cols = column_count(sharing, features);
        if base.len() != cols || deltas.len() != (bits_per_feature - 1) * cols {
            return Err(invalid("learnable plan parameter shapes do not match"));
        }
        let plan = Self {
            bits_per_feature,
            features,
            sharing,
            rho,
            scale: vec![1.0; cols],
            thresholds: Thresholds::Learnable { base, deltas },
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("temperature rho must be positive, got {}", self.rho)));
        }
        if self.features == 0 {
            return Err(invalid("plan needs at least one feature"));
        }
        Ok(())
    }

    /// Equidistant interior thresholds `min + k / (l + 1) * (max - min)`.
    pub fn fit_uniform(ranges: &[(f64, f64)], l: usize, sharing: Sharing, rho: f64) -> Result<Self> {
        check_bits(l)?;
        if ranges.is_empty() {
            return Err(invalid("cannot fit thresholds on empty data"));
        }
        let cols_ranges: Vec<(f64, f64)> = match sharing {
            Sharing::PerFeature => ranges.to_vec(),
            Sharing::Global => vec![ranges
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, r| (a.0.min(r.0), a.1.max(r.1)))],
        };
        let cols = cols_ranges.len();
        let mut omega = vec![0.0; l * cols];
        for (j, &(lo, hi)) in cols_ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("feature {j} has no finite range")));
            }
            for k in 1..=l {
                let t = if hi > lo {
                    lo + (k as f64 / (l + 1) as f64) * (hi - lo)
                } else {
                    lo
                };
                omega[(k - 1) * cols + j] = t;
            }
        }
        Self::fixed(l, ranges.len(), sharing, omega, rho)
    }

    /// Empirical quantiles `k / (l + 1)` of each feature (pooled for global sharing).
    pub fn fit_distributive(features: &[f64], d: usize, l: usize, sharing: Sharing, rho: f64) -> Result<Self> {
        check_bits(l)?;
        if d == 0 || features.len() % d != 0 {
            return Err(invalid("feature matrix is not rectangular"));
        }
        let samples = features.len() / d;
        if samples < l || samples == 0 {
            return Err(invalid(format!(
                "distributive thresholds need at least {l} samples, got {samples}"
            )));
        }
        let columns: Vec<Vec<f64>> = match sharing {
            Sharing::PerFeature => (0..d)
                .map(|j| features.iter().skip(j).step_by(d).copied().collect())
                .collect(),
            Sharing::Global => vec![features.to_vec()],
        };
        let cols = columns.len();
        let mut omega = vec![0.0; l * cols];
        for (j, mut col) in columns.into_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("feature {j} has non-finite values")));
            }
            col.sort_by(f64::total_cmp);
            for k in 1..=l {
                omega[(k - 1) * cols + j] = quantile(&col, k as f64 / (l + 1) as f64);
            }
        }
        Self::fixed(l, d, sharing, omega, rho)
    }

    /// Sets each column's relaxation scale to that feature's standard
    /// deviation (1 for constant features).
    pub fn with_feature_scaling(mut self, features: &[f64]) -> Result<Self> {
        let d = self.features;
        if features.len() % d != 0 || features.is_empty() {
            return Err(invalid("feature matrix is not rectangular"));
        }
        let n = (features.len() / d) as f64;
        let cols = self.columns();
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for row in features.chunks_exact(d) {
            for j in 0..d {
                mean[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        let stds: Vec<f64> = (0..d)
            .map(|j| {
                let m = mean[j] / n;
                (sq[j] / n - m * m).max(0.0).sqrt()
            })
            .collect();
        self.scale = match self.sharing {
            Sharing::PerFeature => stds.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect(),
            Sharing::Global => {
                let s = stds.iter().sum::<f64>() / d as f64;
                vec![if s > 0.0 { s } else { 1.0 }; cols]
            }
        };
        if let Thresholds::Learnable { .. } = self.thresholds {
            return Err(invalid("set feature scaling before making the plan learnable"));
        }
        Ok(self)
    }

    /// Converts a fixed plan into a learnable one with the same realized
    /// thresholds; zero gaps are widened to `min_gap * scale`.
    pub fn into_learnable(self, min_gap: f64) -> Result<Self> {
        let omega = match &self.thresholds {
            Thresholds::Fixed { omega } => omega.clone(),
            Thresholds::Learnable { .. } => return Ok(self),
        };
        let cols = self.columns();
        let l = self.bits_per_feature;
        let mut base = vec![0.0; cols];
        let mut deltas = vec![0.0; (l - 1) * cols];
        for j in 0..cols {
            let s = self.scale[j];
            base[j] = omega[j] / s;
            let mut prev = omega[j];
            for i in 1..l {
                let gap = ((omega[i * cols + j] - prev) / s).max(min_gap);
                deltas[(i - 1) * cols + j] = softplus_inv(gap);
                prev += gap * s;
            }
        }
        Ok(Self {
            thresholds: Thresholds::Learnable { base, deltas },
            ..self
        })
    }

    pub fn bits_per_feature(&self) -> usize {
        self.bits_per_feature
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    pub fn columns(&self) -> usize {
        column_count(self.sharing, self.features)
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self.thresholds, Thresholds::Learnable { .. })
    }

    /// Number of encoded bits `l * d`.
    pub fn output_width(&self) -> usize {
        self.bits_per_feature * self.features
    }

    /// Mutable learnable parameters `(base, deltas)`, `None` for fixed plans.
    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match &mut self.thresholds {
            Thresholds::Learnable { base, deltas } => Some((base, deltas)),
            Thresholds::Fixed { .. } => None,
        }
    }

    /// Realized thresholds over columns, `l × columns` row-major.
    fn realize_columns(&self) -> Vec<f64> {
        match &self.thresholds {
            Thresholds::Fixed { omega } => omega.clone(),
            Thresholds::Learnable { base, deltas } => {
                let cols = self.columns();
                let l = self.bits_per_feature;
                let mut omega = vec![0.0; l * cols];
                for j in 0..cols {
                    let s = self.scale[j];
                    omega[j] = s * base[j];
                    for i in 1..l {
                        let prev = omega[(i - 1) * cols + j];
                        let mut next = prev + s * softplus(deltas[(i - 1) * cols + j]);
                        if next <= prev {
                            next = prev.next_up();
                        }
                        omega[i * cols + j] = next;
                    }
                }
                omega
            }
        }
    }

    /// Realized thresholds, `l × d` row-major (`omega[i * d + j]`).
    pub fn realize_thresholds(&self) -> Vec<f64> {
        let cols = self.columns();
        let colwise = self.realize_columns();
        if cols == self.features {
            return colwise;
        }
        let d = self.features;
        let mut omega = vec![0.0; self.bits_per_feature * d];
        for i in 0..self.bits_per_feature {
            for j in 0..d {
                omega[i * d + j] = colwise[i];
            }
        }
        omega
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features {
            return Err(invalid(format!(
                "expected {} features, got {}",
                self.features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Soft thermometer bits; `noise(bit_index)` supplies the logistic draw
    /// for each output bit when `noisy`.
    pub fn encode_soft_with(&self, x: &[f64], noise: Option<&dyn Fn(usize) -> f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let omega = self.realize_thresholds();
        let mut out = vec![0.0; self.output_width()];
        self.encode_soft_into(&omega, x, noise, &mut out);
        Ok(out)
    }

    pub fn encode_soft(&self, x: &[f64], noisy: bool, rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
        if noisy {
            let draws: Vec<f64> = (0..self.output_width())
                .map(|_| crate::neurons::sample_logistic(rng))
                .collect();
            self.encode_soft_with(x, Some(&|b| draws[b]))
        } else {
            self.encode_soft_with(x, None)
        }
    }

    pub(crate) fn encode_soft_into(
        &self,
        omega: &[f64],
        x: &[f64],
        noise: Option<&dyn Fn(usize) -> f64>,
        out: &mut [f64],
    ) {
        let l = self.bits_per_feature;
        let d = self.features;
        let cols = self.columns();
        for j in 0..d {
            let inv = 1.0 / (self.rho * self.scale[j % cols]);
            for i in 0..l {
                let b = j * l + i;
                let g = noise.map_or(0.0, |f| f(b));
                out[b] = sigmoid((x[j] - omega[i * d + j]) * inv + g);
            }
        }
    }

    pub fn encode_hard(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check_input(x)?;
        let omega = self.realize_thresholds();
        let mut out = vec![false; self.output_width()];
        encode_hard_into(&omega, self.bits_per_feature, self.features, x, &mut out);
        Ok(out)
    }

    /// Accumulates gradients of the soft encoding. `dbits` is `dL/d bit`;
    /// `noise` must reproduce the forward draws. Returns `dL/dx`.
    pub(crate) fn backward(
        &self,
        omega: &[f64],
        x: &[f64],
        noise: Option<&dyn Fn(usize) -> f64>,
        dbits: &[f64],
        grad: &mut PlanGrad,
        domega: &mut [f64],
    ) -> Vec<f64> {
        let l = self.bits_per_feature;
        let d = self.features;
        let cols = self.columns();
        let mut dx = vec![0.0; d];
        domega.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..d {
            let c = j % cols;
            let inv = 1.0 / (self.rho * self.scale[c]);
            for i in 0..l {
                let b = j * l + i;
                let g = noise.map_or(0.0, |f| f(b));
                let y = sigmoid((x[j] - omega[i * d + j]) * inv + g);
                let dv = dbits[b] * y * (1.0 - y) * inv;
                dx[j] += dv;
                domega[i * cols + c] -= dv;
            }
        }
        self.chain_omega(domega, grad);
        dx
    }

    /// Chains `dL/d omega` (per column) into the learnable parameters.
    fn chain_omega(&self, domega: &[f64], grad: &mut PlanGrad) {
        let Thresholds::Learnable { deltas, .. } = &self.thresholds else {
            return;
        };
        let cols = self.columns();
        let l = self.bits_per_feature;
        for c in 0..cols {
            let s = self.scale[c];
            // suffix sums: delta k feeds every row i > k
            let mut suffix = 0.0;
            for i in (1..l).rev() {
                suffix += domega[i * cols + c];
                grad.ddeltas[(i - 1) * cols + c] += suffix * s * sigmoid(deltas[(i - 1) * cols + c]);
            }
            suffix += domega[c];
            grad.dbase[c] += suffix * s;
        }
    }
}

pub(crate) fn encode_hard_into(omega: &[f64], l: usize, d: usize, x: &[f64], out: &mut [bool]) {
    for j in 0..d {
        for i in 0..l {
            out[j * l + i] = omega[i * d + j] <= x[j];
        }
    }
}
