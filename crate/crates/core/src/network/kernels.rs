//! Per-neuron forward/backward over flat layer parameters.

use crate::neurons::{
    dlgn_kernel, dwn_kernel, hard_address, llnn_kernel, perturb_probability, sigmoid, warp_kernel,
    ForwardMode, Parametrization,
};

/// Derived values per DLGN neuron: 16 softmax weights then 4 mixture coefficients.
pub(crate) const DLGN_DERIVED: usize = 20;

/// Reusable per-worker buffers.
pub(crate) struct Scratch {
    pub x: Vec<f64>,
    pub xh: Vec<f64>,
    pub phi: Vec<f64>,
    pub tmp: Vec<f64>,
    pub xs: Vec<f64>,
    pub dx: Vec<f64>,
}

impl Scratch {
    pub fn new(max_arity: usize) -> Self {
        let len = 1 << max_arity;
        Self {
            x: vec![0.0; max_arity],
            xh: vec![0.0; max_arity],
            phi: vec![0.0; len],
            tmp: vec![0.0; len],
            xs: vec![0.0; max_arity],
            dx: vec![0.0; max_arity],
        }
    }
}

/// Read-only view of one layer's state for a step.
pub(crate) struct LayerView<'a> {
    pub kind: Parametrization,
    pub mode: ForwardMode,
    pub arity: usize,
    pub inv_tau: f64,
    pub params: &'a [f64],
    pub derived: &'a [f64],
    pub luts: &'a [bool],
}

/// Two-input WARP pre-activation, summed in the same order as the generic kernel.
#[inline]
fn warp2_preactivation(theta: &[f64], x1: f64, x2: f64) -> f64 {
    let (s1, s2) = (1.0 - 2.0 * x1, 1.0 - 2.0 * x2);
    0.0 + theta[0] * 1.0 + theta[1] * s1 + theta[2] * s2 + theta[3] * (s1 * s2)
}

fn harden_into(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v > 0.5 { 1.0 } else { 0.0 };
    }
}

impl LayerView<'_> {
    fn len(&self) -> usize {
        1 << self.arity
    }

    fn lut_bit(&self, i: usize, x: &[f64]) -> f64 {
        self.luts[i * self.len() + hard_address(x)] as u8 as f64
    }

    /// Relaxed probability `f` of neuron `i` at `x` (LLNN/DLGN).
    fn prob(&self, i: usize, x: &[f64], s: &mut [f64]) -> f64 {
        match self.kind {
            Parametrization::Llnn => {
                let gamma = &self.derived[i * self.len()..(i + 1) * self.len()];
                llnn_kernel::indicators(x, s);
                gamma.iter().zip(s.iter()).map(|(g, w)| g * w).sum()
            }
            Parametrization::Dlgn => {
                let c = &self.derived[i * DLGN_DERIVED + 16..(i + 1) * DLGN_DERIVED];
                dlgn_kernel::eval(&[c[0], c[1], c[2], c[3]], x)
            }
            _ => unreachable!("probability kernels are LLNN/DLGN only"),
        }
    }

    /// Output of neuron `i` for gathered inputs `s.x[..arity]` and noise `g`.
    pub fn forward(&self, i: usize, g: f64, s: &mut Scratch) -> f64 {
        let n = self.arity;
        let len = self.len();
        let x = &s.x[..n];
        match self.kind {
            Parametrization::Dwn => {
                self.params[i * len + dwn_kernel::address(x)]
            }
            Parametrization::Warp => {
                let theta = &self.params[i * len..(i + 1) * len];
                match self.mode {
                    ForwardMode::Soft | ForwardMode::GumbelSoft => {
                        let u = if n == 2 {
                            warp2_preactivation(theta, x[0], x[1])
                        } else {
                            warp_kernel::monomials(x, &mut s.phi[..len]);
                            warp_kernel::preactivation(theta, &s.phi[..len])
                        } * self.inv_tau;
                        let g = if self.mode.is_noisy() { g } else { 0.0 };
                        sigmoid(u + g)
                    }
                    ForwardMode::SoftSte => self.lut_bit(i, x),
                    ForwardMode::GumbelSte => {
                        harden_into(x, &mut s.xh[..n]);
                        warp_kernel::monomials(&s.xh[..n], &mut s.phi[..len]);
                        let u = warp_kernel::preactivation(theta, &s.phi[..len]) * self.inv_tau;
                        (u + g > 0.0) as u8 as f64
                    }
                }
            }
            Parametrization::Llnn | Parametrization::Dlgn => match self.mode {
                ForwardMode::Soft => self.prob(i, x, &mut s.phi[..len]),
                ForwardMode::GumbelSoft => {
                    perturb_probability(self.prob(i, x, &mut s.phi[..len]), g).0
                }
                ForwardMode::SoftSte => self.lut_bit(i, x),
                ForwardMode::GumbelSte => {
                    harden_into(x, &mut s.xh[..n]);
                    let p = self.prob(i, &s.xh[..n], &mut s.phi[..len]);
                    (perturb_probability(p, g).0 > 0.5) as u8 as f64
                }
            },
        }
    }

    /// Accumulates `dL/dparams` of neuron `i` into `dparams` (that neuron's
    /// slice) and writes `dL/dx` into `s.dx[..arity]`. `y` is this neuron's
    /// forward output for the same inputs and noise.
    pub fn backward(&self, i: usize, g: f64, y: f64, dy: f64, dparams: &mut [f64], s: &mut Scratch) {
        let n = self.arity;
        let len = self.len();
        if self.kind == Parametrization::Warp && n == 2 && !self.mode.is_ste() {
            let theta = &self.params[i * len..(i + 1) * len];
            let (s1, s2) = (1.0 - 2.0 * s.x[0], 1.0 - 2.0 * s.x[1]);
            let dz = dy * y * (1.0 - y) * self.inv_tau;
            let s12 = s1 * s2;
            dparams[0] += dz;
            dparams[1] += dz * s1;
            dparams[2] += dz * s2;
            dparams[3] += dz * s12;
            s.dx[0] = dz * -2.0 * (theta[1] + theta[3] * s2);
            s.dx[1] = dz * -2.0 * (theta[2] + theta[3] * s1);
            return;
        }
        s.dx[..n].iter_mut().for_each(|d| *d = 0.0);
        if self.kind == Parametrization::Dwn {
            let addr = dwn_kernel::address(&s.x[..n]);
            dwn_kernel::backward(&self.params[i * len..(i + 1) * len], addr, dy, dparams, &mut s.dx[..n]);
            return;
        }
        if self.mode.is_ste() {
            let (x, xh) = (&s.x[..n], &mut s.xh[..n]);
            harden_into(x, xh);
        } else {
            s.xh[..n].copy_from_slice(&s.x[..n]);
        }
        let noisy = self.mode.is_noisy();
        match self.kind {
            Parametrization::Warp => {
                let theta = &self.params[i * len..(i + 1) * len];
                warp_kernel::monomials(&s.xh[..n], &mut s.phi[..len]);
                let u = warp_kernel::preactivation(theta, &s.phi[..len]) * self.inv_tau
                    + if noisy { g } else { 0.0 };
                let y = sigmoid(u);
                let du = dy * y * (1.0 - y);
                warp_kernel::backward(theta, self.inv_tau, &s.phi[..len], du, dparams, &mut s.dx[..n]);
            }
            Parametrization::Llnn => {
                let gamma = &self.derived[i * len..(i + 1) * len];
                llnn_kernel::indicators(&s.xh[..n], &mut s.phi[..len]);
                let f: f64 = gamma.iter().zip(&s.phi[..len]).map(|(g, w)| g * w).sum();
                let scale = if noisy { dy * perturb_probability(f, g).1 } else { dy };
                for ((d, gm), w) in dparams.iter_mut().zip(gamma).zip(&s.phi[..len]) {
                    *d += scale * w * gm * (1.0 - gm);
                }
                let (xh, rest) = (&s.xh[..n], &mut s.tmp[..len / 2]);
                llnn_kernel::multilinear_input_grad(gamma, xh, scale, rest, &mut s.xs, &mut s.dx[..n]);
            }
            Parametrization::Dlgn => {
                let d = &self.derived[i * DLGN_DERIVED..(i + 1) * DLGN_DERIVED];
                let c = [d[16], d[17], d[18], d[19]];
                let f = dlgn_kernel::eval(&c, &s.xh[..n]);
                let df = if noisy { dy * perturb_probability(f, g).1 } else { dy };
                dlgn_kernel::backward(&d[..16], &c, &s.xh[..n], df, dparams, &mut s.dx[..n]);
            }
            Parametrization::Dwn => unreachable!(),
        }
    }
}

/// Fills the per-step derived values for a layer's parameters.
pub(crate) fn derive(kind: Parametrization, arity: usize, params: &[f64]) -> Vec<f64> {
    match kind {
        Parametrization::Llnn => {
            let mut gamma = vec![0.0; params.len()];
            llnn_kernel::gammas(params, &mut gamma);
            gamma
        }
        Parametrization::Dlgn => {
            let count = params.len() / 16;
            let mut out = vec![0.0; count * DLGN_DERIVED];
            for (raw, d) in params.chunks_exact(16).zip(out.chunks_exact_mut(DLGN_DERIVED)) {
                dlgn_kernel::alphas(raw, &mut d[..16]);
                let c = dlgn_kernel::mixture(&d[..16]);
                d[16..].copy_from_slice(&c);
            }
            debug_assert_eq!(arity, 2);
            out
        }
        _ => Vec::new(),
    }
}
