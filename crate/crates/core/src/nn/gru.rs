use rand::Rng;

use super::{gemm, join, sigmoid, uniform, Params, Real};

/// Gated recurrent unit with the gate layout `[reset, update, new]`:
///
/// ```text
/// r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub w_ih: Vec<T>,
    pub w_hh: Vec<T>,
    pub b_ih: Vec<T>,
    pub b_hh: Vec<T>,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache<T> {
    b: usize,
    x: Vec<T>,
    h: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    /// `W_hn h + b_hn`
    ghn: Vec<T>,
}

impl<T: Real> GruCell<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: uniform(rng, 3 * hidden * input, bound),
            w_hh: uniform(rng, 3 * hidden * hidden, bound),
            b_ih: uniform(rng, 3 * hidden, bound),
            b_hh: uniform(rng, 3 * hidden, bound),
            input,
            hidden,
        }
    }

    /// One step on a batch of `b` rows: `x` is `b x input`, `h` is `b x hidden`.
    pub fn forward(&self, x: &[T], h: &[T], b: usize) -> (Vec<T>, GruCache<T>) {
        let hd = self.hidden;
        let mut gi = vec![T::zero(); b * 3 * hd];
        let mut gh = vec![T::zero(); b * 3 * hd];
        gemm(b, self.input, 3 * hd, x, false, &self.w_ih, true, &mut gi, false);
        gemm(b, hd, 3 * hd, h, false, &self.w_hh, true, &mut gh, false);
        let mut r = vec![T::zero(); b * hd];
        let mut z = vec![T::zero(); b * hd];
        let mut n = vec![T::zero(); b * hd];
        let mut ghn = vec![T::zero(); b * hd];
        let mut out = vec![T::zero(); b * hd];
        for row in 0..b {
            let gi = &gi[row * 3 * hd..][..3 * hd];
            let gh = &gh[row * 3 * hd..][..3 * hd];
            for j in 0..hd {
                let k = row * hd + j;
                r[k] = sigmoid(gi[j] + self.b_ih[j] + gh[j] + self.b_hh[j]);
                z[k] = sigmoid(gi[hd + j] + self.b_ih[hd + j] + gh[hd + j] + self.b_hh[hd + j]);
                ghn[k] = gh[2 * hd + j] + self.b_hh[2 * hd + j];
                n[k] = (gi[2 * hd + j] + self.b_ih[2 * hd + j] + r[k] * ghn[k]).tanh();
                out[k] = (T::one() - z[k]) * n[k] + z[k] * h[k];
            }
        }
        let cache = GruCache {
            b,
            x: x.to_vec(),
            h: h.to_vec(),
            r,
            z,
            n,
            ghn,
        };
        (out, cache)
    }

    /// Returns `(dx, dh)` and accumulates parameter gradients.
    pub fn backward(&self, c: &GruCache<T>, dout: &[T], grads: &mut Self) -> (Vec<T>, Vec<T>) {
        let (b, hd) = (c.b, self.hidden);
        let mut dgi = vec![T::zero(); b * 3 * hd];
        let mut dgh = vec![T::zero(); b * 3 * hd];
        let mut dh = vec![T::zero(); b * hd];
        for row in 0..b {
            for j in 0..hd {
                let k = row * hd + j;
                let (r, z, n) = (c.r[k], c.z[k], c.n[k]);
                let d = dout[k];
                let dn = d * (T::one() - z);
                let dz = d * (c.h[k] - n);
                dh[k] = d * z;
                let dan = dn * (T::one() - n * n);
                let dr = dan * c.ghn[k];
                let dar = dr * r * (T::one() - r);
                let daz = dz * z * (T::one() - z);
                let base = row * 3 * hd;
                dgi[base + j] = dar;
                dgi[base + hd + j] = daz;
                dgi[base + 2 * hd + j] = dan;
                dgh[base + j] = dar;
                dgh[base + hd + j] = daz;
                dgh[base + 2 * hd + j] = dan * r;
            }
        }
        gemm(3 * hd, b, self.input, &dgi, true, &c.x, false, &mut grads.w_ih, true);
        gemm(3 * hd, b, hd, &dgh, true, &c.h, false, &mut grads.w_hh, true);
        for row in 0..b {
            for j in 0..3 * hd {
                grads.b_ih[j] += dgi[row * 3 * hd + j];
                grads.b_hh[j] += dgh[row * 3 * hd + j];
            }
        }
        let mut dx = vec![T::zero(); b * self.input];
        gemm(b, 3 * hd, self.input, &dgi, false, &self.w_ih, false, &mut dx, false);
        gemm(b, 3 * hd, hd, &dgh, false, &self.w_hh, false, &mut dh, true);
        (dx, dh)
    }
}

impl<T: Real> Params<T> for GruCell<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        f(join(prefix, "weight_ih"), &self.w_ih);
        f(join(prefix, "weight_hh"), &self.w_hh);
        f(join(prefix, "bias_ih"), &self.b_ih);
        f(join(prefix, "bias_hh"), &self.b_hh);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        f(join(prefix, "weight_ih"), &mut self.w_ih);
        f(join(prefix, "weight_hh"), &mut self.w_hh);
        f(join(prefix, "bias_ih"), &mut self.b_ih);
        f(join(prefix, "bias_hh"), &mut self.b_hh);
    }
}

/// Stack of GRU cells; layer `l > 0` takes the new state of layer `l - 1` as input.
/// The state is stored layer-major: `layers x b x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStack<T> {
    pub cells: Vec<GruCell<T>>,
}

#[derive(Debug, Clone)]
pub struct StackCache<T> {
    cells: Vec<GruCache<T>>,
}

impl<T: Real> GruStack<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let cells = (0..layers).map(|l| GruCell::new(if l == 0 { input } else { hidden }, hidden, rng)).collect();
        Self { cells }
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    pub fn state_len(&self) -> usize {
        self.cells.len() * self.hidden()
    }

    pub fn step(&self, x: &[T], state: &[T], b: usize) -> (Vec<T>, StackCache<T>) {
        let hd = self.hidden();
        let mut out = Vec::with_capacity(state.len());
        let mut caches = Vec::with_capacity(self.cells.len());
        for (l, cell) in self.cells.iter().enumerate() {
            let h = &state[l * b * hd..][..b * hd];
            let input: &[T] = if l == 0 { x } else { &out[(l - 1) * b * hd..][..b * hd] };
            let (h_new, cache) = cell.forward(input, h, b);
            out.extend_from_slice(&h_new);
            caches.push(cache);
        }
        (out, StackCache { cells: caches })
    }

    /// Top-layer slice of a stacked state.
    pub fn top<'a>(&self, state: &'a [T], b: usize) -> &'a [T] {
        let hd = self.hidden();
        &state[(self.cells.len() - 1) * b * hd..][..b * hd]
    }

    /// Given the gradient w.r.t. the new stacked state, returns `(dx, dstate)`.
    pub fn backward(&self, cache: &StackCache<T>, dnew: &[T], b: usize, grads: &mut Self) -> (Vec<T>, Vec<T>) {
        let hd = self.hidden();
        let mut dnew = dnew.to_vec();
        let mut dstate = vec![T::zero(); dnew.len()];
        let mut dx = Vec::new();
        for l in (0..self.cells.len()).rev() {
            let (dinput, dh) = self.cells[l].backward(&cache.cells[l], &dnew[l * b * hd..][..b * hd], &mut grads.cells[l]);
            dstate[l * b * hd..][..b * hd].copy_from_slice(&dh);
            if l == 0 {
                dx = dinput;
            } else {
                for (d, g) in dnew[(l - 1) * b * hd..][..b * hd].iter_mut().zip(dinput) {
                    *d += g;
                }
            }
        }
        (dx, dstate)
    }
}

impl<T: Real> Params<T> for GruStack<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        for (l, c) in self.cells.iter().enumerate() {
            c.visit(&join(prefix, &format!("layer{l}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        for (l, c) in self.cells.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
    }
}
