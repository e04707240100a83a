use rand::Rng;

use super::{gemm, join, relu_inplace, uniform, Params, Real};

/// Fully connected layer, `y = x W^T + b` on `n x in` row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub n_in: usize,
    pub n_out: usize,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Self {
            w: uniform(rng, n_in * n_out, bound),
            b: uniform(rng, n_out, bound),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let mut y = vec![T::zero(); n * self.n_out];
        gemm(n, self.n_in, self.n_out, x, false, &self.w, true, &mut y, false);
        for row in y.chunks_exact_mut(self.n_out) {
            for (v, &b) in row.iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        y
    }

    /// Accumulate parameter gradients; returns `dx` when requested.
    pub fn backward(&self, x: &[T], n: usize, dy: &[T], grads: &mut Self, need_dx: bool) -> Option<Vec<T>> {
        gemm(self.n_out, n, self.n_in, dy, true, x, false, &mut grads.w, true);
        for row in dy.chunks_exact(self.n_out) {
            for (g, &d) in grads.b.iter_mut().zip(row) {
                *g += d;
            }
        }
        need_dx.then(|| {
            let mut dx = vec![T::zero(); n * self.n_in];
            gemm(n, self.n_out, self.n_in, dy, false, &self.w, false, &mut dx, false);
            dx
        })
    }
}

impl<T: Real> Params<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        f(join(prefix, "weight"), &self.w);
        f(join(prefix, "bias"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        f(join(prefix, "weight"), &mut self.w);
        f(join(prefix, "bias"), &mut self.b);
    }
}

/// 3x3 convolution with padding 1 on CNHW batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `c_out x (c_in * 9)`
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    cols: Vec<T>,
    /// Post-activation output.
    out: Vec<T>,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

pub(crate) fn conv_out(size: usize, stride: usize) -> usize {
    (size + 2 - 3) / stride + 1
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, stride: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((c_in * 9) as f64).sqrt();
        Self {
            w: uniform(rng, c_out * c_in * 9, bound),
            b: uniform(rng, c_out, bound),
            c_in,
            c_out,
            stride,
        }
    }

    fn im2col(&self, x: &[T], n: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
        let cols_n = n * ho * wo;
        let mut cols = vec![T::zero(); self.c_in * 9 * cols_n];
        let s = self.stride;
        for ci in 0..self.c_in {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut cols[((ci * 9) + ky * 3 + kx) * cols_n..][..cols_n];
                    for img in 0..n {
                        let src = &x[(ci * n + img) * h * w..][..h * w];
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst = &mut row[(img * ho + oy) * wo..][..wo];
                            let src_row = &src[iy as usize * w..][..w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    *d = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[T], n: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
        let cols_n = n * ho * wo;
        let mut dx = vec![T::zero(); self.c_in * n * h * w];
        let s = self.stride;
        for ci in 0..self.c_in {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &dcols[((ci * 9) + ky * 3 + kx) * cols_n..][..cols_n];
                    for img in 0..n {
                        let dst = &mut dx[(ci * n + img) * h * w..][..h * w];
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = &row[(img * ho + oy) * wo..][..wo];
                            let dst_row = &mut dst[iy as usize * w..][..w];
                            for (ox, &g) in src.iter().enumerate() {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    dst_row[ix as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Convolution followed by ReLU.
    fn forward_relu(&self, x: &[T], n: usize, h: usize, w: usize) -> ConvCache<T> {
        let (ho, wo) = (conv_out(h, self.stride), conv_out(w, self.stride));
        let cols = self.im2col(x, n, h, w, ho, wo);
        let cols_n = n * ho * wo;
        let mut out = vec![T::zero(); self.c_out * cols_n];
        gemm(self.c_out, self.c_in * 9, cols_n, &self.w, false, &cols, false, &mut out, false);
        for (row, &b) in out.chunks_exact_mut(cols_n).zip(&self.b) {
            for v in row.iter_mut() {
                *v += b;
            }
        }
        relu_inplace(&mut out);
        ConvCache { cols, out, h, w, ho, wo }
    }

    /// `dout` is the gradient w.r.t. the post-ReLU output; it is masked in place.
    fn backward_relu(&self, cache: &ConvCache<T>, n: usize, dout: &mut [T], grads: &mut Self, need_dx: bool) -> Option<Vec<T>> {
        for (d, &o) in dout.iter_mut().zip(&cache.out) {
            if o <= T::zero() {
                *d = T::zero();
            }
        }
        let cols_n = n * cache.ho * cache.wo;
        let k = self.c_in * 9;
        gemm(self.c_out, cols_n, k, dout, false, &cache.cols, true, &mut grads.w, true);
        for (g, row) in grads.b.iter_mut().zip(dout.chunks_exact(cols_n)) {
            *g += row.iter().copied().sum();
        }
        need_dx.then(|| {
            let mut dcols = vec![T::zero(); k * cols_n];
            gemm(k, self.c_out, cols_n, &self.w, true, dout, false, &mut dcols, false);
            self.col2im(&dcols, n, cache.h, cache.w, cache.ho, cache.wo)
        })
    }
}

impl<T: Real> Params<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        f(join(prefix, "weight"), &self.w);
        f(join(prefix, "bias"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        f(join(prefix, "weight"), &mut self.w);
        f(join(prefix, "bias"), &mut self.b);
    }
}

/// Strided convolutional feature extractor: per stage one stride-2 conv plus
/// `convs_per_stage - 1` stride-1 convs, all with ReLU, then global average
/// pooling and a linear projection to the feature dimension.
///
/// Two constant channels holding the column and row coordinate in [-1, 1]
/// are appended to the input, so pooled features can still encode where
/// in the image something happened.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub convs: Vec<Conv2d<T>>,
    pub fc: Linear<T>,
    /// `[C, H, W]` of the input images.
    pub in_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    n: usize,
    convs: Vec<ConvCache<T>>,
    pooled: Vec<T>,
}

impl<T: Real> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(in_shape: [usize; 3], channels: &[usize], convs_per_stage: usize, feature_dim: usize, rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut c_in = in_shape[0] + COORD_CHANNELS;
        for &c in channels {
            convs.push(Conv2d::new(c_in, c, 2, rng));
            for _ in 1..convs_per_stage.max(1) {
                convs.push(Conv2d::new(c, c, 1, rng));
            }
            c_in = c;
        }
        Self {
            convs,
            fc: Linear::new(c_in, feature_dim, rng),
            in_shape,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fc.n_out
    }

    /// Encode `n` images given in CNHW layout; returns `n x feature_dim`.
    pub fn forward(&self, x: &[T], n: usize) -> (Vec<T>, EncoderCache<T>) {
        let [c, h, w] = self.in_shape;
        assert_eq!(x.len(), c * n * h * w, "encoder input has the wrong size");
        let x = &with_coords(x, n, h, w);
        let c = c + COORD_CHANNELS;
        let mut caches: Vec<ConvCache<T>> = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let cache = match caches.last() {
                None => conv.forward_relu(x, n, h, w),
                Some(prev) => conv.forward_relu(&prev.out, n, prev.ho, prev.wo),
            };
            debug_assert_eq!(cache.out.len(), self.convs[i].c_out * n * cache.ho * cache.wo);
            caches.push(cache);
        }
        let (c_last, hw) = match caches.last() {
            Some(l) => (self.convs.last().unwrap().c_out, l.ho * l.wo),
            None => (c, h * w),
        };
        let src: &[T] = caches.last().map(|l| l.out.as_slice()).unwrap_or(x);
        let inv = T::of(1.0 / hw as f64);
        let mut pooled = vec![T::zero(); n * c_last];
        for ch in 0..c_last {
            for img in 0..n {
                let s: T = src[(ch * n + img) * hw..][..hw].iter().copied().sum();
                pooled[img * c_last + ch] = s * inv;
            }
        }
        let feats = self.fc.forward(&pooled, n);
        (feats, EncoderCache { n, convs: caches, pooled })
    }

    /// Backpropagate feature gradients into the parameters. Input gradients
    /// are not needed (the encoders read data) and are not computed.
    pub fn backward(&self, cache: &EncoderCache<T>, dfeat: &[T], grads: &mut Self) {
        let n = cache.n;
        let dpooled = self.fc.backward(&cache.pooled, n, dfeat, &mut grads.fc, !self.convs.is_empty());
        let Some(dpooled) = dpooled else { return };
        let last = cache.convs.last().unwrap();
        let c_last = self.convs.last().unwrap().c_out;
        let hw = last.ho * last.wo;
        let inv = T::of(1.0 / hw as f64);
        let mut dout = vec![T::zero(); c_last * n * hw];
        for ch in 0..c_last {
            for img in 0..n {
                let g = dpooled[img * c_last + ch] * inv;
                dout[(ch * n + img) * hw..][..hw].iter_mut().for_each(|v| *v = g);
            }
        }
        for i in (0..self.convs.len()).rev() {
            let dx = self.convs[i].backward_relu(&cache.convs[i], n, &mut dout, &mut grads.convs[i], i > 0);
            if let Some(dx) = dx {
                dout = dx;
            }
        }
    }
}

const COORD_CHANNELS: usize = 2;

/// Append the coordinate channels to a CNHW batch.
fn with_coords<T: Real>(x: &[T], n: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len() + COORD_CHANNELS * n * h * w);
    out.extend_from_slice(x);
    let coord = |i: usize, len: usize| T::of(if len > 1 { 2.0 * i as f64 / (len - 1) as f64 - 1.0 } else { 0.0 });
    for _ in 0..n * h {
        out.extend((0..w).map(|q| coord(q, w)));
    }
    for _ in 0..n {
        for r in 0..h {
            out.extend((0..w).map(|_| coord(r, h)));
        }
    }
    out
}

impl<T: Real> Params<T> for Encoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("conv{i}")), f);
        }
        self.fc.visit(&join(prefix, "fc"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("conv{i}")), f);
        }
        self.fc.visit_mut(&join(prefix, "fc"), f);
    }
}

/// Two-layer perceptron `hidden -> mid (ReLU) -> 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    n: usize,
    x: Vec<T>,
    mid: Vec<T>,
}

impl<T: Real> Decoder<T> {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_mid: usize, rng: &mut R) -> Self {
        Self {
            l1: Linear::new(n_in, n_mid, rng),
            l2: Linear::new(n_mid, 2, rng),
        }
    }

    pub fn forward(&self, x: &[T], n: usize) -> (Vec<T>, DecoderCache<T>) {
        let mut mid = self.l1.forward(x, n);
        relu_inplace(&mut mid);
        let y = self.l2.forward(&mid, n);
        (
            y,
            DecoderCache {
                n,
                x: x.to_vec(),
                mid,
            },
        )
    }

    pub fn backward(&self, cache: &DecoderCache<T>, dy: &[T], grads: &mut Self) -> Vec<T> {
        let mut dmid = self.l2.backward(&cache.mid, cache.n, dy, &mut grads.l2, true).unwrap();
        for (d, &m) in dmid.iter_mut().zip(&cache.mid) {
            if m <= T::zero() {
                *d = T::zero();
            }
        }
        self.l1.backward(&cache.x, cache.n, &dmid, &mut grads.l1, true).unwrap()
    }
}

impl<T: Real> Params<T> for Decoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        self.l1.visit(&join(prefix, "fc1"), f);
        self.l2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        self.l1.visit_mut(&join(prefix, "fc1"), f);
        self.l2.visit_mut(&join(prefix, "fc2"), f);
    }
}
