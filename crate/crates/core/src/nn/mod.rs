//! Minimal neural-network toolkit with hand-written backward passes.
//!
//! Layers are plain structs generic over [`Real`] (`f32` for training, `f64`
//! for gradient checks). A layer value doubles as its own gradient buffer:
//! `backward` accumulates into a `&mut Self` obtained from [`Params::zeros_like`].
//!
//! Convolutions work on `C x N x H x W` ("CNHW") batches so that a whole clip
//! is one matrix product per layer.

mod gru;
mod layers;
mod optim;

pub use gru::{GruCache, GruCell, GruStack, StackCache};
pub use layers::{Conv2d, Decoder, DecoderCache, Encoder, EncoderCache, Linear};
pub use optim::{cosine_lr, AdamW};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

/// Scalar type the layers are generic over.
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + AddAssign + 'static {
    /// `c = alpha * a * b + beta * c` with explicit strides.
    ///
    /// # Safety
    /// The strides and dimensions must describe valid views into the slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major `c (m x n) = op(a) * op(b)`, accumulating into `c` when `acc`.
///
/// `op(a)` is `m x k`; with `ta` the slice holds `a` as `k x m`. Likewise
/// `op(b)` is `k x n`, stored as `n x k` when `tb`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], acc: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm: slice too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !acc {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if acc { T::one() } else { T::zero() };
    // SAFETY: the assertion above guarantees every index reached through these
    // strides lies inside the slices.
    unsafe { T::gemm_raw(m, k, n, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1) }
}

/// Named parameter tensors of a layer or model.
pub trait Params<T: Real>: Clone {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T]));

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, p| p.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.len());
        n
    }

    fn named_lengths(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, p| out.push((name, p.len())));
        out
    }

    fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| out.extend_from_slice(p));
        out
    }

    /// Overwrite all parameters from a flat vector in visiting order.
    fn set_flat(&mut self, values: &[T]) {
        let mut at = 0;
        self.visit_mut("", &mut |_, p| {
            p.copy_from_slice(&values[at..at + p.len()]);
            at += p.len();
        });
        assert_eq!(at, values.len(), "set_flat: length mismatch");
    }

    /// `self += other`, tensor by tensor.
    fn add_assign(&mut self, other: &Self) {
        let src = other.flat();
        let mut at = 0;
        self.visit_mut("", &mut |_, p| {
            for v in p.iter_mut() {
                *v += src[at];
                at += 1;
            }
        });
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect()
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_in_all_layouts() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![f64::NAN; m * n];
            gemm(m, k, n, if ta { &at } else { &a }, ta, if tb { &bt } else { &b }, tb, &mut c, false);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let mut c = want.clone();
        gemm(m, k, n, &a, false, &b, false, &mut c, true);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }
}
