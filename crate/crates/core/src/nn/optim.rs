use std::f64::consts::PI;

use super::{Params, Real};

/// Cosine annealing from `base` at step 0 to 0 at step `total`, no restarts.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (PI * t).cos())
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update. Tensors whose name satisfies `frozen` are left untouched.
    pub fn step<T: Real, P: Params<T>>(&mut self, model: &mut P, grads: &P, lr: f64, frozen: &dyn Fn(&str) -> bool) {
        let mut gs: Vec<&[T]> = Vec::new();
        grads.visit("", &mut |_, g| gs.push(g));
        if self.m.is_empty() {
            self.m = gs.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        let mut i = 0;
        let (ms, vs, eps) = (&mut self.m, &mut self.v, self.eps);
        model.visit_mut("", &mut |name, p| {
            let k = i;
            i += 1;
            if frozen(&name) {
                return;
            }
            let (m, v, g) = (&mut ms[k], &mut vs[k], gs[k]);
            assert_eq!(p.len(), g.len(), "optimizer: gradient shape mismatch for {name}");
            for j in 0..p.len() {
                let gj = g[j].f64();
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                p[j] = T::of(p[j].f64() * decay - lr * update);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::seed;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(3e-4, 0, 100), 3e-4);
        assert!(cosine_lr(3e-4, 100, 100).abs() < 1e-18);
        assert!((cosine_lr(3e-4, 50, 100) - 1.5e-4).abs() < 1e-15);
        assert!(cosine_lr(3e-4, 99, 100) <= 0.01 * 3e-4);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let mut rng = seed::rng(0);
        let mut lin = Linear::<f64>::new(2, 1, &mut rng);
        let before = lin.clone();
        let mut g = lin.zeros_like();
        g.w = vec![0.5, -2.0];
        g.b = vec![0.0];
        let mut opt = AdamW::new(0.1);
        opt.step(&mut lin, &g, 0.01, &|_| false);
        // first Adam step moves each parameter by lr * sign(g) (up to eps); decay is decoupled
        for j in 0..2 {
            let want = before.w[j] * (1.0 - 0.01 * 0.1) - 0.01 * g.w[j].signum();
            assert!((lin.w[j] - want).abs() < 1e-8);
        }
        assert!((lin.b[0] - before.b[0] * (1.0 - 0.001)).abs() < 1e-12);
    }

    #[test]
    fn frozen_tensors_do_not_move() {
        let mut rng = seed::rng(0);
        let mut lin = Linear::<f32>::new(3, 2, &mut rng);
        let before = lin.clone();
        let mut g = lin.zeros_like();
        g.w.iter_mut().for_each(|v| *v = 1.0);
        g.b.iter_mut().for_each(|v| *v = 1.0);
        let mut opt = AdamW::new(2e-3);
        opt.step(&mut lin, &g, 1e-2, &|name| name == "weight");
        assert_eq!(lin.w, before.w);
        assert_ne!(lin.b, before.b);
    }
}
