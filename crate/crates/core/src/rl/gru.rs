//! Gated recurrent unit with truncated backpropagation through time.
//!
//! Gate order in the stacked weights is (reset, update, candidate).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    /// (3H, I)
    pub w_i: DMatrix<f64>,
    /// (3H, H)
    pub w_h: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub b_h: DVector<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += b;
    }
}

/// Everything one step needs for its backward pass.
pub struct GruStepCache {
    x: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    n: DMatrix<f64>,
    gh_n: DMatrix<f64>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let si = 1.0 / (input.max(1) as f64).sqrt();
        let sh = 1.0 / (hidden.max(1) as f64).sqrt();
        Self {
            w_i: DMatrix::from_fn(3 * hidden, input, |_, _| si * rng.sample::<f64, _>(StandardNormal)),
            w_h: DMatrix::from_fn(3 * hidden, hidden, |_, _| sh * rng.sample::<f64, _>(StandardNormal)),
            b_i: DVector::zeros(3 * hidden),
            b_h: DVector::zeros(3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_i.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_i: DMatrix::zeros(self.w_i.nrows(), self.w_i.ncols()),
            w_h: DMatrix::zeros(self.w_h.nrows(), self.w_h.ncols()),
            b_i: DVector::zeros(self.b_i.len()),
            b_h: DVector::zeros(self.b_h.len()),
        }
    }

    /// One step for a batch of columns; `h_prev` is `(H, B)`.
    pub fn step(&self, x: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> (DMatrix<f64>, GruStepCache) {
        let hs = self.hidden();
        let mut gi = &self.w_i * x;
        add_bias(&mut gi, &self.b_i);
        let mut gh = &self.w_h * h_prev;
        add_bias(&mut gh, &self.b_h);
        let r = (gi.rows(0, hs) + gh.rows(0, hs)).map(sigmoid);
        let z = (gi.rows(hs, hs) + gh.rows(hs, hs)).map(sigmoid);
        let gh_n = gh.rows(2 * hs, hs).into_owned();
        let n = (gi.rows(2 * hs, hs) + r.component_mul(&gh_n)).map(f64::tanh);
        let h = n.zip_zip_map(&z, h_prev, |n, z, hp| (1.0 - z) * n + z * hp);
        (
            h,
            GruStepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                r,
                z,
                n,
                gh_n,
            },
        )
    }

    /// Backward through one step given `dh` (gradient w.r.t. the step's
    /// output). Accumulates into `grads` and returns the gradient w.r.t.
    /// `h_prev`.
    pub fn step_backward(&self, c: &GruStepCache, dh: &DMatrix<f64>, grads: &mut Gru) -> DMatrix<f64> {
        let hs = self.hidden();
        let b = dh.ncols();
        let dn = dh.zip_map(&c.z, |d, z| d * (1.0 - z));
        let dz = dh.zip_zip_map(&c.h_prev, &c.n, |d, hp, n| d * (hp - n));
        let da_n = dn.zip_map(&c.n, |d, n| d * (1.0 - n * n));
        let da_z = dz.zip_map(&c.z, |d, z| d * z * (1.0 - z));
        let dr = da_n.component_mul(&c.gh_n);
        let da_r = dr.zip_map(&c.r, |d, r| d * r * (1.0 - r));
        let mut dgi = DMatrix::zeros(3 * hs, b);
        dgi.rows_mut(0, hs).copy_from(&da_r);
        dgi.rows_mut(hs, hs).copy_from(&da_z);
        dgi.rows_mut(2 * hs, hs).copy_from(&da_n);
        let mut dgh = dgi.clone();
        dgh.rows_mut(2 * hs, hs).copy_from(&da_n.component_mul(&c.r));
        grads.w_i.gemm(1.0, &dgi, &c.x.transpose(), 1.0);
        grads.w_h.gemm(1.0, &dgh, &c.h_prev.transpose(), 1.0);
        for col in dgi.column_iter() {
            grads.b_i += col;
        }
        for col in dgh.column_iter() {
            grads.b_h += col;
        }
        dh.component_mul(&c.z) + self.w_h.transpose() * dgh
    }

    pub fn num_params(&self) -> usize {
        self.w_i.len() + self.w_h.len() + self.b_i.len() + self.b_h.len()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w_i.as_slice());
        out.extend_from_slice(self.w_h.as_slice());
        out.extend_from_slice(self.b_i.as_slice());
        out.extend_from_slice(self.b_h.as_slice());
    }

    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for s in [
            self.w_i.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.b_i.as_mut_slice(),
            self.b_h.as_mut_slice(),
        ] {
            let n = s.len();
            s.copy_from_slice(&src[k..k + n]);
            k += n;
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gru = Gru::new(3, 4, &mut rng);
        let xs: Vec<DMatrix<f64>> = (0..5).map(|_| DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let h0 = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-0.5..0.5));
        // Loss: 0.5 Σ_t |h_t|² with a reset of column 1 before step 3.
        let run = |g: &Gru| {
            let mut h = h0.clone();
            let mut caches = Vec::new();
            let mut loss = 0.0;
            for (t, x) in xs.iter().enumerate() {
                if t == 3 {
                    h.column_mut(1).fill(0.0);
                }
                let (hn, c) = g.step(x, &h);
                loss += 0.5 * hn.norm_squared();
                caches.push((c, hn.clone()));
                h = hn;
            }
            (loss, caches)
        };
        let (_, caches) = run(&gru);
        let mut grads = gru.zeros_like();
        let mut carry = DMatrix::zeros(4, 2);
        for t in (0..xs.len()).rev() {
            let (c, h) = &caches[t];
            let dh = h + &carry;
            carry = gru.step_backward(c, &dh, &mut grads);
            if t == 3 {
                carry.column_mut(1).fill(0.0);
            }
        }
        let mut flat = Vec::new();
        gru.write_flat(&mut flat);
        let mut gflat = Vec::new();
        grads.write_flat(&mut gflat);
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            gru.read_flat(&p);
            let up = run(&gru).0;
            p[i] -= 2.0 * h;
            gru.read_flat(&p);
            let down = run(&gru).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gflat[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", gflat[i]);
        }
    }
}
