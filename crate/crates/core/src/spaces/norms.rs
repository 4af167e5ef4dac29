//! Spectral Sobolev norms and the multiplier-norm estimate.

use crate::error::{Error, Result};
use crate::fourier::PeriodicField;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Highest admissible smoothness index.
pub const S_MAX: f64 = 8.0;

const POWER_SEED: u64 = 0x5eed_0001;
const POWER_MAX_ITER: usize = 10_000;

/// Fourier weight of `W^{s,2}`: `1 + (2 pi |k|)^{2s}`, and plain `L2` at `s = 0`.
pub fn sobolev_weight(k: i64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        1.0 + (2.0 * PI * k.unsigned_abs() as f64).powf(2.0 * s)
    }
}

/// `(sum_k w_s(k) |f_k|^2)^{1/2}`.
pub fn fractional_norm(f: &PeriodicField, s: f64) -> Result<f64> {
    if !(0.0..=S_MAX).contains(&s) {
        return Err(Error::InvalidArgument(format!("smoothness index {s} outside [0, {S_MAX}]")));
    }
    let k = f.kmax() as i64;
    Ok((-k..=k).map(|m| sobolev_weight(m, s) * f.coeff(m).norm_sqr()).sum::<f64>().sqrt())
}

/// Weighted matrix of `v -> phi' v` from `W^{s-1,2}_K` into `W^{s-1,2}` (output untruncated).
struct MultOp {
    k_in: i64,
    k_out: i64,
    k_phi: i64,
    d: Vec<Complex64>,
    w_in: Vec<f64>,
    w_out: Vec<f64>,
}

impl MultOp {
    fn new(phi: &PeriodicField, s: f64, kcap: usize) -> Self {
        let dphi = phi.derivative(1);
        let k_phi = phi.kmax() as i64;
        let k_in = kcap as i64;
        let k_out = k_in + k_phi;
        let r = s - 1.0;
        Self {
            k_in,
            k_out,
            k_phi,
            d: (-k_phi..=k_phi).map(|m| dphi.coeff(m)).collect(),
            w_in: (-k_in..=k_in).map(|k| sobolev_weight(k, r).sqrt()).collect(),
            w_out: (-k_out..=k_out).map(|k| sobolev_weight(k, r).sqrt()).collect(),
        }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); (2 * self.k_out + 1) as usize];
        for (ik, xk) in x.iter().enumerate() {
            let v = xk / self.w_in[ik];
            let k = ik as i64 - self.k_in;
            for (id, dv) in self.d.iter().enumerate() {
                let m = k + id as i64 - self.k_phi;
                y[(m + self.k_out) as usize] += dv * v;
            }
        }
        for (yv, w) in y.iter_mut().zip(&self.w_out) {
            *yv *= w;
        }
        y
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); (2 * self.k_in + 1) as usize];
        for (ik, xv) in x.iter_mut().enumerate() {
            let k = ik as i64 - self.k_in;
            let mut acc = Complex64::new(0.0, 0.0);
            for (id, dv) in self.d.iter().enumerate() {
                let m = k + id as i64 - self.k_phi;
                let im = (m + self.k_out) as usize;
                acc += dv.conj() * y[im] * self.w_out[im];
            }
            *xv = acc / self.w_in[ik];
        }
        x
    }

    /// Dense matrix, rows = output modes, columns = input modes.
    fn dense(&self) -> Vec<Vec<Complex64>> {
        let nin = (2 * self.k_in + 1) as usize;
        let mut cols = Vec::with_capacity(nin);
        for j in 0..nin {
            let mut e = vec![Complex64::new(0.0, 0.0); nin];
            e[j] = Complex64::new(1.0, 0.0);
            cols.push(self.apply(&e));
        }
        let nout = (2 * self.k_out + 1) as usize;
        (0..nout).map(|i| (0..nin).map(|j| cols[j][i]).collect()).collect()
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Operator norm of multiplication by `phi'` on the truncated `W^{s-1,2}_K`,
/// by power iteration on `G^H G` from a fixed seed.
pub fn multiplier_norm_estimate(phi: &PeriodicField, s: f64, kcap: usize) -> Result<f64> {
    if !(s >= 1.0) || s - 1.0 > S_MAX {
        return Err(Error::InvalidArgument(format!("multiplier estimate needs 1 <= s <= {}, got {s}", S_MAX + 1.0)));
    }
    let op = MultOp::new(phi, s, kcap);
    if op.d.iter().all(|c| c.norm() == 0.0) {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let n = (2 * kcap + 1) as usize;
    let mut x: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let mut lambda = 0.0f64;
    let mut rel = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let nx = norm2(&x).sqrt();
        x.iter_mut().for_each(|c| *c /= nx);
        let gx = op.apply(&x);
        let new = norm2(&gx);
        rel = if new > 0.0 { (new - lambda).abs() / new } else { 0.0 };
        lambda = new;
        if rel <= 1e-13 {
            return Ok(lambda.sqrt());
        }
        x = op.apply_adjoint(&gx);
    }
    if rel > 1e-8 {
        return Err(Error::PowerIterationStall { rel_change: rel });
    }
    Ok(lambda.sqrt())
}

/// The weighted multiplication matrix as dense rows (for external checks).
pub fn multiplier_matrix(phi: &PeriodicField, s: f64, kcap: usize) -> Vec<Vec<Complex64>> {
    MultOp::new(phi, s, kcap).dense()
}
