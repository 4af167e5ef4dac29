//! Truncated Fourier series on the periodic unit interval.
//!
//! Convention: `f(y) = sum_{|k|<=K} c_k exp(2 pi i k y)`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    kmax: usize,
    /// coefficient of mode k is stored at index k + kmax
    coeffs: Vec<Complex64>,
}

impl PeriodicField {
    pub fn zeros(kmax: usize) -> Self {
        Self { kmax, coeffs: vec![Complex64::new(0.0, 0.0); 2 * kmax + 1] }
    }

    pub fn constant(c: f64, kmax: usize) -> Self {
        let mut f = Self::zeros(kmax);
        f.coeffs[kmax] = Complex64::new(c, 0.0);
        f
    }

    /// `a cos(2 pi k y) + b sin(2 pi k y)`
    pub fn trig(k: usize, a: f64, b: f64, kmax: usize) -> Self {
        assert!(k <= kmax, "mode {k} beyond truncation {kmax}");
        let mut f = Self::zeros(kmax);
        if k == 0 {
            f.coeffs[kmax] = Complex64::new(a, 0.0);
        } else {
            f.coeffs[kmax + k] = Complex64::new(0.5 * a, -0.5 * b);
            f.coeffs[kmax - k] = Complex64::new(0.5 * a, 0.5 * b);
        }
        f
    }

    /// Builds from coefficients ordered k = -K..=K.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        assert!(coeffs.len() % 2 == 1, "need an odd number of coefficients");
        let kmax = (coeffs.len() - 1) / 2;
        Self { kmax, coeffs }
    }

    /// Interpolates uniform samples `f(j/N)`; modes beyond `kmax` are dropped.
    /// The Nyquist mode of an even-length grid is split symmetrically.
    pub fn from_samples(samples: &[f64], kmax: usize) -> Self {
        let n = samples.len();
        assert!(n > 0);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        let mut f = Self::zeros(kmax);
        for k in -(kmax as i64)..=(kmax as i64) {
            let idx = k.rem_euclid(n as i64) as usize;
            let mut c = buf[idx] * scale;
            if n % 2 == 0 && k.unsigned_abs() as usize == n / 2 {
                c *= 0.5;
            } else if k.unsigned_abs() as usize > n / 2 {
                c = Complex64::new(0.0, 0.0);
            }
            f.coeffs[(k + kmax as i64) as usize] = c;
        }
        f
    }

    pub fn from_fn(kmax: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = (4 * kmax + 4).max(64);
        let s: Vec<f64> = (0..n).map(|j| f(j as f64 / n as f64)).collect();
        Self::from_samples(&s, kmax)
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.kmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.kmax as i64) as usize]
        }
    }

    pub fn set_coeff(&mut self, k: i64, c: Complex64) {
        self.coeffs[(k + self.kmax as i64) as usize] = c;
    }

    /// Truncates or zero-pads to a new cap.
    pub fn resized(&self, kmax: usize) -> Self {
        let mut f = Self::zeros(kmax);
        let m = kmax.min(self.kmax) as i64;
        for k in -m..=m {
            f.set_coeff(k, self.coeff(k));
        }
        f
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        (0..=self.kmax as i64).all(|k| (self.coeff(k) - self.coeff(-k).conj()).norm() <= tol)
    }

    /// Real part of `sum_k (2 pi i k)^order c_k e^{2 pi i k y}`.
    pub fn eval_deriv(&self, y: f64, order: u32) -> f64 {
        let base = Complex64::from_polar(1.0, TWO_PI * y);
        let mut acc = self.coeff(0).re * if order == 0 { 1.0 } else { 0.0 };
        let mut e = Complex64::new(1.0, 0.0);
        for k in 1..=self.kmax as i64 {
            e *= base;
            let w = Complex64::new(0.0, TWO_PI * k as f64).powu(order);
            let plus = self.coeff(k) * e * w;
            // (2 pi i (-k))^order = conj((2 pi i k)^order)
            let minus = self.coeff(-k) * e.conj() * w.conj();
            acc += plus.re + minus.re;
        }
        acc
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval_deriv(y, 0)
    }

    /// Value and first two derivatives in one pass.
    pub fn eval3(&self, y: f64) -> [f64; 3] {
        let base = Complex64::from_polar(1.0, TWO_PI * y);
        let mut out = [self.coeff(0).re, 0.0, 0.0];
        let mut e = Complex64::new(1.0, 0.0);
        for k in 1..=self.kmax as i64 {
            e *= base;
            let w = TWO_PI * k as f64;
            let p = self.coeff(k) * e;
            let m = self.coeff(-k) * e.conj();
            out[0] += p.re + m.re;
            // d/dy: i w (p - m)
            out[1] += -w * (p.im - m.im);
            out[2] += -w * w * (p.re + m.re);
        }
        out
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, order: u32) -> Self {
        let mut f = self.clone();
        for k in -(self.kmax as i64)..=(self.kmax as i64) {
            let w = Complex64::new(0.0, TWO_PI * k as f64).powu(order);
            let c = f.coeff(k) * w;
            f.set_coeff(k, c);
        }
        f
    }

    /// Values on the uniform grid `j/n`, `n > 2 kmax`.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        assert!(n > 2 * self.kmax, "grid too coarse for the series");
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in -(self.kmax as i64)..=(self.kmax as i64) {
            buf[k.rem_euclid(n as i64) as usize] += self.coeff(k);
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    pub fn sup_norm(&self, n: usize) -> f64 {
        self.samples(n.max(2 * self.kmax + 1)).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean over the period.
    pub fn mean(&self) -> f64 {
        self.coeff(0).re
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { kmax: self.kmax, coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    /// `self + a * other`, result truncated at the larger cap.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let kmax = self.kmax.max(other.kmax);
        let mut f = self.resized(kmax);
        for k in -(other.kmax as i64)..=(other.kmax as i64) {
            let c = f.coeff(k) + other.coeff(k) * a;
            f.set_coeff(k, c);
        }
        f
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// Real orthonormal mode vector `[a_0, a_1, b_1, ..., a_K, b_K]` for the
    /// basis `1, sqrt2 cos(2 pi k y), sqrt2 sin(2 pi k y)`.
    pub fn to_real_modes(&self) -> Vec<f64> {
        let s2 = std::f64::consts::SQRT_2;
        let mut v = Vec::with_capacity(2 * self.kmax + 1);
        v.push(self.coeff(0).re);
        for k in 1..=self.kmax as i64 {
            let c = self.coeff(k);
            v.push(s2 * c.re);
            v.push(-s2 * c.im);
        }
        v
    }

    pub fn from_real_modes(modes: &[f64]) -> Self {
        assert!(modes.len() % 2 == 1);
        let kmax = (modes.len() - 1) / 2;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut f = Self::zeros(kmax);
        f.set_coeff(0, Complex64::new(modes[0], 0.0));
        for k in 1..=kmax {
            let (a, b) = (modes[2 * k - 1], modes[2 * k]);
            f.set_coeff(k as i64, Complex64::new(h * a, -h * b));
            f.set_coeff(-(k as i64), Complex64::new(h * a, h * b));
        }
        f
    }

    /// Squared L2 norm over one period (Parseval).
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Evaluates the real orthonormal basis at `y`: `[1, sqrt2 cos, sqrt2 sin, ...]`.
pub fn real_basis(y: f64, kmax: usize) -> Vec<f64> {
    let s2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(2 * kmax + 1);
    out.push(1.0);
    for k in 1..=kmax {
        let a = TWO_PI * k as f64 * y;
        out.push(s2 * a.cos());
        out.push(s2 * a.sin());
    }
    out
}

/// Wave number of real mode index `m` in the ordering of [`real_basis`].
pub fn real_mode_wavenumber(m: usize) -> usize {
    m.div_ceil(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_round_trip() {
        let f = PeriodicField::trig(3, 0.7, -0.2, 8);
        for &y in &[0.0, 0.13, 0.5, 0.91] {
            let t = TWO_PI * 3.0 * y;
            let exact = 0.7 * t.cos() - 0.2 * t.sin();
            assert!((f.eval(y) - exact).abs() < 1e-14);
            let d = 3.0 * TWO_PI * (-0.7 * t.sin() - 0.2 * t.cos());
            assert!((f.eval_deriv(y, 1) - d).abs() < 1e-12);
            let e = f.eval3(y);
            assert!((e[1] - d).abs() < 1e-12);
            assert!((e[2] + (3.0 * TWO_PI).powi(2) * exact).abs() < 1e-10);
            assert!((f.eval_deriv(y, 2) - e[2]).abs() < 1e-9);
            assert!((f.derivative(3).eval(y) - f.eval_deriv(y, 3)).abs() < 1e-8);
        }
    }

    #[test]
    fn samples_interpolate() {
        let g = |y: f64| (TWO_PI * y).sin() + 0.3 * (TWO_PI * 5.0 * y).cos() + 1.5;
        let f = PeriodicField::from_fn(8, g);
        assert!(f.is_conjugate_symmetric(1e-14));
        let s = f.samples(40);
        for (j, v) in s.iter().enumerate() {
            assert!((v - g(j as f64 / 40.0)).abs() < 1e-12);
        }
        assert!((f.mean() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn real_modes_round_trip() {
        let f = PeriodicField::from_fn(5, |y| (TWO_PI * 2.0 * y).cos() - 0.4 * (TWO_PI * y).sin() + 0.1);
        let m = f.to_real_modes();
        let g = PeriodicField::from_real_modes(&m);
        for k in -5..=5 {
            assert!((f.coeff(k) - g.coeff(k)).norm() < 1e-14);
        }
        // basis expansion reproduces values
        for &y in &[0.2, 0.77] {
            let b = real_basis(y, 5);
            let v: f64 = b.iter().zip(&m).map(|(a, c)| a * c).sum();
            assert!((v - f.eval(y)).abs() < 1e-13);
        }
        // orthonormal basis: L2 norm is the Euclidean norm of modes
        let e: f64 = m.iter().map(|v| v * v).sum();
        assert!((e - f.l2_sq()).abs() < 1e-13);
    }
}
