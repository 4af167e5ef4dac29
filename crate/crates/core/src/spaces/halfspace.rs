//! Mollifier extension of a periodic Lipschitz graph into the half strip and
//! the flattening map built from it.
//!
//! The graph is taken piecewise linear between its samples, so the mollified
//! integral and its derivative in the scale variable are evaluated exactly by
//! splitting at the sample breakpoints and using Gauss-Legendre on each piece.

use crate::error::{Error, Result};
use crate::geometry::V2;

/// Bump `(35/32)(1 - u^2)^3` on `(-1, 1)`; unit mass, C2.
pub fn mollifier(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        35.0 / 32.0 * t * t * t
    }
}

pub fn mollifier_deriv(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        -105.0 / 16.0 * u * t * t
    }
}

/// `sup |zeta'| + 1`, located numerically.
pub fn mollifier_constant() -> f64 {
    let m = 200_000;
    let mut best = 0.0f64;
    for i in 0..=m {
        let u = -1.0 + 2.0 * i as f64 / m as f64;
        best = best.max(mollifier_deriv(u).abs());
    }
    best + 1.0
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Periodic piecewise-linear graph on `[0, 1)`.
#[derive(Debug, Clone)]
pub struct SampledGraph {
    pub samples: Vec<f64>,
}

impl SampledGraph {
    pub fn new(samples: Vec<f64>) -> Self {
        assert!(samples.len() >= 2);
        Self { samples }
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new((0..m).map(|i| f(i as f64 / m as f64)).collect())
    }

    pub fn eval(&self, z: f64) -> f64 {
        let m = self.samples.len();
        let t = z.rem_euclid(1.0) * m as f64;
        let i = (t.floor() as usize).min(m - 1);
        let f = t - i as f64;
        self.samples[i] * (1.0 - f) + self.samples[(i + 1) % m] * f
    }

    pub fn slope(&self, z: f64) -> f64 {
        let m = self.samples.len();
        let t = z.rem_euclid(1.0) * m as f64;
        let i = (t.floor() as usize).min(m - 1);
        (self.samples[(i + 1) % m] - self.samples[i]) * m as f64
    }

    /// Largest slope magnitude of the interpolant.
    pub fn lipschitz(&self) -> f64 {
        let m = self.samples.len();
        (0..m).map(|i| (self.samples[(i + 1) % m] - self.samples[i]).abs() * m as f64).fold(0.0, f64::max)
    }

    /// `int zeta(u) g(u) phi(z - tau u) du` and `int zeta(u) (-u) phi'(z - tau u) du`.
    fn mollified(&self, z: f64, tau: f64) -> (f64, f64) {
        if tau == 0.0 {
            return (self.eval(z), 0.0);
        }
        let m = self.samples.len() as f64;
        // breakpoints z - tau u = k/m
        let mut cuts = vec![-1.0, 1.0];
        let (lo, hi) = ((z - tau) * m, (z + tau) * m);
        let mut k = lo.ceil();
        while k <= hi.floor() {
            let u = (z - k / m) / tau;
            if u > -1.0 && u < 1.0 {
                cuts.push(u);
            }
            k += 1.0;
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (mut val, mut dval) = (0.0, 0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            let slope = self.slope(z - tau * c);
            for (x, wt) in GL5 {
                let u = c + h * x;
                let zu = mollifier(u) * wt * h;
                val += zu * self.eval(z - tau * u);
                dval += zu * (-u) * slope;
            }
        }
        (val, dval)
    }
}

#[derive(Debug, Clone)]
pub struct HalfSpaceExtension {
    pub graph: SampledGraph,
    pub k_lip: f64,
    pub scale: f64,
    /// `sup |zeta'| + 1`
    pub c_zeta: f64,
    /// whether `N >= c(zeta) K + 1`
    pub scale_condition: bool,
    pub nx: usize,
    pub nz: usize,
    /// `T phi(z'_i, z_n_j / N)`, row-major in `i`
    pub t_values: Vec<f64>,
    /// `det grad Phi` on the grid
    pub det: Vec<f64>,
}

impl HalfSpaceExtension {
    pub fn z_prime(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    pub fn z_normal(&self, j: usize) -> f64 {
        (j + 1) as f64 / self.nz as f64
    }

    /// `T phi(z', tau)`
    pub fn extension(&self, z: f64, tau: f64) -> f64 {
        self.graph.mollified(z, tau).0
    }

    /// `d T phi / d tau`
    pub fn extension_dtau(&self, z: f64, tau: f64) -> f64 {
        self.graph.mollified(z, tau).1
    }

    /// `Phi(z', z_n) = (z', z_n + T phi(z', z_n / N))`
    pub fn map(&self, z: f64, zn: f64) -> V2 {
        V2::new(z, zn + self.extension(z, zn / self.scale))
    }

    /// Analytic `det grad Phi = 1 + (1/N) d_tau T phi`.
    pub fn det_at(&self, z: f64, zn: f64) -> f64 {
        1.0 + self.extension_dtau(z, zn / self.scale) / self.scale
    }

    pub fn det_range(&self) -> (f64, f64) {
        self.det.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)))
    }
}

/// Builds `T phi` and `Phi` on the `nx x nz` grid of `[0,1) x (0,1]`.
pub fn build_half_space_extension(
    graph: SampledGraph,
    k_lip: f64,
    scale: f64,
    nx: usize,
    nz: usize,
) -> Result<HalfSpaceExtension> {
    if !(scale > 0.0) || !(k_lip >= 0.0) {
        return Err(Error::InvalidArgument(format!("need N > 0 and K >= 0, got N={scale}, K={k_lip}")));
    }
    let c_zeta = mollifier_constant();
    let mut ext = HalfSpaceExtension {
        graph,
        k_lip,
        scale,
        c_zeta,
        scale_condition: scale >= c_zeta * k_lip + 1.0,
        nx,
        nz,
        t_values: Vec::with_capacity(nx * nz),
        det: Vec::with_capacity(nx * nz),
    };
    let (lo, hi) = (1.0 - k_lip / scale, 1.0 + k_lip / scale);
    let slack = 1e-12;
    for i in 0..nx {
        let z = ext.z_prime(i);
        let mut prev = f64::NEG_INFINITY;
        for j in 0..nz {
            let zn = ext.z_normal(j);
            let (t, dt) = ext.graph.mollified(z, zn / scale);
            let det = 1.0 + dt / scale;
            if det < lo - slack || det > hi + slack {
                return Err(Error::ScaleTooSmall { n: scale, det, lo, hi });
            }
            let phi2 = zn + t;
            if phi2 <= prev {
                return Err(Error::ScaleTooSmall { n: scale, det, lo, hi });
            }
            prev = phi2;
            ext.t_values.push(t);
            ext.det.push(det);
        }
    }
    Ok(ext)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_has_unit_mass() {
        let m = 100_000;
        let h = 2.0 / m as f64;
        let mass: f64 = (0..m).map(|i| mollifier(-1.0 + (i as f64 + 0.5) * h) * h).sum();
        assert!((mass - 1.0).abs() < 1e-9);
        let c = mollifier_constant();
        assert!((c - 2.878).abs() < 1e-3);
    }

    #[test]
    fn flat_graph_gives_unit_det() {
        let g = SampledGraph::new(vec![0.0; 64]);
        let e = build_half_space_extension(g, 0.0, 1.0, 16, 8).unwrap();
        assert!(e.det.iter().all(|&d| d == 1.0));
        assert!(e.t_values.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn reproduces_graph_at_zero_height() {
        let g = SampledGraph::from_fn(256, |z| 0.1 * (2.0 * std::f64::consts::PI * z).sin());
        let e = build_half_space_extension(g.clone(), 0.7, 4.0, 8, 4).unwrap();
        for &z in &[0.0, 0.3, 0.77] {
            assert_eq!(e.map(z, 0.0), V2::new(z, g.eval(z)));
        }
    }
}
