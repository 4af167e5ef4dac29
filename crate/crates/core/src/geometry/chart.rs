//! Local graph charts of the deformed boundary.

use super::hanzawa::{HanzawaMap, M2};
use super::{check_resolution, ReferenceGeometry, V2};
use crate::error::{Error, Result};
use crate::fourier::PeriodicField;
use std::f64::consts::PI;

/// Number of Chebyshev intervals used to tabulate a chart.
pub const CHART_NODES: usize = 64;

/// Boundary near `x0` written as the graph `z -> phi_tilde(z)` in rotated coordinates.
#[derive(Debug, Clone)]
pub struct Chart {
    /// rotation sending the deformed normal at `x0` to `(0, 1)`
    pub q: M2,
    pub x0: V2,
    /// parameter of `x0` on the curve (NaN for synthetic charts)
    pub y0: f64,
    pub z0: f64,
    pub radius: f64,
    /// Chebyshev-Lobatto nodes on `[-r, r]`, descending
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// curve parameter of each node
    pub params: Vec<f64>,
}

fn lobatto(r: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|j| r * (PI * j as f64 / n as f64).cos()).collect()
}

fn bary_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * s
            } else {
                s
            }
        })
        .collect()
}

fn bary_eval(nodes: &[f64], vals: &[f64], w: &[f64], z: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..nodes.len() {
        let d = z - nodes[j];
        if d == 0.0 {
            return vals[j];
        }
        let t = w[j] / d;
        num += t * vals[j];
        den += t;
    }
    num / den
}

impl Chart {
    /// Synthetic chart tabulating a given graph on `[-r, r]`.
    pub fn from_graph(radius: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let nodes = lobatto(radius, n);
        let values = nodes.iter().map(|&z| f(z)).collect();
        Self {
            q: M2::identity(),
            x0: V2::zeros(),
            y0: f64::NAN,
            z0: 0.0,
            radius,
            params: vec![f64::NAN; n + 1],
            nodes,
            values,
        }
    }

    /// Barycentric interpolation of the tabulated graph.
    pub fn eval(&self, z: f64) -> f64 {
        bary_eval(&self.nodes, &self.values, &bary_weights(self.nodes.len() - 1), z)
    }

    /// Derivative of the interpolant at the nodes (spectral differentiation matrix).
    pub fn node_derivatives(&self) -> Vec<f64> {
        let n = self.nodes.len() - 1;
        let x: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
        let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
        let sgn = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut out = vec![0.0; n + 1];
        for i in 0..=n {
            let mut acc = 0.0;
            let mut diag = 0.0;
            for j in 0..=n {
                if i != j {
                    let d = c(i) / c(j) * sgn(i + j) / (x[i] - x[j]);
                    acc += d * self.values[j];
                    diag -= d;
                }
            }
            out[i] = (acc + diag * self.values[i]) / self.radius;
        }
        out
    }

    pub fn deriv(&self, z: f64) -> f64 {
        let d = self.node_derivatives();
        bary_eval(&self.nodes, &d, &bary_weights(self.nodes.len() - 1), z)
    }

    /// Rows `(z, phi_tilde(z))` in increasing `z`.
    pub fn rows(&self) -> Vec<[f64; 2]> {
        let mut r: Vec<[f64; 2]> = self.nodes.iter().zip(&self.values).map(|(&z, &v)| [z, v]).collect();
        r.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        r
    }

    /// Maps a chart point back to the plane.
    pub fn to_plane(&self, z: f64, v: f64) -> V2 {
        self.q.transpose() * V2::new(z, v) + self.x0
    }
}

/// Builds the chart of `partial Omega_eta` around the boundary point `x0`.
pub fn local_chart(geom: &ReferenceGeometry, eta: &PeriodicField, x0: V2, radius: f64) -> Result<Chart> {
    local_chart_with(geom, eta, x0, radius, CHART_NODES)
}

pub fn local_chart_with(
    geom: &ReferenceGeometry,
    eta: &PeriodicField,
    x0: V2,
    radius: f64,
    n: usize,
) -> Result<Chart> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("window radius must be positive, got {radius}")));
    }
    let map = HanzawaMap::new(geom, eta)?;
    let y0 = geom.project(x0)?.y;
    let miss = (map.phi_eta(y0) - x0).norm();
    if miss > 1e-8 * (1.0 + x0.norm()) {
        return Err(Error::InvalidArgument(format!("x0 is {miss:.3e} away from the deformed boundary")));
    }
    let nrm = map.n_eta(y0);
    let q = M2::new(nrm.y, -nrm.x, nrm.x, nrm.y);
    let c = |y: f64| q * (map.phi_eta(y) - x0);
    let dz = |y: f64| (q * map.phi_eta_d(y)).x;
    let sign = dz(y0).signum();
    // walk both ways until |z| passes the window, insisting on monotone z
    let step = 0.25 / check_resolution(geom.kmax().max(eta.kmax())) as f64;
    let mut ends = [0.0; 2];
    for (e, dir) in [-1.0f64, 1.0].iter().enumerate() {
        let mut t = 0.0;
        loop {
            t += step;
            let y = y0 + dir * t;
            if dz(y).signum() != sign {
                return Err(Error::WindowTooLarge { radius, reason: format!("z(y) not monotone near y = {:.5}", y.rem_euclid(1.0)) });
            }
            if c(y).x.abs() >= radius {
                break;
            }
            if t > 0.5 {
                return Err(Error::WindowTooLarge { radius, reason: "window exceeds the boundary".into() });
            }
        }
        ends[e] = y0 + dir * t;
    }
    let nodes = lobatto(radius, n);
    let mut values = Vec::with_capacity(n + 1);
    let mut params = Vec::with_capacity(n + 1);
    for &z in &nodes {
        // z(y) is monotone on [ends[0], ends[1]]; bisection then Newton polish
        let (mut a, mut b) = (ends[0], ends[1]);
        let f = |y: f64| c(y).x - z;
        let fa = f(a);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        let mut y = 0.5 * (a + b);
        for _ in 0..3 {
            let d = dz(y);
            y -= f(y) / d;
        }
        values.push(c(y).y);
        params.push(y.rem_euclid(1.0));
    }
    Ok(Chart { q, x0, y0, z0: 0.0, radius, nodes, values, params })
}

/// `sup |d phi_tilde / dz|` over the window, from the spectral derivative.
pub fn chart_lipschitz(chart: &Chart) -> f64 {
    let d = chart.node_derivatives();
    let w = bary_weights(chart.nodes.len() - 1);
    let m = 2000;
    let mut best = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..=m {
        let z = -chart.radius + 2.0 * chart.radius * i as f64 / m as f64;
        best = best.max(bary_eval(&chart.nodes, &d, &w, z).abs());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circle_bottom_chart() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        let eta = PeriodicField::zeros(2);
        let ch = local_chart(&g, &eta, V2::new(0.0, -1.0), 0.4).unwrap();
        assert!((ch.q + M2::identity()).norm() < 1e-12);
        for &z in &[-0.4f64, -0.13, 0.0, 0.21, 0.39] {
            let exact = (1.0 - z * z).sqrt() - 1.0;
            assert!((ch.eval(z) - exact).abs() < 1e-12);
        }
        assert!(ch.eval(0.0).abs() < 1e-13);
        assert!(ch.deriv(0.0).abs() < 1e-10);
        let r: f64 = 0.4;
        assert!((chart_lipschitz(&ch) - r / (1.0 - r * r).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_shrinks_with_window() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        let eta = PeriodicField::trig(3, 0.02, 0.01, 3);
        let map = HanzawaMap::new(&g, &eta).unwrap();
        let x0 = map.phi_eta(0.3);
        let mut prev = f64::INFINITY;
        for r in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let lip = chart_lipschitz(&local_chart(&g, &eta, x0, r).unwrap());
            assert!(lip < prev);
            prev = lip;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn synthetic_graphs() {
        assert_eq!(chart_lipschitz(&Chart::from_graph(0.3, 16, |_| 0.0)), 0.0);
        let lin = Chart::from_graph(0.3, 16, |z| 1.7 * z);
        assert!((chart_lipschitz(&lin) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn chart_points_lie_on_boundary() {
        let g = ReferenceGeometry::circle(1.0, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut eta = PeriodicField::zeros(4);
            for k in 1..=4 {
                let a = rng.random_range(-0.01..0.01);
                let b = rng.random_range(-0.01..0.01);
                eta = eta.axpy(1.0, &PeriodicField::trig(k, a, b, 4));
            }
            let map = HanzawaMap::new(&g, &eta).unwrap();
            let y: f64 = rng.random();
            let ch = local_chart(&g, &eta, map.phi_eta(y), 0.3).unwrap();
            for (i, (&z, &v)) in ch.nodes.iter().zip(&ch.values).enumerate() {
                let p = ch.to_plane(z, v);
                assert!((p - map.phi_eta(ch.params[i])).norm() < 1e-8);
            }
            assert!(ch.deriv(0.0).abs() < 1e-8);
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        let eta = PeriodicField::zeros(1);
        assert!(matches!(
            local_chart(&g, &eta, V2::new(1.0, 0.0), 1.5),
            Err(Error::WindowTooLarge { .. })
        ));
    }
}
