//! Reference curve, tubular coordinates and the displacement type.

pub mod chart;
pub mod checks;
pub mod hanzawa;

use crate::error::{Error, Result};
use crate::fourier::PeriodicField;
use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use chart::{chart_lipschitz, local_chart, Chart};
pub use checks::{degeneracy_check, self_intersection_check, DegeneracyReport, DegeneracyThresholds};
pub use hanzawa::{coefficient_fields, hanzawa, hanzawa_inverse, HanzawaField, HanzawaMap, PointCoefficients};

pub type V2 = Vector2<f64>;

/// Rotates a vector clockwise by a right angle: `(a, b) -> (b, -a)`.
#[inline]
pub fn rot(v: V2) -> V2 {
    V2::new(v.y, -v.x)
}

/// C2 cutoff in the signed distance: zero for `s <= -0.9 L`, one for `s >= -0.1 L`.
///
/// The ramp is linear in the middle with short cubic-smoothstep blends at
/// both ends, which keeps `sup |chi'|` at `1 / ((1 - d) 0.8 L)` with `d = 0.035`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub width: f64,
}

const BLEND: f64 = 0.035;

impl Cutoff {
    pub fn new(width: f64) -> Self {
        Self { width }
    }

    fn t(&self, s: f64) -> f64 {
        (s + 0.9 * self.width) / (0.8 * self.width)
    }

    fn profile(t: f64) -> f64 {
        let c = 1.0 / (1.0 - BLEND);
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else if t <= BLEND {
            let x = t / BLEND;
            c * BLEND * (x * x * x - 0.5 * x * x * x * x)
        } else if t < 1.0 - BLEND {
            c * (0.5 * BLEND + (t - BLEND))
        } else {
            1.0 - Self::profile(1.0 - t)
        }
    }

    fn profile_d(t: f64) -> f64 {
        let c = 1.0 / (1.0 - BLEND);
        let h = |x: f64| 3.0 * x * x - 2.0 * x * x * x;
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else if t <= BLEND {
            c * h(t / BLEND)
        } else if t < 1.0 - BLEND {
            c
        } else {
            c * h((1.0 - t) / BLEND)
        }
    }

    fn profile_dd(t: f64) -> f64 {
        let c = 1.0 / (1.0 - BLEND);
        let hd = |x: f64| 6.0 * x - 6.0 * x * x;
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else if t <= BLEND {
            c * hd(t / BLEND) / BLEND
        } else if t < 1.0 - BLEND {
            0.0
        } else {
            -c * hd((1.0 - t) / BLEND) / BLEND
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        Self::profile(self.t(s))
    }

    pub fn deriv(&self, s: f64) -> f64 {
        Self::profile_d(self.t(s)) / (0.8 * self.width)
    }

    pub fn deriv2(&self, s: f64) -> f64 {
        let d = 0.8 * self.width;
        Self::profile_dd(self.t(s)) / (d * d)
    }

    pub fn sup_deriv(&self) -> f64 {
        1.0 / ((1.0 - BLEND) * 0.8 * self.width)
    }
}

/// Closed planar curve given by one Fourier series per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: PeriodicField,
    pub y: PeriodicField,
}

/// Position and its first two parameter derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CurveJet {
    pub p: V2,
    pub d1: V2,
    pub d2: V2,
}

impl CurveJet {
    pub fn speed(&self) -> f64 {
        self.d1.norm()
    }

    pub fn normal(&self) -> V2 {
        rot(self.d1) / self.d1.norm()
    }

    /// Parameter derivative of the unit normal.
    pub fn normal_deriv(&self) -> V2 {
        let sp = self.d1.norm();
        rot(self.d2) / sp - rot(self.d1) * (self.d1.dot(&self.d2) / (sp * sp * sp))
    }

    /// Signed curvature, positive where the curve bends toward its interior.
    pub fn curvature(&self) -> f64 {
        let sp = self.d1.norm();
        (self.d1.x * self.d2.y - self.d1.y * self.d2.x) / (sp * sp * sp)
    }
}

impl Curve {
    pub fn new(x: PeriodicField, y: PeriodicField) -> Self {
        Self { x, y }
    }

    pub fn circle(r: f64) -> Self {
        Self::new(PeriodicField::trig(1, r, 0.0, 1), PeriodicField::trig(1, 0.0, r, 1))
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::new(PeriodicField::trig(1, a, 0.0, 1), PeriodicField::trig(1, 0.0, b, 1))
    }

    /// Interpolates a parametrized curve with `kmax` modes per coordinate.
    pub fn from_fn(kmax: usize, f: impl Fn(f64) -> V2) -> Self {
        let n = (4 * kmax + 4).max(64);
        let pts: Vec<V2> = (0..n).map(|j| f(j as f64 / n as f64)).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        Self::new(PeriodicField::from_samples(&xs, kmax), PeriodicField::from_samples(&ys, kmax))
    }

    pub fn kmax(&self) -> usize {
        self.x.kmax().max(self.y.kmax())
    }

    pub fn jet(&self, y: f64) -> CurveJet {
        let a = self.x.eval3(y);
        let b = self.y.eval3(y);
        CurveJet { p: V2::new(a[0], b[0]), d1: V2::new(a[1], b[1]), d2: V2::new(a[2], b[2]) }
    }

    pub fn point(&self, y: f64) -> V2 {
        V2::new(self.x.eval(y), self.y.eval(y))
    }

    pub fn normal(&self, y: f64) -> V2 {
        self.jet(y).normal()
    }

    /// Polygon through `n` equally spaced parameter samples.
    pub fn polyline(&self, n: usize) -> Vec<V2> {
        let n = n.max(2 * self.kmax() + 1);
        let xs = self.x.samples(n);
        let ys = self.y.samples(n);
        xs.into_iter().zip(ys).map(|(a, b)| V2::new(a, b)).collect()
    }

    /// Signed enclosed area (positive for counter-clockwise orientation).
    /// Exact for trigonometric curves: `1/2 int (x y' - y x') dy`.
    pub fn signed_area(&self) -> f64 {
        let dy = self.y.derivative(1);
        let kmax = self.x.kmax().max(dy.kmax()) as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        let dx = self.x.derivative(1);
        for k in -kmax..=kmax {
            acc += self.x.coeff(k) * dy.coeff(-k) - self.y.coeff(k) * dx.coeff(-k);
        }
        0.5 * acc.re
    }

    /// Arc length by the periodic trapezoid rule.
    pub fn perimeter(&self, n: usize) -> f64 {
        let dx = self.x.derivative(1).samples(n);
        let dy = self.y.derivative(1).samples(n);
        dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).sum::<f64>() / n as f64
    }
}

/// Self-intersection resolution used throughout: `max(1024, 64 K)`.
pub fn check_resolution(kmax: usize) -> usize {
    1024.max(64 * kmax)
}

#[derive(Debug, Clone)]
pub struct ReferenceGeometry {
    curve: Curve,
    width: f64,
    alpha: f64,
    cutoff: Cutoff,
    coarse: Vec<(f64, V2)>,
}

/// Result of nearest-point projection onto the reference curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub y: f64,
    pub s: f64,
    pub dist: f64,
}

impl ReferenceGeometry {
    /// Validates the curve and tube width. The displacement bound defaults to `L/2`.
    pub fn new(curve: Curve, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidGeometry(format!("tube width must be positive, got {width}")));
        }
        let ncoarse = 256.max(16 * curve.kmax());
        let coarse = (0..ncoarse)
            .map(|j| {
                let y = j as f64 / ncoarse as f64;
                (y, curve.point(y))
            })
            .collect();
        let g = Self { curve, width, alpha: 0.5 * width, cutoff: Cutoff::new(width), coarse };
        g.validate()?;
        Ok(g)
    }

    pub fn circle(r: f64, width: f64) -> Result<Self> {
        Self::new(Curve::circle(r), width)
    }

    pub fn ellipse(a: f64, b: f64, width: f64) -> Result<Self> {
        Self::new(Curve::ellipse(a, b), width)
    }

    /// Sets the admissible displacement bound as a fraction of the tube width.
    pub fn with_alpha_fraction(mut self, frac: f64) -> Result<Self> {
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::InvalidGeometry(format!("alpha fraction {frac} outside (0, 1)")));
        }
        if frac * self.width * self.cutoff.sup_deriv() >= 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "alpha = {frac} L too large for the cutoff slope {:.4}/L",
                self.cutoff.sup_deriv() * self.width
            )));
        }
        self.alpha = frac * self.width;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = check_resolution(self.curve.kmax());
        let mut min_speed = f64::INFINITY;
        let mut max_curv = f64::NEG_INFINITY;
        for j in 0..n {
            let jet = self.curve.jet(j as f64 / n as f64);
            min_speed = min_speed.min(jet.speed());
            max_curv = max_curv.max(jet.curvature());
        }
        if !(min_speed > 0.0) {
            return Err(Error::InvalidGeometry("parametrization speed vanishes".into()));
        }
        if self.curve.signed_area() <= 0.0 {
            return Err(Error::InvalidGeometry("curve must be counter-clockwise".into()));
        }
        if checks::polyline_self_intersects(&self.curve.polyline(n)) {
            return Err(Error::InvalidGeometry("reference curve self-intersects".into()));
        }
        if max_curv * self.width >= 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "tube width {} exceeds the inner curvature radius {:.4}",
                self.width,
                1.0 / max_curv
            )));
        }
        // fibres of the inner half-tube must project back to their own foot point
        let m = 512.max(4 * self.curve.kmax());
        for j in 0..m {
            let y = (j as f64 + 0.5) / m as f64;
            let jet = self.curve.jet(y);
            for frac in [0.3, 0.6, 0.95] {
                let x = jet.p - jet.normal() * (frac * self.width);
                let pr = self.project(x).map_err(|_| {
                    Error::InvalidGeometry(format!("ambiguous projection inside the tube near y = {y:.4}"))
                })?;
                let dy = periodic_dist(pr.y, y);
                if dy * jet.speed() > 1e-6 * self.width.max(1.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "inner tube of width {} is not single-valued near y = {y:.4}",
                        self.width
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn curve(&self) -> &Curve {
        &self.curve
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.cutoff
    }

    pub fn kmax(&self) -> usize {
        self.curve.kmax()
    }

    pub fn point(&self, y: f64) -> V2 {
        self.curve.point(y)
    }

    pub fn normal(&self, y: f64) -> V2 {
        self.curve.normal(y)
    }

    pub fn jet(&self, y: f64) -> CurveJet {
        self.curve.jet(y)
    }

    /// Nearest-point projection without the tube restriction.
    pub fn project(&self, x: V2) -> Result<Projection> {
        let nc = self.coarse.len();
        let d2: Vec<f64> = self.coarse.iter().map(|(_, p)| (p - x).norm_squared()).collect();
        let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let step = 1.0 / nc as f64;
        // refine every discrete local minimum that could compete with the best one
        let mut found: Vec<(f64, f64)> = Vec::new();
        for i in 0..nc {
            let (prev, next) = (d2[(i + nc - 1) % nc], d2[(i + 1) % nc]);
            if d2[i] <= prev && d2[i] <= next {
                let slack = 4.0 * step * step * self.max_speed_sq() + 1e-12;
                if d2[i].sqrt() > dmin.sqrt() + slack.sqrt() {
                    continue;
                }
                let y = self.refine(x, self.coarse[i].0, step);
                let d = (self.curve.point(y) - x).norm();
                if !found.iter().any(|&(yy, _)| periodic_dist(yy, y) < 1e-9) {
                    found.push((y, d));
                }
            }
        }
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let (y, dist) = found[0];
        if let Some(&(y2, d2b)) = found.get(1) {
            if (d2b - dist).abs() <= 1e-9 * dist.max(1.0) && periodic_dist(y, y2) > 1e-6 {
                return Err(Error::AmbiguousProjection { y1: y, y2 });
            }
        }
        let jet = self.curve.jet(y);
        let s = (x - jet.p).dot(&jet.normal());
        Ok(Projection { y, s, dist })
    }

    fn max_speed_sq(&self) -> f64 {
        let n = self.coarse.len();
        (0..n)
            .map(|i| (self.coarse[(i + 1) % n].1 - self.coarse[i].1).norm_squared() * (n * n) as f64)
            .fold(0.0, f64::max)
    }

    /// Safeguarded Newton on `(phi(y) - x) . phi'(y) = 0` around a coarse seed.
    fn refine(&self, x: V2, y0: f64, step: f64) -> f64 {
        let g = |y: f64| {
            let j = self.curve.jet(y);
            let r = j.p - x;
            (r.dot(&j.d1), j.d1.norm_squared() + r.dot(&j.d2))
        };
        let (mut a, mut b) = (y0 - step, y0 + step);
        let (ga, gb) = (g(a).0, g(b).0);
        let bracketed = ga <= 0.0 && gb >= 0.0;
        let mut y = y0;
        for _ in 0..100 {
            let (gv, gd) = g(y);
            if bracketed {
                if gv < 0.0 {
                    a = y;
                } else {
                    b = y;
                }
            }
            let mut yn = if gd > 0.0 { y - gv / gd } else { f64::NAN };
            if bracketed && !(yn > a && yn < b) {
                yn = 0.5 * (a + b);
            } else if !yn.is_finite() {
                yn = y - 0.1 * step * gv.signum();
            }
            let done = (yn - y).abs() < 1e-15;
            y = yn;
            if done || (bracketed && b - a < 1e-15) {
                break;
            }
        }
        y.rem_euclid(1.0)
    }

    /// `(y, s)` with `phi(y)` the nearest boundary point and `s` the signed distance.
    pub fn tubular_coordinates(&self, x: V2) -> Result<(f64, f64)> {
        match self.project(x) {
            Ok(pr) => {
                if pr.dist >= self.width {
                    Err(Error::OutOfTube { dist: pr.dist, width: self.width })
                } else {
                    Ok((pr.y, pr.s))
                }
            }
            Err(Error::AmbiguousProjection { y1, y2 }) => {
                let d = (self.curve.point(y1) - x).norm();
                if d >= self.width {
                    Err(Error::OutOfTube { dist: d, width: self.width })
                } else {
                    Err(Error::AmbiguousProjection { y1, y2 })
                }
            }
            Err(e) => Err(e),
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.curve.perimeter(check_resolution(self.kmax()))
    }

    pub fn area(&self) -> f64 {
        self.curve.signed_area()
    }
}

/// Distance between two parameters on the unit circle.
pub fn periodic_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// The beam state: displacement, its velocity and the time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDisplacement {
    pub eta: PeriodicField,
    pub eta_t: PeriodicField,
    pub t: f64,
}

impl BoundaryDisplacement {
    pub fn new(eta: PeriodicField, eta_t: PeriodicField, t: f64) -> Self {
        Self { eta, eta_t, t }
    }

    pub fn zero(kmax: usize) -> Self {
        Self::new(PeriodicField::zeros(kmax), PeriodicField::zeros(kmax), 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.eta.sup_norm(check_resolution(self.eta.kmax()))
    }

    /// Conjugate symmetry and the dense-grid sup bound `|eta| < L`.
    pub fn is_valid(&self, width: f64) -> bool {
        self.eta.is_conjugate_symmetric(1e-12)
            && self.eta_t.is_conjugate_symmetric(1e-12)
            && self.sup_norm() < width
    }
}

/// Convenience: `2 pi`.
pub const TWO_PI: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_profile() {
        let c = Cutoff::new(0.2);
        assert_eq!(c.value(0.0), 1.0);
        assert_eq!(c.value(-0.019), 1.0);
        assert_eq!(c.value(-0.181), 0.0);
        assert_eq!(c.value(-0.3), 0.0);
        // monotone, bounded slope, derivative consistent with differences
        let mut prev = 0.0;
        let mut maxd: f64 = 0.0;
        for i in 0..=4000 {
            let s = -0.2 + 0.2 * i as f64 / 4000.0;
            let v = c.value(s);
            assert!(v >= prev - 1e-15);
            prev = v;
            maxd = maxd.max(c.deriv(s));
            let h = 1e-7;
            let fd = (c.value(s + h) - c.value(s - h)) / (2.0 * h);
            assert!((fd - c.deriv(s)).abs() < 1e-5 / 0.2, "s={s}");
            let h2 = 1e-9;
            let fd2 = (c.deriv(s + h2) - c.deriv(s - h2)) / (2.0 * h2);
            assert!((fd2 - c.deriv2(s)).abs() < 1e-3 * c.deriv2(s).abs().max(1.0 / 0.04), "s={s}");
        }
        assert!(maxd * 0.2 <= 1.3);
        assert!((maxd - c.sup_deriv()).abs() < 1e-9);
        // symmetric about the midpoint of the ramp
        assert!((c.value(-0.1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn circle_tubular_coordinates() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        let (y, s) = g.tubular_coordinates(V2::new(1.1, 0.0)).unwrap();
        assert!(periodic_dist(y, 0.0) < 1e-12);
        assert!((s - 0.1).abs() < 1e-12);
        for &yy in &[0.0, 0.123, 0.5, 0.877] {
            let (y, s) = g.tubular_coordinates(g.point(yy)).unwrap();
            assert!(periodic_dist(y, yy) < 1e-12);
            assert!(s.abs() < 1e-12);
        }
        assert!(matches!(g.tubular_coordinates(V2::new(0.5, 0.0)), Err(Error::OutOfTube { .. })));
        assert!(matches!(g.tubular_coordinates(V2::new(0.0, 0.0)), Err(Error::OutOfTube { .. })));
    }

    #[test]
    fn ellipse_projection_matches_dense_argmin() {
        let g = ReferenceGeometry::ellipse(2.0, 1.0, 0.2).unwrap();
        let x = V2::new(0.0, 1.3);
        let pr = g.project(x).unwrap();
        let n = 1_000_000;
        let (mut best, mut by) = (f64::INFINITY, 0.0);
        for j in 0..n {
            let y = j as f64 / n as f64;
            let t = TWO_PI * y;
            let d = (V2::new(2.0 * t.cos(), t.sin()) - x).norm();
            if d < best {
                best = d;
                by = y;
            }
        }
        assert!(periodic_dist(pr.y, by) < 2.0 / n as f64);
        assert!((pr.dist - best).abs() < 1e-9);
        assert!((pr.s - 0.3).abs() < 1e-9);
        assert!(matches!(g.tubular_coordinates(x), Err(Error::OutOfTube { .. })));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ReferenceGeometry::circle(1.0, 1.0).is_err());
        let cw = Curve::new(PeriodicField::trig(1, 1.0, 0.0, 1), PeriodicField::trig(1, 0.0, -1.0, 1));
        assert!(ReferenceGeometry::new(cw, 0.1).is_err());
        assert!(ReferenceGeometry::circle(1.0, 0.2).unwrap().with_alpha_fraction(0.8).is_err());
    }

    #[test]
    fn normal_derivative_matches_differences() {
        let c = Curve::ellipse(1.5, 0.7);
        for &y in &[0.05, 0.3, 0.61] {
            let j = c.jet(y);
            let h = 1e-6;
            let fd = (c.normal(y + h) - c.normal(y - h)) / (2.0 * h);
            assert!((fd - j.normal_deriv()).norm() < 1e-6);
            assert!((j.normal().norm() - 1.0).abs() < 1e-15);
            assert!(j.normal().dot(&j.d1).abs() < 1e-13);
        }
        assert!((c.signed_area() - PI * 1.5 * 0.7).abs() < 1e-13);
    }
}
