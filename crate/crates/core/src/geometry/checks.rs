//! Monitors for the deformed boundary: non-degeneracy and polyline self-intersection.

use super::{check_resolution, rot, ReferenceGeometry, V2};
use crate::fourier::PeriodicField;
use serde::{Deserialize, Serialize};

/// Safety margins for [`degeneracy_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegeneracyThresholds {
    /// lower bound on `min |d phi_eta|` as a fraction of `min |d phi|`
    pub speed_fraction: f64,
    /// lower bound on `min n . n_eta`
    pub normal_alignment: f64,
    /// lower bound on `L - |eta|_inf` as a fraction of `L`
    pub tube_margin_fraction: f64,
}

impl Default for DegeneracyThresholds {
    fn default() -> Self {
        Self { speed_fraction: 0.1, normal_alignment: 0.5, tube_margin_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegeneracyKind {
    Speed,
    NormalAlignment,
    TubeMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub min_speed: f64,
    pub min_normal_dot: f64,
    pub tube_margin: f64,
    /// every failed criterion with its threshold
    pub violations: Vec<(DegeneracyKind, f64)>,
}

impl DegeneracyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Measured value of the given criterion.
    pub fn value(&self, kind: DegeneracyKind) -> f64 {
        match kind {
            DegeneracyKind::Speed => self.min_speed,
            DegeneracyKind::NormalAlignment => self.min_normal_dot,
            DegeneracyKind::TubeMargin => self.tube_margin,
        }
    }

    pub fn describe(&self) -> String {
        if self.ok() {
            return "ok".into();
        }
        self.violations
            .iter()
            .map(|(k, thr)| format!("{k:?}: {:.4e} below {:.4e}", self.value(*k), thr))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Evaluates `min |d phi_eta|`, `min n . n_eta` and `L - |eta|_inf` on a dense grid.
pub fn degeneracy_check(geom: &ReferenceGeometry, eta: &PeriodicField) -> DegeneracyReport {
    degeneracy_check_with(geom, eta, &DegeneracyThresholds::default())
}

pub fn degeneracy_check_with(
    geom: &ReferenceGeometry,
    eta: &PeriodicField,
    thr: &DegeneracyThresholds,
) -> DegeneracyReport {
    let n = check_resolution(geom.kmax().max(eta.kmax()));
    let e = eta.samples(n);
    let ed = eta.derivative(1).samples(n);
    let mut min_ref_speed = f64::INFINITY;
    let mut min_speed = f64::INFINITY;
    let mut min_dot = f64::INFINITY;
    let mut sup = 0.0f64;
    for j in 0..n {
        let jet = geom.jet(j as f64 / n as f64);
        let nrm = jet.normal();
        let d = jet.d1 + nrm * ed[j] + jet.normal_deriv() * e[j];
        let sp = d.norm();
        min_ref_speed = min_ref_speed.min(jet.speed());
        min_speed = min_speed.min(sp);
        let dot = if sp > 0.0 { nrm.dot(&(rot(d) / sp)) } else { -1.0 };
        min_dot = min_dot.min(dot);
        sup = sup.max(e[j].abs());
    }
    let width = geom.width();
    let margin = width - sup;
    let mut violations = Vec::new();
    let speed_thr = thr.speed_fraction * min_ref_speed;
    if !(min_speed >= speed_thr) {
        violations.push((DegeneracyKind::Speed, speed_thr));
    }
    if !(min_dot >= thr.normal_alignment) {
        violations.push((DegeneracyKind::NormalAlignment, thr.normal_alignment));
    }
    let margin_thr = thr.tube_margin_fraction * width;
    if !(margin >= margin_thr) {
        violations.push((DegeneracyKind::TubeMargin, margin_thr));
    }
    DegeneracyReport { min_speed, min_normal_dot: min_dot, tube_margin: margin, violations }
}

/// Whether the polyline of `phi_eta` at the check resolution crosses itself.
pub fn self_intersection_check(geom: &ReferenceGeometry, eta: &PeriodicField) -> bool {
    let n = check_resolution(geom.kmax().max(eta.kmax()));
    let e = eta.samples(n);
    let poly: Vec<V2> = (0..n)
        .map(|j| {
            let jet = geom.jet(j as f64 / n as f64);
            jet.p + jet.normal() * e[j]
        })
        .collect();
    polyline_self_intersects(&poly)
}

fn orient(a: V2, b: V2, c: V2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: V2, b: V2, p: V2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test with collinear handling.
pub fn segments_intersect(p1: V2, p2: V2, q1: V2, q2: V2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Sweep over x: segments enter an active set in order of their left end and
/// leave once the sweep passes their right end. Adjacent segments share a
/// vertex and are skipped.
pub fn polyline_self_intersects(poly: &[V2]) -> bool {
    let n = poly.len();
    if n < 4 {
        return false;
    }
    let seg = |i: usize| (poly[i], poly[(i + 1) % n]);
    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |i: usize| {
        let (a, b) = seg(i);
        a.x.min(b.x)
    };
    order.sort_by(|&a, &b| xmin(a).partial_cmp(&xmin(b)).unwrap());
    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let (a, b) = seg(i);
        let lo = a.x.min(b.x);
        active.retain(|&j| {
            let (c, d) = seg(j);
            c.x.max(d.x) >= lo
        });
        let (ylo, yhi) = (a.y.min(b.y), a.y.max(b.y));
        for &j in &active {
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (c, d) = seg(j);
            if c.y.max(d.y) < ylo || c.y.min(d.y) > yhi {
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
        active.push(i);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TWO_PI;

    fn brute_force(poly: &[V2]) -> bool {
        let n = poly.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn circle_is_simple() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        assert!(!self_intersection_check(&g, &PeriodicField::zeros(3)));
        let small = PeriodicField::trig(3, 0.01, 0.0, 3);
        assert!(!self_intersection_check(&g, &small));
        let r = degeneracy_check(&g, &PeriodicField::zeros(3));
        assert!(r.ok());
        assert!((r.min_speed - TWO_PI).abs() < 1e-12);
        assert!((r.min_normal_dot - 1.0).abs() < 1e-14);
        assert!((r.tube_margin - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pinched_curve_intersects() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        // radial profile 1 - 1.8 cos(4 pi y) loops through the centre
        let eta = PeriodicField::trig(2, -1.8, 0.0, 2);
        let poly: Vec<V2> = (0..1024)
            .map(|j| {
                let y = j as f64 / 1024.0;
                g.point(y) + g.normal(y) * eta.eval(y)
            })
            .collect();
        assert!(brute_force(&poly));
        assert!(self_intersection_check(&g, &eta));
    }

    #[test]
    fn thin_margin_flags_tube() {
        let g = ReferenceGeometry::circle(1.0, 0.2).unwrap();
        let eta = PeriodicField::trig(1, 0.99 * 0.2, 0.0, 1);
        let r = degeneracy_check(&g, &eta);
        assert!(!r.ok());
        assert!(r.violations.iter().any(|(k, _)| *k == DegeneracyKind::TubeMargin));
    }
}
