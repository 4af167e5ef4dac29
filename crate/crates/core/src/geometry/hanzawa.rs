//! The normal-fibre transform `Psi_eta` and the coefficient fields it induces.

use super::{check_resolution, rot, ReferenceGeometry, V2};
use crate::error::{Error, Result};
use crate::fourier::PeriodicField;
use nalgebra::Matrix2;
use rayon::prelude::*;

pub type M2 = Matrix2<f64>;

/// Transform and coefficients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub psi: V2,
    /// `F_ij = d Psi_i / d x_j`
    pub grad: M2,
    pub j: f64,
    /// `J F^{-1} F^{-T}`
    pub a: M2,
    /// `J F^{-T}` (the cofactor matrix)
    pub b: M2,
}

impl PointCoefficients {
    pub fn identity(x: V2) -> Self {
        Self { psi: x, grad: M2::identity(), j: 1.0, a: M2::identity(), b: M2::identity() }
    }

    fn from_grad(psi: V2, f: M2) -> Result<Self> {
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(Error::DegenerateJacobian { det });
        }
        let finv = M2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / det;
        let a = finv * finv.transpose() * det;
        let a = 0.5 * (a + a.transpose());
        let b = finv.transpose() * det;
        Ok(Self { psi, grad: f, j: det, a, b })
    }
}

/// `Psi_eta` for a fixed displacement, with the sup-norm checked once.
#[derive(Debug, Clone)]
pub struct HanzawaMap<'g> {
    geom: &'g ReferenceGeometry,
    eta: PeriodicField,
    eta_d: PeriodicField,
    sup: f64,
    zero: bool,
}

impl<'g> HanzawaMap<'g> {
    /// Requires `|eta|_inf < L`.
    pub fn new(geom: &'g ReferenceGeometry, eta: &PeriodicField) -> Result<Self> {
        let sup = eta.sup_norm(check_resolution(eta.kmax()));
        if sup >= geom.width() {
            return Err(Error::DisplacementTooLarge { sup, bound: geom.width() });
        }
        let zero = eta.coeffs().iter().all(|c| c.norm() == 0.0);
        Ok(Self { geom, eta: eta.clone(), eta_d: eta.derivative(1), sup, zero })
    }

    pub fn geometry(&self) -> &ReferenceGeometry {
        self.geom
    }

    pub fn eta(&self) -> &PeriodicField {
        &self.eta
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Tubular coordinates of `x` if it lies in the tube.
    pub fn coords(&self, x: V2) -> Result<Option<(f64, f64)>> {
        match self.geom.tubular_coordinates(x) {
            Ok(ys) => Ok(Some(ys)),
            Err(Error::OutOfTube { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn apply(&self, x: V2) -> Result<V2> {
        if self.zero {
            return Ok(x);
        }
        Ok(match self.coords(x)? {
            Some((y, s)) => self.apply_ys(y, s),
            None => x,
        })
    }

    /// `phi(y) + (s + eta(y) chi(s)) n(y)`
    pub fn apply_ys(&self, y: f64, s: f64) -> V2 {
        let jet = self.geom.jet(y);
        let chi = self.geom.cutoff().value(s);
        jet.p + jet.normal() * (s + self.eta.eval(y) * chi)
    }

    /// Inverse map. Points are moved along the normal fibre through their
    /// own foot point, so only a scalar equation in `s` has to be solved.
    pub fn inverse(&self, xh: V2) -> Result<V2> {
        if self.sup >= self.geom.alpha() {
            return Err(Error::DisplacementTooLarge { sup: self.sup, bound: self.geom.alpha() });
        }
        if self.zero {
            return Ok(xh);
        }
        let pr = self.geom.project(xh)?;
        let width = self.geom.width();
        if pr.dist >= width {
            return Ok(xh);
        }
        let s = self.solve_fibre(pr.y, pr.s)?;
        let jet = self.geom.jet(pr.y);
        Ok(jet.p + jet.normal() * s)
    }

    /// Solves `s + eta(y) chi(s) = s_hat` by Newton's method.
    pub fn solve_fibre(&self, y: f64, s_hat: f64) -> Result<f64> {
        let e = self.eta.eval(y);
        let chi = self.geom.cutoff();
        let mut s = s_hat - e * chi.value(s_hat);
        for _ in 0..100 {
            let r = s + e * chi.value(s) - s_hat;
            let d = 1.0 + e * chi.deriv(s);
            if d <= 0.0 {
                return Err(Error::NewtonDivergence(format!("fibre derivative {d:.3e} at y={y:.6}")));
            }
            let step = r / d;
            s -= step;
            if step.abs() <= 1e-15 * (1.0 + s_hat.abs()) {
                let r = s + e * chi.value(s) - s_hat;
                if r.abs() <= 1e-12 * (1.0 + s_hat.abs()) {
                    return Ok(s);
                }
            }
        }
        let r = s + e * chi.value(s) - s_hat;
        if r.abs() <= 1e-12 * (1.0 + s_hat.abs()) {
            Ok(s)
        } else {
            Err(Error::NewtonDivergence(format!("fibre residual {r:.3e} at y={y:.6}")))
        }
    }

    /// Transform, gradient and coefficients at tubular coordinates `(y, s)`.
    pub fn coefficients_ys(&self, y: f64, s: f64) -> Result<PointCoefficients> {
        let jet = self.geom.jet(y);
        let n = jet.normal();
        let nd = jet.normal_deriv();
        let chi = self.geom.cutoff();
        let (c, cd) = (chi.value(s), chi.deriv(s));
        let (e, ed) = (self.eta.eval(y), self.eta_d.eval(y));
        let psi = jet.p + n * (s + e * c);
        if self.zero {
            return Ok(PointCoefficients::identity(psi));
        }
        // columns: d/dy and d/ds of X(y,s) and of Psi(X(y,s))
        let dx = M2::from_columns(&[jet.d1 + nd * s, n]);
        let dpsi = M2::from_columns(&[jet.d1 + nd * (s + e * c) + n * (ed * c), n * (1.0 + e * cd)]);
        let dx_inv = dx
            .try_inverse()
            .ok_or(Error::DegenerateJacobian { det: dx.determinant() })?;
        PointCoefficients::from_grad(psi, dpsi * dx_inv)
    }

    pub fn coefficients(&self, x: V2) -> Result<PointCoefficients> {
        if self.zero {
            return Ok(PointCoefficients::identity(x));
        }
        match self.coords(x)? {
            Some((y, s)) => self.coefficients_ys(y, s),
            None => Ok(PointCoefficients::identity(x)),
        }
    }

    /// Time derivative of `Psi` at fixed reference point for a displacement rate `eta_t`.
    pub fn velocity_ys(&self, eta_t: &PeriodicField, y: f64, s: f64) -> V2 {
        let n = self.geom.normal(y);
        n * (eta_t.eval(y) * self.geom.cutoff().value(s))
    }

    /// Deformed boundary point `phi + eta n`.
    pub fn phi_eta(&self, y: f64) -> V2 {
        let jet = self.geom.jet(y);
        jet.p + jet.normal() * self.eta.eval(y)
    }

    /// Parameter derivative of the deformed boundary.
    pub fn phi_eta_d(&self, y: f64) -> V2 {
        let jet = self.geom.jet(y);
        jet.d1 + jet.normal() * self.eta_d.eval(y) + jet.normal_deriv() * self.eta.eval(y)
    }

    /// Outward unit normal of the deformed boundary.
    pub fn n_eta(&self, y: f64) -> V2 {
        let d = self.phi_eta_d(y);
        rot(d) / d.norm()
    }
}

/// Pointwise values of `Psi_eta` and its coefficient fields on a set of points.
#[derive(Debug, Clone)]
pub struct HanzawaField {
    pub eta: PeriodicField,
    pub psi: Vec<V2>,
    pub grad: Vec<M2>,
    pub j: Vec<f64>,
    pub a: Vec<M2>,
    pub b: Vec<M2>,
}

impl HanzawaField {
    /// Trivial field (`eta = 0`) on `n` points.
    pub fn identity(points: &[V2], kmax: usize) -> Self {
        let n = points.len();
        Self {
            eta: PeriodicField::zeros(kmax),
            psi: points.to_vec(),
            grad: vec![M2::identity(); n],
            j: vec![1.0; n],
            a: vec![M2::identity(); n],
            b: vec![M2::identity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    /// Samples the fields given precomputed tubular coordinates
    /// (`None` marks points outside the tube).
    pub fn from_coords(map: &HanzawaMap<'_>, points: &[V2], coords: &[Option<(f64, f64)>]) -> Result<Self> {
        assert_eq!(points.len(), coords.len());
        let vals: Result<Vec<PointCoefficients>> = points
            .par_iter()
            .zip(coords.par_iter())
            .map(|(x, c)| match c {
                Some((y, s)) if !map.is_zero() => map.coefficients_ys(*y, *s),
                _ => Ok(PointCoefficients::identity(*x)),
            })
            .collect();
        let vals = vals?;
        Ok(Self {
            eta: map.eta().clone(),
            psi: vals.iter().map(|v| v.psi).collect(),
            grad: vals.iter().map(|v| v.grad).collect(),
            j: vals.iter().map(|v| v.j).collect(),
            a: vals.iter().map(|v| v.a).collect(),
            b: vals.iter().map(|v| v.b).collect(),
        })
    }
}

/// Tubular coordinates for a batch of points (`None` outside the tube).
pub fn tube_coords(geom: &ReferenceGeometry, points: &[V2]) -> Result<Vec<Option<(f64, f64)>>> {
    points
        .par_iter()
        .map(|&x| match geom.tubular_coordinates(x) {
            Ok(ys) => Ok(Some(ys)),
            Err(Error::OutOfTube { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

pub fn hanzawa(geom: &ReferenceGeometry, eta: &PeriodicField, x: V2) -> Result<V2> {
    HanzawaMap::new(geom, eta)?.apply(x)
}

pub fn hanzawa_inverse(geom: &ReferenceGeometry, eta: &PeriodicField, xh: V2) -> Result<V2> {
    HanzawaMap::new(geom, eta)?.inverse(xh)
}

/// Samples `Psi_eta`, `grad Psi_eta`, `J`, `A`, `B` at the given points.
pub fn coefficient_fields(geom: &ReferenceGeometry, eta: &PeriodicField, points: &[V2]) -> Result<HanzawaField> {
    let map = HanzawaMap::new(geom, eta)?;
    if map.sup_norm() >= geom.alpha() {
        return Err(Error::DisplacementTooLarge { sup: map.sup_norm(), bound: geom.alpha() });
    }
    let coords = tube_coords(geom, points)?;
    HanzawaField::from_coords(&map, points, &coords)
}
