//! Boundary-to-domain extensions: `F_Omega` on the reference mesh (cutoff
//! times discrete harmonic extension) and its transport `F_eta` to the
//! deformed domain through the inverse Hanzawa map.

use crate::assembly::p2_laplacian;
use crate::error::{Error, Result};
use crate::fem::Space;
use crate::fourier::PeriodicField;
use crate::geometry::hanzawa::HanzawaMap;
use crate::geometry::{periodic_dist, ReferenceGeometry, V2};
use crate::sparse::{Coo, LuSolver};
use rayon::prelude::*;

/// Factored Dirichlet Laplacian plus the nodal cutoff, reusable across data.
#[derive(Debug)]
pub struct BoundaryExtension<'a> {
    space: &'a Space,
    geom: &'a ReferenceGeometry,
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
    k: crate::sparse::Csr,
    lu: Option<LuSolver>,
    /// `chi(s)` at every node, zero outside the tube
    cutoff: Vec<f64>,
}

impl<'a> BoundaryExtension<'a> {
    pub fn new(geom: &'a ReferenceGeometry, space: &'a Space) -> Result<Self> {
        let k = p2_laplacian(space);
        let interior: Vec<usize> = (0..space.n_nodes()).filter(|&n| !space.is_boundary[n]).collect();
        let mut slot = vec![None; space.n_nodes()];
        for (i, &n) in interior.iter().enumerate() {
            slot[n] = Some(i);
        }
        let mut coo = Coo::new(interior.len(), interior.len());
        for (i, &n) in interior.iter().enumerate() {
            for (j, v) in k.row(n) {
                if let Some(sj) = slot[j] {
                    coo.push(i, sj, v);
                }
            }
        }
        let lu = if interior.is_empty() { None } else { Some(LuSolver::new(&coo.to_csr())?) };
        let cutoff = space
            .nodes
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                if space.is_boundary[i] {
                    return Ok(1.0);
                }
                match geom.tubular_coordinates(x) {
                    Ok((_, s)) => Ok(geom.cutoff().value(s)),
                    Err(Error::OutOfTube { .. }) => Ok(0.0),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { space, geom, interior, slot, k, lu, cutoff })
    }

    /// `F_Omega b` as a P2 velocity vector with trace `b n` at boundary nodes.
    pub fn extend(&self, b: &PeriodicField) -> Result<Vec<f64>> {
        let sp = self.space;
        let mut u = vec![0.0; sp.n_velocity()];
        for (&node, &y) in sp.boundary_nodes.iter().zip(&sp.boundary_params) {
            let v = self.geom.normal(y) * b.eval(y);
            u[2 * node] = v.x;
            u[2 * node + 1] = v.y;
        }
        if let Some(lu) = &self.lu {
            for c in 0..2 {
                let mut rhs = vec![0.0; self.interior.len()];
                for (i, &n) in self.interior.iter().enumerate() {
                    for (j, v) in self.k.row(n) {
                        if self.slot[j].is_none() {
                            rhs[i] -= v * u[2 * j + c];
                        }
                    }
                }
                let x = lu.solve(&rhs)?;
                for (i, &n) in self.interior.iter().enumerate() {
                    u[2 * n + c] = x[i] * self.cutoff[n];
                }
            }
        }
        Ok(u)
    }

    /// Largest `|u(x(y)) - b(y) n(y)|` over `per_edge` samples on each boundary
    /// edge, the trace of `u` read along the curved boundary edges.
    pub fn trace_residual(&self, u: &[f64], b: &PeriodicField, per_edge: usize) -> f64 {
        let sp = self.space;
        let nb = sp.mesh.n_boundary;
        let mut worst = 0.0f64;
        for j in 0..nb {
            let (y0, y1) = edge_params(sp, j);
            for k in 0..per_edge {
                let t = (k as f64 + 0.5) / per_edge as f64;
                let y = (y0 + t * (y1 - y0)).rem_euclid(1.0);
                let v = edge_value(sp, u, j, t);
                worst = worst.max((v - self.geom.normal(y) * b.eval(y)).norm());
            }
        }
        worst
    }
}

fn edge_params(sp: &Space, j: usize) -> (f64, f64) {
    let nb = sp.mesh.n_boundary;
    let y0 = sp.boundary_params[2 * j];
    let mut y1 = sp.boundary_params[(2 * j + 2) % (2 * nb)];
    if y1 <= y0 {
        y1 += 1.0;
    }
    (y0, y1)
}

/// Quadratic trace on boundary edge `j` at local coordinate `t`.
fn edge_value(sp: &Space, u: &[f64], j: usize, t: f64) -> V2 {
    let nb2 = 2 * sp.mesh.n_boundary;
    let nodes = [sp.boundary_nodes[2 * j], sp.boundary_nodes[2 * j + 1], sp.boundary_nodes[(2 * j + 2) % nb2]];
    let w = [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)];
    nodes.iter().zip(w).map(|(&n, w)| V2::new(u[2 * n], u[2 * n + 1]) * w).sum()
}

/// Boundary edge containing parameter `y` and the local coordinate there.
fn locate_param(sp: &Space, y: f64) -> (usize, f64) {
    let nb = sp.mesh.n_boundary;
    let params = &sp.mesh.boundary_params;
    let y = y.rem_euclid(1.0);
    // boundary parameters increase from params[0] with one wrap
    let shifted = |p: f64| (p - params[0]).rem_euclid(1.0);
    let ys = shifted(y);
    let mut lo = 0;
    let mut hi = nb;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if shifted(params[mid]) <= ys {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (y0, y1) = edge_params(sp, lo);
    let mut d = y - y0;
    if d < 0.0 {
        d += 1.0;
    }
    (lo, (d / (y1 - y0)).clamp(0.0, 1.0))
}

/// `F_Omega b`: cutoff times componentwise discrete harmonic extension of `b n`.
pub fn extend_boundary_to_domain(geom: &ReferenceGeometry, b: &PeriodicField, space: &Space) -> Result<Vec<f64>> {
    BoundaryExtension::new(geom, space)?.extend(b)
}

/// `F_eta b` sampled on the deformed domain.
#[derive(Debug, Clone)]
pub struct EtaExtension {
    /// `Psi_eta` of the reference quadrature points
    pub points: Vec<V2>,
    /// field values there
    pub values: Vec<V2>,
    /// the underlying reference-domain field
    pub reference: Vec<f64>,
}

pub fn extend_f_eta(
    geom: &ReferenceGeometry,
    eta: &PeriodicField,
    b: &PeriodicField,
    space: &Space,
) -> Result<EtaExtension> {
    let ext = BoundaryExtension::new(geom, space)?;
    extend_f_eta_with(&ext, eta, b)
}

pub fn extend_f_eta_with(ext: &BoundaryExtension<'_>, eta: &PeriodicField, b: &PeriodicField) -> Result<EtaExtension> {
    let map = HanzawaMap::new(ext.geom, eta)?;
    let reference = ext.extend(b)?;
    let sp = ext.space;
    let points = sp.quad.x.par_iter().map(|&x| map.apply(x)).collect::<Result<Vec<V2>>>()?;
    let values = (0..sp.n_quad()).map(|qi| sp.velocity_at(&reference, qi)).collect();
    Ok(EtaExtension { points, values, reference })
}

/// `max_y |(F_eta b)(phi_eta(y)) - b(y) n(y)|`, evaluating `F_eta` at the
/// deformed boundary through `Psi_eta^{-1}` and the discrete trace.
pub fn f_eta_trace_residual(
    ext: &BoundaryExtension<'_>,
    eta: &PeriodicField,
    b: &PeriodicField,
    samples: usize,
) -> Result<f64> {
    let map = HanzawaMap::new(ext.geom, eta)?;
    let u = ext.extend(b)?;
    let sp = ext.space;
    let errs = (0..samples)
        .into_par_iter()
        .map(|i| {
            let y = (i as f64 + 0.5) / samples as f64;
            let xh = map.phi_eta(y);
            let x = map.inverse(xh)?;
            let (yr, _) = ext.geom.tubular_coordinates(x)?;
            debug_assert!(periodic_dist(yr, y) < 1e-6);
            let (j, t) = locate_param(sp, yr);
            let v = edge_value(sp, &u, j, t);
            Ok((v - ext.geom.normal(y) * b.eval(y)).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::stokes::velocity_norms;
    use crate::spaces::fractional_norm;

    fn setup(h: f64) -> (ReferenceGeometry, Space) {
        let g = ReferenceGeometry::circle(1.0, 0.3).unwrap();
        let s = Space::new(Mesh::build(g.curve(), h).unwrap());
        (g, s)
    }

    #[test]
    fn zero_and_constant_data() {
        let (g, s) = setup(0.2);
        let ext = BoundaryExtension::new(&g, &s).unwrap();
        assert!(ext.extend(&PeriodicField::zeros(3)).unwrap().iter().all(|v| *v == 0.0));
        let u = ext.extend(&PeriodicField::constant(1.0, 0)).unwrap();
        for (&n, &y) in s.boundary_nodes.iter().zip(&s.boundary_params) {
            assert!((V2::new(u[2 * n], u[2 * n + 1]) - g.normal(y)).norm() < 1e-10);
        }
        // cutoff: nothing survives deep inside
        for (i, x) in s.nodes.iter().enumerate() {
            if x.norm() < 0.7 {
                assert_eq!((u[2 * i], u[2 * i + 1]), (0.0, 0.0));
            }
        }
        let e = extend_f_eta_with(&ext, &PeriodicField::zeros(2), &PeriodicField::constant(1.0, 0)).unwrap();
        assert_eq!(e.reference, u);
        assert_eq!(e.points, s.quad.x);
    }

    #[test]
    fn smoothing_ratio_is_bounded() {
        let mut ratios = vec![];
        for h in [0.2, 0.1] {
            let (g, s) = setup(h);
            let ext = BoundaryExtension::new(&g, &s).unwrap();
            for k in 1..=8 {
                let b = PeriodicField::trig(k, 0.0, 1.0, k);
                let u = ext.extend(&b).unwrap();
                ratios.push(velocity_norms(&s, &u).h1() / fractional_norm(&b, 0.5).unwrap());
            }
        }
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 10.0, "{ratios:?}");
    }
}
