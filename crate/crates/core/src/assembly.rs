//! Variable-coefficient block assembly on the reference mesh and the beam's
//! spectral operators.

use crate::error::{Error, Result};
use crate::fem::{Space, NQ};
use crate::fourier::{real_basis, real_mode_wavenumber};
use crate::geometry::hanzawa::{HanzawaField, M2};
use crate::geometry::{Curve, V2, TWO_PI};
use crate::sparse::{Coo, Csr};
use rayon::prelude::*;

/// Assembled blocks for one frozen geometry `eta_0`.
#[derive(Debug, Clone)]
pub struct Operators {
    /// `int J u.v`
    pub mass: Csr,
    /// `int A grad u : grad v`
    pub stiffness: Csr,
    /// rows `int q B : grad u` (pressure x velocity)
    pub div: Csr,
    /// P1 mass
    pub p_mass: Csr,
    /// P1 Laplacian
    pub p_stiffness: Csr,
    /// `int lambda_i`
    pub p_mean: Vec<f64>,
}

fn collect(n_rows: usize, n_cols: usize, parts: Vec<Vec<(usize, usize, f64)>>) -> Csr {
    let mut coo = Coo::new(n_rows, n_cols);
    for p in parts {
        coo.entries.extend(p);
    }
    coo.to_csr()
}

pub fn assemble(space: &Space, field: &HanzawaField) -> Result<Operators> {
    if field.len() != space.n_quad() {
        return Err(Error::QuadratureMismatch { expected: space.n_quad(), got: field.len() });
    }
    let q = &space.quad;
    let nv = space.n_velocity();
    let np = space.n_pressure();
    let per_tri: Vec<_> = (0..space.n_triangles())
        .into_par_iter()
        .map(|t| {
            let tn = &space.tri_nodes[t];
            let mut m = Vec::with_capacity(72);
            let mut k = Vec::with_capacity(72);
            let mut d = Vec::with_capacity(36);
            let mut pm = Vec::with_capacity(9);
            let mut pk = Vec::with_capacity(9);
            let mut mm = [0.0; 3];
            let mut me = [[0.0; 6]; 6];
            let mut ke = [[0.0; 6]; 6];
            let mut de = [[[0.0; 2]; 6]; 3];
            let mut pme = [[0.0; 3]; 3];
            let mut pke = [[0.0; 3]; 3];
            for qq in 0..NQ {
                let qi = t * NQ + qq;
                let w = q.w[qi];
                let (n, dn, l, dl) = (&q.n[qi], &q.dn[qi], &q.l[qi], &q.dl[qi]);
                let (jw, a, b) = (field.j[qi] * w, field.a[qi], field.b[qi]);
                for i in 0..6 {
                    let adn = a * dn[i];
                    for j in 0..6 {
                        me[i][j] += jw * n[i] * n[j];
                        ke[i][j] += w * adn.dot(&dn[j]);
                    }
                }
                for r in 0..3 {
                    mm[r] += w * l[r];
                    for i in 0..6 {
                        // B : grad(N_i e_c) = (B grad N_i)_c
                        let bd = b * dn[i];
                        de[r][i][0] += w * l[r] * bd.x;
                        de[r][i][1] += w * l[r] * bd.y;
                    }
                    for s in 0..3 {
                        pme[r][s] += w * l[r] * l[s];
                        pke[r][s] += w * dl[r].dot(&dl[s]);
                    }
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    for c in 0..2 {
                        m.push((2 * tn[i] + c, 2 * tn[j] + c, me[i][j]));
                        k.push((2 * tn[i] + c, 2 * tn[j] + c, ke[i][j]));
                    }
                }
            }
            for r in 0..3 {
                for i in 0..6 {
                    for c in 0..2 {
                        d.push((tn[r], 2 * tn[i] + c, de[r][i][c]));
                    }
                }
                for s in 0..3 {
                    pm.push((tn[r], tn[s], pme[r][s]));
                    pk.push((tn[r], tn[s], pke[r][s]));
                }
            }
            (m, k, d, pm, pk, mm, [tn[0], tn[1], tn[2]])
        })
        .collect();
    let mut p_mean = vec![0.0; np];
    let (mut ms, mut ks, mut ds, mut pms, mut pks) = (vec![], vec![], vec![], vec![], vec![]);
    for (m, k, d, pm, pk, mm, v) in per_tri {
        ms.push(m);
        ks.push(k);
        ds.push(d);
        pms.push(pm);
        pks.push(pk);
        for r in 0..3 {
            p_mean[v[r]] += mm[r];
        }
    }
    Ok(Operators {
        mass: collect(nv, nv, ms),
        stiffness: collect(nv, nv, ks),
        div: collect(np, nv, ds),
        p_mass: collect(np, np, pms),
        p_stiffness: collect(np, np, pks),
        p_mean,
    })
}

/// Scalar P2 Laplacian on the mesh nodes (unweighted).
pub fn p2_laplacian(space: &Space) -> Csr {
    let q = &space.quad;
    let parts: Vec<Vec<(usize, usize, f64)>> = (0..space.n_triangles())
        .into_par_iter()
        .map(|t| {
            let tn = &space.tri_nodes[t];
            let mut ke = [[0.0; 6]; 6];
            for qq in 0..NQ {
                let qi = t * NQ + qq;
                for i in 0..6 {
                    for j in 0..6 {
                        ke[i][j] += q.w[qi] * q.dn[qi][i].dot(&q.dn[qi][j]);
                    }
                }
            }
            let mut out = Vec::with_capacity(36);
            for i in 0..6 {
                for j in 0..6 {
                    out.push((tn[i], tn[j], ke[i][j]));
                }
            }
            out
        })
        .collect();
    collect(space.n_nodes(), space.n_nodes(), parts)
}

/// `int f . N` for values of `f` at quadrature points.
pub fn load_vector(space: &Space, f: &[V2]) -> Vec<f64> {
    assert_eq!(f.len(), space.n_quad());
    let mut out = vec![0.0; space.n_velocity()];
    for (t, tn) in space.tri_nodes.iter().enumerate() {
        for qq in 0..NQ {
            let qi = t * NQ + qq;
            let fw = f[qi] * space.quad.w[qi];
            for (i, &node) in tn.iter().enumerate() {
                let n = space.quad.n[qi][i];
                out[2 * node] += fw.x * n;
                out[2 * node + 1] += fw.y * n;
            }
        }
    }
    out
}

/// `int H : grad N` for matrix values `H_cj` at quadrature points.
pub fn flux_load(space: &Space, h: &[M2]) -> Vec<f64> {
    assert_eq!(h.len(), space.n_quad());
    let mut out = vec![0.0; space.n_velocity()];
    for (t, tn) in space.tri_nodes.iter().enumerate() {
        for qq in 0..NQ {
            let qi = t * NQ + qq;
            let hw = h[qi] * space.quad.w[qi];
            for (i, &node) in tn.iter().enumerate() {
                let g = hw * space.quad.dn[qi][i];
                out[2 * node] += g.x;
                out[2 * node + 1] += g.y;
            }
        }
    }
    out
}

/// `int h lambda_i` for scalar values at quadrature points.
pub fn divergence_load(space: &Space, h: &[f64]) -> Vec<f64> {
    assert_eq!(h.len(), space.n_quad());
    let mut out = vec![0.0; space.n_pressure()];
    for (t, tn) in space.tri_nodes.iter().enumerate() {
        for qq in 0..NQ {
            let qi = t * NQ + qq;
            for r in 0..3 {
                out[tn[r]] += h[qi] * space.quad.l[qi][r] * space.quad.w[qi];
            }
        }
    }
    out
}

/// `|int B : grad psi|` by mesh quadrature, with `grad psi` given in closed
/// form. Vanishes in the continuum for compactly supported `psi`.
pub fn piola_residual(space: &Space, field: &HanzawaField, grad_psi: impl Fn(V2) -> M2 + Sync) -> Result<f64> {
    if field.len() != space.n_quad() {
        return Err(Error::QuadratureMismatch { expected: space.n_quad(), got: field.len() });
    }
    let s: f64 = (0..space.n_quad())
        .into_par_iter()
        .map(|qi| space.quad.w[qi] * field.b[qi].component_mul(&grad_psi(space.quad.x[qi])).sum())
        .sum();
    Ok(s.abs())
}

/// Real Fourier modes `1, sqrt2 cos, sqrt2 sin, ...` up to `kmax`; orthonormal
/// on `(0, 1)`, so the beam mass is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamSpace {
    pub kmax: usize,
}

impl BeamSpace {
    pub fn new(kmax: usize) -> Self {
        Self { kmax }
    }

    pub fn n_modes(&self) -> usize {
        2 * self.kmax + 1
    }

    /// `(2 pi k)^2` per mode (viscosity `-d_y^2`).
    pub fn viscosity_diag(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|m| (TWO_PI * real_mode_wavenumber(m) as f64).powi(2)).collect()
    }

    /// `(2 pi k)^4` per mode (bending `d_y^4`).
    pub fn bending_diag(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|m| (TWO_PI * real_mode_wavenumber(m) as f64).powi(4)).collect()
    }
}

/// Coupling `T`: beam modes to boundary velocity DOFs, `u(node) = w(y) n(y)`.
pub fn interface_map(space: &Space, curve: &Curve, beam: BeamSpace) -> Result<Csr> {
    let nb_vertices = space.mesh.n_boundary;
    if 4 * beam.kmax > nb_vertices {
        return Err(Error::InvalidArgument(format!(
            "beam truncation K={} needs at least {} boundary vertices, mesh has {nb_vertices}",
            beam.kmax,
            4 * beam.kmax
        )));
    }
    let mut coo = Coo::new(space.n_velocity(), beam.n_modes());
    for (&node, &y) in space.boundary_nodes.iter().zip(&space.boundary_params) {
        let n = curve.normal(y);
        for (m, psi) in real_basis(y, beam.kmax).into_iter().enumerate() {
            coo.push(2 * node, m, n.x * psi);
            coo.push(2 * node + 1, m, n.y * psi);
        }
    }
    Ok(coo.to_csr())
}

/// Boundary velocity DOFs for a given beam velocity field in real modes.
pub fn interface_trace(t: &Csr, w_modes: &[f64]) -> Vec<f64> {
    t.matvec(w_modes)
}

/// Prolongation from interior velocity DOFs to all velocity DOFs.
pub fn interior_prolongation(space: &Space) -> (Csr, Vec<usize>) {
    let interior: Vec<usize> = (0..space.n_velocity()).filter(|d| !space.is_boundary[d / 2]).collect();
    let mut coo = Coo::new(space.n_velocity(), interior.len());
    for (k, &d) in interior.iter().enumerate() {
        coo.push(d, k, 1.0);
    }
    (coo.to_csr(), interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hanzawa::HanzawaField;
    use crate::mesh::Mesh;

    fn disk(h: f64) -> Space {
        Space::new(Mesh::build(&Curve::circle(1.0), h).unwrap())
    }

    /// P2 stiffness of a straight triangle from barycentric integrals only.
    fn hand_stiffness(p: [V2; 3]) -> [[f64; 6]; 6] {
        let area = 0.5 * ((p[1] - p[0]).perp(&(p[2] - p[0]))).abs();
        let g: Vec<V2> = (0..3)
            .map(|i| {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                V2::new(a.y - b.y, b.x - a.x) / (2.0 * area)
            })
            .collect();
        // grad N_i = sum_k c_ik lambda_k g_k + d_i (constant part) written as
        // linear combinations of (lambda_0, lambda_1, lambda_2, 1)
        let mut coef = vec![[V2::zeros(); 4]; 6];
        for i in 0..3 {
            coef[i][i] = g[i] * 4.0;
            coef[i][3] = -g[i];
        }
        for (e, (a, b)) in [(0, 1), (1, 2), (2, 0)].iter().enumerate() {
            coef[3 + e][*a] = g[*b] * 4.0;
            coef[3 + e][*b] = g[*a] * 4.0;
        }
        // int lambda_i lambda_j, int lambda_i, int 1
        let mom = |a: usize, b: usize| -> f64 {
            match (a == 3, b == 3) {
                (true, true) => area,
                (true, false) | (false, true) => area / 3.0,
                _ => area * if a == b { 2.0 } else { 1.0 } / 12.0,
            }
        };
        let mut k = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                for a in 0..4 {
                    for b in 0..4 {
                        k[i][j] += coef[i][a].dot(&coef[j][b]) * mom(a, b);
                    }
                }
            }
        }
        k
    }

    #[test]
    fn identity_field_gives_plain_laplacian() {
        let s = disk(0.3);
        let f = HanzawaField::identity(s.quad_points(), 2);
        let ops = assemble(&s, &f).unwrap();
        assert!(ops.stiffness.asymmetry() < 1e-12);
        // compare one interior straight triangle against hand assembly
        let mut checked = 0;
        let mut local = Coo::new(s.n_velocity(), s.n_velocity());
        for (t, tn) in s.tri_nodes.iter().enumerate() {
            if s.curved[t] {
                continue;
            }
            let p = [s.nodes[tn[0]], s.nodes[tn[1]], s.nodes[tn[2]]];
            let k = hand_stiffness(p);
            for i in 0..6 {
                for j in 0..6 {
                    local.push(2 * tn[i], 2 * tn[j], k[i][j]);
                    local.push(2 * tn[i] + 1, 2 * tn[j] + 1, k[i][j]);
                }
            }
            checked += 1;
        }
        assert!(checked > 10);
        // rows of nodes touching only straight triangles must agree
        let hand = local.to_csr();
        let mut touched_curved = vec![false; s.n_nodes()];
        for (t, tn) in s.tri_nodes.iter().enumerate() {
            if s.curved[t] {
                tn.iter().for_each(|&n| touched_curved[n] = true);
            }
        }
        let mut rows = 0;
        for node in 0..s.n_nodes() {
            if touched_curved[node] {
                continue;
            }
            for (j, v) in ops.stiffness.row(2 * node) {
                assert!((v - hand.get(2 * node, j)).abs() < 1e-11, "node {node} col {j}");
            }
            assert!(ops.stiffness.row_sums()[2 * node].abs() < 1e-11);
            rows += 1;
        }
        assert!(rows > 5);
    }

    #[test]
    fn divergence_kills_constants_and_mass_gives_area() {
        let s = disk(0.25);
        let f = HanzawaField::identity(s.quad_points(), 2);
        let ops = assemble(&s, &f).unwrap();
        let c = s.interpolate(|_| V2::new(0.7, -1.3));
        assert!(ops.div.matvec(&c).iter().all(|v| v.abs() < 1e-13));
        let ones = s.interpolate(|_| V2::new(1.0, 0.0));
        let area: f64 = crate::sparse::dot(&ops.mass.matvec(&ones), &ones);
        assert!((area - s.area()).abs() < 1e-12);
        assert!((ops.p_mean.iter().sum::<f64>() - s.area()).abs() < 1e-12);
        assert!(matches!(
            assemble(&s, &HanzawaField::identity(&s.quad_points()[1..], 2)),
            Err(Error::QuadratureMismatch { .. })
        ));
    }

    #[test]
    fn patch_test_polynomials() {
        // isoparametric P2 reproduces affine fields on curved cells too
        let s = disk(0.2);
        let f = HanzawaField::identity(s.quad_points(), 2);
        let ops = assemble(&s, &f).unwrap();
        let u = s.interpolate(|x| V2::new(x.x + 2.0 * x.y, 3.0 * x.x + x.y));
        let v = s.interpolate(|x| V2::new(x.x, x.x - x.y));
        let lhs = crate::sparse::dot(&ops.stiffness.matvec(&u), &v);
        assert!((lhs - 3.0 * s.area()).abs() < 1e-12);
        // pressure is P1 in the reference element, so only constants are exact
        let lhs: f64 = ops.div.matvec(&u).iter().sum();
        assert!((lhs - 2.0 * s.area()).abs() < 1e-12);
        let lhs = crate::sparse::dot(&ops.mass.matvec(&u), &v);
        let exact = s.integrate(|x| (x.x + 2.0 * x.y) * x.x + (3.0 * x.x + x.y) * (x.x - x.y));
        assert!((lhs - exact).abs() < 1e-12);
    }

    #[test]
    fn interface_trace_is_exact_at_boundary_nodes() {
        let s = disk(0.1);
        let c = Curve::circle(1.0);
        let beam = BeamSpace::new(8);
        let t = interface_map(&s, &c, beam).unwrap();
        let mut w = vec![0.0; beam.n_modes()];
        w[2] = std::f64::consts::FRAC_1_SQRT_2; // sin(2 pi y)
        let u = interface_trace(&t, &w);
        for (&node, &y) in s.boundary_nodes.iter().zip(&s.boundary_params) {
            let exp = c.normal(y) * (TWO_PI * y).sin();
            assert!((V2::new(u[2 * node], u[2 * node + 1]) - exp).norm() < 1e-12);
        }
        assert!(interface_map(&s, &c, BeamSpace::new(40)).is_err());
    }
}
