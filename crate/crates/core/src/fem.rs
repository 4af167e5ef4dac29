//! Isoparametric P2 velocity / P1 pressure space on a boundary-fitted mesh.
//!
//! Nodes are the mesh vertices followed by one node per edge. Local node order
//! inside a triangle is `v0, v1, v2, e01, e12, e20`. Velocity DOF of node `i`
//! and component `c` is `2 i + c`; pressure DOFs are the vertices.

use crate::geometry::hanzawa::M2;
use crate::geometry::V2;
use crate::mesh::Mesh;
use rayon::prelude::*;
use std::collections::HashMap;

pub const NQ: usize = 7;

/// Degree-5 seven-point rule in barycentric coordinates; weights sum to one.
pub fn quadrature_rule() -> [([f64; 3], f64); NQ] {
    let (a1, b1, w1) = (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506);
    let (a2, b2, w2) = (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827);
    let c = 1.0 / 3.0;
    [
        ([c, c, c], 0.225),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
const EDGE_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// P2 shape functions at barycentric point `l`.
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Reference gradients `(d/dxi, d/deta)`.
pub fn p2_ref_grads(l: [f64; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * DL[i][d];
        }
    }
    for (k, (a, b)) in EDGE_PAIRS.iter().enumerate() {
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (l[*a] * DL[*b][d] + l[*b] * DL[*a][d]);
        }
    }
    g
}

/// Constant reference Hessians of the P2 shape functions.
pub fn p2_ref_hessians() -> [M2; 6] {
    let outer = |a: usize, b: usize| {
        let u = V2::new(DL[a][0], DL[a][1]);
        let v = V2::new(DL[b][0], DL[b][1]);
        u * v.transpose()
    };
    let mut h = [M2::zeros(); 6];
    for (i, hi) in h.iter_mut().enumerate().take(3) {
        *hi = outer(i, i) * 4.0;
    }
    for (k, (a, b)) in EDGE_PAIRS.iter().enumerate() {
        h[3 + k] = (outer(*a, *b) + outer(*b, *a)) * 4.0;
    }
    h
}

/// Per-quadrature-point geometry and basis data, indexed `7 t + q`.
#[derive(Debug, Clone)]
pub struct QuadCache {
    pub x: Vec<V2>,
    /// quadrature weight times `|det DX|`
    pub w: Vec<f64>,
    pub n: Vec<[f64; 6]>,
    pub dn: Vec<[V2; 6]>,
    pub l: Vec<[f64; 3]>,
    pub dl: Vec<[V2; 3]>,
    /// Jacobian of the element map
    pub jac: Vec<M2>,
}

#[derive(Debug, Clone)]
pub struct Space {
    pub mesh: Mesh,
    pub nodes: Vec<V2>,
    pub tri_nodes: Vec<[usize; 6]>,
    pub n_vertices: usize,
    /// boundary nodes in curve order: vertex j, edge (j, j+1), vertex j+1, ...
    pub boundary_nodes: Vec<usize>,
    pub boundary_params: Vec<f64>,
    pub is_boundary: Vec<bool>,
    pub quad: QuadCache,
    /// triangles with a curved (boundary) edge
    pub curved: Vec<bool>,
}

impl Space {
    pub fn new(mesh: Mesh) -> Self {
        let nv = mesh.vertices.len();
        let nb = mesh.n_boundary;
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut nodes = mesh.vertices.clone();
        let mut tri_nodes = Vec::with_capacity(mesh.triangles.len());
        let mut edge_param: HashMap<usize, f64> = HashMap::new();
        let mut curved = vec![false; mesh.triangles.len()];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let mut tn = [t[0], t[1], t[2], 0, 0, 0];
            for (k, (a, b)) in EDGE_PAIRS.iter().enumerate() {
                let (va, vb) = (t[*a], t[*b]);
                let key = (va.min(vb), va.max(vb));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    let id = nodes.len();
                    // consecutive boundary vertices span a curved edge
                    let (i, j) = key;
                    let on_curve = i < nb && j < nb && (j == i + 1 || (i == 0 && j == nb - 1));
                    if on_curve {
                        let (ya, yb) = if j == i + 1 {
                            (mesh.boundary_params[i], mesh.boundary_params[j])
                        } else {
                            (mesh.boundary_params[j], mesh.boundary_params[i] + 1.0)
                        };
                        let ym = (0.5 * (ya + yb)).rem_euclid(1.0);
                        nodes.push(mesh.curve.point(ym));
                        edge_param.insert(id, ym);
                    } else {
                        nodes.push(0.5 * (mesh.vertices[va] + mesh.vertices[vb]));
                    }
                    id
                });
                if edge_param.contains_key(&id) {
                    curved[ti] = true;
                }
                tn[3 + k] = id;
            }
            tri_nodes.push(tn);
        }
        let mut boundary_nodes = Vec::with_capacity(2 * nb);
        let mut boundary_params = Vec::with_capacity(2 * nb);
        for j in 0..nb {
            boundary_nodes.push(j);
            boundary_params.push(mesh.boundary_params[j]);
            let k = (j + 1) % nb;
            let e = edge_id[&(j.min(k), j.max(k))];
            boundary_nodes.push(e);
            boundary_params.push(edge_param[&e]);
        }
        let mut is_boundary = vec![false; nodes.len()];
        for &b in &boundary_nodes {
            is_boundary[b] = true;
        }
        let quad = build_quad(&nodes, &tri_nodes);
        Self { mesh, nodes, tri_nodes, n_vertices: nv, boundary_nodes, boundary_params, is_boundary, quad, curved }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.n_vertices
    }

    pub fn n_triangles(&self) -> usize {
        self.tri_nodes.len()
    }

    pub fn n_quad(&self) -> usize {
        self.quad.x.len()
    }

    pub fn quad_points(&self) -> &[V2] {
        &self.quad.x
    }

    /// Element geometry map at barycentric point `l`.
    pub fn map_point(&self, t: usize, l: [f64; 3]) -> V2 {
        let nv = p2_values(l);
        self.tri_nodes[t].iter().zip(nv).map(|(&i, v)| self.nodes[i] * v).sum()
    }

    fn map_jac(&self, t: usize, l: [f64; 3]) -> M2 {
        let g = p2_ref_grads(l);
        let mut j = M2::zeros();
        for (a, &i) in self.tri_nodes[t].iter().enumerate() {
            let x = self.nodes[i];
            for r in 0..2 {
                for c in 0..2 {
                    j[(r, c)] += x[r] * g[a][c];
                }
            }
        }
        j
    }

    /// Interpolates a vector field at all velocity nodes.
    pub fn interpolate(&self, f: impl Fn(V2) -> V2 + Sync) -> Vec<f64> {
        let mut u = vec![0.0; self.n_velocity()];
        for (i, x) in self.nodes.iter().enumerate() {
            let v = f(*x);
            u[2 * i] = v.x;
            u[2 * i + 1] = v.y;
        }
        u
    }

    /// Interpolates a scalar at the vertices (pressure space).
    pub fn interpolate_p1(&self, f: impl Fn(V2) -> f64) -> Vec<f64> {
        (0..self.n_vertices).map(|i| f(self.nodes[i])).collect()
    }

    /// Velocity value at quadrature point `qi`.
    pub fn velocity_at(&self, u: &[f64], qi: usize) -> V2 {
        let t = qi / NQ;
        let n = &self.quad.n[qi];
        let mut v = V2::zeros();
        for (a, &i) in self.tri_nodes[t].iter().enumerate() {
            v += V2::new(u[2 * i], u[2 * i + 1]) * n[a];
        }
        v
    }

    /// `G_cj = d u_c / d x_j` at quadrature point `qi`.
    pub fn velocity_grad_at(&self, u: &[f64], qi: usize) -> M2 {
        let t = qi / NQ;
        let dn = &self.quad.dn[qi];
        let mut g = M2::zeros();
        for (a, &i) in self.tri_nodes[t].iter().enumerate() {
            let uv = V2::new(u[2 * i], u[2 * i + 1]);
            g += uv * dn[a].transpose();
        }
        g
    }

    pub fn pressure_at(&self, p: &[f64], qi: usize) -> f64 {
        let t = qi / NQ;
        (0..3).map(|a| p[self.tri_nodes[t][a]] * self.quad.l[qi][a]).sum()
    }

    pub fn pressure_grad_at(&self, p: &[f64], qi: usize) -> V2 {
        let t = qi / NQ;
        (0..3).map(|a| self.quad.dl[qi][a] * p[self.tri_nodes[t][a]]).sum()
    }

    /// Physical Hessians of both velocity components at quadrature point `qi`.
    pub fn velocity_hessian_at(&self, u: &[f64], qi: usize) -> [M2; 2] {
        let t = qi / NQ;
        let hs = p2_ref_hessians();
        let jac = self.quad.jac[qi];
        let jinv = jac.try_inverse().expect("element map is invertible");
        let grad = self.velocity_grad_at(u, qi);
        let mut hx = [M2::zeros(); 2];
        for (a, &i) in self.tri_nodes[t].iter().enumerate() {
            for k in 0..2 {
                hx[k] += hs[a] * self.nodes[i][k];
            }
        }
        let mut out = [M2::zeros(); 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut hxi = M2::zeros();
            for (a, &i) in self.tri_nodes[t].iter().enumerate() {
                hxi += hs[a] * u[2 * i + c];
            }
            for k in 0..2 {
                hxi -= hx[k] * grad[(c, k)];
            }
            *o = jinv.transpose() * hxi * jinv;
        }
        out
    }

    /// Sum of quadrature weights (area of the curved domain).
    pub fn area(&self) -> f64 {
        self.quad.w.iter().sum()
    }

    /// Quadrature of a function of the physical point.
    pub fn integrate(&self, f: impl Fn(V2) -> f64 + Sync) -> f64 {
        self.quad.x.par_iter().zip(self.quad.w.par_iter()).map(|(x, w)| f(*x) * w).sum()
    }

    /// Velocity at an arbitrary point; `None` if outside the mesh.
    pub fn eval_velocity(&self, loc: &Locator, u: &[f64], x: V2) -> Option<V2> {
        let (t, l) = loc.locate(self, x)?;
        let n = p2_values(l);
        Some(self.tri_nodes[t].iter().zip(n).map(|(&i, v)| V2::new(u[2 * i], u[2 * i + 1]) * v).sum())
    }

    /// Inverse element map by Newton's method, starting from the centroid.
    pub fn inverse_map(&self, t: usize, x: V2) -> Option<[f64; 3]> {
        let mut xi = V2::new(1.0 / 3.0, 1.0 / 3.0);
        for _ in 0..30 {
            let l = [1.0 - xi.x - xi.y, xi.x, xi.y];
            let r = self.map_point(t, l) - x;
            let j = self.map_jac(t, l);
            let d = j.try_inverse()? * r;
            xi -= d;
            if d.norm() < 1e-15 {
                break;
            }
        }
        let l = [1.0 - xi.x - xi.y, xi.x, xi.y];
        if (self.map_point(t, l) - x).norm() > 1e-10 {
            return None;
        }
        Some(l)
    }
}

fn build_quad(nodes: &[V2], tri_nodes: &[[usize; 6]]) -> QuadCache {
    let rule = quadrature_rule();
    let per_tri: Vec<_> = tri_nodes
        .par_iter()
        .map(|tn| {
            let mut out = Vec::with_capacity(NQ);
            for (l, wq) in rule.iter() {
                let nv = p2_values(*l);
                let g = p2_ref_grads(*l);
                let mut x = V2::zeros();
                let mut j = M2::zeros();
                for a in 0..6 {
                    let p = nodes[tn[a]];
                    x += p * nv[a];
                    for r in 0..2 {
                        for c in 0..2 {
                            j[(r, c)] += p[r] * g[a][c];
                        }
                    }
                }
                let det = j.determinant();
                let jit = j.try_inverse().expect("degenerate element").transpose();
                let mut dn = [V2::zeros(); 6];
                for a in 0..6 {
                    dn[a] = jit * V2::new(g[a][0], g[a][1]);
                }
                let mut dl = [V2::zeros(); 3];
                for a in 0..3 {
                    dl[a] = jit * V2::new(DL[a][0], DL[a][1]);
                }
                out.push((x, 0.5 * wq * det.abs(), nv, dn, *l, dl, j, det));
            }
            out
        })
        .collect();
    let mut q = QuadCache { x: vec![], w: vec![], n: vec![], dn: vec![], l: vec![], dl: vec![], jac: vec![] };
    for tri in per_tri {
        for (x, w, n, dn, l, dl, j, det) in tri {
            assert!(det > 0.0, "inverted curved element");
            q.x.push(x);
            q.w.push(w);
            q.n.push(n);
            q.dn.push(dn);
            q.l.push(l);
            q.dl.push(dl);
            q.jac.push(j);
        }
    }
    q
}

/// Uniform bucket grid over element bounding boxes.
#[derive(Debug, Clone)]
pub struct Locator {
    lo: V2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub fn new(space: &Space) -> Self {
        let (mut lo, mut hi) = (space.nodes[0], space.nodes[0]);
        for p in &space.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let cell = space.mesh.h_target.max(1e-6);
        let pad = 0.5 * cell;
        lo -= V2::new(pad, pad);
        hi += V2::new(pad, pad);
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tn) in space.tri_nodes.iter().enumerate() {
            let (mut a, mut b) = (space.nodes[tn[0]], space.nodes[tn[0]]);
            for &i in tn {
                a = a.inf(&space.nodes[i]);
                b = b.sup(&space.nodes[i]);
            }
            // curved edges can bulge slightly past their nodes
            let m = 0.1 * (b - a).norm();
            let i0 = (((a.x - m - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let i1 = (((b.x + m - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j0 = (((a.y - m - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            let j1 = (((b.y + m - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self { lo, cell, nx, ny, buckets }
    }

    /// Element and barycentric coordinates of `x`, tolerating points a hair outside.
    pub fn locate(&self, space: &Space, x: V2) -> Option<(usize, [f64; 3])> {
        let i = ((x.x - self.lo.x) / self.cell).floor();
        let j = ((x.y - self.lo.y) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.nx || j as usize >= self.ny {
            return None;
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j as usize * self.nx + i as usize] {
            if let Some(l) = space.inverse_map(t, x) {
                let viol = l.iter().fold(0.0f64, |m, &v| m.max(-v));
                if viol <= 0.0 {
                    return Some((t, l));
                }
                if best.as_ref().is_none_or(|b| viol < b.2) {
                    best = Some((t, l, viol));
                }
            }
        }
        match best {
            Some((t, l, v)) if v < 1e-8 => Some((t, l)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Curve;
    use std::f64::consts::PI;

    #[test]
    fn quadrature_integrates_quintics() {
        // int over the reference triangle of xi^a eta^b = a! b! / (a+b+2)!
        let fact = |n: u32| (1..=n).map(|v| v as f64).product::<f64>();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let q: f64 = quadrature_rule().iter().map(|(l, w)| 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32)).sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((q - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        for (l, _) in quadrature_rule() {
            let n = p2_values(l);
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let g = p2_ref_grads(l);
            for d in 0..2 {
                assert!(g.iter().map(|v| v[d]).sum::<f64>().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn curved_area_is_third_order() {
        let c = Curve::circle(1.0);
        let errs: Vec<f64> = [0.2, 0.1]
            .iter()
            .map(|&h| (Space::new(Mesh::build(&c, h).unwrap()).area() - PI).abs())
            .collect();
        assert!(errs[1] < 1e-4);
        assert!(errs[0] / errs[1] > 6.0, "{errs:?}");
    }

    #[test]
    fn gradients_reproduce_quadratics() {
        let c = Curve::ellipse(1.0, 0.7);
        let s = Space::new(Mesh::build(&c, 0.15).unwrap());
        let f = |x: V2| V2::new(x.x * x.x - 0.3 * x.y, x.x * x.y + 2.0);
        let u = s.interpolate(f);
        for qi in (0..s.n_quad()).step_by(37) {
            let x = s.quad.x[qi];
            let g = s.velocity_grad_at(&u, qi);
            let t = qi / NQ;
            if s.curved[t] {
                continue;
            }
            assert!((s.velocity_at(&u, qi) - f(x)).norm() < 1e-12);
            let exact = M2::new(2.0 * x.x, -0.3, x.y, x.x);
            assert!((g - exact).norm() < 1e-11);
            let h = s.velocity_hessian_at(&u, qi);
            assert!((h[0] - M2::new(2.0, 0.0, 0.0, 0.0)).norm() < 1e-9);
            assert!((h[1] - M2::new(0.0, 1.0, 1.0, 0.0)).norm() < 1e-9);
        }
        let loc = Locator::new(&s);
        for &p in &[V2::new(0.1, 0.2), V2::new(-0.5, 0.3), V2::new(0.95, 0.0)] {
            let v = s.eval_velocity(&loc, &u, p).unwrap();
            assert!((v - f(p)).norm() < 1e-3);
        }
        assert!(s.eval_velocity(&loc, &u, V2::new(3.0, 0.0)).is_none());
    }
}
