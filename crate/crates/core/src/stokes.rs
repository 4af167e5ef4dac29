//! Steady Stokes solves with frozen coefficient fields, the discrete
//! divergence lifting, the Neumann pressure problem and regularity diagnostics.

use crate::assembly::{assemble, divergence_load, interior_prolongation, load_vector, Operators};
use crate::error::{Error, Result};
use crate::fem::Space;
use crate::geometry::hanzawa::{HanzawaField, M2};
use crate::geometry::{Curve, V2, TWO_PI};
use crate::mesh::Mesh;
use crate::sparse::{dot, norm, relative_residual, Coo, Csr, LuSolver};

pub const COMPAT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub velocity: Vec<f64>,
    /// zero-mean representative
    pub pressure: Vec<f64>,
    /// relative residual of the saddle-point system
    pub residual: f64,
    /// `max_i |(B u)_i - g_i|` after the solve
    pub div_residual: f64,
}

/// Factored saddle-point operator with all boundary velocity DOFs prescribed.
#[derive(Debug)]
pub struct StokesSolver<'a> {
    space: &'a Space,
    ops: &'a Operators,
    mu: f64,
    prolong: Csr,
    matrix: Csr,
    lu: LuSolver,
}

impl<'a> StokesSolver<'a> {
    pub fn new(space: &'a Space, ops: &'a Operators, mu: f64) -> Result<Self> {
        let (prolong, _) = interior_prolongation(space);
        let k_ii = prolong.transpose().matmul(&ops.stiffness).matmul(&prolong);
        let b_i = ops.div.matmul(&prolong);
        let (ni, np) = (k_ii.n_rows, b_i.n_rows);
        let mut coo = Coo::new(ni + np + 1, ni + np + 1);
        coo.push_block(&k_ii, 0, 0, mu);
        coo.push_block(&b_i.transpose(), 0, ni, -1.0);
        coo.push_block(&b_i, ni, 0, -1.0);
        for (i, &m) in ops.p_mean.iter().enumerate() {
            coo.push(ni + i, ni + np, m);
            coo.push(ni + np, ni + i, m);
        }
        let matrix = coo.to_csr();
        let lu = LuSolver::new(&matrix)?;
        Ok(Self { space, ops, mu, prolong, matrix, lu })
    }

    /// Solves `mu K u - B^T p = load`, `B u = g`, `u = boundary` on boundary DOFs.
    ///
    /// `boundary` is a full velocity vector; only its boundary entries are read.
    /// `g` holds the tested divergence data `int h lambda_i`.
    pub fn solve(&self, load: &[f64], boundary: &[f64], g: &[f64]) -> Result<StokesSolution> {
        let sp = self.space;
        let mut ub = boundary.to_vec();
        for (d, v) in ub.iter_mut().enumerate() {
            if !sp.is_boundary[d / 2] {
                *v = 0.0;
            }
        }
        let bu = self.ops.div.matvec(&ub);
        let flux: f64 = bu.iter().sum();
        let target: f64 = g.iter().sum();
        let scale = 1.0 + norm(&bu) + norm(g);
        if (flux - target).abs() > COMPAT_TOL * scale {
            return Err(Error::IncompatibleBoundaryData { flux: flux - target });
        }
        let ku = self.ops.stiffness.matvec(&ub);
        let r: Vec<f64> = load.iter().zip(&ku).map(|(f, k)| f - self.mu * k).collect();
        let mut rhs = self.prolong.matvec_t(&r);
        let ni = rhs.len();
        rhs.extend(g.iter().zip(&bu).map(|(g, b)| -(g - b)));
        rhs.push(0.0);
        let x = self.lu.solve(&rhs)?;
        let residual = relative_residual(&self.matrix, &x, &rhs);
        let mut velocity = self.prolong.matvec(&x[..ni]);
        velocity.iter_mut().zip(&ub).for_each(|(v, b)| *v += b);
        let pressure = x[ni..ni + sp.n_pressure()].to_vec();
        let div_residual = self
            .ops
            .div
            .matvec(&velocity)
            .iter()
            .zip(g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(StokesSolution { velocity, pressure, residual, div_residual })
    }
}

/// One-shot steady solve.
pub fn solve_steady(
    space: &Space,
    ops: &Operators,
    load: &[f64],
    boundary: &[f64],
    g: &[f64],
) -> Result<StokesSolution> {
    StokesSolver::new(space, ops, 1.0)?.solve(load, boundary, g)
}

/// Zero-trace velocity with `B : grad v = h` in the discrete sense.
/// `h` is given at quadrature points and must have zero mean.
pub fn bogovskii_lift(solver: &StokesSolver<'_>, h: &[f64]) -> Result<Vec<f64>> {
    let sp = solver.space;
    let g = divergence_load(sp, h);
    let mean: f64 = g.iter().sum::<f64>() / sp.area();
    let scale = h.iter().zip(&sp.quad.w).map(|(v, w)| v.abs() * w).sum::<f64>() / sp.area();
    if mean.abs() > 1e-10 * (1.0 + scale) {
        return Err(Error::IncompatibleMean { mean });
    }
    let zero = vec![0.0; sp.n_velocity()];
    Ok(solver.solve(&zero, &zero, &g)?.velocity)
}

/// Neumann problem `int grad h . grad q = int g . grad q`, zero mean.
pub fn pressure_poisson(space: &Space, ops: &Operators, g: &[V2]) -> Result<Vec<f64>> {
    let np = space.n_pressure();
    let mut rhs = vec![0.0; np + 1];
    for (t, tn) in space.tri_nodes.iter().enumerate() {
        for qq in 0..crate::fem::NQ {
            let qi = t * crate::fem::NQ + qq;
            for r in 0..3 {
                rhs[tn[r]] += g[qi].dot(&space.quad.dl[qi][r]) * space.quad.w[qi];
            }
        }
    }
    let mut coo = Coo::new(np + 1, np + 1);
    coo.push_block(&ops.p_stiffness, 0, 0, 1.0);
    for (i, &m) in ops.p_mean.iter().enumerate() {
        coo.push(i, np, m);
        coo.push(np, i, m);
    }
    let x = LuSolver::new(&coo.to_csr())?.solve(&rhs)?;
    Ok(x[..np].to_vec())
}

/// `int p` over the domain.
pub fn pressure_integral(ops: &Operators, p: &[f64]) -> f64 {
    dot(&ops.p_mean, p)
}

/// Quadrature norms of discrete fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h2_semi: f64,
}

impl FieldNorms {
    pub fn h1(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_semi * self.h1_semi).sqrt()
    }

    pub fn h2(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_semi * self.h1_semi + self.h2_semi * self.h2_semi).sqrt()
    }
}

/// Velocity norms with elementwise (broken) second derivatives.
pub fn velocity_norms(space: &Space, u: &[f64]) -> FieldNorms {
    let (mut l2, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for qi in 0..space.n_quad() {
        let w = space.quad.w[qi];
        l2 += w * space.velocity_at(u, qi).norm_squared();
        h1 += w * space.velocity_grad_at(u, qi).norm_squared();
        let h = space.velocity_hessian_at(u, qi);
        h2 += w * (h[0].norm_squared() + h[1].norm_squared());
    }
    FieldNorms { l2: l2.sqrt(), h1_semi: h1.sqrt(), h2_semi: h2.sqrt() }
}

pub fn pressure_norms(space: &Space, p: &[f64]) -> FieldNorms {
    let (mut l2, mut h1) = (0.0, 0.0);
    for qi in 0..space.n_quad() {
        let w = space.quad.w[qi];
        l2 += w * space.pressure_at(p, qi).powi(2);
        h1 += w * space.pressure_grad_at(p, qi).norm_squared();
    }
    FieldNorms { l2: l2.sqrt(), h1_semi: h1.sqrt(), h2_semi: 0.0 }
}

/// `(L2 error, H1-seminorm error)` against a closed-form velocity and gradient.
pub fn velocity_error(
    space: &Space,
    u: &[f64],
    exact: impl Fn(V2) -> V2,
    exact_grad: impl Fn(V2) -> M2,
) -> (f64, f64) {
    let (mut l2, mut h1) = (0.0, 0.0);
    for qi in 0..space.n_quad() {
        let (x, w) = (space.quad.x[qi], space.quad.w[qi]);
        l2 += w * (space.velocity_at(u, qi) - exact(x)).norm_squared();
        h1 += w * (space.velocity_grad_at(u, qi) - exact_grad(x)).norm_squared();
    }
    (l2.sqrt(), h1.sqrt())
}

/// L2 pressure error after removing the discrete mean difference.
pub fn pressure_error(space: &Space, p: &[f64], exact: impl Fn(V2) -> f64) -> f64 {
    let area = space.area();
    let mut shift = 0.0;
    for qi in 0..space.n_quad() {
        shift += space.quad.w[qi] * (space.pressure_at(p, qi) - exact(space.quad.x[qi]));
    }
    shift /= area;
    let mut e = 0.0;
    for qi in 0..space.n_quad() {
        e += space.quad.w[qi] * (space.pressure_at(p, qi) - exact(space.quad.x[qi]) - shift).powi(2);
    }
    e.sqrt()
}

/// `(|u|_{H1} + |u|_{H2, broken} + |p|_{H1}) / |f|_{L2}` for a solve with
/// homogeneous boundary data. `f` is given at quadrature points.
pub fn regularity_ratio(space: &Space, sol: &StokesSolution, f: &[V2]) -> Result<f64> {
    let fl2 = f.iter().zip(&space.quad.w).map(|(v, w)| w * v.norm_squared()).sum::<f64>().sqrt();
    if fl2 == 0.0 {
        return Err(Error::ZeroLoad);
    }
    let u = velocity_norms(space, &sol.velocity);
    let p = pressure_norms(space, &sol.pressure);
    Ok((u.h1() + u.h2() + p.h1()) / fl2)
}

/// Unit circle perturbed radially, `r = 1 + a cos(2 pi m y) / m^p`; the
/// family is bounded in `W^{s,2}` exactly for `s < p + 1/2`.
pub fn radial_family_curve(a: f64, m: usize, p: f64) -> Curve {
    let amp = a / (m as f64).powf(p);
    Curve::from_fn(m + 2, move |y| {
        let th = TWO_PI * y;
        let r = 1.0 + amp * (m as f64 * th).cos();
        V2::new(r * th.cos(), r * th.sin())
    })
}

/// Meshes the domain bounded by `curve`, solves the Stokes problem with
/// load `f` and no-slip data, and returns the regularity ratio.
pub fn regularity_probe(curve: &Curve, h: f64, f: impl Fn(V2) -> V2 + Sync) -> Result<f64> {
    let space = Space::new(Mesh::build(curve, h)?);
    let field = HanzawaField::identity(space.quad_points(), 1);
    let ops = assemble(&space, &field)?;
    let fq: Vec<V2> = space.quad_points().iter().map(|&x| f(x)).collect();
    let load = load_vector(&space, &fq);
    let zero_u = vec![0.0; space.n_velocity()];
    let zero_p = vec![0.0; space.n_pressure()];
    let sol = solve_steady(&space, &ops, &load, &zero_u, &zero_p)?;
    regularity_ratio(&space, &sol, &fq)
}

/// Manufactured solution on the unit disk: `u = curl (1 - |x|^2)^2`, `p = x y`.
pub mod manufactured {
    use super::*;

    pub fn velocity(x: V2) -> V2 {
        let r = 1.0 - x.norm_squared();
        V2::new(-4.0 * x.y * r, 4.0 * x.x * r)
    }

    pub fn velocity_grad(x: V2) -> M2 {
        let r = 1.0 - x.norm_squared();
        M2::new(8.0 * x.x * x.y, -4.0 * r + 8.0 * x.y * x.y, 4.0 * r - 8.0 * x.x * x.x, -8.0 * x.x * x.y)
    }

    pub fn pressure(x: V2) -> f64 {
        x.x * x.y
    }

    /// `-Delta u + grad p`
    pub fn load(x: V2) -> V2 {
        V2::new(-31.0 * x.y, 33.0 * x.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, load_vector};
    use crate::geometry::hanzawa::HanzawaField;
    use crate::geometry::Curve;
    use crate::mesh::Mesh;

    fn setup(h: f64) -> (Space, Operators) {
        let s = Space::new(Mesh::build(&Curve::circle(1.0), h).unwrap());
        let f = HanzawaField::identity(s.quad_points(), 2);
        let ops = assemble(&s, &f).unwrap();
        (s, ops)
    }

    #[test]
    fn zero_data_and_rigid_rotation() {
        let (s, ops) = setup(0.2);
        let solver = StokesSolver::new(&s, &ops, 1.0).unwrap();
        let z = vec![0.0; s.n_velocity()];
        let g = vec![0.0; s.n_pressure()];
        let sol = solver.solve(&z, &z, &g).unwrap();
        assert!(sol.velocity.iter().all(|v| *v == 0.0) && sol.pressure.iter().all(|v| *v == 0.0));
        let rot = s.interpolate(|x| V2::new(-x.y, x.x));
        let sol = solver.solve(&z, &rot, &g).unwrap();
        let err = sol.velocity.iter().zip(&rot).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(sol.pressure.iter().all(|p| p.abs() < 1e-9));
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn incompatible_boundary_data_is_rejected() {
        let (s, ops) = setup(0.3);
        let solver = StokesSolver::new(&s, &ops, 1.0).unwrap();
        let radial = s.interpolate(|x| x);
        let z = vec![0.0; s.n_velocity()];
        let g = vec![0.0; s.n_pressure()];
        assert!(matches!(solver.solve(&z, &radial, &g), Err(Error::IncompatibleBoundaryData { .. })));
        // with matching divergence data it is fine: div x = 2
        let g2 = divergence_load(&s, &vec![2.0; s.n_quad()]);
        let sol = solver.solve(&z, &radial, &g2).unwrap();
        let err = sol.velocity.iter().zip(&radial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!(pressure_integral(&ops, &sol.pressure).abs() < 1e-12);
    }

    #[test]
    fn bogovskii_and_pressure_poisson() {
        let (s, ops) = setup(0.15);
        let solver = StokesSolver::new(&s, &ops, 1.0).unwrap();
        let h: Vec<f64> = s.quad_points().iter().map(|x| x.x).collect();
        let v = bogovskii_lift(&solver, &h).unwrap();
        let res = ops.div.matvec(&v).iter().zip(divergence_load(&s, &h)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(res < 1e-12);
        assert!(s.boundary_nodes.iter().all(|&n| v[2 * n] == 0.0 && v[2 * n + 1] == 0.0));
        assert!(bogovskii_lift(&solver, &vec![0.0; s.n_quad()]).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(bogovskii_lift(&solver, &vec![1.0; s.n_quad()]), Err(Error::IncompatibleMean { .. })));
        // gradient of a known potential
        let g: Vec<V2> = s.quad_points().iter().map(|x| V2::new(2.0 * x.x + x.y, x.x)).collect();
        let hp = pressure_poisson(&s, &ops, &g).unwrap();
        let err = pressure_error(&s, &hp, |x| x.x * x.x + x.x * x.y);
        assert!(err < 5e-3, "{err}");
        assert!(pressure_integral(&ops, &hp).abs() < 1e-12);
        let rot: Vec<V2> = s.quad_points().iter().map(|x| V2::new(-x.y, x.x)).collect();
        let hr = pressure_poisson(&s, &ops, &rot).unwrap();
        assert!(hr.iter().all(|v| v.abs() < 1e-3), "{:?}", hr.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn manufactured_solution_and_load_scaling() {
        let (s, ops) = setup(0.1);
        let solver = StokesSolver::new(&s, &ops, 1.0).unwrap();
        let f: Vec<V2> = s.quad_points().iter().map(|&x| manufactured::load(x)).collect();
        let z = vec![0.0; s.n_velocity()];
        let g = vec![0.0; s.n_pressure()];
        let sol = solver.solve(&load_vector(&s, &f), &z, &g).unwrap();
        let (_, h1) = velocity_error(&s, &sol.velocity, manufactured::velocity, manufactured::velocity_grad);
        let pe = pressure_error(&s, &sol.pressure, manufactured::pressure);
        assert!(h1 < 0.05 && pe < 0.05, "{h1} {pe}");
        assert!(pressure_integral(&ops, &sol.pressure).abs() < 1e-12);
        let r1 = regularity_ratio(&s, &sol, &f).unwrap();
        let f10: Vec<V2> = f.iter().map(|v| v * 10.0).collect();
        let sol10 = solver.solve(&load_vector(&s, &f10), &z, &g).unwrap();
        let r10 = regularity_ratio(&s, &sol10, &f10).unwrap();
        assert!((r1 - r10).abs() < 1e-10 * r1);
        assert!(matches!(regularity_ratio(&s, &sol, &vec![V2::zeros(); s.n_quad()]), Err(Error::ZeroLoad)));
        // energy identity: int grad u : grad u = int f . u for homogeneous data
        let e = dot(&ops.stiffness.matvec(&sol.velocity), &sol.velocity);
        let w = dot(&load_vector(&s, &f), &sol.velocity);
        assert!((e - w).abs() < 1e-8 * e);
    }
}
