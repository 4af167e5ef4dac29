//! One backward-Euler step of the linearized fluid-beam system on the
//! reference domain, with the interface condition `u = w n` eliminated
//! strongly and the pressure split into a zero-mean part and a constant.
//!
//! Unknowns are `z = [u_I; w; p]`: interior velocity DOFs, beam velocity in
//! real Fourier modes, and P1 pressure. The full velocity is `u = E [u_I; w]`
//! with `E = [P_I, T]`.

use crate::assembly::{divergence_load, flux_load, interior_prolongation, load_vector, BeamSpace, Operators};
use crate::error::{Error, Result};
use crate::fem::Space;
use crate::geometry::hanzawa::M2;
use crate::geometry::{Curve, V2};
use crate::sparse::{dot, relative_residual, Coo, Csr, LuSolver};
use serde::{Deserialize, Serialize};

pub const DENOMINATOR_MIN: f64 = 1e-8;
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Densities, beam viscosity and stiffness, fluid viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    pub rho_f: f64,
    pub rho_s: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { rho_f: 1.0, rho_s: 1.0, gamma: 1.0, alpha: 1.0, mu: 1.0 }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("rho_f", self.rho_f), ("rho_s", self.rho_s), ("gamma", self.gamma), ("alpha", self.alpha), ("mu", self.mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("constant {k} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub t: f64,
    /// full P2 velocity vector
    pub u: Vec<f64>,
    /// zero-mean pressure part
    pub p0: Vec<f64>,
    pub c_pi: f64,
    /// beam displacement (real modes)
    pub eta: Vec<f64>,
    /// beam velocity (real modes)
    pub w: Vec<f64>,
}

impl CoupledState {
    pub fn zero(space: &Space, beam: BeamSpace, t: f64) -> Self {
        Self {
            t,
            u: vec![0.0; space.n_velocity()],
            p0: vec![0.0; space.n_pressure()],
            c_pi: 0.0,
            eta: vec![0.0; beam.n_modes()],
            w: vec![0.0; beam.n_modes()],
        }
    }

    /// Total pressure `p0 + c_pi`.
    pub fn pressure(&self) -> Vec<f64> {
        self.p0.iter().map(|p| p + self.c_pi).collect()
    }
}

/// Right-hand sides at quadrature points plus the beam load modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBundle {
    pub bfh: Vec<V2>,
    pub flux: Vec<M2>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
}

impl SourceBundle {
    pub fn zero(n_quad: usize, n_modes: usize) -> Self {
        Self { bfh: vec![V2::zeros(); n_quad], flux: vec![M2::zeros(); n_quad], h: vec![0.0; n_quad], g: vec![0.0; n_modes] }
    }

    pub fn is_zero(&self) -> bool {
        self.bfh.iter().all(|v| *v == V2::zeros())
            && self.flux.iter().all(|m| *m == M2::zeros())
            && self.h.iter().all(|v| *v == 0.0)
            && self.g.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            bfh: self.bfh.iter().map(|v| v * a).collect(),
            flux: self.flux.iter().map(|m| m * a).collect(),
            h: self.h.iter().map(|v| v * a).collect(),
            g: self.g.iter().map(|v| v * a).collect(),
        }
    }
}

/// Shifts `h` by a constant so that `int h = flux`; returns the shift.
pub fn compatibility_project(space: &Space, h: &mut [f64], flux: f64) -> f64 {
    let int_h: f64 = h.iter().zip(&space.quad.w).map(|(v, w)| v * w).sum();
    let shift = (flux - int_h) / space.area();
    if shift != 0.0 {
        h.iter_mut().for_each(|v| *v += shift);
    }
    shift
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub energy: f64,
    pub dissipation: f64,
    pub work_f: f64,
    pub work_g: f64,
    /// `E^{n+1} - E^n + dt D - dt (work_f + work_g)`
    pub residual: f64,
    pub c_pi: f64,
    /// relative residual of the scalar constant-pressure identity
    pub c_pi_residual: f64,
    pub p0_mean: f64,
    pub div_mismatch: f64,
    pub solve_residual: f64,
}

/// Monolithic system for a frozen geometry and time step, factored once.
#[derive(Debug)]
pub struct CoupledSystem<'a> {
    pub space: &'a Space,
    pub ops: &'a Operators,
    pub beam: BeamSpace,
    pub consts: Constants,
    pub dt: f64,
    /// `E = [P_I, T]`
    pub e: Csr,
    pub t_map: Csr,
    n_int: usize,
    visc: Vec<f64>,
    bend: Vec<f64>,
    matrix: Csr,
    lu: LuSolver,
    /// `T e_0`: velocity of a unit uniform beam motion
    v1: Vec<f64>,
    /// `1^T B T e_0`
    pub denominator: f64,
}

impl<'a> CoupledSystem<'a> {
    pub fn new(space: &'a Space, ops: &'a Operators, curve: &Curve, beam: BeamSpace, consts: Constants, dt: f64) -> Result<Self> {
        consts.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let t_map = crate::assembly::interface_map(space, curve, beam)?;
        let (p_i, _) = interior_prolongation(space);
        let n_int = p_i.n_cols;
        let nm = beam.n_modes();
        let mut ecoo = Coo::new(space.n_velocity(), n_int + nm);
        ecoo.push_block(&p_i, 0, 0, 1.0);
        ecoo.push_block(&t_map, 0, n_int, 1.0);
        let e = ecoo.to_csr();
        let et = e.transpose();
        let fluid = ops.mass.add(consts.rho_f / dt, &ops.stiffness, consts.mu);
        let a_uu = et.matmul(&fluid.matmul(&e));
        let be = ops.div.matmul(&e);
        let visc = beam.viscosity_diag();
        let bend = beam.bending_diag();
        let nz = n_int + nm;
        let np = space.n_pressure();
        let mut coo = Coo::new(nz + np, nz + np);
        coo.push_block(&a_uu, 0, 0, 1.0);
        for m in 0..nm {
            coo.push(n_int + m, n_int + m, consts.rho_s / dt + consts.gamma * visc[m] + consts.alpha * dt * bend[m]);
        }
        coo.push_block(&be.transpose(), 0, nz, -1.0);
        coo.push_block(&be, nz, 0, -1.0);
        let matrix = coo.to_csr();
        let lu = LuSolver::new(&matrix)?;
        let mut e0 = vec![0.0; nm];
        e0[0] = 1.0;
        let v1 = t_map.matvec(&e0);
        let denominator: f64 = ops.div.matvec(&v1).iter().sum();
        if denominator <= DENOMINATOR_MIN {
            return Err(Error::DegenerateDenominator { value: denominator });
        }
        Ok(Self { space, ops, beam, consts, dt, e, t_map, n_int, visc, bend, matrix, lu, v1, denominator })
    }

    pub fn energy(&self, s: &CoupledState) -> f64 {
        let c = &self.consts;
        let ke = 0.5 * c.rho_f * dot(&self.ops.mass.matvec(&s.u), &s.u);
        let kb = 0.5 * c.rho_s * dot(&s.w, &s.w);
        let pe = 0.5 * c.alpha * s.eta.iter().zip(&self.bend).map(|(e, b)| b * e * e).sum::<f64>();
        ke + kb + pe
    }

    pub fn dissipation(&self, s: &CoupledState) -> f64 {
        let c = &self.consts;
        c.mu * dot(&self.ops.stiffness.matvec(&s.u), &s.u) + c.gamma * s.w.iter().zip(&self.visc).map(|(w, v)| v * w * w).sum::<f64>()
    }

    /// Fluid load vector `int bfh . v + int H : grad v`.
    pub fn fluid_load(&self, src: &SourceBundle) -> Vec<f64> {
        let mut f = load_vector(self.space, &src.bfh);
        let fh = flux_load(self.space, &src.flux);
        f.iter_mut().zip(fh).for_each(|(a, b)| *a += b);
        f
    }

    /// Advances `state` by one step with sources evaluated at the new time.
    pub fn step(&self, state: &CoupledState, src: &SourceBundle) -> Result<(CoupledState, StepReport)> {
        let sp = self.space;
        let (dt, c) = (self.dt, self.consts);
        let nm = self.beam.n_modes();
        let np = sp.n_pressure();
        let f = self.fluid_load(src);
        let g = divergence_load(sp, &src.h);
        let mu_n = self.ops.mass.matvec(&state.u);
        let fu: Vec<f64> = f.iter().zip(&mu_n).map(|(a, b)| a + c.rho_f / dt * b).collect();
        let mut rhs = self.e.matvec_t(&fu);
        for m in 0..nm {
            rhs[self.n_int + m] += c.rho_s / dt * state.w[m] - c.alpha * self.bend[m] * state.eta[m] + src.g[m];
        }
        rhs.extend(g.iter().map(|v| -v));
        let z = self.lu.solve(&rhs)?;
        let solve_residual = relative_residual(&self.matrix, &z, &rhs);
        let nz = self.n_int + nm;
        let u = self.e.matvec(&z[..nz]);
        let w = z[self.n_int..nz].to_vec();
        let p = &z[nz..nz + np];
        let eta: Vec<f64> = state.eta.iter().zip(&w).map(|(e, w)| e + dt * w).collect();

        let bu = self.ops.div.matvec(&u);
        let div_mismatch = (bu.iter().sum::<f64>() - g.iter().sum::<f64>()).abs();
        let scale = 1.0 + bu.iter().map(|v| v.abs()).sum::<f64>() + g.iter().map(|v| v.abs()).sum::<f64>();
        if div_mismatch > COMPATIBILITY_TOL * scale {
            return Err(Error::CompatibilityViolation { mismatch: div_mismatch });
        }

        let (p0, c_pi) = pressure_split(self.ops, p);
        let c_pi_residual = self.c_pi_identity_residual(state, &u, &w, &p0, c_pi, &f, &src.g);
        let new = CoupledState { t: state.t + dt, u, p0, c_pi, eta, w };
        let e_old = self.energy(state);
        let energy = self.energy(&new);
        let dissipation = self.dissipation(&new);
        let work_f = dot(&f, &new.u) + dot(p, &g);
        let work_g = dot(&src.g, &new.w);
        let residual = energy - e_old + dt * dissipation - dt * (work_f + work_g);
        let p0_mean = dot(&self.ops.p_mean, &new.p0) / sp.area();
        Ok((
            new,
            StepReport { energy, dissipation, work_f, work_g, residual, c_pi, c_pi_residual, p0_mean, div_mismatch, solve_residual },
        ))
    }

    /// Relative residual of
    /// `c D = V1^T (rho_f M du/dt + mu K u - B^T p0 - F) + rho_s dw_0/dt - G_0`.
    #[allow(clippy::too_many_arguments)]
    fn c_pi_identity_residual(
        &self,
        old: &CoupledState,
        u: &[f64],
        w: &[f64],
        p0: &[f64],
        c_pi: f64,
        f: &[f64],
        g: &[f64],
    ) -> f64 {
        let (rhs, scale) = self.c_pi_rhs(old, u, w, p0, f, g);
        let lhs = c_pi * self.denominator;
        (lhs - rhs).abs() / scale.max(lhs.abs()).max(1e-300)
    }

    /// Right side of the constant-pressure identity and the size of its terms.
    fn c_pi_rhs(&self, old: &CoupledState, u: &[f64], w: &[f64], p0: &[f64], f: &[f64], g: &[f64]) -> (f64, f64) {
        let c = self.consts;
        let du: Vec<f64> = u.iter().zip(&old.u).map(|(a, b)| (a - b) / self.dt).collect();
        let terms = [
            c.rho_f * dot(&self.v1, &self.ops.mass.matvec(&du)),
            c.mu * dot(&self.v1, &self.ops.stiffness.matvec(u)),
            -dot(&self.ops.div.matvec(&self.v1), p0),
            -dot(&self.v1, f),
            c.rho_s * (w[0] - old.w[0]) / self.dt,
            -g[0],
        ];
        (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
    }

    /// Recomputes `c_pi` from the identity (independent of the linear solve).
    pub fn c_pi_from_identity(&self, old: &CoupledState, new: &CoupledState, src: &SourceBundle) -> f64 {
        let f = self.fluid_load(src);
        self.c_pi_rhs(old, &new.u, &new.w, &new.p0, &f, &src.g).0 / self.denominator
    }

    /// Largest deviation of boundary velocity DOFs from `w n`.
    pub fn interface_error(&self, s: &CoupledState) -> f64 {
        let tw = self.t_map.matvec(&s.w);
        self.space
            .boundary_nodes
            .iter()
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .map(|d| (s.u[d] - tw[d]).abs())
            .fold(0.0, f64::max)
    }

    /// Fluid velocity consistent with the interface: interior part kept,
    /// boundary DOFs overwritten by `T w`.
    pub fn impose_interface(&self, u: &mut [f64], w: &[f64]) {
        let tw = self.t_map.matvec(w);
        for &n in &self.space.boundary_nodes {
            u[2 * n] = tw[2 * n];
            u[2 * n + 1] = tw[2 * n + 1];
        }
    }
}

/// Splits a total pressure into its zero-mean part and mean value.
pub fn pressure_split(ops: &Operators, p: &[f64]) -> (Vec<f64>, f64) {
    let vol: f64 = ops.p_mean.iter().sum();
    let c = dot(&ops.p_mean, p) / vol;
    (p.iter().map(|v| v - c).collect(), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::geometry::hanzawa::HanzawaField;
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        space: Space,
        ops: Operators,
        curve: Curve,
    }

    fn fixture(h: f64) -> Fixture {
        let curve = Curve::circle(1.0);
        let space = Space::new(Mesh::build(&curve, h).unwrap());
        let ops = assemble(&space, &HanzawaField::identity(space.quad_points(), 2)).unwrap();
        Fixture { space, ops, curve }
    }

    fn random_state(sys: &CoupledSystem<'_>, rng: &mut ChaCha8Rng) -> CoupledState {
        let sp = sys.space;
        let mut s = CoupledState::zero(sp, sys.beam, 0.0);
        for m in 0..sys.beam.n_modes() {
            s.w[m] = rng.random_range(-1.0..1.0) / (1 + m) as f64;
            s.eta[m] = 0.05 * rng.random_range(-1.0..1.0) / (1 + m * m) as f64;
        }
        s.u = sp.interpolate(|x| V2::new(x.y * (1.0 - x.norm_squared()), 0.3 * x.x));
        s.u.iter_mut().for_each(|v| *v *= rng.random_range(0.5..1.5));
        sys.impose_interface(&mut s.u, &s.w);
        s
    }

    #[test]
    fn zero_data_stays_zero() {
        let fx = fixture(0.3);
        let beam = BeamSpace::new(3);
        let sys = CoupledSystem::new(&fx.space, &fx.ops, &fx.curve, beam, Constants::default(), 0.01).unwrap();
        let s0 = CoupledState::zero(&fx.space, beam, 0.0);
        let (s1, r) = sys.step(&s0, &SourceBundle::zero(fx.space.n_quad(), beam.n_modes())).unwrap();
        assert!(s1.u.iter().chain(&s1.p0).chain(&s1.eta).chain(&s1.w).all(|v| *v == 0.0));
        assert_eq!((s1.c_pi, r.energy, r.residual), (0.0, 0.0, 0.0));
        // unit-speed uniform beam motion has denominator = perimeter
        assert!((sys.denominator - 2.0 * std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn unforced_energy_decays_and_identities_hold() {
        let fx = fixture(0.25);
        let beam = BeamSpace::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dt in [0.05, 0.01] {
            let sys = CoupledSystem::new(&fx.space, &fx.ops, &fx.curve, beam, Constants::default(), dt).unwrap();
            let zero = SourceBundle::zero(fx.space.n_quad(), beam.n_modes());
            let mut s = random_state(&sys, &mut rng);
            let mut e = sys.energy(&s);
            for _ in 0..20 {
                let (n, r) = sys.step(&s, &zero).unwrap();
                assert!(r.energy <= e * (1.0 + 1e-12));
                assert!(r.residual <= 1e-10 * (1.0 + e));
                assert!(r.c_pi_residual < 1e-8, "{}", r.c_pi_residual);
                assert!(r.p0_mean.abs() < 1e-12);
                assert!(sys.interface_error(&n) < 1e-12);
                let c2 = sys.c_pi_from_identity(&s, &n, &zero);
                assert!((c2 - n.c_pi).abs() < 1e-8 * (1.0 + n.c_pi.abs()));
                e = r.energy;
                s = n;
            }
        }
    }

    #[test]
    fn step_is_linear_in_sources() {
        let fx = fixture(0.3);
        let beam = BeamSpace::new(3);
        let sys = CoupledSystem::new(&fx.space, &fx.ops, &fx.curve, beam, Constants::default(), 0.02).unwrap();
        let nq = fx.space.n_quad();
        let mut s1 = SourceBundle::zero(nq, beam.n_modes());
        let mut s2 = SourceBundle::zero(nq, beam.n_modes());
        for (i, x) in fx.space.quad_points().iter().enumerate() {
            s1.bfh[i] = V2::new(x.y, 1.0);
            s2.flux[i] = M2::new(x.x, 0.0, 1.0, x.y);
            s2.h[i] = x.x * x.y;
        }
        s1.g[1] = 0.7;
        s2.g[0] = -0.2;
        let z = CoupledState::zero(&fx.space, beam, 0.0);
        let a = sys.step(&z, &s1).unwrap().0;
        let b = sys.step(&z, &s2).unwrap().0;
        let mut comb = s1.scaled(2.0);
        let s2s = s2.scaled(-3.0);
        comb.bfh.iter_mut().zip(&s2s.bfh).for_each(|(x, y)| *x += y);
        comb.flux.iter_mut().zip(&s2s.flux).for_each(|(x, y)| *x += y);
        comb.h.iter_mut().zip(&s2s.h).for_each(|(x, y)| *x += y);
        comb.g.iter_mut().zip(&s2s.g).for_each(|(x, y)| *x += y);
        let c = sys.step(&z, &comb).unwrap().0;
        for i in 0..c.u.len() {
            assert!((c.u[i] - (2.0 * a.u[i] - 3.0 * b.u[i])).abs() < 1e-9);
        }
        assert!((c.c_pi - (2.0 * a.c_pi - 3.0 * b.c_pi)).abs() < 1e-9);
    }

    #[test]
    fn compatibility_shift() {
        let fx = fixture(0.3);
        let mut h = vec![1.0; fx.space.n_quad()];
        let shift = compatibility_project(&fx.space, &mut h, 0.0);
        assert!((shift + 1.0).abs() < 1e-14);
        assert!(h.iter().all(|v| v.abs() < 1e-14));
        let mut h2: Vec<f64> = fx.space.quad_points().iter().map(|x| x.x).collect();
        assert!(compatibility_project(&fx.space, &mut h2, 0.0).abs() < 1e-14);
    }
}
