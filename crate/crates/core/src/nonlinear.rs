//! Picard iteration for the nonlinear problem on one time slab: sources are
//! computed from the previous iterate, the linear coupled system is marched
//! over the slab, and successive iterates are compared in a discrete
//! version of the slab norm.

use crate::assembly::{BeamSpace, Operators};
use crate::coupled::{CoupledState, CoupledSystem, SourceBundle, StepReport};
use crate::error::{Error, Result};
use crate::fem::Space;
use crate::fourier::PeriodicField;
use crate::geometry::checks::{degeneracy_check_with, DegeneracyThresholds};
use crate::geometry::hanzawa::{HanzawaField, HanzawaMap, PointCoefficients, M2};
use crate::geometry::{ReferenceGeometry, V2, TWO_PI};
use crate::fourier::real_mode_wavenumber;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

type FluidFn = dyn Fn(f64, V2) -> V2 + Send + Sync;
type BeamFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Volume force on the physical domain and beam load, both time dependent.
#[derive(Clone)]
pub struct Forcing {
    pub fluid: Arc<FluidFn>,
    pub beam: Arc<BeamFn>,
    /// skips evaluation when both are identically zero
    pub zero: bool,
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Forcing {{ zero: {} }}", self.zero)
    }
}

impl Forcing {
    pub fn zero() -> Self {
        Self { fluid: Arc::new(|_, _| V2::zeros()), beam: Arc::new(|_, _| 0.0), zero: true }
    }

    pub fn new(fluid: impl Fn(f64, V2) -> V2 + Send + Sync + 'static, beam: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { fluid: Arc::new(fluid), beam: Arc::new(beam), zero: false }
    }

    /// Beam load at time `t` projected on the real modes.
    pub fn beam_modes(&self, t: f64, beam: BeamSpace) -> Vec<f64> {
        if self.zero {
            return vec![0.0; beam.n_modes()];
        }
        let n = (4 * beam.kmax + 4).max(64);
        let samples: Vec<f64> = (0..n).map(|j| (self.beam)(t, j as f64 / n as f64)).collect();
        PeriodicField::from_samples(&samples, beam.kmax).to_real_modes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub picard_tol: f64,
    pub max_iter: usize,
    pub theta_max: f64,
    pub thresholds: DegeneracyThresholds,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { picard_tol: 1e-8, max_iter: 50, theta_max: 0.9, thresholds: DegeneracyThresholds::default() }
    }
}

/// Everything that stays fixed over one slab.
pub struct Slab<'a> {
    pub geom: &'a ReferenceGeometry,
    pub space: &'a Space,
    /// tubular coordinates of the quadrature points
    pub coords: &'a [Option<(f64, f64)>],
    /// coefficients at the frozen displacement
    pub field0: &'a HanzawaField,
    pub system: &'a CoupledSystem<'a>,
    pub forcing: &'a Forcing,
    pub t0: f64,
    pub n_steps: usize,
}

impl Slab<'_> {
    pub fn dt(&self) -> f64 {
        self.system.dt
    }

    pub fn beam(&self) -> BeamSpace {
        self.system.beam
    }

    pub fn ops(&self) -> &Operators {
        self.system.ops
    }
}

/// States on a uniform grid of one slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<CoupledState>,
    #[serde(skip)]
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    /// Constant-in-time extension of `initial`.
    pub fn constant(initial: &CoupledState, dt: f64, n_steps: usize) -> Self {
        let states = (0..=n_steps)
            .map(|n| CoupledState { t: initial.t + n as f64 * dt, ..initial.clone() })
            .collect();
        Self { t0: initial.t, dt, states, reports: vec![] }
    }

    pub fn last(&self) -> &CoupledState {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }
}

fn field_from_modes(modes: &[f64]) -> PeriodicField {
    PeriodicField::from_real_modes(modes)
}

/// Sources at level `n` computed from the iterate `(zeta, w, q)`.
pub fn source_terms(slab: &Slab<'_>, it: &Trajectory, n: usize, thresholds: &DegeneracyThresholds) -> Result<SourceBundle> {
    let sp = slab.space;
    let consts = slab.system.consts;
    let beam = slab.beam();
    let state = &it.states[n];
    let t = state.t;
    let zeta = field_from_modes(&state.eta);
    let zeta_t = field_from_modes(&state.w);
    let rep = degeneracy_check_with(slab.geom, &zeta, thresholds);
    if !rep.ok() {
        return Err(Error::DegeneracyDuringIteration { level: n, reason: rep.describe() });
    }
    let map = HanzawaMap::new(slab.geom, &zeta).map_err(|e| Error::DegeneracyDuringIteration { level: n, reason: e.to_string() })?;
    if map.sup_norm() >= slab.geom.alpha() {
        return Err(Error::DegeneracyDuringIteration {
            level: n,
            reason: format!("displacement {:.4e} reached the admissible bound {:.4e}", map.sup_norm(), slab.geom.alpha()),
        });
    }
    let prev = &it.states[n.saturating_sub(1)];
    let dt = it.dt;
    let q = state.pressure();
    let f0 = slab.field0;
    let per_point: Vec<(V2, M2, f64)> = (0..sp.n_quad())
        .into_par_iter()
        .map(|qi| {
            let x = sp.quad.x[qi];
            let (coef, dpsi) = match slab.coords[qi] {
                Some((y, s)) if !map.is_zero() => (map.coefficients_ys(y, s)?, map.velocity_ys(&zeta_t, y, s)),
                Some((y, s)) => (PointCoefficients::identity(x), map.velocity_ys(&zeta_t, y, s)),
                None => (PointCoefficients::identity(x), V2::zeros()),
            };
            let w = sp.velocity_at(&state.u, qi);
            let gw = sp.velocity_grad_at(&state.u, qi);
            let wt = if n == 0 { V2::zeros() } else { (w - sp.velocity_at(&prev.u, qi)) / dt };
            let finv = coef.grad.try_inverse().ok_or(Error::DegenerateJacobian { det: coef.j })?;
            let mut bfh = -consts.rho_f * (coef.j - f0.j[qi]) * wt - consts.rho_f * coef.j * (gw * finv * (w - dpsi));
            if !slab.forcing.zero {
                bfh += coef.j * (slab.forcing.fluid)(t, coef.psi);
            }
            let qv = sp.pressure_at(&q, qi);
            let db = f0.b[qi] - coef.b;
            let flux = gw * (f0.a[qi] - coef.a) * consts.mu - db * qv;
            let h = db.component_mul(&gw).sum();
            Ok((bfh, flux, h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceBundle {
        bfh: per_point.iter().map(|v| v.0).collect(),
        flux: per_point.iter().map(|v| v.1).collect(),
        h: per_point.iter().map(|v| v.2).collect(),
        g: slab.forcing.beam_modes(t, beam),
    })
}

/// One application of the solution map: march the linear system with
/// sources from `it`, starting at `initial`.
pub fn picard_map(slab: &Slab<'_>, it: &Trajectory, initial: &CoupledState, thresholds: &DegeneracyThresholds) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(slab.n_steps + 1);
    let mut reports = Vec::with_capacity(slab.n_steps);
    states.push(initial.clone());
    for n in 1..=slab.n_steps {
        let src = source_terms(slab, it, n, thresholds)?;
        let (s, r) = slab.system.step(&states[n - 1], &src)?;
        states.push(s);
        reports.push(r);
    }
    Ok(Trajectory { t0: initial.t, dt: slab.dt(), states, reports })
}

/// Spaces needed to evaluate the slab norm.
#[derive(Clone, Copy)]
pub struct NormContext<'a> {
    pub space: &'a Space,
    pub ops: &'a Operators,
    /// `J` of the frozen geometry at quadrature points
    pub j0: &'a [f64],
}

/// Individual terms of the slab norm (squared).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct YStarTerms {
    pub sup_u: f64,
    pub int_grad_u: f64,
    pub sup_beam_low: f64,
    pub int_wy: f64,
    pub sup_grad_u: f64,
    pub int_fluid_high: f64,
    pub sup_beam_high: f64,
    pub int_beam_high: f64,
}

impl YStarTerms {
    pub fn total(&self) -> f64 {
        (self.sup_u
            + self.int_grad_u
            + self.sup_beam_low
            + self.int_wy
            + self.sup_grad_u
            + self.int_fluid_high
            + self.sup_beam_high
            + self.int_beam_high)
            .sqrt()
    }
}

/// `sum_m (2 pi k_m)^{2 order} v_m^2` on real modes.
pub fn beam_seminorm_sq(v: &[f64], order: i32) -> f64 {
    v.iter().enumerate().map(|(m, x)| (TWO_PI * real_mode_wavenumber(m) as f64).powi(2 * order) * x * x).sum()
}

pub fn ystar_terms(ctx: NormContext<'_>, a: &Trajectory, b: &Trajectory) -> Result<YStarTerms> {
    if a.states.len() != b.states.len() || (a.dt - b.dt).abs() > 1e-14 * a.dt.abs().max(1.0) || (a.t0 - b.t0).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "levels {} vs {}, dt {} vs {}, t0 {} vs {}",
            a.states.len(),
            b.states.len(),
            a.dt,
            b.dt,
            a.t0,
            b.t0
        )));
    }
    let sp = ctx.space;
    let dt = a.dt;
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<f64>>();
    let levels: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(sa, sb)| (diff(&sa.u, &sb.u), diff(&sa.pressure(), &sb.pressure()), diff(&sa.eta, &sb.eta), diff(&sa.w, &sb.w)))
        .collect();
    let mut t = YStarTerms::default();
    for (n, (du, dp, de, dw)) in levels.iter().enumerate() {
        let per: (f64, f64, f64, f64, f64, f64) = (0..sp.n_quad())
            .into_par_iter()
            .map(|qi| {
                let w = sp.quad.w[qi];
                let u = sp.velocity_at(du, qi);
                let g = sp.velocity_grad_at(du, qi);
                let h = sp.velocity_hessian_at(du, qi);
                let p = sp.pressure_at(dp, qi);
                let gp = sp.pressure_grad_at(dp, qi);
                (
                    w * ctx.j0[qi] * u.norm_squared(),
                    w * g.norm_squared(),
                    w * (h[0].norm_squared() + h[1].norm_squared()),
                    w * p * p,
                    w * gp.norm_squared(),
                    0.0,
                )
            })
            .reduce(|| (0.0, 0.0, 0.0, 0.0, 0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2, x.3 + y.3, x.4 + y.4, 0.0));
        t.sup_u = t.sup_u.max(per.0);
        t.sup_grad_u = t.sup_grad_u.max(per.1);
        t.sup_beam_low = t.sup_beam_low.max(beam_seminorm_sq(dw, 0) + beam_seminorm_sq(de, 2));
        t.sup_beam_high = t.sup_beam_high.max(beam_seminorm_sq(dw, 1) + beam_seminorm_sq(de, 3));
        if n == 0 {
            continue;
        }
        let (pu, _, _, pw) = &levels[n - 1];
        let dut: Vec<f64> = du.iter().zip(pu).map(|(x, y)| (x - y) / dt).collect();
        let ut: f64 = (0..sp.n_quad()).map(|qi| sp.quad.w[qi] * sp.velocity_at(&dut, qi).norm_squared()).sum();
        let wtt: Vec<f64> = dw.iter().zip(pw).map(|(x, y)| (x - y) / dt).collect();
        t.int_grad_u += dt * per.1;
        t.int_wy += dt * beam_seminorm_sq(dw, 1);
        t.int_fluid_high += dt * (per.2 + ut + per.3 + per.4);
        t.int_beam_high += dt * (beam_seminorm_sq(dw, 2) + beam_seminorm_sq(&wtt, 0));
    }
    Ok(t)
}

/// Discrete slab distance between two trajectories on the same grid.
pub fn ystar_distance(ctx: NormContext<'_>, a: &Trajectory, b: &Trajectory) -> Result<f64> {
    Ok(ystar_terms(ctx, a, b)?.total())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PicardReport {
    pub distances: Vec<f64>,
    pub thetas: Vec<f64>,
    pub iterations: usize,
    /// distance moved by one more application at convergence
    pub self_consistency: f64,
    /// `|h|` at the slab start computed from the initial iterate (should vanish)
    pub h0_norm: f64,
}

/// Fixed-point iteration on one slab.
pub fn picard_solve(slab: &Slab<'_>, initial: &CoupledState, cfg: &PicardConfig) -> Result<(Trajectory, PicardReport)> {
    let ctx = NormContext { space: slab.space, ops: slab.ops(), j0: &slab.field0.j };
    let mut it = Trajectory::constant(initial, slab.dt(), slab.n_steps);
    let mut report = PicardReport::default();
    let src0 = source_terms(slab, &it, 0, &cfg.thresholds)?;
    report.h0_norm = src0.h.iter().zip(&slab.space.quad.w).map(|(h, w)| w * h * h).sum::<f64>().sqrt();
    let mut high_theta = 0;
    let mut growth = 0;
    for m in 0..cfg.max_iter {
        let next = picard_map(slab, &it, initial, &cfg.thresholds)?;
        let d = ystar_distance(ctx, &next, &it)?;
        report.iterations = m + 1;
        if let Some(&prev) = report.distances.last() {
            let theta = if prev > 0.0 { d / prev } else { 0.0 };
            report.thetas.push(theta);
            high_theta = if theta >= cfg.theta_max { high_theta + 1 } else { 0 };
            growth = if d > prev { growth + 1 } else { 0 };
        }
        report.distances.push(d);
        it = next;
        if d <= cfg.picard_tol {
            let again = picard_map(slab, &it, initial, &cfg.thresholds)?;
            report.self_consistency = ystar_distance(ctx, &again, &it)?;
            return Ok((it, report));
        }
        if high_theta >= 2 || growth >= 3 {
            return Err(Error::SlabTooLong { theta: *report.thetas.last().unwrap_or(&f64::NAN), iter: m + 1 });
        }
    }
    Err(Error::MaxIterExceeded(cfg.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::coupled::Constants;
    use crate::geometry::hanzawa::tube_coords;
    use crate::mesh::Mesh;
    use std::f64::consts::PI;

    #[test]
    fn beam_seminorms() {
        // sqrt2 cos(2 pi y): d_y^2 gives (2 pi)^2 times it
        let v = [0.0, 1.0, 0.0];
        assert!((beam_seminorm_sq(&v, 2) - TWO_PI.powi(4)).abs() < 1e-9);
        assert_eq!(beam_seminorm_sq(&[3.0, 0.0, 0.0], 1), 0.0);
    }

    #[test]
    fn zero_data_converges_immediately() {
        let geom = ReferenceGeometry::circle(1.0, 0.3).unwrap();
        let space = Space::new(Mesh::build(geom.curve(), 0.3).unwrap());
        let coords = tube_coords(&geom, space.quad_points()).unwrap();
        let field0 = HanzawaField::identity(space.quad_points(), 3);
        let ops = assemble(&space, &field0).unwrap();
        let beam = BeamSpace::new(3);
        let sys = CoupledSystem::new(&space, &ops, geom.curve(), beam, Constants::default(), 0.05).unwrap();
        let forcing = Forcing::zero();
        let slab = Slab { geom: &geom, space: &space, coords: &coords, field0: &field0, system: &sys, forcing: &forcing, t0: 0.0, n_steps: 4 };
        let init = CoupledState::zero(&space, beam, 0.0);
        let (traj, rep) = picard_solve(&slab, &init, &PicardConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.distances, vec![0.0]);
        assert!(traj.states.iter().all(|s| s.u.iter().all(|v| *v == 0.0)));
        let src = source_terms(&slab, &traj, 2, &DegeneracyThresholds::default()).unwrap();
        assert!(src.is_zero());
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let geom = ReferenceGeometry::circle(1.0, 0.3).unwrap();
        let space = Space::new(Mesh::build(geom.curve(), 0.4).unwrap());
        let field0 = HanzawaField::identity(space.quad_points(), 1);
        let ops = assemble(&space, &field0).unwrap();
        let s = CoupledState::zero(&space, BeamSpace::new(1), 0.0);
        let a = Trajectory::constant(&s, 0.1, 2);
        let b = Trajectory::constant(&s, 0.1, 3);
        let ctx = NormContext { space: &space, ops: &ops, j0: &field0.j };
        assert!(matches!(ystar_distance(ctx, &a, &b), Err(Error::GridMismatch(_))));
        assert_eq!(ystar_distance(ctx, &a, &a).unwrap(), 0.0);
    }

    struct Setup {
        geom: ReferenceGeometry,
        space: Space,
        coords: Vec<Option<(f64, f64)>>,
    }

    fn setup(h: f64) -> Setup {
        let geom = ReferenceGeometry::circle(1.0, 0.3).unwrap();
        let space = Space::new(Mesh::build(geom.curve(), h).unwrap());
        let coords = tube_coords(&geom, space.quad_points()).unwrap();
        Setup { geom, space, coords }
    }

    #[test]
    fn sources_at_the_frozen_geometry() {
        let st = setup(0.25);
        let beam = BeamSpace::new(3);
        let eta0 = PeriodicField::from_fn(3, |y| 0.04 * (TWO_PI * y).cos() - 0.02 * (3.0 * TWO_PI * y).sin());
        let map = HanzawaMap::new(&st.geom, &eta0).unwrap();
        let field0 = HanzawaField::from_coords(&map, st.space.quad_points(), &st.coords).unwrap();
        let ops = assemble(&st.space, &field0).unwrap();
        let sys = CoupledSystem::new(&st.space, &ops, st.geom.curve(), beam, Constants::default(), 0.1).unwrap();
        let forcing = Forcing::zero();
        let slab = Slab { geom: &st.geom, space: &st.space, coords: &st.coords, field0: &field0, system: &sys, forcing: &forcing, t0: 0.0, n_steps: 1 };
        let mut state = CoupledState::zero(&st.space, beam, 0.0);
        state.eta = eta0.to_real_modes();
        state.u = st.space.interpolate(|x| V2::new(x.y * x.y - 0.3, x.x * x.y));
        state.p0 = st.space.interpolate_p1(|x| x.x - 2.0 * x.y);
        let it = Trajectory::constant(&state, 0.1, 1);
        let src = source_terms(&slab, &it, 1, &DegeneracyThresholds::default()).unwrap();
        // zero up to the round trip through real modes
        let hmax = src.h.iter().fold(0.0f64, |m, h| m.max(h.abs()));
        let fmax = src.flux.iter().fold(0.0f64, |m, f| m.max(f.amax()));
        assert!(hmax < 1e-13 && fmax < 1e-13, "h {hmax:.2e}, H {fmax:.2e}");
        // bfh reduces to the convective term with a steady frame
        for qi in (0..st.space.n_quad()).step_by(7) {
            let x = st.space.quad.x[qi];
            let c = map.coefficients(x).unwrap();
            // discrete field: P2 interpolation is inexact on curved cells
            let w = st.space.velocity_at(&state.u, qi);
            let gw = st.space.velocity_grad_at(&state.u, qi);
            let expect = -(gw * c.grad.try_inverse().unwrap() * w) * c.j;
            assert!((src.bfh[qi] - expect).norm() <= 1e-9 * (1.0 + expect.norm()), "{qi}: {} vs {expect}", src.bfh[qi]);
        }
    }

    #[test]
    fn transport_term_matches_finite_differences() {
        let st = setup(0.25);
        let beam = BeamSpace::new(2);
        let field0 = HanzawaField::identity(st.space.quad_points(), 2);
        let ops = assemble(&st.space, &field0).unwrap();
        let sys = CoupledSystem::new(&st.space, &ops, st.geom.curve(), beam, Constants::default(), 0.1).unwrap();
        let forcing = Forcing::zero();
        let slab = Slab { geom: &st.geom, space: &st.space, coords: &st.coords, field0: &field0, system: &sys, forcing: &forcing, t0: 0.0, n_steps: 1 };
        // zeta(t, y) = t (0.1 cos 2 pi y + 0.05 sin 4 pi y) at t = 0.4
        let shape = |y: f64| 0.1 * (TWO_PI * y).cos() + 0.05 * (2.0 * TWO_PI * y).sin();
        let t = 0.4;
        let zeta = |t: f64| PeriodicField::from_fn(2, move |y| t * shape(y));
        let mut state = CoupledState::zero(&st.space, beam, t);
        state.eta = zeta(t).to_real_modes();
        state.w = PeriodicField::from_fn(2, shape).to_real_modes();
        let wbar = |x: V2| V2::new(x.x * x.x, x.x * x.y);
        state.u = st.space.interpolate(wbar);
        let it = Trajectory { t0: t, dt: 0.1, states: vec![state], reports: vec![] };
        let src = source_terms(&slab, &it, 0, &DegeneracyThresholds::default()).unwrap();
        let (dx, ds) = (1e-5, 1e-5);
        let mut worst = 0.0f64;
        for qi in (0..st.space.n_quad()).step_by(3) {
            let x = st.space.quad.x[qi];
            let psi = |t: f64, x: V2| HanzawaMap::new(&st.geom, &zeta(t)).unwrap().apply(x).unwrap();
            let mut f = M2::zeros();
            for c in 0..2 {
                let mut d = V2::zeros();
                d[c] = dx;
                f.set_column(c, &((psi(t, x + d) - psi(t, x - d)) / (2.0 * dx)));
            }
            let dpsi_dt = (psi(t + ds, x) - psi(t - ds, x)) / (2.0 * ds);
            let w = st.space.velocity_at(&it.states[0].u, qi);
            let gw = st.space.velocity_grad_at(&it.states[0].u, qi);
            let expect = -(gw * f.try_inverse().unwrap() * (w - dpsi_dt)) * f.determinant();
            worst = worst.max((src.bfh[qi] - expect).norm() / (1.0 + expect.norm()));
        }
        assert!(worst < 1e-6, "worst relative deviation {worst:.3e}");
    }

    #[test]
    fn ystar_matches_direct_sums() {
        let st = setup(0.2);
        let beam = BeamSpace::new(2);
        let field0 = HanzawaField::identity(st.space.quad_points(), 2);
        let ops = assemble(&st.space, &field0).unwrap();
        let ctx = NormContext { space: &st.space, ops: &ops, j0: &field0.j };
        let zero = CoupledState::zero(&st.space, beam, 0.0);
        let mut a = zero.clone();
        a.u = st.space.interpolate(|x| V2::new(x.x, 0.0));
        a.eta[1] = 0.1;
        a.w[2] = 0.2;
        let one = |s: &CoupledState| Trajectory { t0: 0.0, dt: 0.1, states: vec![s.clone()], reports: vec![] };
        let tp = TWO_PI;
        // int_disk x^2 = pi/4, int_disk |grad|^2 = pi
        let expect = (PI / 4.0 + PI + 0.04 + 0.01 * tp.powi(4) + 0.04 * tp.powi(2) + 0.01 * tp.powi(6)).sqrt();
        let d = ystar_distance(ctx, &one(&a), &one(&zero)).unwrap();
        assert!((d - expect).abs() <= 1e-6 * expect, "{d} vs {expect}");
        // two levels, beam velocity only: sup, time-integrated and acceleration terms
        let dt = 0.1;
        let mut b1 = zero.clone();
        b1.t = dt;
        b1.w[3] = 0.5;
        let mut z1 = zero.clone();
        z1.t = dt;
        let ta = Trajectory { t0: 0.0, dt, states: vec![zero.clone(), b1], reports: vec![] };
        let tb = Trajectory { t0: 0.0, dt, states: vec![zero.clone(), z1], reports: vec![] };
        let k2 = (2.0 * tp).powi(2);
        let expect = (0.25 + dt * k2 * 0.25 + 0.25 * k2 + dt * (k2 * k2 * 0.25 + (0.5 / dt).powi(2))).sqrt();
        let d = ystar_distance(ctx, &ta, &tb).unwrap();
        assert!((d - expect).abs() <= 1e-12 * expect, "{d} vs {expect}");
    }

    #[test]
    fn ystar_is_homogeneous() {
        let st = setup(0.3);
        let beam = BeamSpace::new(3);
        let field0 = HanzawaField::identity(st.space.quad_points(), 3);
        let ops = assemble(&st.space, &field0).unwrap();
        let ctx = NormContext { space: &st.space, ops: &ops, j0: &field0.j };
        let states: Vec<CoupledState> = (0..4)
            .map(|n| {
                let mut s = CoupledState::zero(&st.space, beam, 0.05 * n as f64);
                let c = 1.0 + n as f64;
                s.u = st.space.interpolate(|x| V2::new((c * x.y).sin(), x.x * x.x * c));
                s.p0 = st.space.interpolate_p1(|x| x.x * c);
                s.c_pi = 0.1 * c;
                s.eta.iter_mut().enumerate().for_each(|(m, v)| *v = 0.01 * c / (1 + m) as f64);
                s.w.iter_mut().enumerate().for_each(|(m, v)| *v = 0.1 * (m as f64 - c));
                s
            })
            .collect();
        let scale = |lam: f64| -> Trajectory {
            let st: Vec<CoupledState> = states
                .iter()
                .map(|s| CoupledState {
                    t: s.t,
                    u: s.u.iter().map(|v| v * lam).collect(),
                    p0: s.p0.iter().map(|v| v * lam).collect(),
                    c_pi: s.c_pi * lam,
                    eta: s.eta.iter().map(|v| v * lam).collect(),
                    w: s.w.iter().map(|v| v * lam).collect(),
                })
                .collect();
            Trajectory { t0: 0.0, dt: 0.05, states: st, reports: vec![] }
        };
        let zero = scale(0.0);
        let d1 = ystar_distance(ctx, &scale(1.0), &zero).unwrap();
        for lam in [0.5, 3.0, 10.0] {
            let d = ystar_distance(ctx, &scale(lam), &zero).unwrap();
            assert!((d - lam * d1).abs() <= 1e-12 * lam * d1, "lambda {lam}: {d} vs {}", lam * d1);
        }
        assert!(d1 > 0.0);
    }
}
