//! Global continuation: chains Picard slabs from the horizon start, restarts
//! each slab from the previous terminal state with operators reassembled at
//! the current displacement, watches the geometry after every slab and keeps
//! the energy and acceleration ledgers.

use crate::assembly::{assemble, BeamSpace, Operators};
use crate::coupled::{Constants, CoupledState, CoupledSystem};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::Space;
use crate::fourier::PeriodicField;
use crate::geometry::checks::{degeneracy_check_with, self_intersection_check, DegeneracyThresholds};
use crate::geometry::hanzawa::{tube_coords, HanzawaField, HanzawaMap};
use crate::geometry::{Curve, ReferenceGeometry, V2, TWO_PI};
use crate::mesh::Mesh;
use crate::nonlinear::{beam_seminorm_sq, picard_map, picard_solve, Forcing, PicardConfig, Slab, Trajectory};
use crate::sparse::dot;
use crate::stokes::StokesSolver;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fraction of the admissible displacement at which runs stop.
pub const DISPLACEMENT_GUARD: f64 = 0.95;
/// Smallest slab as a fraction of the horizon.
pub const MIN_SLAB_FRACTION: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: usize,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Circle {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// `r(theta) = radius (1 + sum_k c_k cos k theta + s_k sin k theta)`
    Radial {
        radius: f64,
        modes: Vec<Mode>,
    },
    /// Annular sector with rounded ends whose tips face each other across a
    /// small outside gap.
    CRing {
        outer: f64,
        inner: f64,
        gap: f64,
        #[serde(default = "default_ring_kmax")]
        kmax: usize,
    },
}

fn default_ring_kmax() -> usize {
    64
}

impl GeometrySpec {
    pub fn curve(&self) -> Result<Curve> {
        match *self {
            GeometrySpec::Circle { radius } => {
                positive("radius", radius)?;
                Ok(Curve::circle(radius))
            }
            GeometrySpec::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)?;
                Ok(Curve::ellipse(a, b))
            }
            GeometrySpec::Radial { radius, ref modes } => {
                positive("radius", radius)?;
                let kmax = modes.iter().map(|m| m.k).max().unwrap_or(0);
                let modes = modes.clone();
                Ok(Curve::from_fn(kmax.max(1), move |y| {
                    let th = TWO_PI * y;
                    let r = radius
                        * (1.0
                            + modes
                                .iter()
                                .map(|m| m.cos * (m.k as f64 * th).cos() + m.sin * (m.k as f64 * th).sin())
                                .sum::<f64>());
                    V2::new(r * th.cos(), r * th.sin())
                }))
            }
            GeometrySpec::CRing { outer, inner, gap, kmax } => c_ring(outer, inner, gap, kmax),
        }
    }

    /// Parameter values of the facing points of the two C-ring caps.
    pub fn c_ring_tips(&self) -> Option<(f64, f64)> {
        match *self {
            GeometrySpec::CRing { outer, inner, gap, .. } => {
                let seg = CRingSegments::new(outer, inner, gap).ok()?;
                Some(seg.tips())
            }
            _ => None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// Arc-length layout of the C-ring: outer arc, lower cap, inner arc, upper cap.
struct CRingSegments {
    rc: f64,
    hw: f64,
    outer: f64,
    inner: f64,
    theta0: f64,
    lens: [f64; 4],
}

impl CRingSegments {
    fn new(outer: f64, inner: f64, gap: f64) -> Result<Self> {
        if !(outer > inner && inner > 0.0 && gap > 0.0) {
            return Err(Error::InvalidArgument(format!("c_ring needs outer > inner > 0 and gap > 0, got {outer}, {inner}, {gap}")));
        }
        let rc = 0.5 * (outer + inner);
        let hw = 0.5 * (outer - inner);
        let sin_t = (gap + 2.0 * hw) / (2.0 * rc);
        if sin_t >= 0.9 {
            return Err(Error::InvalidArgument("c_ring gap too wide for its radius".into()));
        }
        let theta0 = sin_t.asin();
        let sweep = TWO_PI - 2.0 * theta0;
        Ok(Self { rc, hw, outer, inner, theta0, lens: [outer * sweep, PI * hw, inner * sweep, PI * hw] })
    }

    fn total(&self) -> f64 {
        self.lens.iter().sum()
    }

    fn point(&self, y: f64) -> V2 {
        let mut s = y.rem_euclid(1.0) * self.total();
        let polar = |r: f64, th: f64| V2::new(r * th.cos(), r * th.sin());
        let sweep = TWO_PI - 2.0 * self.theta0;
        if s < self.lens[0] {
            return polar(self.outer, self.theta0 + sweep * s / self.lens[0]);
        }
        s -= self.lens[0];
        if s < self.lens[1] {
            // lower cap, centred on the centre line at angle -theta0
            let c = polar(self.rc, -self.theta0);
            let a = -self.theta0 + PI * s / self.lens[1];
            return c + polar(self.hw, a);
        }
        s -= self.lens[1];
        if s < self.lens[2] {
            return polar(self.inner, -self.theta0 - sweep * s / self.lens[2]);
        }
        s -= self.lens[2];
        let c = polar(self.rc, self.theta0);
        let a = self.theta0 + PI + PI * s / self.lens[3];
        c + polar(self.hw, a)
    }

    fn tips(&self) -> (f64, f64) {
        let t = self.total();
        // closest points of the two caps lie on the line joining their centres
        let lower = (self.lens[0] + self.lens[1] * (0.5 + self.theta0 / PI)) / t;
        let upper = (self.lens[0] + self.lens[1] + self.lens[2] + self.lens[3] * (0.5 - self.theta0 / PI)) / t;
        (lower, upper)
    }
}

fn c_ring(outer: f64, inner: f64, gap: f64, kmax: usize) -> Result<Curve> {
    let seg = CRingSegments::new(outer, inner, gap)?;
    Ok(Curve::from_fn(kmax, move |y| seg.point(y)))
}

fn zero_expr() -> Expr {
    Expr::zero(&["t", "x", "y"])
}

fn zero_pair() -> [Expr; 2] {
    [zero_expr(), zero_expr()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialData {
    /// displacement `eta_0(y)`
    pub eta0: Expr,
    /// beam velocity `eta_1(y)`
    pub eta1: Expr,
    /// fluid velocity on the physical domain, `(u_x(x, y), u_y(x, y))`
    pub u0: [Expr; 2],
}

impl Default for InitialData {
    fn default() -> Self {
        Self { eta0: zero_expr(), eta1: zero_expr(), u0: zero_pair() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSpec {
    /// volume force `f(t, x, y)` on the physical domain
    pub fluid: [Expr; 2],
    /// beam load `g(t, y)`
    pub beam: Expr,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self { fluid: zero_pair(), beam: zero_expr() }
    }
}

impl ForcingSpec {
    pub fn build(&self) -> Result<Forcing> {
        let fx = self.fluid[0].with_vars(&["t", "x", "y"])?;
        let fy = self.fluid[1].with_vars(&["t", "x", "y"])?;
        let g = self.beam.with_vars(&["t", "y"])?;
        if fx.is_zero() && fy.is_zero() && g.is_zero() {
            return Ok(Forcing::zero());
        }
        Ok(Forcing::new(move |t, x| V2::new(fx.eval(&[t, x.x, x.y]), fy.eval(&[t, x.x, x.y])), move |t, y| g.eval(&[t, y])))
    }
}

fn default_width() -> f64 {
    0.3
}
fn default_alpha_fraction() -> f64 {
    0.5
}
fn default_horizon() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.05
}
fn default_kmax() -> usize {
    8
}
fn default_h() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    /// tube width `L`
    #[serde(default = "default_width")]
    pub tube_width: f64,
    /// admissible displacement `alpha` as a fraction of `L`
    #[serde(default = "default_alpha_fraction")]
    pub alpha_fraction: f64,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub forcing: ForcingSpec,
    /// horizon `T`
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// initial slab length; defaults to the horizon
    #[serde(default)]
    pub t_star: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub picard: PicardConfig,
    /// geometry monitor thresholds applied after each slab
    #[serde(default)]
    pub thresholds: DegeneracyThresholds,
    /// beam modes `|k| <= kmax`
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    /// mesh size
    #[serde(default = "default_h")]
    pub h: f64,
    /// drop the mean of `eta_0`
    #[serde(default)]
    pub enforce_zero_mean_eta: bool,
}

impl RunConfig {
    /// Minimal configuration on the given geometry with all data zero.
    pub fn new(geometry: GeometrySpec) -> Self {
        Self {
            geometry,
            tube_width: default_width(),
            alpha_fraction: default_alpha_fraction(),
            constants: Constants::default(),
            initial: InitialData::default(),
            forcing: ForcingSpec::default(),
            horizon: default_horizon(),
            t_star: None,
            dt: default_dt(),
            picard: PicardConfig::default(),
            thresholds: DegeneracyThresholds::default(),
            kmax: default_kmax(),
            h: default_h(),
            enforce_zero_mean_eta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        positive("tube_width", self.tube_width)?;
        positive("horizon", self.horizon)?;
        positive("dt", self.dt)?;
        positive("h", self.h)?;
        positive("picard.picard_tol", self.picard.picard_tol)?;
        if let Some(ts) = self.t_star {
            positive("t_star", ts)?;
        }
        if self.kmax == 0 {
            return Err(Error::InvalidArgument("kmax must be at least 1".into()));
        }
        if self.picard.max_iter == 0 || !(self.picard.theta_max > 0.0) {
            return Err(Error::InvalidArgument("picard.max_iter and picard.theta_max must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// Geometry, mesh and data shared by all slabs of one run.
pub struct Problem {
    pub config: RunConfig,
    pub geom: ReferenceGeometry,
    pub space: Space,
    pub coords: Vec<Option<(f64, f64)>>,
    pub beam: BeamSpace,
    pub forcing: Forcing,
}

impl Problem {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let curve = config.geometry.curve()?;
        let geom = ReferenceGeometry::new(curve, config.tube_width)?.with_alpha_fraction(config.alpha_fraction)?;
        let space = Space::new(Mesh::build(geom.curve(), config.h)?);
        let coords = tube_coords(&geom, space.quad_points())?;
        let beam = BeamSpace::new(config.kmax);
        if 4 * config.kmax > space.mesh.n_boundary {
            return Err(Error::InvalidArgument(format!(
                "kmax = {} needs at least {} boundary vertices, mesh has {}; refine h",
                config.kmax,
                4 * config.kmax,
                space.mesh.n_boundary
            )));
        }
        let forcing = config.forcing.build()?;
        Ok(Self { config, geom, space, coords, beam, forcing })
    }

    /// Coefficient fields and operators frozen at displacement `eta`.
    pub fn frozen(&self, eta: &[f64]) -> Result<(HanzawaField, Operators)> {
        let map = HanzawaMap::new(&self.geom, &PeriodicField::from_real_modes(eta))?;
        let field = HanzawaField::from_coords(&map, self.space.quad_points(), &self.coords)?;
        let ops = assemble(&self.space, &field)?;
        Ok((field, ops))
    }

    /// Real modes of a periodic expression in `y`.
    fn modes_of(&self, e: &Expr) -> Result<Vec<f64>> {
        let e = e.with_vars(&["y"])?;
        let n = 8 * self.config.kmax + 8;
        let samples: Vec<f64> = (0..n).map(|j| e.eval(&[j as f64 / n as f64])).collect();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("expression {:?} is not finite on [0, 1)", e.text())));
        }
        Ok(PeriodicField::from_samples(&samples, self.config.kmax).to_real_modes())
    }

    /// Initial state: displacement and beam velocity projected on the modes,
    /// fluid velocity interpolated and corrected so that the interface
    /// condition and the discrete divergence constraint hold at `eta_0`.
    pub fn initial_state(&self) -> Result<(CoupledState, InitialReport)> {
        let cfg = &self.config;
        let mut eta = self.modes_of(&cfg.initial.eta0)?;
        if cfg.enforce_zero_mean_eta {
            eta[0] = 0.0;
        }
        let field = PeriodicField::from_real_modes(&eta);
        let sup = field.sup_norm(crate::geometry::check_resolution(cfg.kmax));
        if sup >= self.geom.alpha() {
            return Err(Error::DisplacementTooLarge { sup, bound: self.geom.alpha() });
        }
        let rep = degeneracy_check_with(&self.geom, &field, &cfg.thresholds);
        if !rep.ok() {
            return Err(Error::InvalidArgument(format!("initial displacement is degenerate: {}", rep.describe())));
        }
        if self_intersection_check(&self.geom, &field) {
            return Err(Error::InvalidArgument("initial boundary self-intersects".into()));
        }
        let mut w = self.modes_of(&cfg.initial.eta1)?;
        let (_, ops) = self.frozen(&eta)?;
        let system = CoupledSystem::new(&self.space, &ops, self.geom.curve(), self.beam, cfg.constants, cfg.dt)?;

        let ux = cfg.initial.u0[0].with_vars(&["x", "y"])?;
        let uy = cfg.initial.u0[1].with_vars(&["x", "y"])?;
        let map = HanzawaMap::new(&self.geom, &field)?;
        let mut u = vec![0.0; self.space.n_velocity()];
        if !(ux.is_zero() && uy.is_zero()) {
            for (i, &x) in self.space.nodes.iter().enumerate() {
                let xp = map.apply(x)?;
                u[2 * i] = ux.eval(&[xp.x, xp.y]);
                u[2 * i + 1] = uy.eval(&[xp.x, xp.y]);
            }
        }
        system.impose_interface(&mut u, &w);
        // a uniform beam motion absorbs the net flux
        let flux: f64 = ops.div.matvec(&u).iter().sum();
        let flux_shift = -flux / system.denominator;
        w[0] += flux_shift;
        system.impose_interface(&mut u, &w);
        let defect = ops.div.matvec(&u);
        let defect_before = defect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if defect_before > 0.0 {
            let solver = StokesSolver::new(&self.space, &ops, 1.0)?;
            let zero = vec![0.0; self.space.n_velocity()];
            let g: Vec<f64> = defect.iter().map(|v| -v).collect();
            let v = solver.solve(&zero, &zero, &g)?.velocity;
            u.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        let defect_after = ops.div.matvec(&u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let state = CoupledState { t: 0.0, u, p0: vec![0.0; self.space.n_pressure()], c_pi: 0.0, eta, w };
        let interface_error = system.interface_error(&state);
        Ok((state, InitialReport { flux_shift, defect_before, defect_after, interface_error }))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InitialReport {
    /// constant added to the initial beam velocity to balance the flux
    pub flux_shift: f64,
    /// `max |B u_0|` before and after the divergence correction
    pub defect_before: f64,
    pub defect_after: f64,
    pub interface_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    SelfIntersection,
    Degeneracy,
    DisplacementLimit,
    SolverFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::SelfIntersection => "self_intersection",
            Termination::Degeneracy => "degeneracy",
            Termination::DisplacementLimit => "displacement_limit",
            Termination::SolverFailure => "solver_failure",
        }
    }
}

/// One accepted time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub work_f: f64,
    pub work_g: f64,
    pub residual: f64,
    pub c_pi: f64,
    pub c_pi_residual: f64,
    pub p0_mean: f64,
    pub slab: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabRecord {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
    /// slab lengths tried and rejected before acceptance
    pub rejected: Vec<(usize, String)>,
    pub iterations: usize,
    pub distances: Vec<f64>,
    pub thetas: Vec<f64>,
    pub self_consistency: f64,
    /// size of the divergence source at the slab start
    pub h0_norm: f64,
    /// state index of the slab start in the run's state list
    pub first_level: usize,
}

/// Left- and right-hand side quantities of the acceleration estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AccelerationDiagnostics {
    pub sup_grad_u: f64,
    pub int_fluid: f64,
    pub sup_beam: f64,
    pub int_beam: f64,
    pub lhs: f64,
    pub data_u0: f64,
    pub data_beam: f64,
    pub data_g: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluates the acceleration quantities over `states` (uniform step `dt`);
/// `g` holds the beam load modes at every level.
pub fn acceleration_diagnostics(space: &Space, states: &[CoupledState], dt: f64, g: &[Vec<f64>]) -> AccelerationDiagnostics {
    let mut d = AccelerationDiagnostics::default();
    if states.is_empty() {
        return d;
    }
    let grad_sq = |u: &[f64]| -> f64 { (0..space.n_quad()).map(|q| space.quad.w[q] * space.velocity_grad_at(u, q).norm_squared()).sum() };
    for (n, s) in states.iter().enumerate() {
        d.sup_grad_u = d.sup_grad_u.max(grad_sq(&s.u));
        d.sup_beam = d.sup_beam.max(beam_seminorm_sq(&s.w, 1) + beam_seminorm_sq(&s.eta, 3));
        if n == 0 {
            continue;
        }
        let prev = &states[n - 1];
        let p = s.pressure();
        let du: Vec<f64> = s.u.iter().zip(&prev.u).map(|(a, b)| (a - b) / dt).collect();
        let fluid: f64 = (0..space.n_quad())
            .map(|q| {
                let hs = space.velocity_hessian_at(&s.u, q);
                space.quad.w[q]
                    * (hs[0].norm_squared()
                        + hs[1].norm_squared()
                        + space.velocity_at(&du, q).norm_squared()
                        + space.pressure_grad_at(&p, q).norm_squared())
            })
            .sum();
        let wt: Vec<f64> = s.w.iter().zip(&prev.w).map(|(a, b)| (a - b) / dt).collect();
        d.int_fluid += dt * fluid;
        d.int_beam += dt * (beam_seminorm_sq(&s.w, 2) + beam_seminorm_sq(&wt, 0));
        if let Some(gn) = g.get(n) {
            d.data_g += dt * beam_seminorm_sq(gn, 1);
        }
    }
    d.data_u0 = grad_sq(&states[0].u);
    d.data_beam = beam_seminorm_sq(&states[0].eta, 3) + beam_seminorm_sq(&states[0].w, 1);
    d.lhs = d.sup_grad_u + d.int_fluid + d.sup_beam + d.int_beam;
    d.rhs = d.data_u0 + d.data_beam + d.data_g;
    d.ratio = d.lhs / (d.rhs + 1.0);
    d
}

/// Iteration log entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardRow {
    pub slab: usize,
    pub iter: usize,
    pub distance: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub termination: Termination,
    /// human-readable cause for a non-horizon stop
    pub detail: String,
    /// every accepted level, starting with the initial state
    pub states: Vec<CoupledState>,
    pub ledger: Vec<LedgerRow>,
    pub slabs: Vec<SlabRecord>,
    pub picard_log: Vec<PicardRow>,
    pub initial: InitialReport,
    pub diagnostics: AccelerationDiagnostics,
    pub slab_diagnostics: Vec<AccelerationDiagnostics>,
}

impl RunOutput {
    pub fn final_state(&self) -> &CoupledState {
        self.states.last().expect("at least the initial state")
    }
}

/// Which monitor (if any) rejects displacement `eta`.
pub fn classify(geom: &ReferenceGeometry, eta: &[f64], thresholds: &DegeneracyThresholds) -> Option<(Termination, String)> {
    let field = PeriodicField::from_real_modes(eta);
    if self_intersection_check(geom, &field) {
        return Some((Termination::SelfIntersection, "deformed boundary crosses itself".into()));
    }
    let rep = degeneracy_check_with(geom, &field, thresholds);
    if !rep.ok() {
        return Some((Termination::Degeneracy, rep.describe()));
    }
    let sup = field.sup_norm(crate::geometry::check_resolution(field.kmax()));
    if sup >= DISPLACEMENT_GUARD * geom.alpha() {
        return Some((
            Termination::DisplacementLimit,
            format!("|eta|_inf = {sup:.4e} reached {DISPLACEMENT_GUARD} alpha = {:.4e}", DISPLACEMENT_GUARD * geom.alpha()),
        ));
    }
    None
}

/// Picard iterates are checked against half the run thresholds so that a
/// slab is only rejected by the monitors after it has converged.
fn iterate_thresholds(t: &DegeneracyThresholds) -> DegeneracyThresholds {
    DegeneracyThresholds {
        speed_fraction: 0.5 * t.speed_fraction,
        normal_alignment: 0.5 * t.normal_alignment,
        tube_margin_fraction: 0.5 * t.tube_margin_fraction,
    }
}

/// Runs the configured problem to the horizon or to the first stop.
pub fn run(problem: &Problem) -> Result<RunOutput> {
    let (initial, report) = problem.initial_state()?;
    Ok(run_from(problem, initial, report))
}

/// Continuation from a given initial state; failures become termination reasons.
pub fn run_from(problem: &Problem, initial: CoupledState, initial_report: InitialReport) -> RunOutput {
    let cfg = &problem.config;
    let dt = cfg.dt;
    let n_total = cfg.n_steps();
    let min_steps = ((cfg.horizon * MIN_SLAB_FRACTION / dt).ceil() as usize).max(1);
    let mut slab_steps = ((cfg.t_star.unwrap_or(cfg.horizon) / dt).round() as usize).clamp(1, n_total);
    let mut picard_cfg = cfg.picard;
    picard_cfg.thresholds = iterate_thresholds(&cfg.thresholds);

    let mut out = RunOutput {
        termination: Termination::Horizon,
        detail: String::new(),
        states: vec![initial],
        ledger: vec![],
        slabs: vec![],
        picard_log: vec![],
        initial: initial_report,
        diagnostics: AccelerationDiagnostics::default(),
        slab_diagnostics: vec![],
    };
    let mut done = 0;
    'slabs: while done < n_total {
        let start = out.final_state().clone();
        let frozen = problem.frozen(&start.eta);
        let (field0, ops) = match frozen {
            Ok(v) => v,
            Err(e) => {
                stop(&mut out, Termination::SolverFailure, format!("assembly at t = {:.4}: {e}", start.t));
                break;
            }
        };
        let system = match CoupledSystem::new(&problem.space, &ops, problem.geom.curve(), problem.beam, cfg.constants, dt) {
            Ok(s) => s,
            Err(e) => {
                stop(&mut out, Termination::SolverFailure, format!("coupled system at t = {:.4}: {e}", start.t));
                break;
            }
        };
        let mut n = slab_steps.min(n_total - done);
        let mut rejected = Vec::new();
        let (traj, rep) = loop {
            let slab = Slab {
                geom: &problem.geom,
                space: &problem.space,
                coords: &problem.coords,
                field0: &field0,
                system: &system,
                forcing: &problem.forcing,
                t0: start.t,
                n_steps: n,
            };
            match picard_solve(&slab, &start, &picard_cfg) {
                Ok(v) => break v,
                Err(e @ (Error::SlabTooLong { .. } | Error::MaxIterExceeded(_) | Error::DegeneracyDuringIteration { .. })) => {
                    rejected.push((n, e.to_string()));
                    if n > min_steps && n > 1 {
                        n = n.div_ceil(2).max(min_steps);
                        continue;
                    }
                    // shortest slab failed: see whether the geometry is at fault
                    let (reason, detail) = match &e {
                        Error::DegeneracyDuringIteration { .. } => {
                            let probe = Trajectory::constant(&start, dt, n);
                            let loose = DegeneracyThresholds { speed_fraction: 0.0, normal_alignment: -1.0, tube_margin_fraction: -1.0 };
                            match picard_map(&slab, &probe, &start, &loose) {
                                Ok(t) => t
                                    .states
                                    .iter()
                                    .find_map(|s| classify(&problem.geom, &s.eta, &cfg.thresholds))
                                    .unwrap_or((Termination::SolverFailure, e.to_string())),
                                Err(e2) => (Termination::SolverFailure, format!("{e}; {e2}")),
                            }
                        }
                        _ => (Termination::SolverFailure, format!("shortest slab ({n} steps) failed: {e}")),
                    };
                    out.slabs.push(SlabRecord {
                        index: out.slabs.len(),
                        t0: start.t,
                        t1: start.t,
                        n_steps: 0,
                        rejected,
                        iterations: 0,
                        distances: vec![],
                        thetas: vec![],
                        self_consistency: f64::NAN,
                        h0_norm: f64::NAN,
                        first_level: out.states.len() - 1,
                    });
                    stop(&mut out, reason, detail);
                    break 'slabs;
                }
                Err(e) => {
                    stop(&mut out, Termination::SolverFailure, format!("slab at t = {:.4}: {e}", start.t));
                    break 'slabs;
                }
            }
        };
        slab_steps = n;
        let index = out.slabs.len();
        let first_level = out.states.len() - 1;
        for (i, (&d, theta)) in rep.distances.iter().zip(std::iter::once(f64::NAN).chain(rep.thetas.iter().copied())).enumerate() {
            out.picard_log.push(PicardRow { slab: index, iter: i + 1, distance: d, theta });
        }
        out.slabs.push(SlabRecord {
            index,
            t0: start.t,
            t1: traj.last().t,
            n_steps: n,
            rejected,
            iterations: rep.iterations,
            distances: rep.distances.clone(),
            thetas: rep.thetas.clone(),
            self_consistency: rep.self_consistency,
            h0_norm: rep.h0_norm,
            first_level,
        });
        for (s, r) in traj.states.into_iter().skip(1).zip(traj.reports) {
            out.ledger.push(LedgerRow {
                t: s.t,
                energy: r.energy,
                dissipation: r.dissipation,
                work_f: r.work_f,
                work_g: r.work_g,
                residual: r.residual,
                c_pi: r.c_pi,
                c_pi_residual: r.c_pi_residual,
                p0_mean: r.p0_mean,
                slab: index,
            });
            let verdict = classify(&problem.geom, &s.eta, &cfg.thresholds);
            out.states.push(s);
            done += 1;
            if let Some((reason, detail)) = verdict {
                let t = out.final_state().t;
                stop(&mut out, reason, format!("t = {t:.4}: {detail}"));
                break 'slabs;
            }
        }
    }
    finish_diagnostics(problem, &mut out);
    out
}

fn stop(out: &mut RunOutput, reason: Termination, detail: String) {
    out.termination = reason;
    out.detail = detail;
}

fn finish_diagnostics(problem: &Problem, out: &mut RunOutput) {
    let g: Vec<Vec<f64>> = out.states.iter().map(|s| problem.forcing.beam_modes(s.t, problem.beam)).collect();
    let dt = problem.config.dt;
    out.diagnostics = acceleration_diagnostics(&problem.space, &out.states, dt, &g);
    out.slab_diagnostics = out
        .slabs
        .iter()
        .filter(|s| s.n_steps > 0)
        .map(|s| {
            let a = s.first_level;
            let b = (a + s.n_steps + 1).min(out.states.len());
            acceleration_diagnostics(&problem.space, &out.states[a..b], dt, &g[a..b])
        })
        .collect();
}

/// Kinetic plus elastic energy of a state measured with the given operators.
pub fn state_energy(ops: &Operators, beam: BeamSpace, c: &Constants, s: &CoupledState) -> f64 {
    let bend = beam.bending_diag();
    0.5 * c.rho_f * dot(&ops.mass.matvec(&s.u), &s.u)
        + 0.5 * c.rho_s * dot(&s.w, &s.w)
        + 0.5 * c.alpha * s.eta.iter().zip(&bend).map(|(e, b)| b * e * e).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys_and_needs_geometry() {
        let ok: RunConfig = serde_json::from_str(r#"{"geometry": {"shape": "circle", "radius": 1.0}}"#).unwrap();
        assert_eq!(ok.horizon, 1.0);
        assert!(serde_json::from_str::<RunConfig>(r#"{"horizon": 1.0}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"geometry": {"shape": "circle", "radius": 1.0}, "bogus": 1}"#).is_err());
        let bad: RunConfig = serde_json::from_str(r#"{"geometry": {"shape": "circle", "radius": 1.0}, "dt": -1}"#).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn c_ring_is_closed_and_valid() {
        let spec = GeometrySpec::CRing { outer: 1.0, inner: 0.5, gap: 0.06, kmax: 64 };
        let curve = spec.curve().unwrap();
        let seg = CRingSegments::new(1.0, 0.5, 0.06).unwrap();
        assert!((seg.point(0.0) - seg.point(1.0 - 1e-12)).norm() < 1e-9);
        let (a, b) = spec.c_ring_tips().unwrap();
        // tips face each other across the gap
        let gap = (curve.point(a) - curve.point(b)).norm();
        assert!((gap - 0.06).abs() < 0.01, "{gap}");
        ReferenceGeometry::new(curve, 0.1).unwrap();
    }

    #[test]
    fn zero_data_run_stays_zero() {
        let mut cfg = RunConfig::new(GeometrySpec::Circle { radius: 1.0 });
        cfg.h = 0.3;
        cfg.kmax = 3;
        cfg.dt = 0.25;
        let p = Problem::new(cfg).unwrap();
        let out = run(&p).unwrap();
        assert_eq!(out.termination, Termination::Horizon);
        assert_eq!(out.ledger.len(), 4);
        assert!(out.ledger.iter().all(|r| r.energy == 0.0 && r.residual == 0.0 && r.c_pi == 0.0));
        assert_eq!(out.diagnostics.ratio, 0.0);
    }
}
