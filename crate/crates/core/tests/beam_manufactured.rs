//! Coupled step against a closed-form beam motion on the unit disk.
//!
//! eta(t, y) = exp(-t) cos(2 pi y), and the fluid follows the boundary with
//! u = c(t) (x^2, x y), c = -exp(-t), which equals (d_t eta) n on the unit
//! circle. The pressure vanishes; the fluid needs the volume load
//! rho_f c' (x^2, x y) - mu c (2, 0) and the divergence source 3 c x. The
//! beam load collects inertia, viscosity, bending and the normal traction
//! 2 mu c x of the fluid, which on mode sqrt2 cos(2 pi y) integrates to
//! 2 sqrt2 pi mu c.

use fsi_core::assembly::{assemble, BeamSpace};
use fsi_core::coupled::{Constants, CoupledState, CoupledSystem, SourceBundle};
use fsi_core::fem::Space;
use fsi_core::geometry::hanzawa::{HanzawaField, M2};
use fsi_core::geometry::{Curve, V2};
use fsi_core::mesh::Mesh;
use std::f64::consts::{PI, SQRT_2};

fn run(space: &Space, curve: &Curve, dt: f64, t_end: f64) -> f64 {
    let consts = Constants { rho_f: 1.0, rho_s: 1.0, gamma: 0.5, alpha: 0.01, mu: 1.0 };
    let field = HanzawaField::identity(space.quad_points(), 2);
    let ops = assemble(space, &field).unwrap();
    let beam = BeamSpace::new(2);
    let sys = CoupledSystem::new(space, &ops, curve, beam, consts, dt).unwrap();
    let amp = |t: f64| (-t).exp() / SQRT_2;
    let c = |t: f64| -(-t).exp();
    let two_pi = 2.0 * PI;
    let mut state = CoupledState::zero(space, beam, 0.0);
    state.eta[1] = amp(0.0);
    state.w[1] = -amp(0.0);
    state.u = space.interpolate(|x| V2::new(x.x * x.x, x.x * x.y) * c(0.0));
    sys.impose_interface(&mut state.u, &state.w);
    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        let t = state.t + dt;
        let (ct, dct) = (c(t), -c(t));
        let xs = space.quad_points();
        let mut g = vec![0.0; beam.n_modes()];
        let a = amp(t);
        g[1] = consts.rho_s * a - consts.gamma * two_pi.powi(2) * a + consts.alpha * two_pi.powi(4) * a + 2.0 * SQRT_2 * PI * consts.mu * ct;
        let src = SourceBundle {
            bfh: xs.iter().map(|x| V2::new(x.x * x.x, x.x * x.y) * (consts.rho_f * dct) - V2::new(2.0, 0.0) * (consts.mu * ct)).collect(),
            flux: vec![M2::zeros(); xs.len()],
            h: xs.iter().map(|x| 3.0 * ct * x.x).collect(),
            g,
        };
        state = sys.step(&state, &src).unwrap().0;
    }
    let exact = amp(state.t);
    let others: f64 = state.eta.iter().enumerate().filter(|(m, _)| *m != 1).map(|(_, v)| v.abs()).sum();
    (state.eta[1] - exact).abs() + others
}

#[test]
fn beam_mode_converges_first_order_in_time() {
    let curve = Curve::circle(1.0);
    let space = Space::new(Mesh::build(&curve, 0.1).unwrap());
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| run(&space, &curve, dt, 0.5)).collect();
    eprintln!("eta error at t = 0.5: {errs:?}");
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 0.8 && rate < 1.3, "errors {errs:?}");
    }
}
