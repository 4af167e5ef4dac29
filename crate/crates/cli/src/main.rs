//! `fsi`: run simulations and verification experiments from JSON specs.
//!
//! Exit codes: 0 success, 1 output failure, 2 configuration error,
//! 3 run stopped before the horizon (reason on stderr).

mod output;
mod specs;

use clap::{Parser, Subcommand};
use fsi_core::assembly::{assemble, load_vector};
use fsi_core::driver::{run, Problem, RunConfig, RunOutput, Termination};
use fsi_core::fem::Space;
use fsi_core::fourier::PeriodicField;
use fsi_core::geometry::chart::{chart_lipschitz, local_chart};
use fsi_core::geometry::hanzawa::{HanzawaField, HanzawaMap};
use fsi_core::geometry::{Curve, ReferenceGeometry, V2};
use fsi_core::mesh::Mesh;
use fsi_core::spaces::norms::{fractional_norm, multiplier_norm_estimate};
use fsi_core::stokes::{manufactured, pressure_error, radial_family_curve, regularity_ratio, velocity_error, StokesSolver};
use output::{full, write_csv, write_json, Manifest};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use specs::{ChartsSpec, Family, LoadSpec, NormsSpec, RegularitySweep, StokesBench};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fsi", version, about = "Fluid-beam interaction on moving 2D domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON spec for the subcommand
    #[arg(long)]
    config: PathBuf,
    /// output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// worker threads; 0 uses all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// seed recorded in the manifest
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coupled run: ledger, Picard log, beam modes, VTK snapshots
    Run {
        #[command(flatten)]
        common: Common,
        /// number of evenly spaced VTK snapshots besides the final state
        #[arg(long, default_value_t = 4)]
        snapshots: usize,
    },
    /// Steady Stokes on a boundary family over a list of mesh sizes
    StokesBench {
        #[command(flatten)]
        common: Common,
    },
    /// Regularity ratio over rough and smooth boundary families
    RegularitySweep {
        #[command(flatten)]
        common: Common,
    },
    /// Hanzawa map samples and local boundary charts
    Charts {
        #[command(flatten)]
        common: Common,
    },
    /// Fractional Sobolev norms and multiplier estimates of a periodic field
    Norms {
        #[command(flatten)]
        common: Common,
    },
    /// Write a matplotlib script for a produced CSV
    PlotEmit {
        /// CSV file to plot
        csv: PathBuf,
        /// script path; defaults to the CSV path with extension .py
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Output(String),
    Early(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        match self {
            Failure::Config(m) => {
                eprintln!("config error: {}", m.replace('\n', " "));
                ExitCode::from(2)
            }
            Failure::Output(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
            Failure::Early(m) => {
                eprintln!("{m}");
                ExitCode::from(3)
            }
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn read_spec<T: DeserializeOwned>(path: &Path) -> Outcome<(T, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let spec = serde_json::from_slice(&bytes).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok((spec, bytes))
}

fn prepare(common: &Common) -> Outcome<()> {
    if common.threads > 0 {
        // fails only if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
    }
    std::fs::create_dir_all(&common.out).map_err(|e| Failure::Output(format!("{}: {e}", common.out.display())))
}

fn finish(common: &Common, name: &str, raw: &[u8], outputs: Vec<String>, termination: Option<String>) -> Outcome<()> {
    let manifest = Manifest {
        subcommand: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: common.config.display().to_string(),
        config_sha256: output::sha256_hex(raw),
        seed: common.seed,
        threads: if common.threads == 0 { rayon::current_num_threads() } else { common.threads },
        outputs,
        termination,
    };
    write_json(&common.out.join("manifest.json"), &manifest).map_err(Failure::Output)
}

fn cmd_run(common: &Common, snapshots: usize) -> Outcome<()> {
    let (cfg, raw): (RunConfig, _) = read_spec(&common.config)?;
    let problem = Problem::new(cfg).map_err(|e| Failure::Config(e.to_string()))?;
    prepare(common)?;
    let out = run(&problem).map_err(|e| Failure::Config(e.to_string()))?;
    let mut files = write_run(common, &problem, &out, snapshots).map_err(Failure::Output)?;
    files.push("manifest.json".into());
    finish(common, "run", &raw, files, Some(out.termination.as_str().into()))?;
    if out.termination != Termination::Horizon {
        return Err(Failure::Early(format!(
            "run stopped early at t = {}: {} ({})",
            out.final_state().t,
            out.termination.as_str(),
            out.detail
        )));
    }
    Ok(())
}

fn write_run(common: &Common, problem: &Problem, out: &RunOutput, snapshots: usize) -> Result<Vec<String>, String> {
    let dir = &common.out;
    let ledger: Vec<_> = out
        .ledger
        .iter()
        .map(|r| full(&[r.t, r.energy, r.dissipation, r.work_f, r.work_g, r.residual, r.c_pi]))
        .collect();
    write_csv(&dir.join("ledger.csv"), &["t", "E", "D", "work_f", "work_g", "residual", "c_pi"], &ledger)?;
    let picard: Vec<_> = out.picard_log.iter().map(|r| full(&[r.slab as f64, r.iter as f64, r.distance, r.theta])).collect();
    write_csv(&dir.join("picard.csv"), &["slab", "iter", "distance", "theta"], &picard)?;
    output::write_beam_modes(&dir.join("beam_modes.csv"), out.final_state())?;
    write_json(&dir.join("slabs.json"), &out.slabs)?;
    write_json(
        &dir.join("diagnostics.json"),
        &serde_json::json!({
            "termination": out.termination,
            "detail": out.detail,
            "initial": out.initial,
            "global": out.diagnostics,
            "per_slab": out.slab_diagnostics,
        }),
    )?;
    let mut files: Vec<String> =
        ["ledger.csv", "picard.csv", "beam_modes.csv", "slabs.json", "diagnostics.json"].iter().map(|s| s.to_string()).collect();
    let n = out.states.len();
    let mut levels: Vec<usize> = (0..snapshots).map(|i| i * (n - 1) / snapshots.max(1)).collect();
    levels.push(n - 1);
    levels.dedup();
    for l in levels {
        let name = format!("state_{l:05}.vtk");
        output::write_vtk(&dir.join(&name), problem, &out.states[l])?;
        files.push(name);
    }
    Ok(files)
}

fn load_at(load: &LoadSpec, x: V2) -> V2 {
    match load {
        LoadSpec::Fields { fx, fy } => V2::new(fx.eval(&[0.0, x.x, x.y]), fy.eval(&[0.0, x.x, x.y])),
        LoadSpec::Named(_) => manufactured::load(x),
    }
}

/// `(ratio, h1 error, l2 pressure error)`; errors only for the manufactured disk case.
fn stokes_row(curve: &Curve, h: f64, load: &LoadSpec, mu: f64, exact: bool) -> Result<(f64, Option<f64>, Option<f64>), String> {
    let space = Space::new(Mesh::build(curve, h).map_err(|e| e.to_string())?);
    let ops = assemble(&space, &HanzawaField::identity(space.quad_points(), 1)).map_err(|e| e.to_string())?;
    let f: Vec<V2> = space.quad_points().iter().map(|&x| load_at(load, x)).collect();
    let zu = vec![0.0; space.n_velocity()];
    let zp = vec![0.0; space.n_pressure()];
    let sol = StokesSolver::new(&space, &ops, mu)
        .and_then(|s| s.solve(&load_vector(&space, &f), &zu, &zp))
        .map_err(|e| e.to_string())?;
    let ratio = regularity_ratio(&space, &sol, &f).map_err(|e| e.to_string())?;
    if !exact {
        return Ok((ratio, None, None));
    }
    let (_, h1) = velocity_error(&space, &sol.velocity, manufactured::velocity, manufactured::velocity_grad);
    let l2 = pressure_error(&space, &sol.pressure, manufactured::pressure);
    Ok((ratio, Some(h1), Some(l2)))
}

fn cmd_stokes_bench(common: &Common) -> Outcome<()> {
    let (spec, raw): (StokesBench, _) = read_spec(&common.config)?;
    spec.load.validate().map_err(Failure::Config)?;
    if spec.h.is_empty() || spec.h.iter().any(|&h| !(h > 0.0)) || !(spec.mu > 0.0) {
        return Err(Failure::Config("h must be a nonempty list of positive sizes and mu positive".into()));
    }
    prepare(common)?;
    let cases: Vec<(f64, Curve, bool)> = match &spec.family {
        Family::Disk => vec![(0.0, Curve::circle(1.0), spec.load.is_manufactured())],
        Family::Radial { a, m, p } => m.iter().map(|&m| (m as f64, radial_family_curve(*a, m, *p), false)).collect(),
    };
    let jobs: Vec<(usize, f64)> = (0..cases.len()).flat_map(|c| spec.h.iter().map(move |&h| (c, h))).collect();
    let rows: Result<Vec<_>, String> = jobs
        .par_iter()
        .map(|&(c, h)| {
            let (param, curve, exact) = &cases[c];
            let (ratio, h1, l2) = stokes_row(curve, h, &spec.load, spec.mu, *exact)?;
            Ok(vec![Some(*param), Some(h), Some(ratio), h1, l2])
        })
        .collect();
    let rows = rows.map_err(Failure::Output)?;
    write_csv(&common.out.join("stokes_bench.csv"), &["family_param", "h", "ratio", "h1_err", "l2_err"], &rows).map_err(Failure::Output)?;
    finish(common, "stokes-bench", &raw, vec!["stokes_bench.csv".into(), "manifest.json".into()], None)
}

fn curve_lipschitz(curve: &Curve, radius: f64) -> Option<f64> {
    let geom = ReferenceGeometry::new(curve.clone(), 0.5 * radius).ok()?;
    let x0 = curve.point(0.0);
    local_chart(&geom, &PeriodicField::zeros(1), x0, radius).ok().map(|c| chart_lipschitz(&c))
}

fn cmd_regularity_sweep(common: &Common) -> Outcome<()> {
    let (spec, raw): (RegularitySweep, _) = read_spec(&common.config)?;
    spec.load.validate().map_err(Failure::Config)?;
    if !(spec.h > 0.0) || spec.m.iter().any(|&m| m == 0) {
        return Err(Failure::Config("h must be positive and every m at least 1".into()));
    }
    prepare(common)?;
    let jobs: Vec<(f64, usize)> = spec.p.iter().flat_map(|&p| spec.m.iter().map(move |&m| (p, m))).collect();
    let rows: Result<Vec<_>, String> = jobs
        .par_iter()
        .map(|&(p, m)| {
            let curve = radial_family_curve(spec.a, m, p);
            let (ratio, _, _) = stokes_row(&curve, spec.h, &spec.load, 1.0, false)?;
            Ok(vec![Some(p), Some(m as f64), Some(ratio), curve_lipschitz(&curve, spec.chart_radius)])
        })
        .collect();
    let rows = rows.map_err(Failure::Output)?;
    write_csv(&common.out.join("regularity_sweep.csv"), &["p", "m", "ratio", "chart_lipschitz"], &rows).map_err(Failure::Output)?;
    finish(common, "regularity-sweep", &raw, vec!["regularity_sweep.csv".into(), "manifest.json".into()], None)
}

fn field_from(e: &fsi_core::expr::Expr, kmax: usize) -> Outcome<PeriodicField> {
    let e = e.with_vars(&["y"]).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(PeriodicField::from_fn(kmax, |y| e.eval(&[y])))
}

fn cmd_charts(common: &Common) -> Outcome<()> {
    let (spec, raw): (ChartsSpec, _) = read_spec(&common.config)?;
    let cfg = |e: fsi_core::error::Error| Failure::Config(e.to_string());
    let curve = spec.geometry.curve().map_err(cfg)?;
    let geom = ReferenceGeometry::new(curve, spec.tube_width).and_then(|g| g.with_alpha_fraction(spec.alpha_fraction)).map_err(cfg)?;
    let eta = field_from(&spec.eta, spec.kmax)?;
    let map = HanzawaMap::new(&geom, &eta).map_err(cfg)?;
    prepare(common)?;
    let mut rows = vec![];
    for &[x, y] in &spec.points {
        let c = map.coefficients(V2::new(x, y)).map_err(|e| Failure::Output(format!("point ({x}, {y}): {e}")))?;
        rows.push(full(&[x, y, c.psi.x, c.psi.y, c.j]));
    }
    write_csv(&common.out.join("map.csv"), &["x", "y", "psi_x", "psi_y", "jacobian"], &rows).map_err(Failure::Output)?;
    let mut charts = vec![];
    for &y in &spec.boundary_params {
        let x0 = map.phi_eta(y);
        let lip = local_chart(&geom, &eta, x0, spec.radius).ok().map(|c| chart_lipschitz(&c));
        charts.push(vec![Some(y), Some(x0.x), Some(x0.y), Some(spec.radius), lip]);
    }
    write_csv(&common.out.join("charts.csv"), &["y", "x0", "y0", "radius", "chart_lipschitz"], &charts).map_err(Failure::Output)?;
    finish(common, "charts", &raw, vec!["map.csv".into(), "charts.csv".into(), "manifest.json".into()], None)
}

fn cmd_norms(common: &Common) -> Outcome<()> {
    let (spec, raw): (NormsSpec, _) = read_spec(&common.config)?;
    let f = field_from(&spec.field, spec.kmax)?;
    prepare(common)?;
    let mut rows = vec![];
    for &s in &spec.s {
        let n = fractional_norm(&f, s).map_err(|e| Failure::Config(e.to_string()))?;
        let m = if s >= 1.0 { multiplier_norm_estimate(&f, s, spec.kcap).ok() } else { None };
        rows.push(vec![Some(s), Some(n), m]);
    }
    write_csv(&common.out.join("norms.csv"), &["s", "norm", "multiplier"], &rows).map_err(Failure::Output)?;
    finish(common, "norms", &raw, vec!["norms.csv".into(), "manifest.json".into()], None)
}

fn cmd_plot_emit(csv: &Path, out: Option<&Path>) -> Outcome<()> {
    let script = output::plot_script(csv).map_err(Failure::Config)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| csv.with_extension("py"));
    std::fs::write(&target, script).map_err(|e| Failure::Output(format!("{}: {e}", target.display())))?;
    println!("{}", target.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { common, snapshots } => cmd_run(common, *snapshots),
        Command::StokesBench { common } => cmd_stokes_bench(common),
        Command::RegularitySweep { common } => cmd_regularity_sweep(common),
        Command::Charts { common } => cmd_charts(common),
        Command::Norms { common } => cmd_norms(common),
        Command::PlotEmit { csv, out } => cmd_plot_emit(csv, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
