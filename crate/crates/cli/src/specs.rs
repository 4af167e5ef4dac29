//! Experiment specs for the subcommands other than `run`.

use fsi_core::driver::GeometrySpec;
use fsi_core::expr::Expr;
use serde::Deserialize;

fn default_mu() -> f64 {
    1.0
}

fn default_width() -> f64 {
    0.3
}

fn default_alpha_fraction() -> f64 {
    0.5
}

/// Volume load: the built-in manufactured load or two expressions in `x, y`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LoadSpec {
    Named(String),
    Fields { fx: Expr, fy: Expr },
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec::Named("manufactured".into())
    }
}

impl LoadSpec {
    pub fn is_manufactured(&self) -> bool {
        matches!(self, LoadSpec::Named(n) if n == "manufactured")
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            LoadSpec::Named(n) if n != "manufactured" => Err(format!("unknown load {n:?} (expected \"manufactured\" or {{fx, fy}})")),
            LoadSpec::Fields { fx, fy } => {
                for e in [fx, fy] {
                    e.with_vars(&["x", "y"]).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Boundary family for `stokes-bench`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// unit disk; `family_param` is 0
    Disk,
    /// `r = 1 + a cos(2 pi m y) / m^p`, one row block per `m`
    Radial { a: f64, m: Vec<usize>, p: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesBench {
    pub family: Family,
    pub h: Vec<f64>,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySweep {
    pub a: f64,
    pub m: Vec<usize>,
    /// decay exponents, e.g. `[1.1, 1.6]`
    pub p: Vec<f64>,
    pub h: f64,
    #[serde(default)]
    pub load: LoadSpec,
    /// half-width of the boundary chart used for the Lipschitz column
    #[serde(default = "default_chart_radius")]
    pub chart_radius: f64,
}

fn default_chart_radius() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartsSpec {
    pub geometry: GeometrySpec,
    #[serde(default = "default_width")]
    pub tube_width: f64,
    #[serde(default = "default_alpha_fraction")]
    pub alpha_fraction: f64,
    /// displacement in `y`
    pub eta: Expr,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    /// reference points where the map and its coefficients are sampled
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    /// boundary parameters where local graph charts are built
    #[serde(default)]
    pub boundary_params: Vec<f64>,
    #[serde(default = "default_chart_radius")]
    pub radius: f64,
}

fn default_kmax() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsSpec {
    /// periodic field in `y`
    pub field: Expr,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    pub s: Vec<f64>,
    /// truncation of the multiplier estimate
    #[serde(default = "default_kcap")]
    pub kcap: usize,
}

fn default_kcap() -> usize {
    32
}
