//! Run configuration: a single TOML file with sections per pipeline stage.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use stripbif_core::grid::Grid1D;
use stripbif_core::operator::BumpPotential;
use stripbif_core::reduction::{Pipeline, SymmetryMode};
use stripbif_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelCfg,
    pub grid: GridCfg,
    pub transverse: TransverseCfg,
    #[serde(default)]
    pub profile: ProfileCfg,
    #[serde(default)]
    pub crossing: CrossingCfg,
    #[serde(default)]
    pub contour: ContourCfg,
    #[serde(default)]
    pub tolerances: TolCfg,
    #[serde(default)]
    pub branch: BranchCfg,
    #[serde(default)]
    pub decay: DecayCfg,
    #[serde(default)]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    /// One of: synthetic_o2, synthetic_so2, burgers.
    pub name: String,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_u_minus")]
    pub u_minus: Vec<f64>,
    #[serde(default = "default_u_plus")]
    pub u_plus: Vec<f64>,
    /// Optional override of the localized crossing potential.
    #[serde(default)]
    pub bump: Option<BumpCfg>,
}

fn default_u_minus() -> Vec<f64> {
    vec![1.0]
}
fn default_u_plus() -> Vec<f64> {
    vec![-1.0]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpCfg {
    pub eps0: f64,
    pub amp: f64,
    pub x0: f64,
    #[serde(default)]
    pub amp_im: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub l: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseCfg {
    pub k_star: i64,
    pub k_max: i64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileCfg {
    pub eps: f64,
}

impl Default for ProfileCfg {
    fn default() -> Self {
        ProfileCfg { eps: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingCfg {
    pub eps_min: f64,
    pub eps_max: f64,
    pub n_samples: usize,
    pub center_re: f64,
    pub center_im: f64,
    pub tol_eps: f64,
}

impl Default for CrossingCfg {
    fn default() -> Self {
        CrossingCfg {
            eps_min: 0.0,
            eps_max: 1.2,
            n_samples: 25,
            center_re: 1.0,
            center_im: 0.0,
            tol_eps: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourCfg {
    pub radius: f64,
    pub q: usize,
}

impl Default for ContourCfg {
    fn default() -> Self {
        ContourCfg { radius: 0.12, q: 32 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolCfg {
    pub tol_fix: f64,
    pub tol_eig: f64,
    pub tol_red: f64,
    pub tol_sing: f64,
    pub tol_rh: f64,
    pub tol_transversal: f64,
}

impl Default for TolCfg {
    fn default() -> Self {
        TolCfg {
            tol_fix: 1e-11,
            tol_eig: 1e-7,
            tol_red: 1e-6,
            tol_sing: 1e-10,
            tol_rh: 1e-10,
            tol_transversal: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchCfg {
    /// O2 or SO2.
    pub symmetry: String,
    pub s_values: Vec<f64>,
    pub d_override: Option<f64>,
    /// Reflection state matrix rows (identity when omitted).
    pub r_matrix: Option<Vec<Vec<f64>>>,
}

impl Default for BranchCfg {
    fn default() -> Self {
        BranchCfg {
            symmetry: "O2".into(),
            s_values: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            d_override: None,
            r_matrix: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayCfg {
    pub l: f64,
    pub n: usize,
    pub k_list: Vec<i64>,
}

impl Default for DecayCfg {
    fn default() -> Self {
        DecayCfg {
            l: 20.0,
            n: 6401,
            k_list: vec![8, 16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: String,
}

impl Default for OutputCfg {
    fn default() -> Self {
        OutputCfg { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n % 2 == 0 || self.grid.n < 3 {
            return Err(Error::Config(format!(
                "grid.n must be odd and at least 3, got {}",
                self.grid.n
            )));
        }
        if self.grid.l <= 0.0 {
            return Err(Error::Config("grid.l must be positive".into()));
        }
        if !self.contour.q.is_power_of_two() || self.contour.q < 4 {
            return Err(Error::Config(format!(
                "contour.q must be a power of two >= 4, got {}",
                self.contour.q
            )));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_fix", t.tol_fix),
            ("tol_eig", t.tol_eig),
            ("tol_red", t.tol_red),
            ("tol_sing", t.tol_sing),
            ("tol_rh", t.tol_rh),
            ("tol_transversal", t.tol_transversal),
            ("contour.radius", self.contour.radius),
        ] {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.crossing.n_samples < 2 {
            return Err(Error::Config("crossing.n_samples must be at least 2".into()));
        }
        if self.crossing.eps_max <= self.crossing.eps_min {
            return Err(Error::Config("crossing range is empty".into()));
        }
        if self.transverse.k_star < 1 || self.transverse.k_max < self.transverse.k_star {
            return Err(Error::Config(
                "need 1 <= transverse.k_star <= transverse.k_max".into(),
            ));
        }
        if self.branch.s_values.is_empty() {
            return Err(Error::Config("branch.s_values is empty".into()));
        }
        match self.branch.symmetry.as_str() {
            "O2" | "SO2" => {}
            other => {
                return Err(Error::Config(format!(
                    "branch.symmetry must be O2 or SO2, got {other}"
                )))
            }
        }
        match self.model.name.as_str() {
            "synthetic_o2" | "synthetic_so2" | "burgers" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown model {other}; available: synthetic_o2, synthetic_so2, burgers"
                )))
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid1D>> {
        Grid1D::new(self.grid.l, self.grid.n)
    }

    pub fn symmetry_mode(&self) -> SymmetryMode {
        if self.branch.symmetry == "SO2" {
            SymmetryMode::SO2
        } else {
            SymmetryMode::O2
        }
    }

    pub fn r_matrix(&self) -> Option<DMatrix<f64>> {
        self.branch.r_matrix.as_ref().map(|rows| {
            let n = rows.len();
            DMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(0.0))
        })
    }

    /// Assembles the pipeline described by the config.
    pub fn pipeline(&self) -> Result<Pipeline> {
        let grid = self.grid()?;
        let k_star = self.transverse.k_star;
        let k_max = self.transverse.k_max;
        let mut pl = match self.model.name.as_str() {
            "synthetic_o2" => Pipeline::synthetic_o2(grid, k_star, k_max),
            "synthetic_so2" => Pipeline::synthetic_so2(grid, k_star, k_max),
            "burgers" => {
                let mut base = Pipeline::synthetic_o2(grid, k_star, k_max);
                base.model =
                    stripbif_core::model::FluxModel::burgers(self.model.gamma, self.model.sigma);
                base.bump = None;
                base
            }
            _ => unreachable!("validated"),
        };
        pl.u_minus = self.model.u_minus.clone();
        pl.u_plus = self.model.u_plus.clone();
        if let Some(b) = &self.model.bump {
            pl.bump = Some(BumpPotential {
                k_star,
                eps0: b.eps0,
                amp: b.amp,
                x0: b.x0,
                amp_im: b.amp_im,
            });
        }
        pl.symmetry_mode = self.symmetry_mode();
        pl.r_matrix = self.r_matrix();
        pl.contour_radius = self.contour.radius;
        pl.q = self.contour.q;
        pl.tol_fix = self.tolerances.tol_fix;
        pl.tol_eig = self.tolerances.tol_eig;
        pl.tol_red = self.tolerances.tol_red;
        Ok(pl)
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        let c = &self.crossing;
        (0..c.n_samples)
            .map(|i| {
                c.eps_min + (c.eps_max - c.eps_min) * i as f64 / (c.n_samples - 1) as f64
            })
            .collect()
    }
}

/// Template written by the `init` subcommand; all values are the defaults.
pub const TEMPLATE: &str = r#"# Transverse steady-bifurcation workbench configuration.
# All sections except [model], [grid], and [transverse] are optional.

[model]
# synthetic_o2: quadratic scalar flux, reflection-symmetric crossing
# synthetic_so2: adds a transverse flux and a complex potential strength
# burgers: plain quadratic flux without a crossing potential
name = "synthetic_o2"
gamma = 0.0
sigma = 0.0
u_minus = [1.0]
u_plus = [-1.0]
# Optional potential override:
# [model.bump]
# eps0 = 0.0
# amp = -2.5
# x0 = 0.0
# amp_im = 0.0

[grid]
l = 15.0
n = 201          # must be odd

[transverse]
k_star = 1
k_max = 4

[profile]
eps = 0.0

[crossing]
eps_min = 0.0
eps_max = 1.2
n_samples = 25
center_re = 1.0  # eigenvalue seed for the first grid point
center_im = 0.0
tol_eps = 1e-10

[contour]
radius = 0.12
q = 32           # must be a power of two

[tolerances]
tol_fix = 1e-11
tol_eig = 1e-7
tol_red = 1e-6
tol_sing = 1e-10
tol_rh = 1e-10
tol_transversal = 1e-3

[branch]
symmetry = "O2"  # or "SO2"
s_values = [0.01, 0.02, 0.03, 0.04, 0.05]
# d_override = 0.0
# r_matrix = [[1.0]]

[decay]
# resolution for the inverse-norm decay study (spectrum/verify commands)
l = 20.0
n = 6401
k_list = [8, 16, 32, 64]

[output]
dir = "out"
"#;
