//! Run configuration: a TOML description of one plate case, validated in
//! full before any computation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracdiff::{FracParams, DEFAULT_GJ_POINTS};
use crate::geometry::{
    make_circular_cloud_scaled, make_nonuniform_grid_scaled, refined_breaks, BackgroundMesh,
    CircleGrading, Domain, NodeCloud, Point, SupportScale,
};
use crate::plate::{Material, PlateCase};
use crate::solver::{Iteration, ResidualFormSetting, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    pub mode: Mode,
    pub geometry: Domain,
    pub grid: GridConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    pub fractional: FractionalConfig,
    pub load: LoadConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub compare: Vec<CompareTarget>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Uniform band refinement of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineBand {
    pub n_outer: usize,
    /// Band limits as fractions of the side length.
    pub band: [f64; 2],
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridKind {
    Uniform {
        nx: usize,
        ny: usize,
    },
    /// Per axis: explicit `*_breaks` (m) or a `*_refine` band target.
    Nonuniform {
        #[serde(default)]
        x_breaks: Option<Vec<f64>>,
        #[serde(default)]
        y_breaks: Option<Vec<f64>>,
        #[serde(default)]
        x_refine: Option<RefineBand>,
        #[serde(default)]
        y_refine: Option<RefineBand>,
    },
    Circular {
        #[serde(default = "default_divisions")]
        divisions: usize,
        #[serde(default = "default_bias")]
        bias: f64,
    },
}

fn default_divisions() -> usize {
    CircleGrading::default().divisions
}

fn default_bias() -> f64 {
    CircleGrading::default().bias
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(flatten)]
    pub kind: GridKind,
    /// Support multiples for the linear and quadratic bases.
    #[serde(default)]
    pub support: Option<SupportScale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Gauss–Legendre points per cell direction.
    pub gauss_order: usize,
    pub n_tangential: usize,
    pub n_radial: usize,
    pub radial_bias: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            gauss_order: 4,
            n_tangential: 4,
            n_radial: 4,
            radial_bias: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    /// Young's modulus (Pa).
    pub e: f64,
    pub nu: f64,
    /// Plate thickness (m).
    pub thickness: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            e: 1.09e6,
            nu: 0.3,
            thickness: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalConfig {
    pub alpha: f64,
    /// Intrinsic horizon (m).
    pub h_l: f64,
    #[serde(default = "default_gjp")]
    pub n_gjp: usize,
}

fn default_gjp() -> usize {
    DEFAULT_GJ_POINTS
}

/// Transverse load: either `q0` (Pa) or the nondimensional `p_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    #[serde(default)]
    pub q0: Option<f64>,
    #[serde(default)]
    pub p_bar: Option<f64>,
}

/// Solver overrides; absent fields take [`SolverSettings`] defaults with
/// `tol_disp = 10⁻³ h`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n_load_steps: Option<usize>,
    pub tol_disp: Option<f64>,
    pub max_iters: Option<usize>,
    pub iteration: Option<Iteration>,
    pub residual: Option<ResidualFormSetting>,
    pub divergence_window: Option<usize>,
}

/// One reference cell to compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareTarget {
    pub table: String,
    pub row: String,
    pub column: String,
    /// Relative tolerance; defaults per table.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Probe point (m); defaults to the plate center.
    pub probe: Option<[f64; 2]>,
    /// Samples of the centerline profile.
    pub centerline_points: usize,
    /// Also write the fractional B̃ rows at every Gauss point.
    pub dump_btilde: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            probe: None,
            centerline_points: 41,
            dump_btilde: false,
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reference length `a`: side along x, or the radius of a disc.
    pub fn span(&self) -> f64 {
        match self.geometry {
            Domain::Rectangle { a, .. } => a,
            Domain::Circle { radius } => radius,
        }
    }

    pub fn probe(&self) -> Point {
        match self.output.probe {
            Some([x, y]) => Point::new(x, y),
            None => self.geometry.center(),
        }
    }

    /// Applied pressure (Pa); `p_bar` maps through `q₀ = P̄ E h⁴ / a⁴`.
    pub fn q0(&self) -> f64 {
        match (self.load.q0, self.load.p_bar) {
            (Some(q), _) => q,
            (None, Some(p)) => {
                let m = &self.material;
                p * m.e * m.thickness.powi(4) / self.span().powi(4)
            }
            (None, None) => 0.0,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let mut s = SolverSettings::for_thickness(self.material.thickness);
        let c = &self.solver;
        if let Some(v) = c.n_load_steps {
            s.n_load_steps = v;
        }
        if let Some(v) = c.tol_disp {
            s.tol_disp = v;
        }
        if let Some(v) = c.max_iters {
            s.max_iters = v;
        }
        if let Some(v) = c.iteration {
            s.iteration = v;
        }
        if let Some(v) = c.residual {
            s.residual = v;
        }
        if let Some(v) = c.divergence_window {
            s.divergence_window = v;
        }
        s
    }

    /// Check every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(field("id", "must not be empty"));
        }
        if self.id.contains(['/', '\\']) {
            return Err(field("id", "must not contain path separators"));
        }
        match self.geometry {
            Domain::Rectangle { a, b } => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(field("geometry", format!("rectangle sides must be positive, got a={a}, b={b}")));
                }
            }
            Domain::Circle { radius } => {
                if !(radius > 0.0) {
                    return Err(field("geometry.radius", format!("must be positive, got {radius}")));
                }
            }
        }
        let m = &self.material;
        if !(m.e > 0.0) {
            return Err(field("material.e", format!("must be positive (Pa), got {}", m.e)));
        }
        if !(m.nu > -1.0 && m.nu < 0.5) {
            return Err(field("material.nu", format!("must lie in (-1, 0.5), got {}", m.nu)));
        }
        if !(m.thickness > 0.0) {
            return Err(field("material.thickness", format!("must be positive (m), got {}", m.thickness)));
        }
        let f = &self.fractional;
        if !(f.alpha > 0.0 && f.alpha <= 1.0) {
            return Err(field("fractional.alpha", format!("must lie in (0, 1], got {}", f.alpha)));
        }
        if !(f.h_l > 0.0) {
            return Err(field("fractional.h_l", format!("must be positive (m), got {}", f.h_l)));
        }
        if f.n_gjp == 0 {
            return Err(field("fractional.n_gjp", "must be at least 1"));
        }
        match (self.load.q0, self.load.p_bar) {
            (Some(_), Some(_)) => return Err(field("load", "give either q0 or p_bar, not both")),
            (None, None) => return Err(field("load", "one of q0 (Pa) or p_bar is required")),
            (Some(q), None) if !q.is_finite() => return Err(field("load.q0", "must be finite")),
            (None, Some(p)) if !p.is_finite() => return Err(field("load.p_bar", "must be finite")),
            _ => {}
        }
        if self.mesh.gauss_order == 0 {
            return Err(field("mesh.gauss_order", "must be at least 1"));
        }
        match (&self.grid.kind, &self.geometry) {
            (GridKind::Circular { .. }, Domain::Rectangle { .. }) => {
                return Err(field("grid.kind", "circular grid requires geometry.shape = \"circle\""))
            }
            (GridKind::Uniform { .. } | GridKind::Nonuniform { .. }, Domain::Circle { .. }) => {
                return Err(field("grid.kind", "a circle needs grid.kind = \"circular\""))
            }
            _ => {}
        }
        if let GridKind::Nonuniform { x_breaks, y_breaks, x_refine, y_refine } = &self.grid.kind {
            for (axis, br, rf) in [("x", x_breaks, x_refine), ("y", y_breaks, y_refine)] {
                match (br, rf) {
                    (Some(_), Some(_)) => {
                        return Err(field("grid", format!("give either {axis}_breaks or {axis}_refine, not both")))
                    }
                    (None, None) => return Err(field("grid", format!("{axis}_breaks or {axis}_refine is required"))),
                    (None, Some(r)) => {
                        let [lo, hi] = r.band;
                        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                            return Err(field(
                                &format!("grid.{axis}_refine.band"),
                                format!("must satisfy 0 ≤ lo < hi ≤ 1, got [{lo}, {hi}]"),
                            ));
                        }
                        if r.n_outer == 0 || r.factor == 0 {
                            return Err(field(&format!("grid.{axis}_refine"), "n_outer and factor must be ≥ 1"));
                        }
                    }
                    _ => {}
                }
            }
        }
        if let Some(s) = self.grid.support {
            if !(s.linear > 0.0 && s.quadratic > 0.0) {
                return Err(field("grid.support", "support multiples must be positive"));
            }
        }
        self.solver_settings().validate().map_err(|e| match e {
            Error::Config(m) => field("solver", m),
            other => other,
        })?;
        if self.mode == Mode::Linear && self.q0() == 0.0 && !self.compare.is_empty() {
            return Err(field("load", "linear normalization needs a nonzero load"));
        }
        if let Some([x, y]) = self.output.probe {
            if !self.geometry.contains(Point::new(x, y), 1e-12) {
                return Err(field("output.probe", format!("({x}, {y}) lies outside the plate")));
            }
        }
        if self.output.centerline_points < 2 {
            return Err(field("output.centerline_points", "must be at least 2"));
        }
        Ok(())
    }

    fn breaks(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = match self.geometry {
            Domain::Rectangle { a, b } => (a, b),
            Domain::Circle { .. } => return Err(Error::Usage("breaks are defined for rectangles only".into())),
        };
        let axis = |len: f64, br: &Option<Vec<f64>>, rf: &Option<RefineBand>| -> Vec<f64> {
            match (br, rf) {
                (Some(v), _) => v.clone(),
                (None, Some(r)) => refined_breaks(len, r.n_outer, r.band[0] * len, r.band[1] * len, r.factor),
                (None, None) => Vec::new(),
            }
        };
        match &self.grid.kind {
            GridKind::Uniform { nx, ny } => {
                if *nx < 2 || *ny < 2 {
                    return Err(field("grid", format!("nx, ny must be at least 2, got {nx}×{ny}")));
                }
                Ok((
                    (0..=*nx).map(|i| a * i as f64 / *nx as f64).collect(),
                    (0..=*ny).map(|j| b * j as f64 / *ny as f64).collect(),
                ))
            }
            GridKind::Nonuniform { x_breaks, y_breaks, x_refine, y_refine } => {
                Ok((axis(a, x_breaks, x_refine), axis(b, y_breaks, y_refine)))
            }
            GridKind::Circular { .. } => Err(Error::Usage("circular grid has no break lists".into())),
        }
    }

    pub fn node_cloud(&self) -> Result<NodeCloud> {
        let scale = self.grid.support.unwrap_or_default();
        match (&self.grid.kind, self.geometry) {
            (GridKind::Circular { divisions, bias }, Domain::Circle { radius }) => make_circular_cloud_scaled(
                radius,
                CircleGrading {
                    divisions: *divisions,
                    bias: *bias,
                },
                scale,
            ),
            (_, Domain::Rectangle { a, b }) => {
                let (xb, yb) = self.breaks()?;
                make_nonuniform_grid_scaled(a, b, &xb, &yb, scale)
            }
            _ => Err(field("grid.kind", "grid kind does not match geometry")),
        }
    }

    /// Rectangles integrate over the cells between node lines.
    pub fn background_mesh(&self) -> Result<BackgroundMesh> {
        let m = &self.mesh;
        match self.geometry {
            Domain::Rectangle { .. } => {
                let (xb, yb) = self.breaks()?;
                BackgroundMesh::rectangle(&xb, &yb, m.gauss_order)
            }
            Domain::Circle { radius } => {
                BackgroundMesh::circle(radius, m.n_tangential, m.n_radial, m.radial_bias, m.gauss_order)
            }
        }
    }

    pub fn build_case(&self) -> Result<PlateCase> {
        let m = &self.material;
        PlateCase::new(
            m.thickness,
            Material::new(m.e, m.nu)?,
            FracParams::new(self.fractional.alpha, self.fractional.h_l)?,
            self.q0(),
            self.node_cloud()?,
            self.background_mesh()?,
            self.fractional.n_gjp,
        )
    }

    /// Sample points of the centerline profile: `y = b/2` on a rectangle,
    /// the diameter along x on a disc.
    pub fn centerline(&self) -> Vec<Point> {
        let n = self.output.centerline_points;
        let (x0, x1, y) = match self.geometry {
            Domain::Rectangle { a, b } => (0.0, a, 0.5 * b),
            Domain::Circle { radius } => (-radius, radius, 0.0),
        };
        (0..n)
            .map(|k| Point::new(x0 + (x1 - x0) * k as f64 / (n - 1) as f64, y))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
id = "t"
mode = "linear"
[geometry]
shape = "rectangle"
a = 1.0
b = 1.0
[grid]
kind = "uniform"
nx = 4
ny = 4
[fractional]
alpha = 0.8
h_l = 0.5
[load]
q0 = 1.0
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.mode, Mode::Linear);
        assert_eq!(c.fractional.n_gjp, DEFAULT_GJ_POINTS);
        assert_eq!(c.material, MaterialConfig::default());
        assert_eq!(c.probe(), Point::new(0.5, 0.5));
        assert!((c.solver_settings().tol_disp - 2e-5).abs() < 1e-18);
        let case = c.build_case().unwrap();
        assert_eq!(case.n_nodes(), 25);
    }

    #[test]
    fn alpha_out_of_range_names_constraint() {
        let text = BASE.replace("alpha = 0.8", "alpha = 1.5");
        let e = RunConfig::from_toml_str(&text).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Config(_)));
        assert!(msg.contains("fractional.alpha") && msg.contains("(0, 1]"), "{msg}");
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let text = BASE.replace("h_l = 0.5", "h_l = 0.5\nbogus = 1");
        let e = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(e, Error::Parse(_)), "{e}");
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn p_bar_maps_through_fourth_power_of_thickness() {
        let text = BASE.replace("q0 = 1.0", "p_bar = 250.0");
        let c = RunConfig::from_toml_str(&text).unwrap();
        assert!((c.q0() - 250.0 * 1.09e6 * 0.02f64.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn both_loads_rejected() {
        let text = BASE.replace("q0 = 1.0", "q0 = 1.0\np_bar = 2.0");
        assert!(RunConfig::from_toml_str(&text).unwrap_err().to_string().contains("load"));
    }

    #[test]
    fn shape_grid_mismatch_rejected() {
        let text = BASE.replace("kind = \"uniform\"\nnx = 4\nny = 4", "kind = \"circular\"");
        let e = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(e.to_string().contains("grid.kind"), "{e}");
    }

    #[test]
    fn refined_grid_builds() {
        let text = BASE.replace(
            "kind = \"uniform\"\nnx = 4\nny = 4",
            "kind = \"nonuniform\"\nx_refine = { n_outer = 8, band = [0.25, 0.75], factor = 2 }\ny_breaks = [0.0, 0.25, 0.5, 0.75, 1.0]",
        );
        let c = RunConfig::from_toml_str(&text).unwrap();
        let cloud = c.node_cloud().unwrap();
        assert_eq!(cloud.len(), 13 * 5);
        let mesh = c.background_mesh().unwrap();
        assert!((mesh.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_config_builds() {
        let text = r#"
id = "c"
mode = "linear"
[geometry]
shape = "circle"
radius = 1.0
[grid]
kind = "circular"
divisions = 8
[fractional]
alpha = 1.0
h_l = 1.0
[load]
q0 = 1.0
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.probe(), Point::new(0.0, 0.0));
        let case = c.build_case().unwrap();
        assert!(case.n_nodes() > 50);
        let cl = c.centerline();
        assert_eq!(cl.first().unwrap().x, -1.0);
    }

    #[test]
    fn solver_overrides_apply_and_validate() {
        let text = format!("{BASE}[solver]\nn_load_steps = 0\n");
        let e = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(e.to_string().contains("solver"), "{e}");
        let text = format!("{BASE}[solver]\nn_load_steps = 5\ntol_disp = 1e-6\n");
        let s = RunConfig::from_toml_str(&text).unwrap().solver_settings();
        assert_eq!(s.n_load_steps, 5);
        assert_eq!(s.tol_disp, 1e-6);
    }
}
