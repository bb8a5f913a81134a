//! Experiment configuration (TOML).
//!
//! Every field is validated before any computation starts; see
//! `configs/*.toml` for complete examples.

use chaosfem_core::datagen::Physics;
use chaosfem_core::quadrature::Growth;
use chaosfem_core::randomfield::KernelFamily;
use chaosfem_core::statfem::GainForm;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    BarHomogeneous,
    BarInhomogeneous,
    PlateHole,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub problem: Problem,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub geometry: Geometry,
    pub field: FieldConfig,
    #[serde(default)]
    pub pce: PceConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub assimilate: AssimilateConfig,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    // bar
    pub length: Option<f64>,
    pub area: Option<f64>,
    pub load: Option<f64>,
    pub elements: Option<usize>,
    // plate
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub radius: Option<f64>,
    pub thickness: Option<f64>,
    pub traction: Option<f64>,
    pub nu: Option<f64>,
    pub n_theta: Option<usize>,
    pub n_rings: Option<usize>,
    pub grading: Option<f64>,
    pub mesh_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kernel: KernelFamily,
    pub lengths: Vec<f64>,
    pub mu_e: f64,
    pub sigma_e: f64,
    pub epsilon: Option<f64>,
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PceConfig {
    #[serde(default = "two")]
    pub order: usize,
    /// Smolyak level; defaults to order + 1.
    pub level: Option<usize>,
    #[serde(default)]
    pub growth: Growth,
}

fn two() -> usize {
    2
}

impl Default for PceConfig {
    fn default() -> Self {
        PceConfig { order: 2, level: None, growth: Growth::Linear }
    }
}

impl PceConfig {
    pub fn level(&self) -> usize {
        self.level.unwrap_or(self.order + 1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Bar problems: equally spaced sensors.
    pub n_sensors: Option<usize>,
    /// Plate: file with one "x y" line per sensor.
    pub sensor_file: Option<PathBuf>,
    /// Plate: farthest-point layout over free nodes with this many sensors.
    pub sensor_layout: Option<usize>,
    pub mismatch_kernel: KernelFamily,
    pub mismatch_lengths: Vec<f64>,
    pub mismatch_modes: Option<usize>,
    pub mismatch_epsilon: Option<f64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub gain_form: GainForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default)]
    pub sigma_d: Vec<f64>,
    /// Defaults to the model noise.
    pub noise_sigma: Option<f64>,
    /// Sine amplitude of the inhomogeneous bar.
    pub amplitude: Option<f64>,
    pub ring_factors: Option<Vec<f64>>,
    #[serde(default)]
    pub physics: Physics,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NlmlQuadrature {
    /// Tensor Gauss–Hermite of order 3 or 2 depending on size, else Smolyak.
    #[default]
    Auto,
    Tensor,
    Smolyak,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Use only the first n replications (default: all).
    pub replications: Option<usize>,
    #[serde(default = "eight")]
    pub starts: usize,
    #[serde(default = "three")]
    pub restarts: usize,
    #[serde(default = "two_thousand")]
    pub max_iterations: usize,
    #[serde(default = "tol")]
    pub tolerance: f64,
    #[serde(default = "seven")]
    pub seed: u64,
    #[serde(default)]
    pub quadrature: NlmlQuadrature,
    pub tensor_order: Option<usize>,
    pub smolyak_level: Option<usize>,
    #[serde(default = "max_nodes")]
    pub max_nodes: usize,
}

fn eight() -> usize {
    8
}
fn three() -> usize {
    3
}
fn two_thousand() -> usize {
    2000
}
fn tol() -> f64 {
    1e-8
}
fn seven() -> u64 {
    7
}
fn max_nodes() -> usize {
    131_072
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssimilateConfig {
    /// Use only the first n replications (default: same as identify).
    pub replications: Option<usize>,
    #[serde(default = "thousand")]
    pub samples: usize,
    #[serde(default = "eleven")]
    pub sample_seed: u64,
    /// Fixed hyperparameters used instead of hyperparameters.json.
    pub rho: Option<f64>,
    pub sigma_d: Option<Vec<f64>>,
}

fn thousand() -> usize {
    1000
}
fn eleven() -> u64 {
    11
}

impl Default for AssimilateConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError(format!("missing `{name}`")))
}

fn positive(v: f64, name: &str) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError(format!("`{name}` must be positive and finite (got {v})")))
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError(format!("parse error: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn is_plate(&self) -> bool {
        self.problem == Problem::PlateHole
    }

    pub fn spatial_dim(&self) -> usize {
        if self.is_plate() {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let g = &self.geometry;
        let sd = self.spatial_dim();
        if self.is_plate() {
            positive(need(g.thickness, "geometry.thickness")?, "geometry.thickness")?;
            need(g.traction, "geometry.traction")?;
            let nu = need(g.nu, "geometry.nu")?;
            if !(0.0..=0.5).contains(&nu) {
                return Err(ConfigError("`geometry.nu` must lie in [0, 0.5]".into()));
            }
            match &g.mesh_file {
                Some(f) => {
                    if !self.resolve(f).is_file() {
                        return Err(ConfigError(format!("mesh file {} not found", self.resolve(f).display())));
                    }
                }
                None => {
                    for (v, n) in [(g.width, "width"), (g.height, "height"), (g.radius, "radius")] {
                        positive(need(v, &format!("geometry.{n}"))?, &format!("geometry.{n}"))?;
                    }
                }
            }
            let m = &self.model;
            match (&m.sensor_file, m.sensor_layout) {
                (Some(f), None) => {
                    if !self.resolve(f).is_file() {
                        return Err(ConfigError(format!("sensor file {} not found", self.resolve(f).display())));
                    }
                }
                (None, Some(n)) if n > 0 => {}
                _ => return Err(ConfigError("plate needs exactly one of `model.sensor_file` or `model.sensor_layout`".into())),
            }
            if let Some(r) = &self.data.ring_factors {
                if r.iter().any(|&f| !(f > 0.0)) {
                    return Err(ConfigError("`data.ring_factors` must be positive".into()));
                }
            }
        } else {
            for (v, n) in [(g.length, "length"), (g.area, "area")] {
                positive(need(v, &format!("geometry.{n}"))?, &format!("geometry.{n}"))?;
            }
            need(g.load, "geometry.load")?;
            if need(g.elements, "geometry.elements")? == 0 {
                return Err(ConfigError("`geometry.elements` must be positive".into()));
            }
            if need(self.model.n_sensors, "model.n_sensors")? == 0 {
                return Err(ConfigError("`model.n_sensors` must be positive".into()));
            }
        }
        let f = &self.field;
        if f.lengths.len() != sd {
            return Err(ConfigError(format!("`field.lengths` needs {sd} entries")));
        }
        for &l in &f.lengths {
            positive(l, "field.lengths")?;
        }
        positive(f.mu_e, "field.mu_e")?;
        if !(f.sigma_e >= 0.0 && f.sigma_e.is_finite()) {
            return Err(ConfigError("`field.sigma_e` must be nonnegative".into()));
        }
        match (f.epsilon, f.modes) {
            (Some(e), None) if e > 0.0 && e < 1.0 => {}
            (None, Some(m)) if m > 0 => {}
            _ => return Err(ConfigError("field needs exactly one of `epsilon` in (0,1) or `modes` ≥ 1".into())),
        }
        let m = &self.model;
        if m.mismatch_lengths.len() != sd {
            return Err(ConfigError(format!("`model.mismatch_lengths` needs {sd} entries")));
        }
        for &l in &m.mismatch_lengths {
            positive(l, "model.mismatch_lengths")?;
        }
        match (m.mismatch_modes, m.mismatch_epsilon) {
            (Some(k), None) if k > 0 => {}
            (None, Some(e)) if e > 0.0 && e < 1.0 => {}
            _ => {
                return Err(ConfigError(
                    "model needs exactly one of `mismatch_modes` ≥ 1 or `mismatch_epsilon` in (0,1)".into(),
                ))
            }
        }
        if !(m.noise_sigma > 0.0) {
            return Err(ConfigError("`model.noise_sigma` must be positive (use `inf` to disable the update)".into()));
        }
        let d = &self.data;
        if d.replications == 0 {
            return Err(ConfigError("`data.replications` must be positive".into()));
        }
        positive(d.rho, "data.rho")?;
        if d.sigma_d.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(ConfigError("`data.sigma_d` entries must be nonnegative".into()));
        }
        if let Some(n) = d.noise_sigma {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(ConfigError("`data.noise_sigma` must be nonnegative".into()));
            }
        }
        if self.problem == Problem::BarHomogeneous {
            let ns = self.model.n_sensors.unwrap_or(0);
            if d.sigma_d.len() > ns {
                return Err(ConfigError("`data.sigma_d` has more entries than sensors".into()));
            }
        }
        if let Some(a) = d.amplitude {
            if !a.is_finite() {
                return Err(ConfigError("`data.amplitude` must be finite".into()));
            }
        }
        let p = &self.pce;
        if p.order > 8 {
            return Err(ConfigError("`pce.order` above 8 is not supported".into()));
        }
        let i = &self.identify;
        if i.starts == 0 || i.max_iterations == 0 || !(i.tolerance > 0.0) {
            return Err(ConfigError("identify needs starts ≥ 1, max_iterations ≥ 1, tolerance > 0".into()));
        }
        for r in [i.replications, self.assimilate.replications].into_iter().flatten() {
            if r == 0 || r > d.replications {
                return Err(ConfigError(format!("replication count {r} outside 1..={}", d.replications)));
            }
        }
        if let Some(o) = i.tensor_order {
            if o == 0 {
                return Err(ConfigError("`identify.tensor_order` must be ≥ 1".into()));
            }
        }
        let a = &self.assimilate;
        if a.samples == 0 {
            return Err(ConfigError("`assimilate.samples` must be positive".into()));
        }
        if let Some(r) = a.rho {
            positive(r, "assimilate.rho")?;
        }
        if let Some(s) = &a.sigma_d {
            if s.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(ConfigError("`assimilate.sigma_d` entries must be nonnegative".into()));
            }
        }
        if a.rho.is_some() != a.sigma_d.is_some() {
            return Err(ConfigError("`assimilate.rho` and `assimilate.sigma_d` go together".into()));
        }
        Ok(())
    }
}
