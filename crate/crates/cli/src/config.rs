//! Run configuration: JSON in, validated into core types.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use starvol::field::BaseField;
use starvol::finsler::FinslerMetric;
use starvol::geometry::{build_grid, CosphereGrid, CotangentPoint, ManifoldModel, Resolution};
use starvol::starbody::StarHamiltonian;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: Option<Resolution>,
    /// Named star bodies, each given by its Hamiltonian.
    #[serde(default)]
    pub bodies: BTreeMap<String, String>,
    #[serde(default)]
    pub metric: Option<MetricSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub volume: Option<VolumeSpec>,
    #[serde(default)]
    pub dmv: Option<DmvSpec>,
    #[serde(default)]
    pub legendre: Option<LegendreSpec>,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub systole: Option<SystoleSpec>,
    #[serde(default)]
    pub normalform: Option<NormalFormSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Torus {
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        periods: Option<Vec<f64>>,
    },
    Sphere,
    ProjectivePlane,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Euclidean,
    Quadratic { axes: Vec<f64> },
    Conformal { rho: String },
    Randers { b: Vec<f64> },
    Custom {
        lagrangian: String,
        #[serde(default)]
        reversible: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Multiplier on estimated quadrature errors.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    3.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { scale: default_scale() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    /// Bodies to measure; empty means every configured body, or the model body.
    #[serde(default)]
    pub bodies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmvSpec {
    pub bodies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub base: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl From<&PointSpec> for CotangentPoint {
    fn from(p: &PointSpec) -> Self {
        CotangentPoint {
            base: p.base.clone(),
            momentum: p.momentum.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegendreSpec {
    pub points: Vec<PointSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    /// Hamiltonian expression, or the name of a configured body.
    pub hamiltonian: String,
    pub start: PointSpec,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystoleSpec {
    #[serde(default)]
    pub class: Option<Vec<i64>>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub max_class: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormSpec {
    /// The perturbation H₁.
    pub hamiltonian: String,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_probes() -> usize {
    64
}

fn default_steps() -> usize {
    256
}

fn config_error(pointer: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

/// The published config schema.
pub const SCHEMA: &str = include_str!("../../../docs/config.schema.json");

static VALIDATOR: LazyLock<jsonschema::Validator> = LazyLock::new(|| {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).expect("config schema is valid JSON");
    jsonschema::validator_for(&schema).expect("config schema compiles")
});

/// Parses a config document, checks it against the schema, then validates references.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| config_error("", e.to_string()))?;
    if let Err(e) = VALIDATOR.validate(&doc) {
        return Err(config_error(&e.instance_path().to_string(), e.to_string()));
    }
    let config: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let pointer = path_to_pointer(&e.path().to_string());
        config_error(&pointer, e.inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// `a.b[2].c` to `/a/b/2/c`.
fn path_to_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    path.split('.')
        .flat_map(|seg| seg.split('[').map(|s| s.trim_end_matches(']').to_string()).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .map(|s| format!("/{}", s.replace('~', "~0").replace('/', "~1")))
        .collect()
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let model = self.manifold()?;
        if !(self.tolerances.scale > 0.0 && self.tolerances.scale.is_finite()) {
            return Err(config_error("/tolerances/scale", "tolerances must be positive"));
        }
        for (name, text) in &self.bodies {
            StarHamiltonian::from_expr(&model, text).map_err(|e| config_error(&format!("/bodies/{name}"), e.to_string()))?;
        }
        let known = |names: &[String], at: &str| -> Result<(), CliError> {
            for (i, n) in names.iter().enumerate() {
                if !self.bodies.contains_key(n) {
                    return Err(config_error(&format!("{at}/{i}"), format!("undefined body `{n}`")));
                }
            }
            Ok(())
        };
        if let Some(v) = &self.volume {
            known(&v.bodies, "/volume/bodies")?;
        }
        if let Some(d) = &self.dmv {
            known(&d.bodies, "/dmv/bodies")?;
            if d.bodies.len() != model.dim() {
                return Err(config_error(
                    "/dmv/bodies",
                    format!("a dual mixed volume takes {} bodies", model.dim()),
                ));
            }
        }
        if let Some(f) = &self.flow {
            if !(f.duration > 0.0 && f.dt > 0.0) {
                return Err(config_error("/flow", "duration and dt must be positive"));
            }
        }
        if self.metric.is_some() {
            self.finsler_metric()?;
        }
        if let Some(g) = &self.grid {
            build_grid(&model, g).map_err(|e| config_error("/grid", e.to_string()))?;
        }
        Ok(())
    }

    pub fn manifold(&self) -> Result<ManifoldModel, CliError> {
        let m = match &self.model {
            ModelSpec::Torus { dim, periods } => {
                let periods = periods.clone().unwrap_or_else(|| vec![1.0; dim.unwrap_or(2)]);
                if let Some(d) = dim.filter(|d| *d != periods.len()) {
                    return Err(config_error("/model/periods", format!("expected {d} periods")));
                }
                ManifoldModel::flat_torus(periods)
            }
            ModelSpec::Sphere => Ok(ManifoldModel::round_sphere()),
            ModelSpec::ProjectivePlane => Ok(ManifoldModel::projective_plane()),
        };
        m.map_err(|e| config_error("/model", e.to_string()))
    }

    /// The configured grid, or a default resolution for the model.
    pub fn grid(&self) -> Result<Arc<CosphereGrid>, CliError> {
        let model = self.manifold()?;
        let res = self.grid.clone().unwrap_or_else(|| default_resolution(&model));
        build_grid(&model, &res).map_err(|e| config_error("/grid", e.to_string()))
    }

    pub fn hamiltonian(&self, name: &str) -> Result<StarHamiltonian, CliError> {
        let model = self.manifold()?;
        let text = self
            .bodies
            .get(name)
            .ok_or_else(|| config_error("/bodies", format!("undefined body `{name}`")))?;
        StarHamiltonian::from_expr(&model, text).map_err(|e| config_error(&format!("/bodies/{name}"), e.to_string()))
    }

    pub fn finsler_metric(&self) -> Result<FinslerMetric, CliError> {
        let model = self.manifold()?;
        let spec = self
            .metric
            .as_ref()
            .ok_or_else(|| config_error("/metric", "this command needs a metric"))?;
        let at = |e: starvol::Error| config_error("/metric", e.to_string());
        Ok(match spec {
            MetricSpec::Euclidean => FinslerMetric::euclidean(&model),
            MetricSpec::Quadratic { axes } => FinslerMetric::quadratic(&model, axes.clone()).map_err(at)?,
            MetricSpec::Conformal { rho } => FinslerMetric::conformal(
                &model,
                BaseField::from_expr(&model, rho).map_err(|e| config_error("/metric/rho", e.to_string()))?,
            ),
            MetricSpec::Randers { b } => FinslerMetric::randers(&model, b.clone()).map_err(at)?,
            MetricSpec::Custom { lagrangian, reversible } => FinslerMetric::from_expr(&model, lagrangian, *reversible)
                .map_err(|e| config_error("/metric/lagrangian", e.to_string()))?,
        })
    }
}

pub fn default_resolution(model: &ManifoldModel) -> Resolution {
    if model.is_spherical() {
        return Resolution::new(4, vec![32]);
    }
    match model.dim() {
        2 => Resolution::new(32, vec![32]),
        3 => Resolution::new(8, vec![12, 8]),
        _ => Resolution::new(4, vec![256]),
    }
}
