//! The run configuration document: a single JSON file covering the energy,
//! the particle initialization, the scheme, and output policy. Rationals may
//! be written as strings ("1/100") wherever exactness matters; plain numbers
//! are accepted everywhere.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wgflow_core::convergence::{parse_rational, rational_to_f64};
use wgflow_core::energy::{RadialPotential, ScalarField1D};
use wgflow_core::stepper::{DescentRate, InnerConfig, InnerKind};
use wgflow_core::{EnergySpec, Result, SchemeConfig, SchemeKind, WgError};

/// A number that may be given exactly as "p/q".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOrRational {
    Number(f64),
    Text(String),
}

impl NumberOrRational {
    pub fn value(&self) -> Result<f64> {
        match self {
            NumberOrRational::Number(v) => Ok(*v),
            NumberOrRational::Text(s) => Ok(rational_to_f64(parse_rational(s)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    GaussianBlob { center: Vec<f64>, std: f64 },
    TwoBlobs { c1: Vec<f64>, c2: Vec<f64>, std: f64 },
    Ring { radius: f64, std: f64 },
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    pub count: usize,
    pub init: InitSpec,
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

fn no_field() -> ScalarField1D {
    ScalarField1D::None
}

fn no_potential() -> RadialPotential {
    RadialPotential::None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalConfig {
    #[serde(default = "no_field")]
    pub f: ScalarField1D,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl Default for InternalConfig {
    fn default() -> Self {
        InternalConfig {
            f: ScalarField1D::None,
            sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    #[serde(default)]
    pub internal: InternalConfig,
    #[serde(default = "no_potential")]
    pub potential: RadialPotential,
    #[serde(default = "no_potential")]
    pub interaction: RadialPotential,
}

impl EnergyConfig {
    pub fn to_spec(&self) -> Result<EnergySpec> {
        EnergySpec::new(
            self.f_clone(),
            self.internal.sigma,
            self.potential.clone(),
            self.interaction.clone(),
        )
    }

    fn f_clone(&self) -> ScalarField1D {
        self.internal.f.clone()
    }
}

fn default_tol() -> f64 {
    InnerConfig::default().tol
}

fn default_max_iters() -> usize {
    InnerConfig::default().max_iters
}

fn default_inner_kind() -> InnerKind {
    InnerConfig::default().kind
}

fn default_descent_rate() -> DescentRate {
    DescentRate::Auto
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSection {
    #[serde(default = "default_inner_kind")]
    pub kind: InnerKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_descent_rate")]
    pub descent_rate: DescentRate,
}

impl Default for InnerSection {
    fn default() -> Self {
        let d = InnerConfig::default();
        InnerSection {
            kind: d.kind,
            tol: d.tol,
            max_iters: d.max_iters,
            descent_rate: d.descent_rate,
        }
    }
}

impl InnerSection {
    pub fn to_inner(&self) -> InnerConfig {
        InnerConfig {
            kind: self.kind,
            tol: self.tol,
            max_iters: self.max_iters,
            descent_rate: self.descent_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    pub tau: NumberOrRational,
    pub t_final: NumberOrRational,
    #[serde(default)]
    pub inner: InnerSection,
}

fn default_save_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            save_every: 1,
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    pub particles: ParticlesConfig,
    pub energy: EnergyConfig,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| WgError::Parameter(format!("cannot open config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| WgError::Parameter(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(WgError::Parameter("dimension must be >= 1".into()));
        }
        if self.particles.count == 0 {
            return Err(WgError::Parameter("particles.count must be >= 1".into()));
        }
        if self.output.save_every == 0 {
            return Err(WgError::Parameter("output.save_every must be >= 1".into()));
        }
        match &self.particles.init {
            InitSpec::GaussianBlob { center, std } => {
                if center.len() != self.dimension {
                    return Err(WgError::Parameter(format!(
                        "init center has {} coordinates, dimension is {}",
                        center.len(),
                        self.dimension
                    )));
                }
                if *std < 0.0 {
                    return Err(WgError::Parameter("init std must be >= 0".into()));
                }
            }
            InitSpec::TwoBlobs { c1, c2, std } => {
                if c1.len() != self.dimension || c2.len() != self.dimension {
                    return Err(WgError::Parameter("blob centers must match dimension".into()));
                }
                if *std < 0.0 {
                    return Err(WgError::Parameter("init std must be >= 0".into()));
                }
            }
            InitSpec::Ring { radius, std } => {
                if self.dimension != 2 {
                    return Err(WgError::Parameter("ring init requires dimension 2".into()));
                }
                if *radius <= 0.0 || *std < 0.0 {
                    return Err(WgError::Parameter("ring needs radius > 0 and std >= 0".into()));
                }
            }
            InitSpec::File { .. } => {}
        }
        self.energy.to_spec()?;
        self.to_scheme_config()?;
        Ok(())
    }

    pub fn to_scheme_config(&self) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(
            self.scheme.kind,
            self.scheme.tau.value()?,
            self.scheme.t_final.value()?,
        );
        cfg.inner = self.scheme.inner.to_inner();
        cfg.lambda = self.lambda;
        cfg.lipschitz = self.lipschitz;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialization, also used for digesting.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "dimension": 2,
            "particles": {"count": 4, "init": {"kind": "gaussian_blob", "center": [0.0, 0.0], "std": 1.0}, "seed": 42},
            "energy": {
                "internal": {"f": {"kind": "log_regularized", "scale": 0.5, "eps": 0.01}, "sigma": 0.1},
                "potential": {"kind": "quadratic_paper"},
                "interaction": {"kind": "none"}
            },
            "scheme": {"kind": "trapezoid", "tau": "1/100", "t_final": 0.1},
            "lambda": 1.0,
            "output": {"save_every": 5}
        }"#
    }

    #[test]
    fn parse_and_round_trip() {
        let cfg: RunConfig = serde_json::from_str(sample()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scheme.tau.value().unwrap(), 0.01);
        assert_eq!(cfg.scheme.t_final.value().unwrap(), 0.1);
        let text = cfg.canonical_json();
        let cfg2: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cfg2.canonical_json(), text);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_shapes() {
        let with_extra = sample().replace("\"lambda\": 1.0", "\"lambda\": 1.0, \"typo\": 3");
        assert!(serde_json::from_str::<RunConfig>(&with_extra).is_err());

        let mut cfg: RunConfig = serde_json::from_str(sample()).unwrap();
        cfg.dimension = 3; // center is now the wrong length
        assert!(cfg.validate().is_err());
    }
}
