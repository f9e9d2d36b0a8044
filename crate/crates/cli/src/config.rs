//! Experiment configuration: parsing with located diagnostics, validation,
//! and command-line overrides.

use std::path::{Path, PathBuf};

use photoloss::losses::Regime;
use photoloss::optimizer::{FreeVars, OptimConfig};
use photoloss::synth::{Perturbation, SceneSpec};
use photoloss::{LossWeights, SsimParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    #[serde(default = "default_scenes")]
    pub scenes: Vec<SceneSpec>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_free")]
    pub free: FreeVars,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub ssim: SsimParams,
    #[serde(default)]
    pub optim: OptimConfig,
    /// Noise applied to the ground truth to build initializations.
    #[serde(default = "default_perturbation")]
    pub perturbation: Perturbation,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Bit depth of written intensity images, 8 or 16.
    #[serde(default = "default_image_bits")]
    pub image_bits: u8,
}

fn default_scenes() -> Vec<SceneSpec> {
    vec![SceneSpec::default()]
}

fn default_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}

fn default_free() -> FreeVars {
    FreeVars::BOTH
}

fn default_perturbation() -> Perturbation {
    Perturbation {
        depth: 0.1,
        rotation: 0.02,
        translation: 0.02,
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_image_bits() -> u8 {
    8
}

/// Values given on the command line; each replaces its config field.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub regimes: Vec<Regime>,
    pub gradient_mode: Option<photoloss::optimizer::GradientMode>,
}

impl ExperimentConfig {
    /// Defaults for everything except the seed.
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            scenes: default_scenes(),
            regimes: default_regimes(),
            free: default_free(),
            weights: LossWeights::default(),
            ssim: SsimParams::default(),
            optim: OptimConfig::default(),
            perturbation: default_perturbation(),
            out_dir: default_out_dir(),
            image_bits: default_image_bits(),
        }
    }

    /// Parses and validates. Errors name the source, line, column and the
    /// dotted path of the offending field.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let field = if path == "." { String::new() } else { format!(" field `{path}`:") };
            CliError::Config(format!("{source}:{}:{}:{field} {inner}", inner.line(), inner.column()))
        })?;
        config
            .validate()
            .map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Loads `path` if given, otherwise uses defaults with the override seed,
    /// then applies the overrides.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match (path, overrides.seed) {
            (Some(p), _) => Self::load(p)?,
            (None, Some(seed)) => Self::with_seed(seed),
            (None, None) => return Err(CliError::Usage("a seed is required: pass --seed or --config".into())),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        if !overrides.regimes.is_empty() {
            config.regimes = overrides.regimes.clone();
        }
        if let Some(mode) = overrides.gradient_mode {
            config.optim.gradient_mode = mode;
        }
        config.validate().map_err(CliError::Config)?;
        Ok(config)
    }

    /// Checks every section; the message starts with the field name.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let field = |name: &str, r: photoloss::Result<()>| r.map_err(|e| format!("field `{name}`: {e}"));
        if self.scenes.is_empty() {
            return Err("field `scenes`: at least one scene is required".into());
        }
        for (i, scene) in self.scenes.iter().enumerate() {
            field(&format!("scenes[{i}]"), scene.validate())?;
        }
        if self.regimes.is_empty() {
            return Err("field `regimes`: at least one regime is required".into());
        }
        if !self.free.depth && !self.free.poses {
            return Err("field `free`: at least one of depth and poses must be free".into());
        }
        field("weights", self.weights.validate())?;
        field("ssim", self.ssim.validate())?;
        field("optim", self.optim.validate())?;
        field("perturbation", self.perturbation.validate())?;
        if self.image_bits != 8 && self.image_bits != 16 {
            return Err(format!("field `image_bits`: must be 8 or 16, got {}", self.image_bits));
        }
        Ok(())
    }

    /// Full-precision JSON that parses back to an equal config.
    pub fn echo(&self) -> Result<serde_json::Value> {
        crate::io::json::to_value(self)
    }
}
