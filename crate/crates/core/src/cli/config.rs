use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetFiles, DatasetManifest};
use crate::distgen::{make_scale, DistributionSpec, ScoreScale};
use crate::error::{Error, Result};
use crate::multipath::{judge_scale, trimmed_sum_scale, FusionRule, MultiplierSource, JUDGE_SCALE_FACTOR};
use crate::nethead::TrainConfig;

/// Which model and decoding to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Single scalar output trained with squared error.
    Regression,
    /// One distribution head on the normalized final score.
    Usdl,
    /// One distribution head on the trimmed judge sum, times the annotated DD.
    UsdlDd,
    /// One head per sorted judge, fused with the annotated DD.
    Musdl,
    /// Like `Musdl` with a predicted DD.
    MusdlStar,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Regression => "regression",
            Mode::Usdl => "usdl",
            Mode::UsdlDd => "usdl_dd",
            Mode::Musdl => "musdl",
            Mode::MusdlStar => "musdl_star",
        }
    }

    pub fn needs_judges(&self) -> bool {
        matches!(self, Mode::UsdlDd | Mode::Musdl | Mode::MusdlStar)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which records `eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub annotations: PathBuf,
}

impl From<DatasetFiles> for DataPaths {
    fn from(f: DatasetFiles) -> Self {
        Self {
            manifest: f.manifest,
            features: f.features,
            annotations: f.annotations,
        }
    }
}

/// Everything a run needs. Stored as TOML; `train.rng_seed` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Target shape on the normalized final-score scale.
    #[serde(default = "default_final_dist")]
    pub distribution: DistributionSpec,
    /// Target shape on the doubled judge scale.
    #[serde(default = "default_judge_dist")]
    pub judge_distribution: DistributionSpec,
    /// Target shape on the trimmed-sum scale (`usdl_dd`).
    #[serde(default = "default_sum_dist")]
    pub sum_distribution: DistributionSpec,
    #[serde(default = "default_final_scale")]
    pub final_scale: ScoreScale,
    /// Overrides the judge scale derived from the manifest's judge range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_scale: Option<ScoreScale>,
    /// Overrides the manifest's fusion rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_rule: Option<FusionRule>,
    #[serde(default)]
    pub eval_split: EvalSplit,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub paths: DataPaths,
}

fn default_final_dist() -> DistributionSpec {
    DistributionSpec::Gaussian { sigma: 5.0 }
}

fn default_judge_dist() -> DistributionSpec {
    DistributionSpec::Gaussian { sigma: 1.0 }
}

fn default_sum_dist() -> DistributionSpec {
    DistributionSpec::Gaussian { sigma: 1.5 }
}

pub fn default_final_scale() -> ScoreScale {
    make_scale(0.0, 100.0, 101).expect("valid constant scale")
}

/// Scales and rule resolved against a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSetup {
    pub mode: Mode,
    pub score_min: f64,
    pub score_max: f64,
    pub final_scale: ScoreScale,
    pub judge_scale: Option<ScoreScale>,
    pub sum_scale: Option<ScoreScale>,
    pub rule: FusionRule,
}

impl RunConfig {
    /// Defaults for every optional field.
    pub fn new(mode: Mode, train: TrainConfig, paths: DataPaths, output_dir: PathBuf) -> Self {
        Self {
            mode,
            distribution: default_final_dist(),
            judge_distribution: default_judge_dist(),
            sum_distribution: default_sum_dist(),
            final_scale: default_final_scale(),
            judge_scale: None,
            fusion_rule: None,
            eval_split: EvalSplit::default(),
            output_dir,
            train,
            paths,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Field-level checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.distribution.validate()?;
        self.judge_distribution.validate()?;
        self.sum_distribution.validate()?;
        if let Some(rule) = &self.fusion_rule {
            self.check_rule(rule)?;
        }
        Ok(())
    }

    fn check_rule(&self, rule: &FusionRule) -> Result<()> {
        if self.mode == Mode::Musdl && rule.multiplier_source == MultiplierSource::PredictedDd {
            return Err(Error::InvalidConfig(
                "mode musdl uses annotated DDs; use mode musdl_star for a predicted DD".into(),
            ));
        }
        Ok(())
    }

    /// Resolves scales and the fusion rule against the dataset and checks
    /// the mode's requirements.
    pub fn resolve(&self, manifest: &DatasetManifest) -> Result<ResolvedSetup> {
        self.validate()?;
        let mut rule = self.fusion_rule.unwrap_or(manifest.fusion_rule);
        if self.mode == Mode::MusdlStar {
            rule.multiplier_source = MultiplierSource::PredictedDd;
        }
        self.check_rule(&rule)?;

        let range = manifest.judge_range;
        let (judge_scale, sum_scale) = if self.mode.needs_judges() {
            if manifest.judge_count == 0 {
                return Err(Error::Validation(format!(
                    "mode {} needs judge annotations but dataset `{}` has none",
                    self.mode, manifest.name
                )));
            }
            let doubled_step = JUDGE_SCALE_FACTOR * range.step;
            if (doubled_step - doubled_step.round()).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "judge step {} is not a multiple of 0.5",
                    range.step
                )));
            }
            let kept = rule.kept(manifest.judge_count)?;
            let js = match self.judge_scale {
                Some(s) => s,
                None => judge_scale(range.min, range.max)?,
            };
            let ss = (self.mode == Mode::UsdlDd)
                .then(|| trimmed_sum_scale(range.min, range.max, kept))
                .transpose()?;
            (Some(js), ss)
        } else {
            (None, None)
        };
        if self.mode == Mode::UsdlDd && rule.multiplier_source != MultiplierSource::GroundTruthDd {
            return Err(Error::Validation(
                "mode usdl_dd multiplies by the annotated DD; fusion rule must use ground_truth_dd".into(),
            ));
        }

        Ok(ResolvedSetup {
            mode: self.mode,
            score_min: manifest.score_min,
            score_max: manifest.score_max,
            final_scale: self.final_scale,
            judge_scale,
            sum_scale,
            rule,
        })
    }
}
