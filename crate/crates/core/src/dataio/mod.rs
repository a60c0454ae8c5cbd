//! Dataset records, score normalization, segment schedules and file formats.

mod files;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipath::{FusionRule, JudgePanel, JUDGE_SCALE_FACTOR};
use crate::nethead::FeatureMatrix;

pub use files::{
    load_dataset, read_annotations, read_features, read_manifest, write_annotations, write_dataset,
    write_features, write_manifest, AnnotationRow, DatasetFiles, LoadedDataset, FUSION_TOLERANCE,
};
pub use synth::{synth_dataset, synth_manifest, SynthConfig};

/// One annotated action instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub features: FeatureMatrix,
    pub final_score: f64,
    pub judge_panel: Option<JudgePanel>,
    pub action_class: Option<String>,
}

/// Raw judge score range and grid step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl JudgeRange {
    /// Diving judges: 0 to 10 in half points.
    pub const DIVING: JudgeRange = JudgeRange {
        min: 0.0,
        max: 10.0,
        step: 0.5,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.min < self.max && self.step > 0.0 && self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bad judge range {}..{} step {}",
                self.min, self.max, self.step
            )));
        }
        Ok(())
    }

    pub fn snap(&self, value: f64) -> f64 {
        let steps = ((value - self.min) / self.step).round();
        (self.min + steps * self.step).clamp(self.min, self.max)
    }

    pub fn on_grid(&self, value: f64) -> bool {
        let steps = (value - self.min) / self.step;
        (steps - steps.round()).abs() <= 1e-9
    }
}

/// Train and test sample ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Dataset-level metadata.
///
/// Stored as TOML:
///
/// ```toml
/// name = "synthetic"
/// score_min = 0.0
/// score_max = 114.0
/// judge_count = 7
/// judge_range = { min = 0.0, max = 10.0, step = 0.5 }
/// fusion_rule = { drop_low = 2, drop_high = 2, multiplier_source = "ground_truth_dd" }
///
/// [split]
/// train = ["s00000", "s00001"]
/// test = ["s00002"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub score_min: f64,
    pub score_max: f64,
    #[serde(default)]
    pub judge_count: usize,
    #[serde(default = "default_judge_range")]
    pub judge_range: JudgeRange,
    #[serde(default = "default_rule")]
    pub fusion_rule: FusionRule,
    #[serde(default)]
    pub split: Split,
}

fn default_judge_range() -> JudgeRange {
    JudgeRange::DIVING
}

fn default_rule() -> FusionRule {
    FusionRule::SUM
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.score_min < self.score_max) {
            return Err(Error::Validation(format!(
                "score_min {} must be below score_max {}",
                self.score_min, self.score_max
            )));
        }
        self.judge_range.validate()?;
        if self.judge_count > 0 {
            self.fusion_rule.check_panel_size(self.judge_count)?;
        }
        let train: std::collections::BTreeSet<&String> = self.split.train.iter().collect();
        let shared: Vec<&str> = self
            .split
            .test
            .iter()
            .filter(|id| train.contains(id))
            .map(String::as_str)
            .collect();
        if !shared.is_empty() {
            return Err(Error::Validation(format!(
                "ids in both train and test split: {}",
                shared.join(", ")
            )));
        }
        Ok(())
    }
}

/// Splits `records` by the manifest's id lists, keeping each list's order.
pub fn split_records<'a>(
    records: &'a [SampleRecord],
    manifest: &DatasetManifest,
) -> Result<(Vec<&'a SampleRecord>, Vec<&'a SampleRecord>)> {
    let lookup = |ids: &[String]| -> Result<Vec<&'a SampleRecord>> {
        ids.iter()
            .map(|id| {
                records
                    .iter()
                    .find(|r| &r.id == id)
                    .ok_or_else(|| Error::Validation(format!("split references unknown id {id}")))
            })
            .collect()
    };
    Ok((lookup(&manifest.split.train)?, lookup(&manifest.split.test)?))
}

/// Maps a raw final score onto `[0, 100]`.
pub fn normalize_final(s: f64, s_min: f64, s_max: f64) -> Result<f64> {
    if s_min == s_max {
        return Err(Error::DegenerateRange(s_min));
    }
    if !(s_min < s_max) || !(s >= s_min && s <= s_max) {
        return Err(Error::OutOfRange {
            value: s,
            min: s_min,
            max: s_max,
        });
    }
    Ok((s - s_min) / (s_max - s_min) * 100.0)
}

/// Inverse of [`normalize_final`].
pub fn denormalize_final(normalized: f64, s_min: f64, s_max: f64) -> Result<f64> {
    if s_min == s_max {
        return Err(Error::DegenerateRange(s_min));
    }
    Ok(s_min + normalized / 100.0 * (s_max - s_min))
}

/// Doubles a half-point judge score into an integer bin label.
pub fn normalize_judge(s: f64) -> Result<i64> {
    let doubled = JUDGE_SCALE_FACTOR * s;
    let rounded = doubled.round();
    if !doubled.is_finite() || (doubled - rounded).abs() > 1e-9 {
        return Err(Error::NonHalfPointScore(s));
    }
    Ok(rounded as i64)
}

/// Clip start schedules for cutting a video into fixed-length segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStrategy {
    /// Six back-to-back clips; expects the video resampled to 96 frames.
    Seg6,
    /// Ten clips on a fixed stride of `video_len / 10`, last start clamped.
    Seg10S1,
    /// Ten clips with starts `floor(i * (video_len - clip_len) / 9)`.
    Seg10S2,
}

impl SegmentStrategy {
    pub fn num_segments(&self) -> usize {
        match self {
            SegmentStrategy::Seg6 => 6,
            SegmentStrategy::Seg10S1 | SegmentStrategy::Seg10S2 => 10,
        }
    }
}

/// Start frames of each clip. Every start satisfies `start + clip_len <= video_len`.
pub fn segment_indices(strategy: SegmentStrategy, video_len: usize, clip_len: usize) -> Result<Vec<usize>> {
    if clip_len == 0 || video_len < clip_len {
        return Err(Error::VideoTooShort { video_len, clip_len });
    }
    let n = strategy.num_segments();
    let last = video_len - clip_len;
    let starts = match strategy {
        SegmentStrategy::Seg6 => {
            let stride = clip_len.min(video_len / n);
            (0..n).map(|i| (i * stride).min(last)).collect()
        }
        SegmentStrategy::Seg10S1 => {
            let stride = video_len / n;
            (0..n).map(|i| (i * stride).min(last)).collect()
        }
        SegmentStrategy::Seg10S2 => (0..n).map(|i| i * last / (n - 1)).collect(),
    };
    Ok(starts)
}
