//! Seeded synthetic judged datasets.
//!
//! Each sample draws a latent quality `q` uniformly over the judge range.
//! Judge `k` reports `q + noise_k` snapped to the judge grid; the DD is drawn
//! from a fixed set and the final score is the fusion rule applied to the
//! panel, so every record is internally consistent. Features are a seeded
//! linear embedding of `(q, DD, sorted judge deviations from q)` repeated over
//! the segments with independent per-segment noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipath::{fuse_rule, FusionRule, JudgePanel, MultiplierSource};
use crate::nethead::FeatureMatrix;

use super::{DatasetManifest, JudgeRange, SampleRecord, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub feature_dim: usize,
    pub n_segments: usize,
    pub judge_count: usize,
    pub rule: FusionRule,
    /// Standard deviation of each judge's deviation from the latent quality, in raw points.
    pub noise_std: f64,
    #[serde(default = "default_segment_noise")]
    pub segment_noise_std: f64,
    #[serde(default = "default_range")]
    pub judge_range: JudgeRange,
    #[serde(default = "default_dd_set")]
    pub dd_set: Vec<f64>,
}

fn default_segment_noise() -> f64 {
    0.05
}

fn default_range() -> JudgeRange {
    JudgeRange::DIVING
}

fn default_dd_set() -> Vec<f64> {
    vec![2.0, 2.4, 2.8, 3.2, 3.6, 3.8]
}

impl SynthConfig {
    /// Diving-style defaults: 0..10 half-point judges, DD in {2.0, ..., 3.8}.
    pub fn new(
        seed: u64,
        n_samples: usize,
        feature_dim: usize,
        n_segments: usize,
        judge_count: usize,
        rule: FusionRule,
        noise_std: f64,
    ) -> Self {
        Self {
            seed,
            n_samples,
            feature_dim,
            n_segments,
            judge_count,
            rule,
            noise_std,
            segment_noise_std: default_segment_noise(),
            judge_range: default_range(),
            dd_set: default_dd_set(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_samples == 0 || self.feature_dim == 0 || self.n_segments == 0 || self.judge_count == 0 {
            return bad("sample count, feature dimension, segment count and judge count must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite())
            || !(self.segment_noise_std >= 0.0 && self.segment_noise_std.is_finite())
        {
            return bad("noise levels must be finite and nonnegative");
        }
        if self.dd_set.is_empty() || self.dd_set.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("dd_set must be a nonempty list of positive values");
        }
        self.judge_range.validate()?;
        self.rule
            .check_panel_size(self.judge_count)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// Generates `config.n_samples` records with ids `s00000`, `s00001`, ...
pub fn synth_dataset(config: &SynthConfig) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let range = config.judge_range;
    let latent_dim = 2 + config.judge_count;

    let embed_scale = 1.0 / (latent_dim as f64).sqrt();
    let embedding = Array2::from_shape_fn((latent_dim, config.feature_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * embed_scale
    });

    let mid = 0.5 * (range.min + range.max);
    let half = 0.5 * (range.max - range.min);
    let dd_lo = config.dd_set.iter().copied().fold(f64::INFINITY, f64::min);
    let dd_hi = config.dd_set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dd_mid = 0.5 * (dd_lo + dd_hi);
    let dd_half = (0.5 * (dd_hi - dd_lo)).max(1e-12);

    let mut records = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let q = rng.random_range(range.min..=range.max);
        let judges: Vec<f64> = (0..config.judge_count)
            .map(|_| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                range.snap(q + config.noise_std * eps)
            })
            .collect();
        let dd = config.dd_set[rng.random_range(0..config.dd_set.len())];

        let multiplier = match config.rule.multiplier_source {
            MultiplierSource::None => 1.0,
            MultiplierSource::GroundTruthDd | MultiplierSource::PredictedDd => dd,
        };
        let final_score = fuse_rule(&judges, &config.rule, multiplier)?;

        let mut sorted = judges.clone();
        sorted.sort_by(f64::total_cmp);
        let mut latent = Vec::with_capacity(latent_dim);
        latent.push((q - mid) / half);
        latent.push((dd - dd_mid) / dd_half);
        latent.extend(sorted.iter().map(|s| s - q));
        let latent = ndarray::Array1::from(latent);
        let clean = latent.dot(&embedding);

        let segments = Array2::from_shape_fn((config.n_segments, config.feature_dim), |(_, j)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            clean[j] + config.segment_noise_std * e
        });

        records.push(SampleRecord {
            id: format!("s{i:05}"),
            features: FeatureMatrix::new(segments)?,
            final_score,
            judge_panel: Some(JudgePanel::new(judges, Some(dd))?),
            action_class: None,
        });
    }
    Ok(records)
}

/// Manifest for generated records: score bounds are the observed min and max
/// of the final scores, the first `n_train` records form the training split.
pub fn synth_manifest(name: &str, config: &SynthConfig, records: &[SampleRecord], n_train: usize) -> Result<DatasetManifest> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_train > records.len() {
        return Err(Error::InvalidConfig(format!(
            "{n_train} training samples requested from {}",
            records.len()
        )));
    }
    let score_min = records.iter().map(|r| r.final_score).fold(f64::INFINITY, f64::min);
    let mut score_max = records.iter().map(|r| r.final_score).fold(f64::NEG_INFINITY, f64::max);
    if score_max <= score_min {
        score_max = score_min + 1.0;
    }
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    Ok(DatasetManifest {
        name: name.to_string(),
        score_min,
        score_max,
        judge_count: config.judge_count,
        judge_range: config.judge_range,
        fusion_rule: config.rule,
        split: Split {
            train: ids[..n_train].to_vec(),
            test: ids[n_train..].to_vec(),
        },
    })
}
