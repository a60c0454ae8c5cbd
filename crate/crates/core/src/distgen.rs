//! Ground-truth score distributions over a discretized score axis.
//!
//! A scalar label `s` becomes a soft target by evaluating a density centred on
//! `s` at every bin centre of a [`ScoreScale`], truncating to the scale's
//! support and renormalizing. Predictions are decoded back to a scalar by
//! taking the most probable bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities inside the KL logarithm.
pub const KL_EPSILON: f64 = 1e-12;

/// Uniformly discretized, bounded score axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScale", into = "RawScale")]
pub struct ScoreScale {
    min_score: f64,
    max_score: f64,
    num_bins: usize,
}

#[derive(Serialize, Deserialize)]
struct RawScale {
    min: f64,
    max: f64,
    bins: usize,
}

impl TryFrom<RawScale> for ScoreScale {
    type Error = Error;

    fn try_from(raw: RawScale) -> Result<Self> {
        make_scale(raw.min, raw.max, raw.bins)
    }
}

impl From<ScoreScale> for RawScale {
    fn from(s: ScoreScale) -> Self {
        RawScale {
            min: s.min_score,
            max: s.max_score,
            bins: s.num_bins,
        }
    }
}

/// Builds a uniform scale with `num_bins` centres from `min_score` to `max_score` inclusive.
pub fn make_scale(min_score: f64, max_score: f64, num_bins: usize) -> Result<ScoreScale> {
    if !(min_score.is_finite() && max_score.is_finite()) {
        return Err(Error::InvalidScale(format!(
            "bounds must be finite, got [{min_score}, {max_score}]"
        )));
    }
    if min_score >= max_score {
        return Err(Error::InvalidScale(format!(
            "min {min_score} must be below max {max_score}"
        )));
    }
    if num_bins < 2 {
        return Err(Error::InvalidScale(format!(
            "need at least 2 bins, got {num_bins}"
        )));
    }
    Ok(ScoreScale {
        min_score,
        max_score,
        num_bins,
    })
}

impl ScoreScale {
    pub fn min_score(&self) -> f64 {
        self.min_score
    }

    pub fn max_score(&self) -> f64 {
        self.max_score
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bin_width(&self) -> f64 {
        (self.max_score - self.min_score) / (self.num_bins - 1) as f64
    }

    /// Centre of bin `i`. The last bin is pinned to `max_score` exactly.
    pub fn center(&self, i: usize) -> f64 {
        debug_assert!(i < self.num_bins);
        if i + 1 == self.num_bins {
            self.max_score
        } else {
            self.min_score + i as f64 * self.bin_width()
        }
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.num_bins).map(|i| self.center(i)).collect()
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min_score && value <= self.max_score
    }

    /// Index of the bin centre closest to `value`, lowest index on ties.
    pub fn nearest_bin(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for i in 0..self.num_bins {
            let d = (self.center(i) - value).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }
}

/// Probability vector over a [`ScoreScale`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    scale: ScoreScale,
    probs: Vec<f64>,
}

impl ScoreDistribution {
    /// Validates length, nonnegativity and unit mass (1e-9).
    pub fn new(scale: ScoreScale, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != scale.num_bins {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for {} bins",
                probs.len(),
                scale.num_bins
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { scale, probs })
    }

    /// Point mass on bin `index`.
    pub fn delta(scale: ScoreScale, index: usize) -> Result<Self> {
        if index >= scale.num_bins {
            return Err(Error::InvalidDistribution(format!(
                "delta index {index} outside {} bins",
                scale.num_bins
            )));
        }
        let mut probs = vec![0.0; scale.num_bins];
        probs[index] = 1.0;
        Ok(Self { scale, probs })
    }

    pub fn uniform(scale: ScoreScale) -> Self {
        let p = 1.0 / scale.num_bins as f64;
        Self {
            scale,
            probs: vec![p; scale.num_bins],
        }
    }

    pub fn scale(&self) -> &ScoreScale {
        &self.scale
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Index of the most probable bin, lowest index on exact ties.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Shape of the soft target built around a label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { sigma: f64 },
    /// Peak at the label, linear falloff to zero at `label ± half_width`.
    Triangle { half_width: f64 },
    /// Chi-square with `dof` degrees of freedom, shifted so its mean is the label.
    ChiSquare { dof: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            DistributionSpec::Gaussian { sigma } => ("sigma", sigma),
            DistributionSpec::Triangle { half_width } => ("half_width", half_width),
            DistributionSpec::ChiSquare { dof } => ("dof", dof),
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "{name} must be positive and finite, got {v}"
            )))
        }
    }
}

/// Soft target distribution for `label` on `scale`.
///
/// Densities are evaluated in log space and shifted by their maximum before
/// exponentiating, so a very narrow Gaussian collapses onto the nearest bin
/// instead of underflowing everywhere. If no bin receives mass (triangle
/// narrower than the bin spacing) the result is a delta at the nearest bin.
pub fn target_distribution(
    scale: &ScoreScale,
    label: f64,
    spec: &DistributionSpec,
) -> Result<ScoreDistribution> {
    spec.validate()?;
    if !label.is_finite() || !scale.contains(label) {
        return Err(Error::LabelOutOfRange {
            label,
            min: scale.min_score,
            max: scale.max_score,
        });
    }

    let centers = scale.bin_centers();
    let weights: Vec<f64> = match *spec {
        DistributionSpec::Gaussian { sigma } => {
            let log_g: Vec<f64> = centers
                .iter()
                .map(|&c| {
                    let z = (c - label) / sigma;
                    -0.5 * z * z
                })
                .collect();
            exp_shifted(&log_g)
        }
        DistributionSpec::Triangle { half_width } => centers
            .iter()
            .map(|&c| (1.0 - (c - label).abs() / half_width).max(0.0))
            .collect(),
        DistributionSpec::ChiSquare { dof } => {
            let offset = label - dof;
            let log_g: Vec<f64> = centers
                .iter()
                .map(|&c| {
                    let x = c - offset;
                    if x > 0.0 {
                        (0.5 * dof - 1.0) * x.ln() - 0.5 * x
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            exp_shifted(&log_g)
        }
    };

    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        log::debug!("target density vanished on every bin; using a delta at the nearest bin");
        return ScoreDistribution::delta(*scale, scale.nearest_bin(label));
    }
    let probs = weights.into_iter().map(|w| w / total).collect();
    Ok(ScoreDistribution {
        scale: *scale,
        probs,
    })
}

fn exp_shifted(log_values: &[f64]) -> Vec<f64> {
    let max = log_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; log_values.len()];
    }
    log_values.iter().map(|&l| (l - max).exp()).collect()
}

/// `KL(target || predicted)` in nats.
///
/// Bins where the target is zero contribute nothing; predicted values are
/// floored at [`KL_EPSILON`] inside the logarithm only.
pub fn kl_divergence(target: &ScoreDistribution, predicted: &ScoreDistribution) -> Result<f64> {
    if target.scale != predicted.scale {
        return Err(Error::ScaleMismatch);
    }
    Ok(kl_terms(&target.probs, &predicted.probs).max(0.0))
}

pub(crate) fn kl_terms(target: &[f64], predicted: &[f64]) -> f64 {
    target
        .iter()
        .zip(predicted)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| t * (t.ln() - q.max(KL_EPSILON).ln()))
        .sum()
}

/// Bin centre with the highest probability (lowest centre on ties).
pub fn decode_argmax(dist: &ScoreDistribution) -> f64 {
    dist.scale.center(dist.argmax_index())
}
