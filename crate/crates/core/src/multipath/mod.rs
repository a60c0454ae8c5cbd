//! Multi-path score distribution learning.
//!
//! Each of the `K` judge scores of a performance is sorted by rigor rank and
//! gets its own head over the shared segment features. At inference the
//! decoded judge scores are combined by the sport's rule: drop the lowest and
//! highest few, sum the rest, multiply by the difficulty degree (DD). The DD
//! is either taken from the annotations or predicted by a scalar side head.

pub mod checkpoint;
mod train;

use serde::{Deserialize, Serialize};

use crate::distgen::{decode_argmax, kl_divergence, make_scale, target_distribution, DistributionSpec, ScoreDistribution, ScoreScale};
use crate::error::{Error, Result};
use crate::nethead::{
    forward_regression, forward_usdl, loss_and_grad_regression, loss_and_grad_usdl, FeatureMatrix,
    HeadParams, ParamSet, Pooling,
};

pub use train::train_musdl;

/// Judge scores are doubled onto an integer grid before building targets.
pub const JUDGE_SCALE_FACTOR: f64 = 2.0;

/// Predicted DDs below this are clamped before fusion.
pub const MIN_PREDICTED_DD: f64 = 0.1;

/// Raw judge scores of one performance plus its difficulty degree, if known.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgePanel {
    pub judge_scores: Vec<f64>,
    pub difficulty_degree: Option<f64>,
}

impl JudgePanel {
    pub fn new(judge_scores: Vec<f64>, difficulty_degree: Option<f64>) -> Result<Self> {
        if judge_scores.is_empty() {
            return Err(Error::InconsistentPanelSize {
                expected: 1,
                found: 0,
            });
        }
        if let Some(s) = judge_scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("non-finite judge score {s}")));
        }
        if let Some(dd) = difficulty_degree {
            if !(dd.is_finite() && dd > 0.0) {
                return Err(Error::Validation(format!(
                    "difficulty degree must be positive, got {dd}"
                )));
            }
        }
        Ok(Self {
            judge_scores,
            difficulty_degree,
        })
    }

    pub fn len(&self) -> usize {
        self.judge_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judge_scores.is_empty()
    }

    pub fn check_range(&self, min: f64, max: f64) -> Result<()> {
        match self.judge_scores.iter().find(|&&s| s < min || s > max) {
            Some(&value) => Err(Error::OutOfRange { value, min, max }),
            None => Ok(()),
        }
    }
}

/// Where the fusion multiplier comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierSource {
    GroundTruthDd,
    PredictedDd,
    None,
}

/// Trim-and-sum rule: drop `drop_low` lowest and `drop_high` highest scores,
/// sum the rest and scale by the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionRule {
    pub drop_low: usize,
    pub drop_high: usize,
    pub multiplier_source: MultiplierSource,
}

impl FusionRule {
    /// Olympic diving: seven judges, two dropped at each end, times DD.
    pub const DIVING: FusionRule = FusionRule {
        drop_low: 2,
        drop_high: 2,
        multiplier_source: MultiplierSource::GroundTruthDd,
    };

    /// Plain sum of all sub-scores (surgical skill rubrics).
    pub const SUM: FusionRule = FusionRule {
        drop_low: 0,
        drop_high: 0,
        multiplier_source: MultiplierSource::None,
    };

    pub fn check_panel_size(&self, k: usize) -> Result<()> {
        let dropped = self.drop_low + self.drop_high;
        if dropped >= k {
            return Err(Error::InsufficientJudges {
                dropped,
                available: k,
            });
        }
        Ok(())
    }

    pub fn kept(&self, k: usize) -> Result<usize> {
        self.check_panel_size(k)?;
        Ok(k - self.drop_low - self.drop_high)
    }
}

/// Weights for `K` judge heads and an optional scalar DD head.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadParams {
    pub heads: Vec<HeadParams>,
    pub dd_head: Option<HeadParams>,
}

impl MultiHeadParams {
    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .heads
            .first()
            .ok_or_else(|| Error::ShapeMismatch("multi-head model has no heads".into()))?;
        for h in self.heads.iter().chain(self.dd_head.as_ref()) {
            h.validate()?;
            if h.input_dim() != first.input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "heads disagree on input dimension: {} vs {}",
                    h.input_dim(),
                    first.input_dim()
                )));
            }
        }
        if let Some(dd) = &self.dd_head {
            if dd.output_dim() != 1 {
                return Err(Error::ShapeMismatch("DD head must emit one value".into()));
            }
        }
        Ok(())
    }
}

impl ParamSet for MultiHeadParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.heads
            .iter()
            .chain(self.dd_head.as_ref())
            .flat_map(ParamSet::param_slices)
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.heads
            .iter_mut()
            .chain(self.dd_head.as_mut())
            .flat_map(ParamSet::param_slices_mut)
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            heads: self.heads.iter().map(ParamSet::zeros_like).collect(),
            dd_head: self.dd_head.as_ref().map(ParamSet::zeros_like),
        }
    }
}

/// Stable ascending sort of the judge scores; DD untouched.
pub fn sort_judges(panel: &JudgePanel) -> JudgePanel {
    let mut judge_scores = panel.judge_scores.clone();
    judge_scores.sort_by(f64::total_cmp);
    JudgePanel {
        judge_scores,
        difficulty_degree: panel.difficulty_degree,
    }
}

/// Scale for doubled judge scores, e.g. `(0, 20, 21)` for a 0..10 half-point panel.
pub fn judge_scale(judge_min: f64, judge_max: f64) -> Result<ScoreScale> {
    let lo = JUDGE_SCALE_FACTOR * judge_min;
    let hi = JUDGE_SCALE_FACTOR * judge_max;
    make_scale(lo, hi, (hi - lo).round() as usize + 1)
}

/// One soft target per sorted judge score, built on the doubled judge scale.
pub fn judge_targets(
    sorted_panel: &JudgePanel,
    judge_scale: &ScoreScale,
    spec: &DistributionSpec,
) -> Result<Vec<ScoreDistribution>> {
    sorted_panel
        .judge_scores
        .iter()
        .map(|&s| target_distribution(judge_scale, JUDGE_SCALE_FACTOR * s, spec))
        .collect()
}

fn check_heads(params: &MultiHeadParams, count: usize) -> Result<()> {
    if params.heads.len() != count {
        return Err(Error::InconsistentPanelSize {
            expected: params.heads.len(),
            found: count,
        });
    }
    Ok(())
}

/// Output distribution of every judge head.
pub fn multi_forward(
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    judge_scale: &ScoreScale,
    pooling: Pooling,
) -> Result<Vec<ScoreDistribution>> {
    params
        .heads
        .iter()
        .map(|h| forward_usdl(features, h, judge_scale, pooling))
        .collect()
}

/// Sum over heads of `KL(target_k || predicted_k)`.
pub fn multi_loss(
    targets: &[ScoreDistribution],
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    pooling: Pooling,
) -> Result<f64> {
    check_heads(params, targets.len())?;
    let mut total = 0.0;
    for (target, head) in targets.iter().zip(&params.heads) {
        let predicted = forward_usdl(features, head, target.scale(), pooling)?;
        total += kl_divergence(target, &predicted)?;
    }
    Ok(total)
}

/// Gradient of [`multi_loss`]; the DD head (if any) receives zeros.
pub fn multi_backward(
    targets: &[ScoreDistribution],
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    pooling: Pooling,
) -> Result<MultiHeadParams> {
    Ok(sample_loss_and_grad(targets, None, features, params, pooling, 0.0)?.1)
}

/// Joint per-sample objective: `multi_loss + dd_weight * (dd_pred - dd)^2`.
///
/// The squared-error term is only present when both a DD label and a DD head exist.
pub fn joint_loss(
    targets: &[ScoreDistribution],
    dd_label: Option<f64>,
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    pooling: Pooling,
    dd_weight: f64,
) -> Result<f64> {
    Ok(sample_loss_and_grad(targets, dd_label, features, params, pooling, dd_weight)?.0)
}

pub fn joint_backward(
    targets: &[ScoreDistribution],
    dd_label: Option<f64>,
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    pooling: Pooling,
    dd_weight: f64,
) -> Result<MultiHeadParams> {
    Ok(sample_loss_and_grad(targets, dd_label, features, params, pooling, dd_weight)?.1)
}

pub(crate) fn sample_loss_and_grad(
    targets: &[ScoreDistribution],
    dd_label: Option<f64>,
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    pooling: Pooling,
    dd_weight: f64,
) -> Result<(f64, MultiHeadParams)> {
    check_heads(params, targets.len())?;
    let mut total = 0.0;
    let mut heads = Vec::with_capacity(params.heads.len());
    for (target, head) in targets.iter().zip(&params.heads) {
        let (loss, grads) = loss_and_grad_usdl(target, features, head, pooling, true)?;
        total += loss;
        heads.push(grads.expect("gradient requested"));
    }
    let dd_head = match (&params.dd_head, dd_label) {
        (Some(dd_params), Some(dd)) => {
            let (loss, mut grads) = loss_and_grad_regression(dd, features, dd_params, pooling)?;
            total += dd_weight * loss;
            grads.scale_by(dd_weight);
            Some(grads)
        }
        (Some(dd_params), None) => Some(dd_params.zeros_like()),
        (None, _) => None,
    };
    Ok((total, MultiHeadParams { heads, dd_head }))
}

/// Sorts, trims and sums the judge scores, then multiplies by `dd`.
pub fn fuse_rule(decoded_judge_scores: &[f64], rule: &FusionRule, dd: f64) -> Result<f64> {
    Ok(trimmed_sum(decoded_judge_scores, rule)? * dd)
}

fn trimmed_sum(scores: &[f64], rule: &FusionRule) -> Result<f64> {
    rule.check_panel_size(scores.len())?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rule.drop_low..sorted.len() - rule.drop_high].iter().sum())
}

/// Trimmed judge sum of a panel, without any multiplier.
pub fn trimmed_judge_sum(panel: &JudgePanel, rule: &FusionRule) -> Result<f64> {
    trimmed_sum(&panel.judge_scores, rule)
}

/// Raw-unit scale for trimmed sums of `kept` judges on a half-point grid.
pub fn trimmed_sum_scale(judge_min: f64, judge_max: f64, kept: usize) -> Result<ScoreScale> {
    let lo = kept as f64 * judge_min;
    let hi = kept as f64 * judge_max;
    make_scale(lo, hi, (JUDGE_SCALE_FACTOR * (hi - lo)).round() as usize + 1)
}

/// Target for the single-path DD baseline: the trimmed judge sum before the DD multiplier.
pub fn usdl_dd_target(
    panel: &JudgePanel,
    rule: &FusionRule,
    sum_scale: &ScoreScale,
    spec: &DistributionSpec,
) -> Result<ScoreDistribution> {
    let label = trimmed_judge_sum(panel, rule)?;
    target_distribution(sum_scale, label, spec)
}

/// Predicted DD from the side head, clamped to [`MIN_PREDICTED_DD`].
pub fn predict_dd(features: &FeatureMatrix, params: &MultiHeadParams, pooling: Pooling) -> Result<f64> {
    let head = params.dd_head.as_ref().ok_or(Error::MissingDdHead)?;
    Ok(forward_regression(features, head, pooling)?.max(MIN_PREDICTED_DD))
}

/// Decoded raw judge scores, one per head (halved bin centres).
pub fn decode_judges(
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    judge_scale: &ScoreScale,
    pooling: Pooling,
) -> Result<Vec<f64>> {
    Ok(multi_forward(features, params, judge_scale, pooling)?
        .iter()
        .map(|d| decode_argmax(d) / JUDGE_SCALE_FACTOR)
        .collect())
}

/// Final score in raw units: decode every head, then apply the fusion rule.
///
/// `ground_truth_dd` is consulted only when the rule asks for it.
pub fn infer_musdl(
    features: &FeatureMatrix,
    params: &MultiHeadParams,
    judge_scale: &ScoreScale,
    rule: &FusionRule,
    ground_truth_dd: Option<f64>,
    pooling: Pooling,
) -> Result<f64> {
    let dd = match rule.multiplier_source {
        MultiplierSource::GroundTruthDd => ground_truth_dd.ok_or(Error::MissingDd(None))?,
        MultiplierSource::PredictedDd => predict_dd(features, params, pooling)?,
        MultiplierSource::None => 1.0,
    };
    let decoded = decode_judges(features, params, judge_scale, pooling)?;
    fuse_rule(&decoded, rule, dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nethead::loss_usdl;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DIVE: [f64; 7] = [9.0, 8.5, 9.0, 8.0, 9.0, 8.5, 9.0];

    /// Head whose output is a (numerically) hard delta at bin `index`.
    fn delta_head(input_dim: usize, bins: usize, index: usize) -> HeadParams {
        let mut h = HeadParams::zeros(input_dim, 2, 2, bins);
        h.layer3.bias[index] = 100.0;
        h
    }

    fn dd_head(input_dim: usize, value: f64) -> HeadParams {
        let mut h = HeadParams::zeros(input_dim, 2, 2, 1);
        h.layer3.bias = Array1::from_elem(1, value);
        h
    }

    #[test]
    fn sort_examples() {
        let p = JudgePanel::new(DIVE.to_vec(), Some(3.8)).unwrap();
        let s = sort_judges(&p);
        assert_eq!(s.judge_scores, vec![8.0, 8.5, 8.5, 9.0, 9.0, 9.0, 9.0]);
        assert_eq!(s.difficulty_degree, Some(3.8));
        assert_eq!(sort_judges(&s), s);
        let one = JudgePanel::new(vec![3.0], None).unwrap();
        assert_eq!(sort_judges(&one), one);
    }

    #[test]
    fn panel_validation() {
        assert!(JudgePanel::new(vec![], None).is_err());
        assert!(JudgePanel::new(vec![1.0], Some(0.0)).is_err());
        let p = JudgePanel::new(vec![1.0, 11.0], None).unwrap();
        assert!(matches!(p.check_range(0.0, 10.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn judge_target_examples() {
        let scale = judge_scale(0.0, 10.0).unwrap();
        assert_eq!(scale, make_scale(0.0, 20.0, 21).unwrap());
        let spec = DistributionSpec::Gaussian { sigma: 1.0 };
        let t = judge_targets(&JudgePanel::new(vec![8.5], None).unwrap(), &scale, &spec).unwrap();
        assert_eq!(t[0].argmax_index(), 17);
        let t = judge_targets(&JudgePanel::new(vec![0.0], None).unwrap(), &scale, &spec).unwrap();
        assert_eq!(t[0].argmax_index(), 0);
        let t = judge_targets(&JudgePanel::new(vec![7.5; 4], None).unwrap(), &scale, &spec).unwrap();
        assert!(t.windows(2).all(|w| w[0] == w[1]));
        let err = judge_targets(&JudgePanel::new(vec![10.5], None).unwrap(), &scale, &spec);
        assert!(matches!(err, Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn fuse_examples() {
        let v = fuse_rule(&DIVE, &FusionRule::DIVING, 3.8).unwrap();
        assert!((v - 100.70).abs() < 1e-9);
        assert_eq!(fuse_rule(&[2.0, 3.0, 5.0], &FusionRule::SUM, 1.0).unwrap(), 10.0);
        let rule = FusionRule {
            drop_low: 1,
            drop_high: 2,
            multiplier_source: MultiplierSource::GroundTruthDd,
        };
        assert_eq!(fuse_rule(&[6.5; 6], &rule, 2.0).unwrap(), 3.0 * 6.5 * 2.0);
        assert!(matches!(
            fuse_rule(&[1.0, 2.0, 3.0, 4.0], &FusionRule::DIVING, 1.0),
            Err(Error::InsufficientJudges { dropped: 4, available: 4 })
        ));
    }

    #[test]
    fn usdl_dd_examples() {
        let p = JudgePanel::new(DIVE.to_vec(), Some(3.8)).unwrap();
        assert_eq!(trimmed_judge_sum(&p, &FusionRule::DIVING).unwrap(), 26.5);
        let sum_scale = trimmed_sum_scale(0.0, 10.0, 3).unwrap();
        assert_eq!(sum_scale, make_scale(0.0, 30.0, 61).unwrap());
        let spec = DistributionSpec::Gaussian { sigma: 1.0 };
        let t = usdl_dd_target(&p, &FusionRule::DIVING, &sum_scale, &spec).unwrap();
        assert_eq!(decode_argmax(&t), 26.5);

        let single = JudgePanel::new(vec![4.5], None).unwrap();
        assert_eq!(trimmed_judge_sum(&single, &FusionRule::SUM).unwrap(), 4.5);
        let eq = JudgePanel::new(vec![6.0; 5], None).unwrap();
        let rule = FusionRule {
            drop_low: 1,
            drop_high: 1,
            multiplier_source: MultiplierSource::None,
        };
        assert_eq!(trimmed_judge_sum(&eq, &rule).unwrap(), 18.0);
    }

    #[test]
    fn infer_reproduces_diving_example() {
        let scale = judge_scale(0.0, 10.0).unwrap();
        let doubled = [18, 17, 18, 16, 18, 17, 18];
        let params = MultiHeadParams {
            heads: doubled.iter().map(|&b| delta_head(3, 21, b)).collect(),
            dd_head: Some(dd_head(3, 3.8)),
        };
        let f = FeatureMatrix::from_rows(&vec![vec![0.2, 0.1, -0.3]; 10]).unwrap();
        let gt = infer_musdl(&f, &params, &scale, &FusionRule::DIVING, Some(3.8), Pooling::ScoreLevel).unwrap();
        assert!((gt - 100.70).abs() < 1e-9);

        let predicted_rule = FusionRule {
            multiplier_source: MultiplierSource::PredictedDd,
            ..FusionRule::DIVING
        };
        let pred = infer_musdl(&f, &params, &scale, &predicted_rule, None, Pooling::ScoreLevel).unwrap();
        assert_eq!(pred, gt);

        assert!(matches!(
            infer_musdl(&f, &params, &scale, &FusionRule::DIVING, None, Pooling::ScoreLevel),
            Err(Error::MissingDd(_))
        ));
        let no_dd = MultiHeadParams {
            dd_head: None,
            ..params
        };
        assert!(matches!(
            infer_musdl(&f, &no_dd, &scale, &predicted_rule, None, Pooling::ScoreLevel),
            Err(Error::MissingDdHead)
        ));
    }

    #[test]
    fn predicted_dd_is_clamped() {
        let params = MultiHeadParams {
            heads: vec![delta_head(2, 21, 10)],
            dd_head: Some(dd_head(2, -3.0)),
        };
        let f = FeatureMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(predict_dd(&f, &params, Pooling::FeatureLevel).unwrap(), MIN_PREDICTED_DD);
    }

    #[test]
    fn single_head_reduces_to_usdl() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = HeadParams::init(3, 5, 4, 21, &mut rng);
        let scale = judge_scale(0.0, 10.0).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![0.5, -0.2, 0.9], vec![0.1, 0.4, -0.7]]).unwrap();
        let params = MultiHeadParams {
            heads: vec![head.clone()],
            dd_head: None,
        };
        let d = forward_usdl(&f, &head, &scale, Pooling::ScoreLevel).unwrap();
        assert_eq!(multi_forward(&f, &params, &scale, Pooling::ScoreLevel).unwrap(), vec![d.clone()]);
        let v = infer_musdl(&f, &params, &scale, &FusionRule::SUM, None, Pooling::ScoreLevel).unwrap();
        assert_eq!(v, decode_argmax(&d) / 2.0);

        let target = target_distribution(&scale, 13.0, &DistributionSpec::Gaussian { sigma: 1.0 }).unwrap();
        let a = multi_loss(std::slice::from_ref(&target), &f, &params, Pooling::ScoreLevel).unwrap();
        let b = loss_usdl(&target, &f, &head, Pooling::ScoreLevel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_heads_identical_outputs_and_additive_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let head = HeadParams::init(3, 5, 4, 21, &mut rng);
        let other = HeadParams::init(3, 5, 4, 21, &mut rng);
        let scale = judge_scale(0.0, 10.0).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![rng.random(), rng.random(), rng.random()]]).unwrap();
        let same = MultiHeadParams {
            heads: vec![head.clone(); 3],
            dd_head: None,
        };
        let out = multi_forward(&f, &same, &scale, Pooling::FeatureLevel).unwrap();
        assert!(out.windows(2).all(|w| w[0] == w[1]));

        let spec = DistributionSpec::Gaussian { sigma: 1.0 };
        let ta = target_distribution(&scale, 4.0, &spec).unwrap();
        let tb = target_distribution(&scale, 15.0, &spec).unwrap();
        let a = loss_usdl(&ta, &f, &head, Pooling::FeatureLevel).unwrap();
        let b = loss_usdl(&tb, &f, &other, Pooling::FeatureLevel).unwrap();
        let two = MultiHeadParams {
            heads: vec![head, other],
            dd_head: None,
        };
        let total = multi_loss(&[ta, tb], &f, &two, Pooling::FeatureLevel).unwrap();
        assert_eq!(total, a + b);

        let preds = multi_forward(&f, &two, &scale, Pooling::FeatureLevel).unwrap();
        assert_eq!(multi_loss(&preds, &f, &two, Pooling::FeatureLevel).unwrap(), 0.0);
    }

    #[test]
    fn head_count_mismatch() {
        let params = MultiHeadParams {
            heads: vec![HeadParams::zeros(2, 2, 2, 21); 2],
            dd_head: None,
        };
        let f = FeatureMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let t = ScoreDistribution::uniform(judge_scale(0.0, 10.0).unwrap());
        assert!(matches!(
            multi_loss(&[t], &f, &params, Pooling::ScoreLevel),
            Err(Error::InconsistentPanelSize { .. })
        ));
    }

    #[test]
    fn rule_serde_names() {
        let r: FusionRule = toml::from_str(
            "drop_low = 2\ndrop_high = 2\nmultiplier_source = \"predicted_dd\"",
        )
        .unwrap();
        assert_eq!(r.multiplier_source, MultiplierSource::PredictedDd);
    }
}
