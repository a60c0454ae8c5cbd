use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distgen::{DistributionSpec, ScoreDistribution, ScoreScale};
use crate::error::{Error, Result};
use crate::nethead::{run_training, FeatureMatrix, HeadParams, TrainConfig, TrainOutcome};

use super::{judge_targets, sample_loss_and_grad, sort_judges, FusionRule, JudgePanel, MultiHeadParams, MultiplierSource};

/// Trains one head per sorted judge rank (plus a DD head when the rule uses a
/// predicted DD) on the summed per-head KL losses.
///
/// Heads are initialised in rank order from the seeded generator, followed by
/// the DD head, so a one-judge run without DD consumes exactly the same random
/// stream as [`crate::nethead::train_usdl`].
pub fn train_musdl(
    dataset: &[(FeatureMatrix, JudgePanel)],
    judge_scale: &ScoreScale,
    spec: &DistributionSpec,
    config: &TrainConfig,
    rule: &FusionRule,
) -> Result<TrainOutcome<MultiHeadParams>> {
    config.validate()?;
    let (first_features, first_panel) = dataset.first().ok_or(Error::EmptyDataset)?;
    let k = first_panel.len();
    let input_dim = first_features.dim();
    rule.check_panel_size(k)?;
    let with_dd = rule.multiplier_source == MultiplierSource::PredictedDd;

    let mut prepared: Vec<(Vec<ScoreDistribution>, Option<f64>)> = Vec::with_capacity(dataset.len());
    for (i, (features, panel)) in dataset.iter().enumerate() {
        if panel.len() != k {
            return Err(Error::InconsistentPanelSize {
                expected: k,
                found: panel.len(),
            });
        }
        if features.dim() != input_dim {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has feature dimension {}, expected {input_dim}",
                features.dim()
            )));
        }
        if with_dd && panel.difficulty_degree.is_none() {
            return Err(Error::MissingDd(Some(format!("#{i}"))));
        }
        let sorted = sort_judges(panel);
        prepared.push((judge_targets(&sorted, judge_scale, spec)?, panel.difficulty_degree));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let heads = (0..k)
        .map(|_| {
            HeadParams::init(
                input_dim,
                config.hidden1,
                config.hidden2,
                judge_scale.num_bins(),
                &mut rng,
            )
        })
        .collect();
    let dd_head = with_dd.then(|| HeadParams::init(input_dim, config.hidden1, config.hidden2, 1, &mut rng));
    let mut params = MultiHeadParams { heads, dd_head };

    let history = run_training(&mut params, dataset.len(), config, &mut rng, |i, p| {
        let (targets, dd) = &prepared[i];
        sample_loss_and_grad(
            targets,
            *dd,
            &dataset[i].0,
            p,
            config.pooling,
            config.dd_loss_weight,
        )
    })?;
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}
