use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distgen::ScoreDistribution;
use crate::error::{Error, Result};

use super::adam::{adam_step, AdamState, ParamSet};
use super::{loss_and_grad_regression, loss_and_grad_usdl, FeatureMatrix, HeadParams, TrainConfig};

/// Trained parameters and the mean training loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub loss_history: Vec<f64>,
}

/// Minibatch Adam over `num_samples` samples.
///
/// Each epoch visits the samples in a fresh seeded Fisher-Yates order; the last
/// partial batch is kept. `sample_loss` returns the loss and gradient of one
/// sample. Batch gradients are summed in visiting order and averaged, so runs
/// are bitwise reproducible for a given `rng` state.
pub(crate) fn run_training<P, F>(
    params: &mut P,
    num_samples: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut sample_loss: F,
) -> Result<Vec<f64>>
where
    P: ParamSet,
    F: FnMut(usize, &P) -> Result<(f64, P)>,
{
    if num_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut state = AdamState::new(params);
    let mut order: Vec<usize> = (0..num_samples).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let (loss, g) = sample_loss(i, params)?;
                epoch_loss += loss;
                grads.add_assign(&g);
            }
            grads.scale_by(1.0 / batch.len() as f64);
            adam_step(params, &grads, &mut state, config)?;
        }
        let mean = epoch_loss / num_samples as f64;
        log::debug!("epoch {epoch}: mean loss {mean}");
        history.push(mean);
    }
    Ok(history)
}

fn input_dim_of(features: &[&FeatureMatrix]) -> Result<usize> {
    let first = features.first().ok_or(Error::EmptyDataset)?;
    let d = first.dim();
    if let Some(bad) = features.iter().find(|f| f.dim() != d) {
        return Err(Error::ShapeMismatch(format!(
            "mixed feature dimensions {d} and {}",
            bad.dim()
        )));
    }
    Ok(d)
}

/// Trains a distribution head against fixed soft targets with KL loss.
pub fn train_usdl(
    dataset: &[(FeatureMatrix, ScoreDistribution)],
    config: &TrainConfig,
) -> Result<TrainOutcome<HeadParams>> {
    config.validate()?;
    let features: Vec<&FeatureMatrix> = dataset.iter().map(|(f, _)| f).collect();
    let input_dim = input_dim_of(&features)?;
    let scale = *dataset[0].1.scale();
    if dataset.iter().any(|(_, t)| *t.scale() != scale) {
        return Err(Error::ScaleMismatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params = HeadParams::init(
        input_dim,
        config.hidden1,
        config.hidden2,
        scale.num_bins(),
        &mut rng,
    );
    let history = run_training(&mut params, dataset.len(), config, &mut rng, |i, p| {
        let (features, target) = &dataset[i];
        let (loss, grads) = loss_and_grad_usdl(target, features, p, config.pooling, true)?;
        Ok((loss, grads.expect("gradient requested")))
    })?;
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// Trains a single-output head with squared-error loss (regression baseline).
pub fn train_regression(
    dataset: &[(FeatureMatrix, f64)],
    config: &TrainConfig,
) -> Result<TrainOutcome<HeadParams>> {
    config.validate()?;
    let features: Vec<&FeatureMatrix> = dataset.iter().map(|(f, _)| f).collect();
    let input_dim = input_dim_of(&features)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params = HeadParams::init(input_dim, config.hidden1, config.hidden2, 1, &mut rng);
    let history = run_training(&mut params, dataset.len(), config, &mut rng, |i, p| {
        let (features, label) = &dataset[i];
        loss_and_grad_regression(*label, features, p, config.pooling)
    })?;
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distgen::{make_scale, target_distribution, DistributionSpec};
    use crate::nethead::{loss_usdl, Pooling};

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 60,
            batch_size: 4,
            hidden1: 16,
            hidden2: 8,
            learning_rate: 1e-2,
            ..TrainConfig::with_seed(seed)
        }
    }

    fn tiny_dataset() -> Vec<(FeatureMatrix, ScoreDistribution)> {
        let scale = make_scale(0.0, 10.0, 11).unwrap();
        (0..6)
            .map(|i| {
                let x = i as f64 / 5.0;
                let f = FeatureMatrix::from_rows(&[vec![x, 1.0 - x, 0.5], vec![x, 1.0 - x, -0.5]]).unwrap();
                let t = target_distribution(&scale, 2.0 * i as f64, &DistributionSpec::Gaussian { sigma: 1.0 })
                    .unwrap();
                (f, t)
            })
            .collect()
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(train_usdl(&[], &small_config(0)), Err(Error::EmptyDataset)));
        assert!(matches!(train_regression(&[], &small_config(0)), Err(Error::EmptyDataset)));
    }

    #[test]
    fn single_sample_overfits() {
        let data = tiny_dataset().into_iter().take(1).collect::<Vec<_>>();
        let cfg = small_config(5);
        let out = train_usdl(&data, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = HeadParams::init(3, 16, 8, 11, &mut rng);
        let before = loss_usdl(&data[0].1, &data[0].0, &init, cfg.pooling).unwrap();
        let after = loss_usdl(&data[0].1, &data[0].0, &out.params, cfg.pooling).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert!(out.loss_history.last() < out.loss_history.first());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset();
        for pooling in [Pooling::ScoreLevel, Pooling::FeatureLevel] {
            let cfg = TrainConfig {
                pooling,
                ..small_config(42)
            };
            let a = train_usdl(&data, &cfg).unwrap();
            let b = train_usdl(&data, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn regression_descends() {
        let data: Vec<(FeatureMatrix, f64)> = tiny_dataset()
            .into_iter()
            .enumerate()
            .map(|(i, (f, _))| (f, i as f64))
            .collect();
        let out = train_regression(&data, &small_config(1)).unwrap();
        assert!(out.loss_history.last().unwrap() < &(out.loss_history[0] * 0.5));
    }

    #[test]
    fn mixed_scales_rejected() {
        let mut data = tiny_dataset();
        let other = make_scale(0.0, 20.0, 11).unwrap();
        data[1].1 = ScoreDistribution::uniform(other);
        assert!(matches!(train_usdl(&data, &small_config(0)), Err(Error::ScaleMismatch)));
    }
}
