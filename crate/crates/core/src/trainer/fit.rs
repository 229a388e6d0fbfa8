use rand::seq::SliceRandom;

use crate::dataset::{LabeledDataset, Standardizer};
use crate::error::{contract, Result};
use crate::metrics::{micro_f1, roc_auc};
use crate::nn::{rng_from_seed, split_seed};

use super::config::TrainConfig;
use super::model::{TrainedModel, Trainer};
use super::variant::VariantSpec;

/// Seed streams split from the master training seed.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_ITER: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_VALID: u64 = 3;
pub const STREAM_CALIBRATE: u64 = 4;

/// Seed handed to [`Trainer::step`] for 0-based iteration `k`.
pub fn step_seed(master: u64, k: usize) -> u64 {
    split_seed(split_seed(master, STREAM_ITER), k as u64)
}

/// Rate used to pick `(β, λ)`: the positive rate for binary labels, the
/// rarest class frequency otherwise.
pub fn penalty_rate(data: &LabeledDataset) -> f64 {
    if data.num_classes() == 2 {
        data.event_rate()
    } else {
        let counts = data.class_counts();
        *counts.iter().min().unwrap_or(&0) as f64 / data.len().max(1) as f64
    }
}

/// Initialized, standardized and bias-calibrated model for `train`.
pub fn initial_model(train: &LabeledDataset, variant: VariantSpec, config: &TrainConfig) -> Result<TrainedModel> {
    let counts = train.class_counts();
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return contract(format!("training data has no examples of class {c}"));
    }
    let seed = config.seed;
    let mut model = TrainedModel::init(
        variant,
        config.clone(),
        train.dim(),
        counts.len(),
        penalty_rate(train),
        split_seed(seed, STREAM_INIT),
    )?;
    model.standardizer = Standardizer::fit(&train.features);
    let x = model.standardizer.apply(&train.features)?;
    model.calibrate_bias(&x, &train.labels, split_seed(seed, STREAM_CALIBRATE))?;
    Ok(model)
}

/// Validation score: AUC for binary models, micro-F1 otherwise. `None`
/// when the split cannot be scored (a missing class).
pub fn validation_score(model: &TrainedModel, valid: &LabeledDataset, seed: u64) -> Result<Option<f64>> {
    if valid.is_empty() {
        return Ok(None);
    }
    let draws = model.config.eval_draws;
    if model.classes() == 2 {
        if valid.labels.iter().all(|&l| l == valid.labels[0]) {
            return Ok(None);
        }
        let scores = model.predict(&valid.features, seed, draws)?;
        Ok(Some(roc_auc(&scores, &valid.labels)?))
    } else {
        let pred = model.predict_class(&valid.features, seed, draws)?;
        Ok(Some(micro_f1(&pred, &valid.labels)?))
    }
}

/// Shuffled minibatch training with early stopping on the validation score.
/// The returned model holds the best-scoring parameters and the full
/// history of every iteration run.
pub fn train(
    train: &LabeledDataset,
    valid: &LabeledDataset,
    variant: VariantSpec,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let model = initial_model(train, variant, config)?;
    let x = model.standardizer.apply(&train.features)?;
    let mut trainer = Trainer::new(model);
    let seed = config.seed;
    let mut shuffle = rng_from_seed(split_seed(seed, STREAM_SHUFFLE));
    let valid_seed = split_seed(seed, STREAM_VALID);
    let d = train.dim();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, TrainedModel)> = None;
    let mut since_best = 0;
    let mut scores = Vec::new();
    let cap = config.max_iterations.unwrap_or(usize::MAX);

    'epochs: for epoch in 0..config.epochs {
        trainer.set_epoch(epoch);
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(config.batch_size) {
            if trainer.iteration() >= cap {
                break;
            }
            let mut data = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                data.extend_from_slice(x.row_slice(i));
            }
            let xb = crate::autodiff::Tensor::new(vec![chunk.len(), d], data)?;
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            trainer.step(&xb, &yb, step_seed(seed, trainer.iteration()))?;
        }
        let score = validation_score(&trainer.model, valid, valid_seed)?;
        scores.push(score.unwrap_or(f64::NAN));
        if let Some(s) = score {
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, trainer.model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        if trainer.iteration() >= cap || (config.patience > 0 && since_best >= config.patience) {
            break 'epochs;
        }
    }

    let history = std::mem::take(&mut trainer.model.history);
    let mut out = match best {
        Some((_, m)) => m,
        None => trainer.model,
    };
    out.history = history;
    out.validation = scores;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::flow::normal_tensor;

    fn toy(n: usize, seed: u64) -> LabeledDataset {
        let x = normal_tensor(n, 3, &mut rng_from_seed(seed));
        let labels = (0..n).map(|i| usize::from(x.get(i, 0) + 0.5 * x.get(i, 1) > 1.0)).collect();
        LabeledDataset::new(x, labels, None).unwrap()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            bins: 10,
            hidden: vec![8, 8],
            init_hidden: vec![8],
            flow_steps: 2,
            encoder_extra_updates: 1,
            batch_size: 50,
            epochs: 3,
            adam_lr: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn train_is_deterministic_and_records_history() {
        let (tr, va) = (toy(200, 1), toy(100, 2));
        let a = train(&tr, &va, VariantSpec::vie(), &small()).unwrap();
        let b = train(&tr, &va, VariantSpec::vie(), &small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 12);
        assert_eq!(a.validation.len(), 3);
    }

    #[test]
    fn empty_class_is_rejected() {
        let x = Tensor::zeros(&[4, 2]);
        let d = LabeledDataset::new(x, vec![0, 0, 0, 0], None).unwrap();
        assert!(train(&d, &d, VariantSpec::vie(), &small()).is_err());
    }

    #[test]
    fn iteration_cap_and_patience() {
        let (tr, va) = (toy(200, 3), toy(100, 4));
        let cfg = TrainConfig { max_iterations: Some(5), ..small() };
        assert_eq!(train(&tr, &va, VariantSpec::vae(), &cfg).unwrap().history.len(), 5);
        let cfg = TrainConfig { patience: 1, epochs: 50, adam_lr: 1e-9, ..small() };
        let m = train(&tr, &va, VariantSpec::vae(), &cfg).unwrap();
        assert!(m.validation.len() < 50);
    }
}
