use std::time::Instant;

use super::{config_hash, TrainConfig, TrainReport, INIT_STREAM, SHUFFLE_STREAM};
use crate::error::{Error, Result};
use crate::models::{reconstruction_loss, LossTerms, OuterAE};
use crate::numcore::{AdamState, Graph, ParamSet, Rng};
use crate::render::{Dataset, DatasetMode, SampleRef, Split};

#[derive(Clone, Debug)]
pub struct OuterRun {
    pub model: OuterAE,
    pub params: ParamSet,
    pub report: TrainReport,
    /// Validation error after each epoch.
    pub val_history: Vec<f64>,
}

const EVAL_CHUNK: usize = 64;

fn recon_on(model: &OuterAE, params: &ParamSet, dataset: &Dataset, samples: &[SampleRef]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let (input, target) = dataset.frame_batch(chunk)?;
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let x = g.constant(input);
        let t = g.constant(target);
        let (_, y) = model.forward(&mut g, &bound, x)?;
        let l = reconstruction_loss(&mut g, y, t)?;
        total += g.value(l).item()? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Adam on the mean squared error of the predicted target pair. Stops early
/// once validation error stays below the configured threshold for the
/// configured number of consecutive epochs.
pub fn train_outer(dataset: &Dataset, config: &TrainConfig) -> Result<OuterRun> {
    config.validate()?;
    if dataset.manifest.mode != DatasetMode::Frames {
        return Err(Error::Contract("outer training needs a frames-mode dataset".into()));
    }
    let start = Instant::now();
    let model = OuterAE::new(dataset.manifest.geometry)?;
    let root = Rng::new(config.seed);
    let mut params = model.init(&mut root.split(INIT_STREAM));
    let mut train = dataset.samples(Split::Train);
    if let Some(max) = config.max_train_samples {
        if train.len() > max {
            root.split(super::SUBSAMPLE_STREAM).shuffle(&mut train);
            train.truncate(max);
            train.sort_unstable();
        }
    }
    if train.is_empty() {
        return Err(Error::Contract("no training samples".into()));
    }
    let mut val = dataset.samples(Split::Val);
    if val.is_empty() {
        val = train.clone();
    }
    let mean = train
        .iter()
        .map(|s| {
            let o = dataset.observation(s.traj, s.frame);
            o.iter().sum::<f64>() / o.len() as f64
        })
        .sum::<f64>()
        / train.len() as f64;
    model.init_output_bias(&mut params, mean)?;

    let mut shuffle = root.split(SHUFFLE_STREAM);
    let mut adam = AdamState::new(config.outer_lr);
    let mut history = Vec::new();
    let mut val_history = Vec::new();
    let mut below = 0usize;
    for epoch in 0..config.outer_epochs {
        shuffle.shuffle(&mut train);
        let mut sum = 0.0;
        for chunk in train.chunks(config.batch_size) {
            let (input, target) = dataset.frame_batch(chunk)?;
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let x = g.constant(input);
            let t = g.constant(target);
            let (_, y) = model.forward(&mut g, &bound, x)?;
            let l = reconstruction_loss(&mut g, y, t)?;
            let v = g.value(l).item()?;
            if !v.is_finite() {
                return Err(Error::Divergence(format!("non-finite outer loss at epoch {epoch}")));
            }
            g.backward(l)?;
            adam.step(&mut params, &bound.grads(&g))?;
            sum += v * chunk.len() as f64;
        }
        let mse = sum / train.len() as f64;
        history.push(LossTerms {
            recon: mse,
            total: mse,
            ..Default::default()
        });
        let v = recon_on(&model, &params, dataset, &val)?;
        val_history.push(v);
        log::debug!("outer epoch {epoch}: train {mse:.5} val {v:.5}");
        below = if v < config.early_stop_threshold { below + 1 } else { 0 };
        if below >= config.early_stop_patience {
            log::info!("outer training stopped early after epoch {epoch}");
            break;
        }
    }
    let val_recon = *val_history.last().expect("at least one epoch");
    Ok(OuterRun {
        model,
        params,
        report: TrainReport {
            history,
            val_recon,
            wall_time_s: start.elapsed().as_secs_f64(),
            seed: config.seed,
            config_hash: config_hash(config)?,
            logvar_clipped: false,
        },
        val_history,
    })
}
