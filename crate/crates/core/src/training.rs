//! Encoder training through differentiable A*.
//!
//! Each batch runs encode, differentiable search and the closed-list loss
//! per instance (in parallel), sums the per-instance gradients in instance
//! order and applies one RMSProp step. Results do not depend on the number of
//! worker threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff_astar::{
    closed_list_loss, differentiable_plan, DiffAstarConfig, DiffAstarError, TauSpec, Temperature,
};
use crate::encoder::{assemble_input, Encoder, EncoderError};
use crate::grid::{GridError, ProblemInstance};
use crate::metrics::{evaluate, BootstrapConfig, MetricError, MetricSummary, NeuralPlanner};
use crate::search::{dijkstra_oracle, SearchError, SearchPolicy};
use crate::tensor::{GradStore, OptimizerState, RmsPropConfig, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("temperature spec {0} is not usable")]
    BadTemperature(TauSpec),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Planner(#[from] DiffAstarError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub search: DiffAstarConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
    /// Bootstrap settings of the per-epoch validation summary.
    pub bootstrap: BootstrapConfig,
}

impl TrainConfig {
    /// Batch 100, learning rate 0.001, 100 epochs.
    pub fn new(search: DiffAstarConfig, seed: u64) -> Self {
        Self {
            search,
            epochs: 100,
            batch_size: 100,
            optimizer: RmsPropConfig::default(),
            seed,
            bootstrap: BootstrapConfig {
                seed,
                ..BootstrapConfig::default()
            },
        }
    }
}

/// An instance with its canonical optimal path map.
#[derive(Debug, Clone)]
pub struct TrainingSample<'a> {
    pub id: &'a str,
    pub instance: &'a ProblemInstance,
    pub path_map: Vec<bool>,
}

impl<'a> TrainingSample<'a> {
    pub fn new(id: &'a str, instance: &'a ProblemInstance) -> Result<Self, TrainError> {
        let oracle = dijkstra_oracle(&instance.map, instance.start, instance.goal)?.ok_or(
            GridError::UnreachableGoal {
                start: instance.start,
                goal: instance.goal,
            },
        )?;
        Ok(Self {
            id,
            instance,
            path_map: oracle.path_map,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_opt: f64,
    pub val_exp: f64,
    pub val_hmean: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder<f32>,
    /// `log tau` at the end of training when the temperature was learned.
    pub log_tau: Option<f32>,
    pub tau: f64,
    pub history: Vec<EpochRecord>,
    /// Validation summary of the encoder before any update.
    pub initial: Option<MetricSummary>,
    pub last: Option<MetricSummary>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_opt,val_exp,val_hmean,tau\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.4},{:.4},{:.4},{:.6}\n",
            r.epoch, r.train_loss, r.val_opt, r.val_exp, r.val_hmean, r.tau
        ));
    }
    out
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Validation summary of `encoder` under the configured search weights.
pub fn validate(
    encoder: &Encoder<f32>,
    samples: &[TrainingSample<'_>],
    config: &TrainConfig,
) -> Result<Option<MetricSummary>, TrainError> {
    if samples.is_empty() {
        return Ok(None);
    }
    let policy = SearchPolicy::weighted(config.search.g_ratio as f32)?
        .with_placement(config.search.placement);
    let planner = NeuralPlanner::new(encoder.clone(), policy);
    let pairs: Vec<_> = samples.iter().map(|s| (s.id, s.instance)).collect();
    Ok(Some(evaluate(&planner, &pairs, &config.bootstrap)?.summary))
}

/// Loss of one instance, scaled by `1 / batch`, with its gradients.
fn instance_step(
    encoder: &Encoder<f32>,
    temperature: &Temperature<f32>,
    sample: &TrainingSample<'_>,
    config: &TrainConfig,
    batch: usize,
    dropout_seed: u64,
) -> Result<(f64, GradStore<f32>), TrainError> {
    let input = assemble_input::<f32>(sample.instance, encoder.config().mode);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let guidance = encoder.encode(&input, true, &mut rng)?;
    let trace = differentiable_plan(&guidance, sample.instance, &config.search, temperature)?;
    let loss = closed_list_loss(&trace, &sample.path_map, &sample.instance.map)?;
    let value = loss.item()? as f64;
    let grads = loss.scale(1.0 / batch as f64).backward_grads()?;
    Ok((value, grads))
}

/// Trains `encoder` on `train_set`, validating on `val_set` after every epoch.
pub fn train(
    encoder: Encoder<f32>,
    train_set: &[TrainingSample<'_>],
    val_set: &[TrainingSample<'_>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    let tau0 = config.search.tau.initial_value();
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(TrainError::BadTemperature(config.search.tau));
    }
    let temperature = match config.search.tau {
        TauSpec::Fixed(t) => Temperature::Fixed(t as f32),
        TauSpec::Trainable { init } => {
            Temperature::Learned(Tensor::parameter(&[1], vec![init.ln() as f32])?)
        }
    };
    let mut params = encoder.parameters();
    if let Temperature::Learned(log_tau) = &temperature {
        params.push(log_tau.clone());
    }
    let mut optimizer = OptimizerState::new(config.optimizer);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = validate(&encoder, val_set, config)?;
    let mut last = initial.clone();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let steps = chunk
                .par_iter()
                .map(|&i| {
                    let seed = mix(mix(config.seed, epoch as u64), i as u64);
                    instance_step(
                        &encoder,
                        &temperature,
                        &train_set[i],
                        config,
                        chunk.len(),
                        seed,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            for (value, grads) in &steps {
                if !value.is_finite() {
                    return Err(TrainError::Divergence { epoch, batch: b });
                }
                loss_sum += value;
                for p in &params {
                    if let Some(g) = grads.get(p) {
                        p.accumulate_grad(g)?;
                    }
                }
            }
            for p in &params {
                if p.grad().is_none() {
                    p.accumulate_grad(&vec![0.0; p.numel()])?;
                }
            }
            optimizer.rmsprop_step(&params)?;
        }
        last = validate(&encoder, val_set, config)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_opt: last.as_ref().map_or(f64::NAN, |s| s.opt.mean),
            val_exp: last.as_ref().map_or(f64::NAN, |s| s.exp.mean),
            val_hmean: last.as_ref().map_or(f64::NAN, |s| s.hmean.mean),
            tau: temperature.value()? as f64,
        };
        on_epoch(&record);
        history.push(record);
    }

    let log_tau = match &temperature {
        Temperature::Learned(t) => Some(t.item()?),
        Temperature::Fixed(_) => None,
    };
    Ok(TrainOutcome {
        encoder,
        log_tau,
        tau: temperature.value()? as f64,
        history,
        initial,
        last,
    })
}
