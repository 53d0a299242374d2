//! Self-supervised pretraining of the radar encoder.
//!
//! Each step samples a mini-batch, draws two augmented views per frame,
//! embeds both with the trainable encoder, looks up the frozen teacher
//! embedding of the frame, and applies one SGD-with-momentum update on the
//! composite contrastive loss.

use std::f64::consts::PI;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, AugmentationSpec};
use crate::checkpoint::Checkpoint;
use crate::contrastive::{loss_and_gradients, ContrastiveConfig, EmbeddingBatch, LossTerms};
use crate::dataset::Dataset;
use crate::encoder::{backward_traces, forward_trace, EncoderConfig, EncoderParams, GradientSet, VisionOracle};
use crate::error::{Error, Result};
use crate::rng::{label, RngStream};
use crate::tensor::Heatmap;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr_base: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub augmentation: AugmentationSpec,
    pub contrastive: ContrastiveConfig,
    pub encoder: EncoderConfig,
    pub dataset_path: Option<PathBuf>,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            steps: 500,
            lr_base: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: Schedule::Cosine,
            seed: 0,
            augmentation: AugmentationSpec::default(),
            contrastive: ContrastiveConfig::default(),
            encoder: EncoderConfig::default(),
            dataset_path: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be >= 1"));
        }
        if !(self.lr_base > 0.0 && self.lr_base.is_finite()) {
            return Err(Error::invalid("train config", "lr_base must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("train config", "momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("train config", "weight_decay must be >= 0"));
        }
        self.augmentation.validate()?;
        self.contrastive.validate()
    }

    /// `lr_base · ½(1 + cos(π·step/steps))` for the cosine schedule.
    pub fn learning_rate(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr_base,
            Schedule::Cosine => {
                if self.steps == 0 {
                    return self.lr_base;
                }
                let t = step.min(self.steps) as f64 / self.steps as f64;
                self.lr_base * 0.5 * (1.0 + (PI * t).cos())
            }
        }
    }
}

/// Momentum buffer for classic SGD with coupled weight decay:
/// `v ← μv + g + λθ`, `θ ← θ − η(step)·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub velocity: GradientSet<f64>,
}

impl Sgd {
    pub fn new(params: &EncoderParams<f64>) -> Self {
        Self {
            velocity: params.zeros_like(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut EncoderParams<f64>,
        grads: &GradientSet<f64>,
        step_index: usize,
        config: &TrainConfig,
    ) -> Result<()> {
        if params.shape() != grads.shape() || params.shape() != self.velocity.shape() {
            return Err(Error::Shape("parameter, gradient and velocity shapes differ".into()));
        }
        let lr = config.learning_rate(step_index);
        let mut next = params.clone();
        for ((p, g), v) in next.buffers_mut().zip(grads.buffers()).zip(self.velocity.buffers_mut()) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = config.momentum * *vi + gi + config.weight_decay * *pi;
                *pi -= lr * *vi;
            }
        }
        if !next.is_finite() {
            return Err(Error::NonFinite(format!(
                "parameter update at step {step_index} (lr {lr})"
            )));
        }
        *params = next;
        Ok(())
    }
}

/// One update from fresh momentum state; returns the new parameters.
pub fn sgd_step(
    params: &EncoderParams<f64>,
    grads: &GradientSet<f64>,
    step_index: usize,
    config: &TrainConfig,
) -> Result<EncoderParams<f64>> {
    let mut out = params.clone();
    Sgd::new(params).step(&mut out, grads, step_index, config)?;
    Ok(out)
}

pub fn encoder_input(heatmap: &Heatmap) -> Vec<f64> {
    heatmap.data().iter().map(|&v| f64::from(v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_intra: f64,
    pub l_cross: Option<f64>,
    pub l_total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub initial: Checkpoint,
    pub checkpoint: Checkpoint,
    pub log: Vec<StepLog>,
    /// Projections that hit the zero-norm fallback.
    pub degenerate_embeddings: usize,
}

/// Random initialization drawn for `config`.
pub fn init_params(config: &TrainConfig, input_dim: usize) -> Result<EncoderParams<f64>> {
    let shape = config.encoder.shape(input_dim);
    EncoderParams::init(&shape, &mut RngStream::new(config.seed, label("init")))
}

/// Frame indices for `step`, drawn without replacement.
fn sample_batch(n: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut rng = RngStream::new(seed, label("batch")).derive(step as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..batch {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(batch);
    idx
}

struct Prepared {
    oracle: Vec<Vec<f64>>,
}

fn prepare(config: &TrainConfig, dataset: &Dataset) -> Result<Prepared> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("pretraining needs at least one frame".into()));
    }
    if config.batch_size > dataset.len() {
        return Err(Error::invalid(
            "train config",
            format!(
                "batch_size {} exceeds dataset size {}",
                config.batch_size,
                dataset.len()
            ),
        ));
    }
    let oracle = VisionOracle::from_config(&config.encoder)?;
    Ok(Prepared {
        oracle: dataset.frames.iter().map(|f| oracle.embed(&f.scene)).collect(),
    })
}

/// Loss, embedding-gradients and encoder gradient for one batch of frames.
/// View streams are keyed by `(view_seed, slot)` with `slot` the position in
/// the batch.
fn batch_pass(
    params: &EncoderParams<f64>,
    dataset: &Dataset,
    oracle: &[Vec<f64>],
    indices: &[usize],
    view_rng: &RngStream,
    config: &TrainConfig,
    with_grad: bool,
) -> Result<(LossTerms, Option<GradientSet<f64>>, usize)> {
    let views = indices
        .par_iter()
        .enumerate()
        .map(|(slot, &i)| {
            let frame = &dataset.frames[i];
            let pair = make_views(
                &frame.tensor,
                &config.augmentation,
                &view_rng.derive(slot as u64),
                &frame.scene.id,
            )?;
            let a = forward_trace(params, &encoder_input(&pair.view_a))?;
            let b = forward_trace(params, &encoder_input(&pair.view_b))?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate = views
        .iter()
        .map(|(a, b)| usize::from(a.forward.degenerate) + usize::from(b.forward.degenerate))
        .sum();
    let z = views.iter().map(|(a, _)| a.forward.projected.clone()).collect();
    let zp = views.iter().map(|(_, b)| b.forward.projected.clone()).collect();
    let zv = indices.iter().map(|&i| oracle[i].clone()).collect();
    let batch = EmbeddingBatch::new(z, zp, Some(zv))?;
    let (terms, grads) = loss_and_gradients(&batch, &config.contrastive)?;
    if !with_grad {
        return Ok((terms, None, degenerate));
    }
    let (traces, upstream): (Vec<_>, Vec<&[f64]>) = views
        .into_iter()
        .zip(grads.z.iter().zip(&grads.z_prime))
        .flat_map(|((a, b), (ga, gb))| [(a, ga.as_slice()), (b, gb.as_slice())])
        .unzip();
    let g = backward_traces(params, &traces, &upstream)?;
    Ok((terms, Some(g), degenerate))
}

/// Composite loss of `params` on a fixed batch with fixed views.
pub fn evaluate_loss(
    params: &EncoderParams<f64>,
    dataset: &Dataset,
    config: &TrainConfig,
    indices: &[usize],
    view_seed: u64,
) -> Result<LossTerms> {
    let prepared = prepare(config, dataset)?;
    let view_rng = RngStream::new(view_seed, label("eval-views"));
    batch_pass(params, dataset, &prepared.oracle, indices, &view_rng, config, false).map(|(t, _, _)| t)
}

/// Run the pretraining loop from the config's own initialization.
pub fn pretrain(config: &TrainConfig, dataset: &Dataset) -> Result<PretrainOutcome> {
    pretrain_with(config, dataset, |_| Ok(()))
}

/// As [`pretrain`], calling `on_checkpoint` every `checkpoint_every` steps.
pub fn pretrain_with(
    config: &TrainConfig,
    dataset: &Dataset,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<PretrainOutcome> {
    let prepared = prepare(config, dataset)?;
    let mut params = init_params(config, dataset.input_dim())?;
    let initial = Checkpoint {
        params: params.clone(),
        step: 0,
    };
    let mut sgd = Sgd::new(&params);
    let mut log = Vec::with_capacity(config.steps);
    let mut degenerate_embeddings = 0;
    let views_root = RngStream::new(config.seed, label("views"));

    for step in 0..config.steps {
        let indices = sample_batch(dataset.len(), config.batch_size, config.seed, step);
        let (terms, grads, degenerate) = batch_pass(
            &params,
            dataset,
            &prepared.oracle,
            &indices,
            &views_root.derive(step as u64),
            config,
            true,
        )?;
        degenerate_embeddings += degenerate;
        let lr = config.learning_rate(step);
        log.push(StepLog {
            step,
            l_intra: terms.intra,
            l_cross: terms.cross,
            l_total: terms.total,
            lr,
        });
        sgd.step(&mut params, &grads.expect("requested"), step, config)?;
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 < config.steps {
            on_checkpoint(&Checkpoint {
                params: params.clone(),
                step: step as u64 + 1,
            })?;
        }
    }

    Ok(PretrainOutcome {
        initial,
        checkpoint: Checkpoint {
            params,
            step: config.steps as u64,
        },
        log,
        degenerate_embeddings,
    })
}
