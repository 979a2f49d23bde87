//! Training loop: batch objective with hand-wired backward pass, Adam with
//! warmup-cosine schedule, and resumable state.

mod checkpoint;
mod verify;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{make_batches, Batch, Corpus, CorpusDims};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Directions, RetrievalReport};
use crate::losses::{contrastive_loss, total_loss, variance_loss, LossBreakdown, LossConfig};
use crate::matching::{similarity_matrix, similarity_matrix_backward};
use crate::numerics::{adam_step, AdamConfig, AdamState, LrSchedule, Matrix, RngStream};
use crate::prototypes::{
    embed_texts, embed_texts_backward, encode_video, encode_video_backward, HeadParameters, Variant,
};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use verify::{objective_gradcheck, GradCheckShapes, ObjectiveCheck, KINK_MARGIN};

/// Everything that determines a training run besides the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Extra prototypes besides the class token.
    pub k: usize,
    pub embed_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub loss: LossConfig,
    pub seed: u64,
    pub variant: Variant,
    /// Write a checkpoint every this many epochs (0 disables periodic ones).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 3,
            embed_dim: 256,
            batch_size: 64,
            epochs: 50,
            warmup_epochs: 5,
            peak_lr: 3e-5,
            loss: LossConfig::default(),
            seed: 0,
            variant: Variant::Mask,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    /// Prototype count actually used: the baseline always has `K = 0`.
    pub fn effective_k(&self) -> usize {
        match self.variant {
            Variant::Baseline => 0,
            _ => self.k,
        }
    }

    pub fn validate(&self, dims: CorpusDims, num_videos: usize) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 || self.batch_size > num_videos {
            return Err(Error::Argument(format!(
                "batch_size ({}) must be between 1 and num_videos ({num_videos})",
                self.batch_size
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::Argument("embed_dim must be at least 1".into()));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return Err(Error::Argument(format!(
                "peak_lr must be finite and >= 0, got {}",
                self.peak_lr
            )));
        }
        if self.variant == Variant::Part && self.k > dims.tokens.saturating_sub(1) {
            return Err(Error::Argument(format!(
                "part variant needs k ({}) <= tokens - 1 ({})",
                self.k,
                dims.tokens.saturating_sub(1)
            )));
        }
        Ok(())
    }

    pub fn schedule(&self, num_videos: usize) -> LrSchedule {
        LrSchedule {
            warmup_epochs: self.warmup_epochs,
            peak_lr: self.peak_lr,
            total_epochs: self.epochs,
            steps_per_epoch: (num_videos / self.batch_size.max(1)).max(1),
        }
    }

    pub fn init_params(&self, dims: CorpusDims) -> HeadParameters {
        let mut rng = RngStream::with_stream(self.seed, INIT_STREAM);
        HeadParameters::init(
            dims.token_dim,
            dims.text_dim,
            self.embed_dim,
            self.effective_k(),
            &mut rng,
        )
    }
}

const BATCH_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;

/// Forward pass of the whole objective on one batch. With `backward` set,
/// parameter gradients are accumulated into `params`.
pub fn batch_objective(
    params: &mut HeadParameters,
    corpus: &Corpus,
    batch: &Batch,
    variant: Variant,
    loss: &LossConfig,
    backward: bool,
) -> Result<LossBreakdown> {
    let tokens: Vec<&Matrix> = batch.videos.iter().map(|&v| &corpus.videos()[v].tokens).collect();
    let feats: Vec<&[f64]> = batch
        .texts
        .iter()
        .map(|&t| corpus.texts()[t].features.as_slice())
        .collect();
    objective_on(params, &tokens, &Matrix::from_rows(&feats)?, variant, loss, backward)
}

/// [`batch_objective`] on raw tensors: video `i` is paired with text row `i`.
pub fn objective_on(
    params: &mut HeadParameters,
    videos: &[&Matrix],
    texts: &Matrix,
    variant: Variant,
    loss: &LossConfig,
    backward: bool,
) -> Result<LossBreakdown> {
    let forwards = videos
        .iter()
        .map(|z| encode_video(z, params, variant))
        .collect::<Result<Vec<_>>>()?;
    let text_emb = embed_texts(texts, params)?;
    let protos: Vec<&Matrix> = forwards.iter().map(|f| f.embedded()).collect();
    let sim = similarity_matrix(&text_emb.embedded, &protos)?;
    let contrastive = contrastive_loss(&sim.scores, loss.tau)?;

    let masks: Vec<&Matrix> = forwards.iter().filter_map(|f| f.masks.as_ref()).collect();
    let variance = if masks.len() == forwards.len() && !masks.is_empty() {
        Some(variance_loss(&masks, loss)?)
    } else {
        None
    };
    let breakdown = total_loss(contrastive.value, variance.as_ref().map_or(0.0, |v| v.value), loss)?;
    if !backward {
        return Ok(breakdown);
    }

    let (d_text, d_protos) = similarity_matrix_backward(&text_emb.embedded, &protos, &sim, &contrastive.grad)?;
    embed_texts_backward(texts, params, &text_emb, &d_text)?;
    for (i, (z, fwd)) in videos.iter().zip(&forwards).enumerate() {
        let extra = match &variance {
            Some(v) if loss.alpha != 0.0 => {
                let mut g = v.grads[i].clone();
                g.scale(loss.alpha);
                Some(g)
            }
            _ => None,
        };
        encode_video_backward(z, params, fwd, &d_protos[i], extra.as_ref())?;
    }
    Ok(breakdown)
}

/// Zeroes gradients, evaluates the batch objective with gradients and applies
/// one Adam update at learning rate `lr`.
pub fn train_step(
    params: &mut HeadParameters,
    adam: &mut AdamState,
    corpus: &Corpus,
    batch: &Batch,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    params.zero_grad();
    let breakdown = batch_objective(params, corpus, batch, cfg.variant, &cfg.loss, true)?;
    if params.tensors().iter().any(|t| !t.grad.is_finite()) {
        return Err(Error::NonFinite(format!(
            "parameter gradients at total loss {}",
            breakdown.total
        )));
    }
    let mut tensors = params.tensors_mut();
    adam_step(&mut tensors, adam, lr, AdamConfig::default())?;
    Ok(breakdown)
}

/// One logged optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Held-out evaluation after an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEval {
    pub epoch: usize,
    pub report: RetrievalReport,
}

/// Resumable training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    params: HeadParameters,
    adam: AdamState,
    rng: RngStream,
    epoch: usize,
    step: usize,
    history: Vec<StepRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, corpus: &Corpus) -> Result<Self> {
        cfg.validate(corpus.dims(), corpus.videos().len())?;
        let params = cfg.init_params(corpus.dims());
        let adam = AdamState::new(params.tensors());
        Ok(Trainer {
            rng: RngStream::with_stream(cfg.seed, BATCH_STREAM),
            cfg,
            params,
            adam,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        })
    }

    /// Rebuilds a trainer from a checkpoint; the corpus must match its dims.
    pub fn resume(state: CheckpointState, corpus: &Corpus) -> Result<Self> {
        state.config.validate(corpus.dims(), corpus.videos().len())?;
        let d = corpus.dims();
        if state.params.token_dim() != d.token_dim || state.params.text_dim() != d.text_dim {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects token_dim {} / text_dim {}, corpus has {} / {}",
                state.params.token_dim(),
                state.params.text_dim(),
                d.token_dim,
                d.text_dim
            )));
        }
        Ok(Trainer {
            cfg: state.config,
            params: state.params,
            adam: state.adam,
            rng: RngStream::from_state(state.rng),
            epoch: state.epoch,
            step: state.step,
            history: state.history,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &HeadParameters {
        &self.params
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// Runs one epoch; a no-op once all epochs are done.
    pub fn run_epoch(&mut self, corpus: &Corpus) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        let schedule = self.cfg.schedule(corpus.videos().len());
        let batches = make_batches(corpus, self.cfg.batch_size, &mut self.rng)?;
        for batch in &batches {
            let lr = schedule.lr_at_step(self.step)?;
            let loss =
                train_step(&mut self.params, &mut self.adam, corpus, batch, &self.cfg, lr).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("step {}: {m}", self.step)),
                    other => other,
                })?;
            self.history.push(StepRecord {
                step: self.step,
                epoch: self.epoch,
                lr,
                loss,
            });
            self.step += 1;
        }
        self.epoch += 1;
        Ok(())
    }

    /// Snapshot of the run; gradients are not part of the state.
    pub fn checkpoint(&self) -> CheckpointState {
        let mut params = self.params.clone();
        params.zero_grad();
        CheckpointState {
            config: self.cfg.clone(),
            params,
            adam: self.adam.clone(),
            rng: self.rng.state(),
            epoch: self.epoch,
            step: self.step,
            history: self.history.clone(),
        }
    }

    pub fn into_parts(self) -> (HeadParameters, Vec<StepRecord>) {
        (self.params, self.history)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParameters,
    pub history: Vec<StepRecord>,
    pub evals: Vec<EpochEval>,
}

/// Runs all epochs. With `held_out`, a text-to-video report is computed after
/// every epoch.
pub fn train(corpus: &Corpus, cfg: &TrainConfig, held_out: Option<&Corpus>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), corpus)?;
    let mut evals = Vec::new();
    while !trainer.is_finished() {
        trainer.run_epoch(corpus)?;
        if let Some(eval_corpus) = held_out {
            let report = evaluate(eval_corpus, trainer.params(), cfg.variant, Directions::TextToVideo)?;
            evals.push(EpochEval {
                epoch: trainer.epoch(),
                report,
            });
        }
    }
    let (params, history) = trainer.into_parts();
    Ok(TrainOutcome { params, history, evals })
}
