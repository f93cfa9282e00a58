//! Deterministic mini-batch training: dual-dropout encoding, GS-InfoNCE,
//! backpropagation through the encoder, plain SGD.
//!
//! Seeds are never drawn from shared state. Every random stream is derived
//! from the master seed with [`split_seed`]:
//!
//! | stream              | seed                                        |
//! |---------------------|---------------------------------------------|
//! | parameter init      | `split_seed(master, INIT, 0)`               |
//! | epoch shuffle       | `split_seed(master, SHUFFLE, epoch)`        |
//! | dropout, view 1     | `split_seed(master, DROPOUT_1, step)`       |
//! | dropout, view 2     | `split_seed(master, DROPOUT_2, step)`       |
//! | Gaussian noise      | `split_seed(master, NOISE, step)`           |
//!
//! Noise is sampled fresh for every step.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use crate::checkpoint::write_checkpoint;
use crate::encoder::{backward, encode_with_trace, init_params, EncoderGrads, EncoderParams, TokenBatch};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_pairs, load_sts_pairs, StsPair};
use crate::loss::{gs_info_nce, info_nce, GsLossConfig, LossResult};
use crate::noise::{sample_noise, NoiseConfig};
use crate::rng::{split_seed, stream, PortableRng};
use crate::vocab::{read_corpus, Vocabulary};

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_EVAL_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Gaussian-smoothed InfoNCE with `loss.noise.count` noise rows per step.
    GsInfoNce,
    /// Plain InfoNCE; the noise settings are ignored.
    InfoNce,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub loss: GsLossConfig,
    pub objective: Objective,
    pub dim: usize,
    pub dropout_p: f64,
    pub corpus_path: PathBuf,
    pub validation_path: Option<PathBuf>,
    pub master_seed: u64,
    pub eval_every: usize,
    pub checkpoint_path: PathBuf,
    /// Record wall-clock milliseconds per step (otherwise logged as 0 so logs
    /// stay byte-reproducible).
    pub record_time: bool,
}

impl TrainConfig {
    pub fn new(corpus_path: impl Into<PathBuf>, checkpoint_path: impl Into<PathBuf>) -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            steps: DEFAULT_STEPS,
            learning_rate: DEFAULT_LEARNING_RATE,
            loss: GsLossConfig::for_batch(DEFAULT_BATCH_SIZE, DEFAULT_DIM),
            objective: Objective::GsInfoNce,
            dim: DEFAULT_DIM,
            dropout_p: crate::encoder::DEFAULT_DROPOUT,
            corpus_path: corpus_path.into(),
            validation_path: None,
            master_seed: 0,
            eval_every: DEFAULT_EVAL_EVERY,
            checkpoint_path: checkpoint_path.into(),
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        self.loss.validate()
    }

    /// Noise settings for one step: `M` from the config, `dim` from the
    /// encoder, seed derived from the step.
    pub fn step_noise(&self, dim: usize, step_index: usize) -> NoiseConfig {
        NoiseConfig {
            dim,
            seed: step_seeds(self.master_seed, step_index).noise,
            ..self.loss.noise
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepSeeds {
    pub dropout1: u64,
    pub dropout2: u64,
    pub noise: u64,
}

pub fn step_seeds(master_seed: u64, step_index: usize) -> StepSeeds {
    let i = step_index as u64;
    StepSeeds {
        dropout1: split_seed(master_seed, stream::DROPOUT_1, i),
        dropout2: split_seed(master_seed, stream::DROPOUT_2, i),
        noise: split_seed(master_seed, stream::NOISE, i),
    }
}

pub fn epoch_shuffle_seed(master_seed: u64, epoch: usize) -> u64 {
    split_seed(master_seed, stream::SHUFFLE, epoch as u64)
}

pub fn init_seed(master_seed: u64) -> u64 {
    split_seed(master_seed, stream::INIT, 0)
}

/// Loss, gradients w.r.t. encoder parameters, and the shape of the noise
/// matrix the loss consumed.
#[derive(Clone, Debug)]
pub struct StepGradients {
    pub loss: LossResult<f64>,
    pub grads: EncoderGrads<f64>,
    pub noise_shape: (usize, usize),
}

type StepForward = (LossResult<f64>, [crate::encoder::ForwardTrace<f64>; 2], (usize, usize));

fn forward_loss(
    params: &EncoderParams<f64>,
    batch: &TokenBatch,
    cfg: &TrainConfig,
    step_index: usize,
) -> Result<StepForward> {
    let seeds = step_seeds(cfg.master_seed, step_index);
    let (view1, trace1) = encode_with_trace(params, batch, seeds.dropout1, true)?;
    let (view2, trace2) = encode_with_trace(params, batch, seeds.dropout2, true)?;
    let tau = cfg.loss.temperature;
    let (loss, shape) = match cfg.objective {
        Objective::GsInfoNce => {
            // Noise only ever enters the denominator inside gs_info_nce.
            let noise = sample_noise::<f64>(&cfg.step_noise(params.dim, step_index))?;
            let shape = (noise.rows(), noise.dim());
            (gs_info_nce(&view1, &view2, &noise, tau, cfg.loss.lambda)?, shape)
        }
        Objective::InfoNce => (info_nce(&view1, &view2, tau)?, (0, params.dim)),
    };
    Ok((loss, [trace1, trace2], shape))
}

/// Mean loss of one step's forward pass (the finite-difference target).
pub fn pipeline_loss(
    params: &EncoderParams<f64>,
    batch: &TokenBatch,
    cfg: &TrainConfig,
    step_index: usize,
) -> Result<f64> {
    forward_loss(params, batch, cfg, step_index).map(|(l, _, _)| l.mean_loss)
}

pub fn compute_gradients(
    params: &EncoderParams<f64>,
    batch: &TokenBatch,
    cfg: &TrainConfig,
    step_index: usize,
) -> Result<StepGradients> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty training batch".into()));
    }
    let (loss, [trace1, trace2], noise_shape) = forward_loss(params, batch, cfg, step_index)?;
    let mut grads = EncoderGrads::zeros_like(params);
    backward(params, batch, &trace1, &loss.grad_view1, &mut grads)?;
    backward(params, batch, &trace2, &loss.grad_view2, &mut grads)?;
    Ok(StepGradients {
        loss,
        grads,
        noise_shape,
    })
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub params: EncoderParams<f64>,
    /// Loss before the update.
    pub mean_loss: f64,
    pub noise_shape: (usize, usize),
}

/// One SGD step `θ ← θ − lr·∇θ`.
pub fn train_step(
    params: &EncoderParams<f64>,
    batch: &TokenBatch,
    cfg: &TrainConfig,
    step_index: usize,
) -> Result<StepOutcome> {
    let step = compute_gradients(params, batch, cfg, step_index)?;
    let mean_loss = step.loss.mean_loss;
    if !mean_loss.is_finite() {
        return Err(Error::DivergenceHalt {
            step: step_index,
            reason: format!("loss is {mean_loss}"),
        });
    }
    let lr = cfg.learning_rate;
    let mut next = params.clone();
    let sgd = |theta: &mut [f64], grad: &[f64]| {
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= lr * g;
        }
    };
    sgd(&mut next.token_embeddings, &step.grads.token_embeddings);
    sgd(&mut next.hidden_weight, &step.grads.hidden_weight);
    sgd(&mut next.hidden_bias, &step.grads.hidden_bias);
    if next.parameters().any(|v| !v.is_finite()) {
        return Err(Error::ChecksumMismatch { step: step_index });
    }
    Ok(StepOutcome {
        params: next,
        mean_loss,
        noise_shape: step.noise_shape,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mean_loss: f64,
    pub ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub spearman: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|r| r.mean_loss).collect()
    }

    /// `step,mean_loss,ms`
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,mean_loss,ms\n");
        for r in &self.steps {
            let _ = writeln!(out, "{},{:.6},{}", r.step, r.mean_loss, r.ms);
        }
        out
    }

    /// `step,spearman`
    pub fn eval_csv(&self) -> String {
        let mut out = String::from("step,spearman\n");
        for r in &self.evals {
            let _ = writeln!(out, "{},{:.6}", r.step, r.spearman);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: EncoderParams<f64>,
    /// Parameters written to the checkpoint: best on validation, or final
    /// when no validation set is configured.
    pub best_params: EncoderParams<f64>,
    pub best_eval: Option<EvalRecord>,
    pub log: TrainLog,
    pub vocab: Vocabulary,
    /// Noise matrix shape consumed by the last step's loss.
    pub noise_shape: (usize, usize),
}

/// Corpus tokenised against its own vocabulary.
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub sequences: Vec<Vec<u32>>,
}

pub fn prepare_corpus(sentences: &[String]) -> PreparedCorpus {
    let vocab = Vocabulary::build(sentences.iter().map(String::as_str));
    let sequences = sentences.iter().map(|s| vocab.tokenize(s)).collect();
    PreparedCorpus { vocab, sequences }
}

/// Freshly initialised encoder for a vocabulary under this config.
pub fn initial_params(cfg: &TrainConfig, vocab: &Vocabulary) -> Result<EncoderParams<f64>> {
    Ok(init_params(vocab.len(), cfg.dim, init_seed(cfg.master_seed))?.with_dropout(cfg.dropout_p))
}

pub fn train_run(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sentences = read_corpus(&cfg.corpus_path)?;
    let validation = cfg.validation_path.as_ref().map(load_sts_pairs).transpose()?;
    train_on_sentences(cfg, &sentences, validation.as_deref())
}

/// [`train_run`] on in-memory data.
pub fn train_on_sentences(
    cfg: &TrainConfig,
    sentences: &[String],
    validation: Option<&[StsPair]>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if sentences.len() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "corpus has {} sentences, fewer than batch_size {}",
            sentences.len(),
            cfg.batch_size
        )));
    }
    let corpus = prepare_corpus(sentences);
    let mut params = initial_params(cfg, &corpus.vocab)?;
    let mut log = TrainLog::default();
    let mut best: Option<(EvalRecord, EncoderParams<f64>)> = None;
    let mut noise_shape = (0, cfg.dim);

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = usize::MAX;
    let mut epoch = 0;
    for step in 1..=cfg.steps {
        if cursor == usize::MAX || cursor + cfg.batch_size > order.len() {
            // New epoch; the incomplete tail batch is dropped.
            order = (0..corpus.sequences.len()).collect();
            PortableRng::new(epoch_shuffle_seed(cfg.master_seed, epoch)).shuffle(&mut order);
            epoch += 1;
            cursor = 0;
        }
        let batch = TokenBatch::new(
            order[cursor..cursor + cfg.batch_size]
                .iter()
                .map(|&i| corpus.sequences[i].clone())
                .collect(),
        )?;
        cursor += cfg.batch_size;

        let started = Instant::now();
        let outcome = train_step(&params, &batch, cfg, step)?;
        let ms = if cfg.record_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        params = outcome.params;
        noise_shape = outcome.noise_shape;
        log.steps.push(StepRecord {
            step,
            mean_loss: outcome.mean_loss,
            ms,
        });

        if let Some(pairs) = validation {
            if step % cfg.eval_every == 0 || step == cfg.steps {
                let report = evaluate_pairs(&params, &corpus.vocab, pairs, "validation")?;
                let record = EvalRecord {
                    step,
                    spearman: report.spearman,
                };
                log.evals.push(record);
                if best.as_ref().is_none_or(|(b, _)| record.spearman > b.spearman) {
                    write_checkpoint(&params, &cfg.checkpoint_path)?;
                    best = Some((record, params.clone()));
                }
            }
        }
    }

    let (best_eval, best_params) = match best {
        Some((record, p)) => (Some(record), p),
        None => {
            write_checkpoint(&params, &cfg.checkpoint_path)?;
            (None, params.clone())
        }
    };
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_eval,
        log,
        vocab: corpus.vocab,
        noise_shape,
    })
}
