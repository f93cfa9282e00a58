//! Contrastive sentence-embedding training with Gaussian-noise negatives.
//!
//! The numeric kernels (similarity, loss, gradients, encoder) are generic
//! over [`Scalar`], implemented for `f32` and `f64`. Training, checkpoints
//! and evaluation run in `f64`; the aliases below name the common choices.

pub mod checkpoint;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod loss;
pub mod noise;
pub mod probe;
pub mod rng;
pub mod scalar;
pub mod svg;
pub mod trainer;
pub mod vocab;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use embedding::{cosine_similarity, l2_norm, similarity_matrix, EmbeddingMatrix, SimilarityMatrix};
pub use encoder::{encode, encode_pair, init_params, EncoderParams, TokenBatch};
pub use error::{Error, Result};
pub use evaluation::{evaluate_sts, spearman, EvalReport, StsPair};
pub use gradcheck::{run_gradcheck, GradCheckConfig, GradCheckReport};
pub use loss::{gs_info_nce, info_nce, GsLossConfig, LossResult};
pub use noise::{sample_noise, NoiseConfig};
pub use probe::{probe_batch, probe_sweep, synthetic_embedding_source, ProbeConfig, ProbeReport};
pub use rng::{split_seed, PortableRng};
pub use scalar::Scalar;
pub use trainer::{train_run, Objective, TrainConfig, TrainOutcome};
pub use vocab::Vocabulary;

pub type Embeddings = EmbeddingMatrix<f64>;
pub type Embeddings32 = EmbeddingMatrix<f32>;
pub type Similarities = SimilarityMatrix<f64>;
pub type Encoder = EncoderParams<f64>;
pub type Encoder32 = EncoderParams<f32>;
pub type Loss = LossResult<f64>;
