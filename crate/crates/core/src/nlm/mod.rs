//! From-scratch decoder-only transformer language model: forward and
//! backward passes, Adam with warmup and clipping, checkpoints, and the
//! bag-of-words and windowed ablations of attention.

mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod model;
mod optim;
mod scalar;
mod train;

pub use checkpoint::{
    checkpoint_dir, decode_tensors, encode_tensors, Checkpoint, CheckpointMeta, RngState, MANIFEST_FILE,
    OPTIM_FILE, PARAMS_FILE,
};
pub use config::{AttentionMode, ModelConfig, TrainConfig};
pub use forward::{Activations, LayerActivations};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, CHECK_SPREAD, MIN_SAMPLES, REL_FLOOR};
pub use model::{build_model, Model, ParamLayout, TensorKind, TensorSpec, INIT_STD};
pub use optim::{apply_gradients, clip_grad_norm, global_norm, train_step, AdamState, StepReport};
pub use scalar::Scalar;
pub use train::{resume_training, run_training, NeuralScorer, RunManifest, PARTIAL_MARKER, RUN_MANIFEST};
