//! Graph attention reasoner: GAT branches, global attention pooling,
//! veracity and evidence heads, losses, training and gradient checking.

mod checkpoint;
mod dd;
mod gradcheck;
mod layers;
pub mod matrix;
mod model;
mod train;

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, grad_check_model, ModelObjective, Objective};
pub use layers::{Dense, EvidenceHead, GatCache, GatLayer, GlobalAttentionPool, PoolCache, VeracityHead};
pub use model::{LossParts, Mode, ModelConfig, ReasonerModel, VeracityOutput};
pub use train::{evaluate_graphs, train, write_log_csv, HeldOutMetrics, StepRecord, TrainConfig, TrainOutcome, EVIDENCE_THRESHOLD};

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("node features have dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("graph for claim {claim_id} has no nodes")]
    EmptyGraph { claim_id: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty training set")]
    EmptyDataset,
    #[error("graph for claim {claim_id} has no label")]
    Unlabeled { claim_id: u64 },
    #[error("graph for claim {claim_id} lacks gold node flags")]
    MissingGold { claim_id: u64 },
    #[error("operation needs a multi-task model")]
    NotMultiTask,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
