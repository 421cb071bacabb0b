//! A desk-scale synthetic detection benchmark: scene generation, a linear
//! detector with analytic gradients, deterministic training with an optional
//! calibration term, and evaluation (calibration error, average precision,
//! partition counts) on in-domain and shifted data.

pub mod eval;
pub mod loss;
pub mod model;
pub mod scene;
pub mod train;

pub use eval::{average_precision, evaluate, summarize, Domain, EvalSummary};
pub use loss::{bpc_term, detection_loss, total_loss, FocalParams, TotalLoss};
pub use model::{forward, forward_dataset, Gradients, ToyModel};
pub use scene::{
    benchmark_splits, generate_dataset, shift_dataset, GenConfig, Proposal, SyntheticScene,
    BENCHMARK_SHIFT_STRENGTH,
};
pub use train::{train, EpochStats, TrainConfig, TrainResult};

#[cfg(feature = "parallel")]
pub use model::par_forward_dataset;
