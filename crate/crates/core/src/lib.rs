//! Generative training with an optimal-transport assignment potential.
//!
//! A small *assigner* network `ψ` is evaluated on the real data points only.
//! Each generated point is assigned to the real minimizing `c(x, y_j) + ψ(y_j)`,
//! the assigner is trained until every real receives its fair share of
//! generated points, and the generator is pulled towards its assignments.
//!
//! The crate also carries the pieces needed to evaluate such a model: an
//! exact discrete optimal transport solver ([`ot::emd`]), the assignment
//! variance metric, and loaders for the ring-of-Gaussians toy and IDX images.

pub mod assign;
pub mod checkpoint;
pub mod config;
pub mod costs;
pub mod data;
pub mod error;
pub mod net;
pub mod optim;
pub mod ot;
pub mod ssim;
pub mod tensor;
pub mod trainer;

pub use assign::{
    assigner_gradient, assigner_loss, batch_assign, c_transform_assign, dual_estimate,
    optimality_check, stability_check, AssignmentBatch, DualEstimate, OptimalityReport,
    OptimalityTolerance, RealSet, StabilityReport,
};
pub use checkpoint::Checkpoint;
pub use config::{DataConfig, Scale, TrainConfig};
pub use costs::{CostKind, CostSpec};
pub use data::{load_idx, preprocess, ring_of_gaussians, Dataset};
pub use error::{Error, Result};
pub use net::{Activation, DenseNet, Gradients, Layer};
pub use optim::RmsProp;
pub use ot::{assignment_variance, emd, w1_eval, DiscreteMeasure, TransportPlan};
pub use tensor::Tensor;
pub use trainer::{train, LatentSampler, MetricRecord, StopReason, TrainOutcome, TrainState};
