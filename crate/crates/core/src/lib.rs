//! Label-error auditing for classification datasets.
//!
//! The central detector ranks training examples by how often their observed
//! label agrees with the labels of their nearest neighbours in a small trusted
//! auxiliary set, measured in the classifier's penultimate feature space, and
//! rectifies the most suspicious labels by a thresholded majority vote.
//!
//! Alongside it live the baselines it is compared against (confident-learning
//! scores and last-layer gradient influence scores), a noise injector for
//! controlled experiments, a small trainer that produces the features and
//! checkpoints every scorer consumes, and the evaluation metrics.

pub mod confidence;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gradient;
pub mod model;
pub mod noise;
pub mod rng;
pub mod scores;
pub mod similarity;

pub use dataset::{AuxiliarySet, Dataset, SynthSpec};
pub use error::{Error, Result};
pub use model::{Activation, LrSchedule, ModelCheckpoint, ModelConfig, Optimizer};
pub use noise::{NoiseKind, NoiseReport, NoiseSpec};
pub use scores::{ScoreEntry, ScoreTable};
pub use similarity::{RectifyAction, RectifyConfig, Similarity};
