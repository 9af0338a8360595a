//! Causally masked angular-attention transformer.
//!
//! Each sample is a set of tokens, one per window node: the lag-0 return of
//! every asset (the forecast targets, fed a placeholder value of 0) followed
//! by the lagged parent nodes of the active hypergraph. A token's input is
//! its unit-sphere embedding plus its realized value times a learned
//! per-modality vector. Target tokens attend to themselves and their Granger
//! parents; all other tokens attend only to themselves.

mod alignment;
mod attention;
mod checkpoint;
mod data;
mod gradcheck;
mod mask;
mod network;
mod train;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use alignment::{causal_alignment, AlignmentAccumulator};
pub use attention::{gelu, masked_attention, AttentionOutput};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use data::{Sample, SampleSet, SeriesTable};
pub use gradcheck::{finite_difference_check, GradientCheck};
pub use mask::{build_mask, plan_window, MaskMatrix, WindowPlan};
pub use network::{AttentionWeights, CshtModel, Gradients, Output, ParamLayout};
pub use train::{bce_with_logits, loss, mse, train, AttentionObserver, EpochRecord, TrainLog};

use crate::node::LaggedNode;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("hidden width {hidden} is not divisible by {heads} heads")]
    HeadSplit { hidden: usize, heads: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty node window")]
    EmptyWindow,
    #[error("attention row {0} has no allowed entries")]
    EmptyRow(usize),
    #[error("node {0} has no embedding")]
    UnknownNode(LaggedNode),
    #[error("NaN prediction for sample {0}")]
    NanPrediction(usize),
    #[error("prediction and target shapes differ: {0} vs {1}")]
    Shape(usize, usize),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64, log: Box<TrainLog> },
    #[error("task {0} needs regime labels but the panel has no index series")]
    NoLabels(Task),
    #[error("no samples in {0} range")]
    NoSamples(&'static str),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Granger(#[from] crate::granger::GrangerError),
    #[error(transparent)]
    Sphere(#[from] crate::sphere::SphereError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Task {
    #[default]
    Regression,
    Classification,
    Both,
}

impl Task {
    pub fn regression(self) -> bool {
        matches!(self, Task::Regression | Task::Both)
    }

    pub fn classification(self) -> bool {
        matches!(self, Task::Classification | Task::Both)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
            Task::Both => "both",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            "both" => Ok(Task::Both),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Inner width of the feed-forward block.
    pub ffn_width: usize,
    /// Angular temperature.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_lag: usize,
    pub use_causal_mask: bool,
    pub use_spherical_attention: bool,
    /// Drops cross-node entries whose node embeddings are further apart than
    /// this angle (radians). Disabled by default.
    pub angular_cutoff: Option<f64>,
    /// Stdev of Gaussian noise added to sentiment and news inputs while
    /// training.
    pub input_noise: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub task: Task,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            heads: 4,
            ffn_width: 64,
            lambda: 10.0,
            learning_rate: 1e-4,
            batch_size: 32,
            max_lag: 5,
            use_causal_mask: true,
            use_spherical_attention: true,
            angular_cutoff: None,
            input_noise: 0.0,
            max_epochs: 100,
            patience: 10,
            task: Task::Regression,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(ModelError::HeadSplit { hidden: self.hidden, heads: self.heads });
        }
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.layers == 0 || self.ffn_width == 0 {
            return bad("layers and ffn_width must be positive");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.max_lag == 0 {
            return bad("batch size and max lag must be positive");
        }
        if !(self.input_noise >= 0.0) {
            return bad("input noise must be non-negative");
        }
        if self.angular_cutoff.is_some_and(|a| !(a > 0.0)) {
            return bad("angular cutoff must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}
