//! Granger-causal hypergraph discovery over lagged news, sentiment and return
//! panels, unit-sphere node embeddings, and a causally masked angular
//! attention transformer trained by projected gradient descent.

// Checks like `!(x > 0.0)` are written that way so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod granger;
pub mod model;
pub mod node;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod sphere;
pub mod synthetic;

pub use error::{Error, Result};
pub use eval::{EvalReport, Predictor};
pub use granger::{CausalHypergraph, DiscoveryConfig, GraphSchedule, Hyperedge};
pub use model::{CshtModel, ModelConfig, Task};
pub use node::{LaggedNode, Modality, SeriesKey, INDEX_ID};
pub use panel::{AssetPanel, DateRange, Feature, NormStats, TimeSplit};
pub use rng::{SeededRng, Stream};
pub use sphere::SphereEmbedding;
pub use synthetic::{GroundTruthGraph, PlantedEdge, PlantedSpec};
