//! Hybrid mechanistic/neural ODE sequence models trained with a causal
//! ranking loss.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod graphred;
pub mod harness;
pub mod losses;
pub mod mech;
pub mod model;
pub mod rng;

pub use autodiff::ParamVector;
pub use data::{Category, DataDir, Dataset, Episode, InterventionSet, Schema, Standardizer, SyntheticConfig};
pub use error::{Error, ErrorKind, Result};
pub use graph::{CausalGraph, GraphFile, NodeRole};
pub use graphred::DiGraph;
pub use harness::{CvConfig, GridSpec, RunReport, Split, TrainConfig};
pub use losses::ScoreFn;
pub use mech::MechKind;
pub use model::{HybridConfig, HyperParams, TrainedModel, Variant};
pub use rng::SeededRng;
