//! Deterministic single-process simulator of cross-silo federated graph
//! representation learning: a shared GCN encoder trained with a bootstrapped
//! self-supervised objective under FedAvg, evaluated per client with
//! freeze (linear probe) or finetune protocols.

pub mod augment;
pub mod bgrl;
pub mod bundle_io;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod federation;
pub mod graph;
pub mod nn;
pub mod report;
pub mod seed;
pub mod supervised;
pub mod synth;
pub mod twitch;

pub use error::{Error, Result};
pub use graph::{make_split, normalize_adjacency, GraphBundle, NormalizedAdjacency, Split};
