//! Fairness-aware refinement.
//!
//! A small graph-convolutional model maps projected coarse embeddings to
//! embeddings of the finer graph. It is trained once on the coarsest graph
//! against a utility term (stay close to the input) and a fairness term
//! (raise the similarity of edges joining attribute-diverse nodes), then
//! applied at every level on the way back to the original graph.

mod bound;
mod model;
mod objective;
mod train;

pub use bound::{theorem1_check, BoundReport, PairBound};
pub use model::{Forward, GraphInputs, ModelMeta, RefinementModel};
pub use objective::{build_fair_edge_mask, losses, FairEdgeMask, Losses};
pub use train::{graph_inputs, project, refine_all, train_refiner, write_loss_trace, Adam, LossRecord, RefineHyper};
