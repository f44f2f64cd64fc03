//! EHVI maximisation over a binary grid encoding of layouts.

mod ga;
mod grid;
mod predict;

pub use ga::{maximise_ehvi, GaConfig, Proposal};
pub use grid::{decode, encode, feasible, random_genome, repair, Genome, GridSpec};
pub use predict::{FnPredictor, GenomePredictor, GridGp, Surrogate, Surrogates};
