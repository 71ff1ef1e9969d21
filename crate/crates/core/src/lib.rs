//! Schema-free cognition over raw byte streams.
//!
//! The engine stores raw segments, discovers repeatable byte patterns,
//! groups them into ordered structures, generalizes those structures into a
//! hierarchy of slot-bearing templates, and uses that hierarchy to score
//! relevancy, synthesize and check hypotheses, answer generalized keyword
//! queries and forecast class distributions. The [`dpu`] module runs the
//! same pipeline over a simulated matrix of share-nothing processing units.
//!
//! Data-parallel inner loops go through [`Exec`]; with the `parallel`
//! feature (on by default) they run on rayon, otherwise sequentially.

pub mod cognition;
pub mod config;
pub mod dpu;
mod error;
mod exec;
pub mod forecast;
pub mod generalization;
pub mod hypotheses;
mod ids;
pub mod pipeline;
pub mod queries;
pub mod relevancy;
pub mod store;
pub mod structures;

pub use error::Error;
pub use exec::Exec;
pub use ids::{NodeId, PatternId};
pub use structures::Item;

pub type Result<T, E = Error> = std::result::Result<T, E>;
