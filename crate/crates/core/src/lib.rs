//! Mixed-membership community detection in two-mode individual x location
//! networks.
//!
//! Individuals' routine-activity locations are modelled with latent
//! Dirichlet allocation fitted by collapsed Gibbs sampling. Each individual
//! gets a community assignment vector (a row of W) and each community an
//! activity pattern profile over locations (a row of H). On top of the fit
//! the crate provides held-out perplexity for choosing K, attachment
//! strength (Gini) and neighborhood consistency (Aitchison total variation)
//! metrics, a location-sharing simulation, standardized OLS for
//! neighborhood-level regressions, and a synthetic network generator.

pub mod cli;
pub mod cooccurrence;
pub mod econet;
pub mod error;
pub mod lda;
pub mod metrics;
pub mod neighstats;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
