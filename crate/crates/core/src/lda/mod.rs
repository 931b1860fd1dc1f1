//! Latent Dirichlet allocation over individual x location networks:
//! collapsed Gibbs fitting, held-out perplexity and selection of K.

mod config;
mod model;
mod perplexity;
mod sampler;
mod select;

pub use config::{
    Alpha, Estimator, LdaConfig, Prior, DEFAULT_ALPHA_MASS, DEFAULT_BETA, DEFAULT_BURN_IN, DEFAULT_ITERATIONS,
};
pub use model::{CommunityModel, MODEL_FORMAT_VERSION};
pub use perplexity::{heldout_perplexity, FoldIn, HeldoutScore};
pub use sampler::{fit, fit_with_observer, SamplerState};
pub use select::{select_k, split_individuals, ModelSelectionResult, SelectionPlan};
