//! Stochastic pruning to a target sparsity under a lognormal model.

mod allocate;
mod cosine;
mod stochastic;
mod threshold;

pub use allocate::{
    compensate, heterogeneous_allocate, Allocation, Compensation, LayerAllocation, LayerProfile,
    PruneSpec, DEFAULT_MAX_CAP,
};
pub use cosine::{analytic_cosine, analytic_cosine_with, CosineReport, Truncation};
pub use stochastic::{
    cosine_similarity, predict_and_prune, stochastic_prune, zero_fraction, PruneReport,
    PruneRequest,
};
pub use threshold::{
    bimodal_threshold, normal_prior_threshold, sparsity_given_threshold,
    sparsity_given_threshold_normal, threshold_for_sparsity, MAX_BISECTION_STEPS,
    SPARSITY_TOLERANCE,
};
