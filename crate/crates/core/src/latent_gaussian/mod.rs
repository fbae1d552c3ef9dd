//! GI-MALA for latent Gaussian models `π(x) ∝ exp{g(x)} N(x | 0, Σ₀)` in O(d²) per iteration.
//!
//! With `Σ₀ = UΛUᵀ` precomputed, the preconditioner `A_x = (Σ₀⁻¹ + δ_x I)⁻¹` shares the
//! eigenvectors of `Σ₀`, so a proposal and its acceptance probability each need a single
//! product with `U` or `Uᵀ`.

mod cox;
mod eigen;
mod kernel;

pub use cox::{simulate_cox, CoxConfig, CoxDataset};
pub use eigen::{cache_key, PriorEigen};
pub use kernel::{
    compute_delta, lgm_accept_prob, lgm_cache, lgm_h, lgm_log_ratio, lgm_propose,
    lgm_propose_with_noise, LgmDenseView, LgmKernel, LgmKind, LgmProposal, LgmStepCache,
    ProductCounter, DELTA_MIN,
};

#[cfg(test)]
mod tests;
