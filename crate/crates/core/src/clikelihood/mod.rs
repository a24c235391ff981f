//! Bivariate likelihoods, composite scores, composite-likelihood estimation
//! and CLIC.

mod bivariate;
mod composite;
mod fit;
pub(crate) mod geometry;

pub use bivariate::{
    biv_loglik, biv_score, exponent_measure, tcop_biv_loglik, tcop_full_loglik, tcop_loglik_generic, ExponentMeasureTerms,
    TCopulaTerms,
};
pub use composite::{
    composite_score, pairwise_loglik, pairwise_loglik_and_score, score_contributions, score_summary, ScoreContext,
};
pub use fit::{clic, clic_at, fit_score_context, mcle_fit, ClicResult, McleFit, McleOptions};

#[cfg(test)]
mod tests;
