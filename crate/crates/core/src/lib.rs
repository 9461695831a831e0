//! Matrix-completion recommenders evaluated by rank-preference consistency.
//!
//! The crate bundles three completion methods over sparse user×item rating
//! matrices — shift-consistent (SC) and unit-consistent (UC) row/column
//! balancing, plus a truncated-SVD baseline with configurable retained
//! spectrum — and an evaluation harness that withholds rating pairs per user
//! and counts how often each method inverts the user's expressed preference
//! (discordant pairs, normalized as a Kendall-tau statistic).
//!
//! Batch operations (experiment cells, audit trials, block matrix products)
//! run on rayon when the default `parallel` feature is enabled and fall back
//! to sequential loops without it. Results are bit-identical in both modes:
//! every parallel reduction is structured so each output element is computed
//! by a single task in a fixed order.

pub mod consistency;
pub mod harness;
mod par;
pub mod ratings;
pub mod svd;
pub mod synth;

pub use consistency::{fit_sc, fit_uc, ConsistencyModel, FitStats, ModelKind, PredictError};
pub use harness::{DiscordanceReport, ExperimentConfig, MethodSpec, WithholdingPlan};
pub use ratings::{ComponentLabeling, RatingScale, SparseRatingMatrix};
pub use svd::SvdModel;
