//! Two-sample distribution-shift test run by the server.
//!
//! A one-class scorer is fitted on older buffer contents, both batches are
//! scored once, and the integrated squared distance between their
//! empirical score CDFs is compared against its permutation distribution.

mod ecdf;
mod permutation;
mod scorer;

pub use ecdf::{t_l2, Ecdf};
pub use permutation::{permutation_test, permutation_test_scores, ShiftTestConfig, ShiftVerdict};
pub use scorer::{fit_scorer, KernelMeanScorer, MahalanobisScorer, ScoreFunction, ScorerKind};
