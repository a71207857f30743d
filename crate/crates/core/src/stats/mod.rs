//! Estimators, quadrature oracles and hypothesis tests.

pub mod invariance;
pub mod ks;
pub mod lemmas;
pub mod moments;
pub mod quadrature;

pub use invariance::{
    compare_invariance, InvarianceParams, InvariancePoint, InvarianceReport, Reference,
};
pub use ks::{
    kolmogorov_survival, ks_one_sample, ks_statistic, ks_two_sample, normal_cdf, KsResult,
};
pub use lemmas::{verify_lemma, Check, LemmaId, LemmaParams, LemmaReport, Rule};
pub use moments::{MomentEstimate, Moments, Z95};
pub use quadrature::{integrate, quadrature_ex2, variance_scale, Quadrature};
