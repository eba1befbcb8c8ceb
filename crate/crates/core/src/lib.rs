//! PAC-Bayesian policy evaluation for batch reinforcement learning.
//!
//! The crate computes high-probability certificates on the squared error of
//! linear value-function estimates drawn from Gaussian posteriors, and uses
//! them to pick between a transferred prior and the data at hand.
//!
//! Module map:
//! - [`measure`]: product-Gaussian measures, KL divergence and the
//!   λ-interpolated posterior family.
//! - [`features`]: tile coding over bounded boxes (plus tabular features).
//! - [`envs`]: Mountain Car and its transfer variants, policies, data collection.
//! - [`bellman`]: residual datasets, LSTD, empirical and posterior-expected
//!   Bellman errors, variance corrections.
//! - [`pacbayes`]: the generic bound, the deviation term, certificates and
//!   λ selection.
//! - [`mixing`]: finite-chain dependence matrices, forgetting times and an
//!   empirical check of the Markov-chain concentration inequality.
//! - [`oracle`]: ground-truth values and closed-form true errors.
//! - [`experiment`]: manifests and the end-to-end transfer study.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod features;
pub mod measure;
pub mod mixing;
pub mod oracle;
pub mod pacbayes;
pub mod rng;

pub use error::{Error, Result};
pub use features::{FeatureMap, SparseVec, TabularFeatures, TileCodingConfig};
pub use measure::{kl_product_gaussians, posterior_lambda, GaussianProductMeasure, PosteriorFamilyConfig};
pub use pacbayes::{BoundCertificate, BoundConstants};
pub use mixing::{FiniteChain, MixingProfile};
