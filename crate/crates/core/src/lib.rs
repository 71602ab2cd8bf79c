//! Statistical procedures for comparing name-frequency corpora against a
//! historical reference distribution.
//!
//! The crate is organised by procedure:
//!
//! * [`corpus`] ingests lexicon and corpus files and builds reference
//!   distributions under explicit inclusion criteria.
//! * [`gof`] runs the chi-squared goodness-of-fit test with rare-name binning,
//!   reporting both asymptotic and Monte Carlo p-values.
//! * [`intervals`] replicates the per-name confidence-interval comparison
//!   against historical and uniform baselines.
//! * [`binomial`] holds exact single-name tail tests, multiple-testing
//!   adjustment and the rare-name-count distribution.
//! * [`power`] simulates corpora from known generators and measures how often
//!   each method rejects.
//! * [`qualifiers`] tabulates disambiguating qualifiers by popularity tier.
//!
//! Every randomized routine takes an explicit seed. Replicate `i` always draws
//! from its own ChaCha substream keyed by `(seed, i)`, so results are identical
//! whatever the size of the rayon pool.

pub mod binomial;
pub mod corpus;
pub mod error;
pub mod gof;
pub mod intervals;
pub mod manifest;
pub mod power;
pub mod qualifiers;
pub mod sampling;
pub mod special;

pub use binomial::{
    adjust, binomial_cdf, binomial_tail, name_tail_test, rare_count_distribution, Adjustment,
    RareCountDistribution, RarePool, Sampling, TailMode, TailTestResult,
};
pub use corpus::{
    adjusted_reference, apply_criteria, rare_share, split_iterations, Gender, InclusionCriteria,
    LexiconRecord, Occurrence, QualifierKind, ReferenceDistribution, Region, SourceType,
    TestCorpus,
};
pub use error::{Error, Result};
pub use gof::{chi2_sf, chi2_statistic, gof_test, make_bins, BinLayout, BinningSpec, GofResult};
pub use intervals::{classify, historical_intervals, uniform_intervals, IntervalReport};
pub use manifest::RunManifest;
pub use power::{generate, rejection_rate, Generator, Method, PowerResult};
pub use qualifiers::{qualifier_table, tier_of, QualifierTable, Tier, TierThresholds};
pub use sampling::MonteCarlo;
