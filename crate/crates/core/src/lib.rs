//! Tests of quasi-independence for paired data observed under a known or
//! estimable biased-sampling mechanism.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod error;
pub mod inference;
pub mod marginals;
pub mod permsample;
pub mod rng;
pub mod sample;
pub mod simgen;
pub mod stats;
pub mod weights;

pub use bias::{censoring_weight, kaplan_meier, BiasFunction, BiasSpec, StepSurvival, TabulatedGrid};
pub use error::{Error, Result};
pub use inference::{
    bootstrap_test, clopper_pearson, importance_p_value, is_test, null_rejection_rate, permutation_p_value, run_test,
    wp_test, ExpectedMode, RejectionRate, TestConfig, TestMethod, TestReport,
};
pub use marginals::{
    cdf_distance, cdf_eval, estimate_marginals_qi, exchangeable_pooled_cdf, npmle_inverse_weight, DiscreteCDF,
    IterationTrace, MarginalEstimator, WeightedProductMeasure,
};
pub use permsample::{
    estimate_pair_probs, exact_pair_probs, mh_swap_step, sample_permutations_mcmc, sis_sample, McmcConfig,
    PairAssignmentProbs, PermutationDraws, SamplerKind, SisScheme,
};
pub use sample::{apply_permutation, Observation, Permutation, Sample};
pub use simgen::{
    calibrate_censoring, draw_biased, draw_unbiased, kendall_tau, power_table, BiasedDraw, BiasedSampler,
    GammaCensoring, GeneratorSpec, Marginal, PowerResult, PowerRow,
};
pub use stats::{
    adjusted_hoeffding, expected_from_marginals, expected_from_pair_probs, inverse_weight_statistic, perturb_centers,
    quadrant_observed, ExpectedCountProvider, QuadrantCounts, StatisticKind, StatisticValue,
};
pub use weights::{
    build_weight_matrix, enumerate_exact_pw, log_perm_weight, permanent_exact, ExactLaw, LogWeight, WeightMatrix,
};
