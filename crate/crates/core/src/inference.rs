//! Permutation, importance-sampling and bootstrap tests of quasi-independence.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bias::{censoring_weight, BiasFunction};
use crate::error::{Error, Result};
use crate::marginals::{
    estimate_marginals_qi, MarginalEstimator, WeightedProductMeasure, DEFAULT_QI_EPS, DEFAULT_QI_MAX_ITER,
};
use crate::permsample::{
    estimate_pair_probs, sample_permutations_mcmc, sis_sample, McmcConfig, PermutationDraws, SisScheme,
};
use crate::rng::{derive_seed, stream_rng, Stream, StreamRng};
use crate::sample::Sample;
use crate::stats::{
    expected_counts, inverse_weighted_pearson, pearson_sum, perturb_centers, ExpectedCountProvider, QuadrantGeometry,
    StatisticKind, StatisticValue,
};
use crate::weights::{build_weight_matrix, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    PermutationMcmc,
    PermutationIs(SisScheme),
    Bootstrap(MarginalEstimator),
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestMethod::PermutationMcmc => write!(f, "perm-mcmc"),
            TestMethod::PermutationIs(s) => write!(f, "perm-is:{s}"),
            TestMethod::Bootstrap(e) => write!(f, "bootstrap:{e}"),
        }
    }
}

impl FromStr for TestMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match head.to_ascii_lowercase().as_str() {
            "perm-mcmc" | "wp" | "mcmc" => Ok(TestMethod::PermutationMcmc),
            "perm-is" | "is" => Ok(TestMethod::PermutationIs(rest.unwrap_or("monotone").parse()?)),
            "bootstrap" => Ok(TestMethod::Bootstrap(rest.unwrap_or("qi").parse()?)),
            _ => Err(Error::InvalidParameter(format!("unknown test method `{s}`"))),
        }
    }
}

impl Serialize for TestMethod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Which expectations the adjusted Hoeffding statistic uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedMode {
    /// Pair-assignment probabilities for permutation tests, re-estimated
    /// marginals for the bootstrap.
    #[default]
    Default,
    /// Empirical marginals, bias ignored. Loses power; diagnostics only.
    NaiveEmpirical,
}

#[derive(Debug, Clone)]
pub struct TestConfig {
    pub method: TestMethod,
    pub statistic: StatisticKind,
    /// Null replicates; p-values average over `B + 1` terms.
    pub b: usize,
    pub seed: u64,
    /// Chain settings; `b` and `seed` are taken from this config.
    pub mcmc: McmcConfig,
    pub expected_mode: ExpectedMode,
    /// Keep per-replicate statistics and weights in the report.
    pub keep_replicates: bool,
}

impl TestConfig {
    pub fn new(method: TestMethod, b: usize, seed: u64) -> Self {
        Self {
            method,
            statistic: StatisticKind::AdjustedHoeffding,
            b,
            seed,
            mcmc: McmcConfig::new(b + 1, seed),
            expected_mode: ExpectedMode::Default,
            keep_replicates: false,
        }
    }

    pub fn with_statistic(mut self, statistic: StatisticKind) -> Self {
        self.statistic = statistic;
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc_acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_weight_cv: Option<f64>,
    pub centers_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_dead_ends: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_floored_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_probs_all_states: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncensored_n: Option<usize>,
    /// Bootstrap replicates whose marginal re-estimation failed; they are
    /// left out of the p-value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_replicates: Option<usize>,
    /// Replicates in which every center was filtered (scored as 0).
    pub empty_replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_mode: Option<ExpectedMode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub method: TestMethod,
    pub statistic: StatisticKind,
    pub statistic_value: f64,
    pub p_value: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub replicate_statistics: Option<Vec<f64>>,
    #[serde(skip)]
    pub replicate_weights: Option<Vec<f64>>,
}

impl TestReport {
    pub fn statistic(&self) -> StatisticValue {
        StatisticValue {
            value: self.statistic_value,
            centers_used: self.diagnostics.centers_used,
            kind: self.statistic,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// `(1 / (B + 1)) Σ_{i=0}^{B} 1{T_i ≥ T_0}`, with `stats[0] = T_0`.
pub fn permutation_p_value(stats: &[f64]) -> f64 {
    let t0 = stats[0];
    stats.iter().filter(|&&t| t >= t0).count() as f64 / stats.len() as f64
}

/// Self-normalised weighted proportion of `T_i ≥ T_0`, `stats[0] = T_0`.
pub fn importance_p_value(stats: &[f64], weights: &[f64]) -> f64 {
    let t0 = stats[0];
    let total: f64 = weights.iter().sum();
    let hit: f64 = stats.iter().zip(weights).filter(|(t, _)| **t >= t0).map(|(_, w)| w).sum();
    hit / total
}

/// For censored input: the composite weight and the uncensored subsample.
fn prepare(sample: &Sample, bias: &BiasFunction) -> Result<(Sample, BiasFunction, Option<usize>)> {
    if !sample.is_censored() {
        return Ok((sample.clone(), bias.clone(), None));
    }
    match bias {
        BiasFunction::Truncation | BiasFunction::CensoringComposite(_) => {
            let (b, sub) = censoring_weight(sample)?;
            let n = sub.len();
            Ok((sub, b, Some(n)))
        }
        _ => Err(Error::InvalidParameter(
            "censored samples are tested under left truncation; use the truncation or censoring bias".into(),
        )),
    }
}

fn inverse_weights(w: &WeightMatrix, pi: &[usize]) -> Option<Vec<f64>> {
    pi.iter()
        .enumerate()
        .map(|(i, &j)| {
            let v = w.get(i, j);
            (v > 0.0).then(|| 1.0 / v)
        })
        .collect()
}

/// Scores every draw against fixed centers. Returns the statistics (index 0
/// is the observed coupling), centers used by the original, and the count of
/// replicates with no usable centers.
fn score_permutations(
    sample: &Sample,
    w: &WeightMatrix,
    draws: &PermutationDraws,
    weights: Option<&[f64]>,
    cfg: &TestConfig,
) -> Result<(Vec<f64>, usize, usize)> {
    let centers = perturb_centers(sample, cfg.seed);
    let geom = QuadrantGeometry::new(&sample.xs(), &sample.ys(), &centers);
    let skip = |k: usize| weights.is_some_and(|wt| wt[k] == 0.0);
    let mut stats = Vec::with_capacity(draws.len());
    let mut empty = 0;
    let mut used0 = 0;
    match cfg.statistic {
        StatisticKind::AdjustedHoeffding => {
            let provider = match cfg.expected_mode {
                ExpectedMode::Default => ExpectedCountProvider::PermutationProbs(estimate_pair_probs(draws)?),
                ExpectedMode::NaiveEmpirical => ExpectedCountProvider::NaiveEmpirical,
            };
            let exp = expected_counts(&provider, &geom, sample, &centers)?;
            for (k, pi) in draws.permutations.iter().enumerate() {
                if k > 0 && skip(k) {
                    stats.push(0.0);
                    continue;
                }
                let (t, used) = pearson_sum(&geom.counts(pi.as_slice()), &exp);
                if k == 0 {
                    used0 = used;
                } else if used == 0 {
                    empty += 1;
                }
                stats.push(t);
            }
        }
        StatisticKind::InverseWeighting => {
            if !w.all_positive() {
                return Err(Error::EstimatorNotApplicable(
                    "the inverse-weighting statistic needs a strictly positive bias".into(),
                ));
            }
            for (k, pi) in draws.permutations.iter().enumerate() {
                if k > 0 && skip(k) {
                    stats.push(0.0);
                    continue;
                }
                let inv = inverse_weights(w, pi.as_slice()).expect("positive weights");
                let (t, used) = inverse_weighted_pearson(&geom, pi.as_slice(), &inv);
                if k == 0 {
                    used0 = used;
                } else if used == 0 {
                    empty += 1;
                }
                stats.push(t);
            }
        }
    }
    if used0 == 0 {
        return Err(Error::NoValidCenters);
    }
    Ok((stats, used0, empty))
}

/// Weighted permutation test with MCMC draws from `P_W`.
pub fn wp_test(sample: &Sample, bias: &BiasFunction, cfg: &TestConfig) -> Result<TestReport> {
    let (sample, bias, uncensored_n) = prepare(sample, bias)?;
    let w = build_weight_matrix(&sample, &bias)?;
    let mcmc = McmcConfig { b: cfg.b + 1, seed: cfg.seed, ..cfg.mcmc };
    let draws = sample_permutations_mcmc(&w, &mcmc)?;
    let (stats, used, empty) = score_permutations(&sample, &w, &draws, None, cfg)?;
    let p_value = permutation_p_value(&stats);
    Ok(TestReport {
        method: TestMethod::PermutationMcmc,
        statistic: cfg.statistic,
        statistic_value: stats[0],
        p_value,
        b: cfg.b,
        seed: cfg.seed,
        diagnostics: Diagnostics {
            mcmc_acceptance_rate: draws.acceptance_rate,
            centers_used: used,
            pair_probs_all_states: Some(draws.all_state_probs.is_some()),
            uncensored_n,
            empty_replicates: empty,
            expected_mode: Some(cfg.expected_mode),
            ..Default::default()
        },
        replicate_statistics: cfg.keep_replicates.then_some(stats),
        replicate_weights: None,
    })
}

/// Importance-sampling permutation test with a sequential proposal.
pub fn is_test(sample: &Sample, bias: &BiasFunction, cfg: &TestConfig) -> Result<TestReport> {
    let scheme = match cfg.method {
        TestMethod::PermutationIs(s) => s,
        _ => SisScheme::Monotone,
    };
    let (sample, bias, uncensored_n) = prepare(sample, bias)?;
    let w = build_weight_matrix(&sample, &bias)?;
    let draws = sis_sample(&w, scheme, cfg.b + 1, cfg.seed)?;
    let weights = draws.relative_weights()?;
    let (stats, used, empty) = score_permutations(&sample, &w, &draws, Some(&weights), cfg)?;
    let p_value = importance_p_value(&stats, &weights);
    Ok(TestReport {
        method: TestMethod::PermutationIs(scheme),
        statistic: cfg.statistic,
        statistic_value: stats[0],
        p_value,
        b: cfg.b,
        seed: cfg.seed,
        diagnostics: Diagnostics {
            is_weight_cv: draws.weight_cv(),
            centers_used: used,
            is_dead_ends: Some(draws.dead_ends),
            is_floored_steps: Some(draws.floored_steps),
            uncensored_n,
            empty_replicates: empty,
            expected_mode: Some(cfg.expected_mode),
            ..Default::default()
        },
        replicate_statistics: cfg.keep_replicates.then_some(stats),
        replicate_weights: cfg.keep_replicates.then(|| draws.normalized_weights()).transpose()?,
    })
}

/// Scores `sample` against `centers`; `None` when every center is filtered.
fn bootstrap_statistic(
    sample: &Sample,
    bias: &BiasFunction,
    measure: &WeightedProductMeasure,
    centers: &[(f64, f64)],
    cfg: &TestConfig,
) -> Result<(f64, usize)> {
    let geom = QuadrantGeometry::new(&sample.xs(), &sample.ys(), centers);
    let identity: Vec<usize> = (0..sample.len()).collect();
    match cfg.statistic {
        StatisticKind::AdjustedHoeffding => {
            let exp = match cfg.expected_mode {
                ExpectedMode::Default => {
                    let n = sample.len() as f64;
                    centers.iter().map(|c| measure.quadrant_masses(c.0, c.1).map(|q| n * q)).collect()
                }
                ExpectedMode::NaiveEmpirical => {
                    expected_counts(&ExpectedCountProvider::NaiveEmpirical, &geom, sample, centers)?
                }
            };
            Ok(pearson_sum(&geom.counts(&identity), &exp))
        }
        StatisticKind::InverseWeighting => {
            let mut inv = Vec::with_capacity(sample.len());
            for (i, o) in sample.observations().iter().enumerate() {
                let v = bias.evaluate(o.x, o.y)?;
                if v <= 0.0 {
                    return Err(Error::ZeroWeightAtPoint { index: i });
                }
                inv.push(1.0 / v);
            }
            Ok(inverse_weighted_pearson(&geom, &identity, &inv))
        }
    }
}

/// Bootstrap test: resamples from the weighted product of estimated
/// marginals and re-estimates the marginals for every replicate.
pub fn bootstrap_test(sample: &Sample, bias: &BiasFunction, cfg: &TestConfig) -> Result<TestReport> {
    let estimator = match cfg.method {
        TestMethod::Bootstrap(e) => e,
        _ => MarginalEstimator::QuasiIndependence,
    };
    if sample.is_censored() {
        return Err(Error::EstimatorNotApplicable("the bootstrap test does not accept censored samples".into()));
    }
    estimator.check_applicable(sample, bias)?;
    if cfg.statistic == StatisticKind::InverseWeighting {
        MarginalEstimator::Npmle.check_applicable(sample, bias)?;
    }
    let n = sample.len();
    let (fx, fy, marginal_iterations) = match estimator {
        MarginalEstimator::QuasiIndependence => {
            let (fx, fy, trace) = estimate_marginals_qi(sample, bias, DEFAULT_QI_EPS, DEFAULT_QI_MAX_ITER)?;
            (fx, fy, Some(trace.iterations))
        }
        _ => {
            let (fx, fy) = estimator.estimate(sample, bias)?;
            (fx, fy, None)
        }
    };
    let measure = WeightedProductMeasure::new(fx, fy, bias)?;
    let centers = perturb_centers(sample, cfg.seed);
    let (t0, used) = bootstrap_statistic(sample, bias, &measure, &centers, cfg)?;
    if used == 0 {
        return Err(Error::NoValidCenters);
    }
    let mut rng = stream_rng(cfg.seed, Stream::Bootstrap);
    let mut stats = Vec::with_capacity(cfg.b + 1);
    stats.push(t0);
    let mut failed = 0;
    let mut empty = 0;
    for _ in 0..cfg.b {
        let boot = measure.sample(n, &mut rng)?;
        let replicate = estimator
            .estimate(&boot, bias)
            .and_then(|(bx, by)| WeightedProductMeasure::new(bx, by, bias))
            .and_then(|m| bootstrap_statistic(&boot, bias, &m, &centers, cfg));
        match replicate {
            Ok((t, u)) => {
                if u == 0 {
                    empty += 1;
                }
                stats.push(t);
            }
            Err(e) => {
                log::debug!("bootstrap replicate skipped: {e}");
                failed += 1;
            }
        }
    }
    Ok(TestReport {
        method: TestMethod::Bootstrap(estimator),
        statistic: cfg.statistic,
        statistic_value: t0,
        p_value: permutation_p_value(&stats),
        b: cfg.b,
        seed: cfg.seed,
        diagnostics: Diagnostics {
            centers_used: used,
            marginal_iterations,
            failed_replicates: Some(failed),
            empty_replicates: empty,
            expected_mode: Some(cfg.expected_mode),
            ..Default::default()
        },
        replicate_statistics: cfg.keep_replicates.then_some(stats),
        replicate_weights: None,
    })
}

pub fn run_test(sample: &Sample, bias: &BiasFunction, cfg: &TestConfig) -> Result<TestReport> {
    match cfg.method {
        TestMethod::PermutationMcmc => wp_test(sample, bias, cfg),
        TestMethod::PermutationIs(_) => is_test(sample, bias, cfg),
        TestMethod::Bootstrap(_) => bootstrap_test(sample, bias, cfg),
    }
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - level) / 2.0;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(a) };
    let hi = if successes == trials { 1.0 } else { Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - a) };
    (lo, hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionRate {
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rejections: usize,
    /// Replicates that produced a p-value.
    pub completed: usize,
    pub p_values: Vec<f64>,
    pub mean_runtime_s: f64,
    /// `(replicate, error)` for replicates that failed.
    pub failures: Vec<(usize, String)>,
}

/// Runs the configured test on `reps` generated datasets in parallel.
/// Replicate `r` uses seed `derive_seed(cfg.seed, r)` for both data and test.
pub fn null_rejection_rate<G>(
    generator: G,
    bias: &BiasFunction,
    cfg: &TestConfig,
    alpha: f64,
    reps: usize,
) -> RejectionRate
where
    G: Fn(&mut StreamRng) -> Result<Sample> + Sync,
{
    let outcomes: Vec<(usize, Result<TestReport>, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let mut rng = stream_rng(seed, Stream::Data);
            let start = Instant::now();
            let res = generator(&mut rng).and_then(|s| {
                let c = TestConfig { seed, ..cfg.clone() };
                run_test(&s, bias, &c)
            });
            (r, res, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut p_values = Vec::new();
    let mut failures = Vec::new();
    let mut runtime = 0.0;
    for (r, res, secs) in outcomes {
        match res {
            Ok(rep) => {
                p_values.push(rep.p_value);
                runtime += secs;
            }
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let completed = p_values.len();
    let rejections = p_values.iter().filter(|&&p| p <= alpha).count();
    let (ci_lo, ci_hi) = clopper_pearson(rejections, completed, 0.95);
    RejectionRate {
        rate: if completed == 0 { f64::NAN } else { rejections as f64 / completed as f64 },
        ci_lo,
        ci_hi,
        rejections,
        completed,
        p_values,
        mean_runtime_s: if completed == 0 { 0.0 } else { runtime / completed as f64 },
        failures,
    }
}
