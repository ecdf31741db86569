//! Marginal distribution estimators under biased sampling.

mod product;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::sample::Sample;

pub use product::{ProductBackend, WeightedProductMeasure};

/// A distribution on finitely many points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCDF {
    support: Vec<f64>,
    mass: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteCDF {
    /// `support` strictly increasing, `mass` positive; masses are normalised.
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyInput);
        }
        if support.len() != mass.len() {
            return Err(Error::LengthMismatch { expected: support.len(), got: mass.len() });
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("support must be strictly increasing".into()));
        }
        if mass.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("masses must be positive and finite".into()));
        }
        Ok(Self::normalised(support, mass))
    }

    fn normalised(support: Vec<f64>, mut mass: Vec<f64>) -> Self {
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Self { support, mass, cumulative }
    }

    /// Places `weights[i]` at `values[i]`, merging equal values.
    pub fn from_weighted_values(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: values.len(), got: weights.len() });
        }
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut support: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for i in idx {
            if support.last() == Some(&values[i]) {
                *mass.last_mut().unwrap() += weights[i];
            } else {
                support.push(values[i]);
                mass.push(weights[i]);
            }
        }
        Self::new(support, mass)
    }

    pub fn empirical(values: &[f64]) -> Result<Self> {
        Self::from_weighted_values(values, &vec![1.0; values.len()])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `F(support[k])`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Number of support points `≤ t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.support.partition_point(|&s| s <= t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.count_le(t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.mass).map(|(s, m)| s * m).sum()
    }
}

/// Right-continuous evaluation `Σ_{s ≤ t} mass(s)`.
pub fn cdf_eval(f: &DiscreteCDF, t: f64) -> f64 {
    f.eval(t)
}

/// Sup-norm distance over the union of supports.
pub fn cdf_distance(a: &DiscreteCDF, b: &DiscreteCDF) -> f64 {
    a.support.iter().chain(&b.support).map(|&t| (a.eval(t) - b.eval(t)).abs()).fold(0.0, f64::max)
}

/// Inverse-weighting NPMLE for strictly positive weights.
pub fn npmle_inverse_weight(sample: &Sample, bias: &BiasFunction) -> Result<(DiscreteCDF, DiscreteCDF)> {
    let mut inv = Vec::with_capacity(sample.len());
    for (i, o) in sample.observations().iter().enumerate() {
        let w = bias.evaluate(o.x, o.y)?;
        if w <= 0.0 {
            return Err(Error::ZeroWeightAtPoint { index: i });
        }
        inv.push(1.0 / w);
    }
    Ok((DiscreteCDF::from_weighted_values(&sample.xs(), &inv)?, DiscreteCDF::from_weighted_values(&sample.ys(), &inv)?))
}

/// Empirical distribution of all `2n` values pooled.
pub fn exchangeable_pooled_cdf(sample: &Sample) -> Result<DiscreteCDF> {
    let mut all = sample.xs();
    all.extend(sample.ys());
    DiscreteCDF::empirical(&all)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    /// Log-likelihood at the starting point followed by one entry per sweep.
    pub log_likelihood: Vec<f64>,
    /// Distance between successive iterates, one entry per sweep.
    pub distance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const DEFAULT_QI_EPS: f64 = 1e-6;
pub const DEFAULT_QI_MAX_ITER: usize = 500;

/// Collapses values to sorted unique atoms with their multiplicities, and
/// maps each observation to its atom.
fn atoms(values: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut counts = vec![0.0; sorted.len()];
    let idx: Vec<usize> = values
        .iter()
        .map(|v| {
            let k = sorted.partition_point(|s| s < v);
            counts[k] += 1.0;
            k
        })
        .collect();
    (sorted, counts, idx)
}

enum Kernel {
    Linear { ax: f64, ay: f64, b: f64 },
    Grid(Vec<f64>),
}

/// Alternating inverse-weighting estimate of both marginals under
/// quasi-independence, with mass restricted to observed values.
pub fn estimate_marginals_qi(
    sample: &Sample,
    bias: &BiasFunction,
    eps: f64,
    max_iter: usize,
) -> Result<(DiscreteCDF, DiscreteCDF, IterationTrace)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let n = sample.len() as f64;
    let (sx, cx, _) = atoms(&sample.xs());
    let (sy, cy, _) = atoms(&sample.ys());
    let (kx, ky) = (sx.len(), sy.len());

    let kernel = match bias.linear_coefficients() {
        Some((ax, ay, b)) => {
            for &s in &sx {
                for &t in &sy {
                    bias.evaluate(s, t)?;
                }
            }
            Kernel::Linear { ax, ay, b }
        }
        None => {
            let mut g = Vec::with_capacity(kx * ky);
            for &s in &sx {
                for &t in &sy {
                    g.push(bias.evaluate(s, t)?);
                }
            }
            Kernel::Grid(g)
        }
    };
    let any_zero = match &kernel {
        Kernel::Grid(g) => g.iter().any(|&v| v == 0.0),
        Kernel::Linear { .. } => false,
    };

    let (mut mx, mut my) = if any_zero {
        (normalise(cx.clone()), normalise(cy.clone()))
    } else {
        let (fx, fy) = npmle_inverse_weight(sample, bias)?;
        (fx.mass().to_vec(), fy.mass().to_vec())
    };

    let ex_of = |my: &[f64], out: &mut Vec<f64>| {
        out.clear();
        match &kernel {
            Kernel::Linear { ax, ay, b } => {
                let mean_y: f64 = sy.iter().zip(my).map(|(t, m)| t * m).sum();
                out.extend(sx.iter().map(|s| ax * s + ay * mean_y + b));
            }
            Kernel::Grid(g) => {
                out.extend((0..kx).map(|i| g[i * ky..(i + 1) * ky].iter().zip(my).map(|(w, m)| w * m).sum::<f64>()));
            }
        }
    };
    let ey_of = |mx: &[f64], out: &mut Vec<f64>| {
        out.clear();
        match &kernel {
            Kernel::Linear { ax, ay, b } => {
                let mean_x: f64 = sx.iter().zip(mx).map(|(s, m)| s * m).sum();
                out.extend(sy.iter().map(|t| ax * mean_x + ay * t + b));
            }
            Kernel::Grid(g) => {
                out.resize(ky, 0.0);
                for (i, m) in mx.iter().enumerate() {
                    for (o, w) in out.iter_mut().zip(&g[i * ky..(i + 1) * ky]) {
                        *o += w * m;
                    }
                }
            }
        }
    };
    let loglik = |mx: &[f64], my: &[f64], ex: &mut Vec<f64>| -> f64 {
        ex_of(my, ex);
        let z: f64 = mx.iter().zip(ex.iter()).map(|(m, e)| m * e).sum();
        let lx: f64 = cx.iter().zip(mx).map(|(c, m)| c * m.ln()).sum();
        let ly: f64 = cy.iter().zip(my).map(|(c, m)| c * m.ln()).sum();
        lx + ly - n * z.ln()
    };

    let mut ex = Vec::with_capacity(kx);
    let mut ey = Vec::with_capacity(ky);
    let mut trace = IterationTrace {
        log_likelihood: vec![loglik(&mx, &my, &mut ex)],
        distance: Vec::new(),
        converged: false,
        iterations: 0,
    };
    while trace.iterations < max_iter {
        ex_of(&my, &mut ex);
        let new_x = reweight(&cx, &ex)?;
        ey_of(&new_x, &mut ey);
        let new_y = reweight(&cy, &ey)?;
        let d = sup_distance_same_support(&mx, &new_x) + sup_distance_same_support(&my, &new_y);
        mx = new_x;
        my = new_y;
        trace.iterations += 1;
        trace.distance.push(d);
        trace.log_likelihood.push(loglik(&mx, &my, &mut ex));
        if d < eps {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        log::warn!("quasi-independence marginal estimation did not converge in {max_iter} sweeps");
    }
    Ok((DiscreteCDF::normalised(sx, mx), DiscreteCDF::normalised(sy, my), trace))
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= t);
    v
}

fn reweight(counts: &[f64], expectation: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(counts.len());
    for (k, (c, e)) in counts.iter().zip(expectation).enumerate() {
        if !(*e > 0.0) {
            return Err(Error::ZeroConditionalExpectation { index: k });
        }
        out.push(c / e);
    }
    Ok(normalise(out))
}

fn sup_distance_same_support(a: &[f64], b: &[f64]) -> f64 {
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        d = d.max((ca - cb).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalEstimator {
    /// Inverse-weighting NPMLE; needs `w > 0` at every observation.
    Npmle,
    /// Pooled empirical CDF of all values, used for both marginals; valid for
    /// exchangeable pairs under truncation.
    ExchangeablePooled,
    /// Alternating estimator under quasi-independence.
    QuasiIndependence,
}

impl MarginalEstimator {
    pub fn estimate(&self, sample: &Sample, bias: &BiasFunction) -> Result<(DiscreteCDF, DiscreteCDF)> {
        match self {
            MarginalEstimator::Npmle => npmle_inverse_weight(sample, bias),
            MarginalEstimator::ExchangeablePooled => {
                let f = exchangeable_pooled_cdf(sample)?;
                Ok((f.clone(), f))
            }
            MarginalEstimator::QuasiIndependence => {
                let (fx, fy, _) = estimate_marginals_qi(sample, bias, DEFAULT_QI_EPS, DEFAULT_QI_MAX_ITER)?;
                Ok((fx, fy))
            }
        }
    }

    pub fn check_applicable(&self, sample: &Sample, bias: &BiasFunction) -> Result<()> {
        match self {
            MarginalEstimator::Npmle => {
                let ys = sample.ys();
                for o in sample.observations() {
                    for &y in &ys {
                        if bias.evaluate(o.x, y)? <= 0.0 {
                            return Err(Error::EstimatorNotApplicable(
                                "the NPMLE needs a strictly positive bias on the observed grid".into(),
                            ));
                        }
                    }
                }
                Ok(())
            }
            MarginalEstimator::ExchangeablePooled if !bias.is_truncation() => {
                Err(Error::EstimatorNotApplicable("the pooled estimator is only defined for truncation".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MarginalEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginalEstimator::Npmle => "npmle",
            MarginalEstimator::ExchangeablePooled => "exchangeable",
            MarginalEstimator::QuasiIndependence => "qi",
        })
    }
}

impl FromStr for MarginalEstimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "npmle" => Ok(MarginalEstimator::Npmle),
            "exchangeable" | "pooled" => Ok(MarginalEstimator::ExchangeablePooled),
            "qi" | "quasi-independence" => Ok(MarginalEstimator::QuasiIndependence),
            _ => Err(Error::InvalidParameter(format!("unknown marginal estimator `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let f = DiscreteCDF::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(cdf_eval(&f, 2.0), 0.5);
        assert_eq!(cdf_eval(&f, 0.0), 0.0);
        assert_eq!(cdf_eval(&f, 3.0), 1.0);
    }

    #[test]
    fn distance_examples() {
        let a = DiscreteCDF::new(vec![0.0], vec![1.0]).unwrap();
        let b = DiscreteCDF::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(cdf_distance(&a, &a), 0.0);
        assert_eq!(cdf_distance(&a, &b), 1.0);
        let c = DiscreteCDF::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let d = DiscreteCDF::new(vec![1.0, 2.0], vec![0.6, 0.4]).unwrap();
        assert!((cdf_distance(&c, &d) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn duplicates_merge() {
        let f = DiscreteCDF::empirical(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.support(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.mass(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn npmle_examples() {
        let s = Sample::new(&[0.5, 1.5], &[1.5, 2.5]).unwrap();
        let (fx, fy) = npmle_inverse_weight(&s, &BiasFunction::SumXY).unwrap();
        assert!((fx.mass()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((fy.mass()[1] - 1.0 / 3.0).abs() < 1e-15);
        let (fx, _) = npmle_inverse_weight(&s, &BiasFunction::Constant(1.0)).unwrap();
        assert_eq!(fx.mass(), &[0.5, 0.5]);
        let z = Sample::new(&[2.0, 1.5], &[1.0, 2.5]).unwrap();
        assert_eq!(
            npmle_inverse_weight(&z, &BiasFunction::Truncation).unwrap_err(),
            Error::ZeroWeightAtPoint { index: 0 }
        );
    }

    #[test]
    fn pooled_examples() {
        let s = Sample::new(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!(exchangeable_pooled_cdf(&s).unwrap().eval(2.0), 0.5);
        let s = Sample::new(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(exchangeable_pooled_cdf(&s).unwrap(), DiscreteCDF::empirical(&[1.0, 2.0]).unwrap());
    }

    #[test]
    fn qi_constant_weight_is_empirical_after_one_sweep() {
        let s = Sample::new(&[1.0, 2.0, 2.0, 5.0], &[3.0, 1.0, 4.0, 4.0]).unwrap();
        let (fx, fy, tr) = estimate_marginals_qi(&s, &BiasFunction::Constant(1.0), 1e-6, 500).unwrap();
        assert_eq!(fx, DiscreteCDF::empirical(&s.xs()).unwrap());
        assert_eq!(fy, DiscreteCDF::empirical(&s.ys()).unwrap());
        assert!(tr.converged);
        assert_eq!(tr.iterations, 1);
    }

    #[test]
    fn qi_sum_weight_monotone_and_stationary() {
        let s = Sample::new(&[0.3, 1.2, 2.5, 0.7, 4.0], &[1.0, 0.2, 3.3, 2.2, 0.9]).unwrap();
        let (fx, fy, tr) = estimate_marginals_qi(&s, &BiasFunction::SumXY, 1e-13, 10_000).unwrap();
        assert!(tr.converged);
        for w in tr.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        // one more sweep from the fixed point, by the defining equations
        let ey = fy.mean();
        let ex = fx.mean();
        let nx: Vec<f64> = fx.support().iter().map(|s| 1.0 / (s + ey)).collect();
        let nx = normalise(nx);
        let ny: Vec<f64> = fy.support().iter().map(|t| 1.0 / (ex + t)).collect();
        let ny = normalise(ny);
        for (a, b) in nx.iter().zip(fx.mass()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in ny.iter().zip(fy.mass()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn qi_zero_expectation_reported() {
        // x = 5 has no y above it under truncation
        let s = Sample::new(&[0.0, 5.0], &[1.0, 2.0]).unwrap();
        let r = estimate_marginals_qi(&s, &BiasFunction::Truncation, 1e-6, 50);
        assert_eq!(r.unwrap_err(), Error::ZeroConditionalExpectation { index: 1 });
    }
}
