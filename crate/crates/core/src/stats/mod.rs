//! Quadrant statistics: the adjusted Hoeffding statistic and its inverse
//! weighted variant.

mod quadrants;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::marginals::{DiscreteCDF, WeightedProductMeasure};
use crate::permsample::PairAssignmentProbs;
use crate::rng::{stream_rng, Stream};
use crate::sample::Sample;

pub use quadrants::QuadrantGeometry;

/// Standard deviation of the center perturbation.
pub const PERTURBATION_SD: f64 = 3.162_277_660_168_379_5e-5;

/// Cells with expectation at or below this value remove their center.
pub const MIN_EXPECTED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    AdjustedHoeffding,
    InverseWeighting,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::AdjustedHoeffding => "adjusted-hoeffding",
            StatisticKind::InverseWeighting => "inverse-weighting",
        })
    }
}

impl std::str::FromStr for StatisticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adjusted-hoeffding" | "hoeffding" | "hoef" => Ok(StatisticKind::AdjustedHoeffding),
            "inverse-weighting" | "iw" => Ok(StatisticKind::InverseWeighting),
            _ => Err(Error::InvalidParameter(format!("unknown statistic `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatisticValue {
    pub value: f64,
    pub centers_used: usize,
    pub kind: StatisticKind,
}

/// Observed and expected counts around one center, quadrants ordered
/// `[00, 01, 10, 11]` with bits `1{x' > cx}`, `1{y' > cy}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantCounts {
    pub observed: [f64; 4],
    pub expected: [f64; 4],
    pub included: bool,
}

/// Source of expected quadrant counts under the null.
#[derive(Debug, Clone)]
pub enum ExpectedCountProvider {
    PermutationProbs(PairAssignmentProbs),
    BootstrapMarginals {
        fx: DiscreteCDF,
        fy: DiscreteCDF,
        bias: BiasFunction,
    },
    /// Empirical marginals of the observed sample with the bias ignored.
    /// Biased; for comparison only.
    NaiveEmpirical,
}

/// Data points shifted by independent `N(0, 1e-9)` noise in each coordinate.
pub fn perturb_centers(sample: &Sample, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = stream_rng(seed, Stream::Perturbation);
    let noise = Normal::new(0.0, PERTURBATION_SD).expect("valid normal");
    sample.observations().iter().map(|o| (o.x + noise.sample(&mut rng), o.y + noise.sample(&mut rng))).collect()
}

fn quadrant_of(p: (f64, f64), c: (f64, f64)) -> usize {
    2 * usize::from(p.0 > c.0) + usize::from(p.1 > c.1)
}

pub fn quadrant_observed(points: &[(f64, f64)], center: (f64, f64)) -> [usize; 4] {
    let mut o = [0; 4];
    for &p in points {
        o[quadrant_of(p, center)] += 1;
    }
    o
}

/// `e^{jk} = Σ_{i,j'} 1{(x_i, y_j') ∈ Q^{jk}} P_{ij'}`.
pub fn expected_from_pair_probs(p: &PairAssignmentProbs, sample: &Sample, center: (f64, f64)) -> Result<[f64; 4]> {
    let n = sample.len();
    if p.n() != n {
        return Err(Error::LengthMismatch { expected: n, got: p.n() });
    }
    let mut e = [0.0; 4];
    for i in 0..n {
        for j in 0..n {
            e[quadrant_of((sample.x(i), sample.y(j)), center)] += p.get(i, j);
        }
    }
    Ok(e)
}

/// `n` times the quadrant masses of the weighted product of two marginals.
pub fn expected_from_marginals(
    fx: &DiscreteCDF,
    fy: &DiscreteCDF,
    bias: &BiasFunction,
    sample: &Sample,
    center: (f64, f64),
) -> Result<[f64; 4]> {
    let m = WeightedProductMeasure::new(fx.clone(), fy.clone(), bias)?;
    let n = sample.len() as f64;
    Ok(m.quadrant_masses(center.0, center.1).map(|q| n * q))
}

/// Pearson sum over centers whose four expectations all exceed
/// [`MIN_EXPECTED`]; returns the sum and the number of centers used.
pub fn pearson_sum(observed: &[[f64; 4]], expected: &[[f64; 4]]) -> (f64, usize) {
    pearson_sum_above(observed, expected, MIN_EXPECTED)
}

/// Pearson sum over centers whose four expectations all exceed `min`.
pub fn pearson_sum_above(observed: &[[f64; 4]], expected: &[[f64; 4]], min: f64) -> (f64, usize) {
    let mut t = 0.0;
    let mut used = 0;
    for (o, e) in observed.iter().zip(expected) {
        if e.iter().all(|&v| v > min) {
            used += 1;
            for k in 0..4 {
                t += (o[k] - e[k]).powi(2) / e[k];
            }
        }
    }
    (t, used)
}

/// Expected counts for every center of `geometry`, which must have been
/// built from `sample` and `centers`.
pub fn expected_counts(
    provider: &ExpectedCountProvider,
    geometry: &QuadrantGeometry,
    sample: &Sample,
    centers: &[(f64, f64)],
) -> Result<Vec<[f64; 4]>> {
    let n = sample.len() as f64;
    match provider {
        ExpectedCountProvider::PermutationProbs(p) => {
            if p.n() != sample.len() {
                return Err(Error::LengthMismatch { expected: sample.len(), got: p.n() });
            }
            Ok(geometry.expected_from_pair_probs(p))
        }
        ExpectedCountProvider::BootstrapMarginals { fx, fy, bias } => {
            let m = WeightedProductMeasure::new(fx.clone(), fy.clone(), bias)?;
            Ok(centers.iter().map(|c| m.quadrant_masses(c.0, c.1).map(|q| n * q)).collect())
        }
        ExpectedCountProvider::NaiveEmpirical => {
            let fx = DiscreteCDF::empirical(&sample.xs())?;
            let fy = DiscreteCDF::empirical(&sample.ys())?;
            Ok(centers
                .iter()
                .map(|c| {
                    let (px, py) = (fx.eval(c.0), fy.eval(c.1));
                    [n * px * py, n * px * (1.0 - py), n * (1.0 - px) * py, n * (1.0 - px) * (1.0 - py)]
                })
                .collect())
        }
    }
}

/// Per-center table used by [`adjusted_hoeffding`].
pub fn quadrant_table(sample: &Sample, provider: &ExpectedCountProvider, seed: u64) -> Result<Vec<QuadrantCounts>> {
    let centers = perturb_centers(sample, seed);
    let geom = QuadrantGeometry::new(&sample.xs(), &sample.ys(), &centers);
    let identity: Vec<usize> = (0..sample.len()).collect();
    let obs = geom.counts(&identity);
    let exp = expected_counts(provider, &geom, sample, &centers)?;
    Ok(obs
        .into_iter()
        .zip(exp)
        .map(|(o, e)| QuadrantCounts { observed: o, expected: e, included: e.iter().all(|&v| v > MIN_EXPECTED) })
        .collect())
}

pub fn adjusted_hoeffding(sample: &Sample, provider: &ExpectedCountProvider, seed: u64) -> Result<StatisticValue> {
    let table = quadrant_table(sample, provider, seed)?;
    let obs: Vec<[f64; 4]> = table.iter().map(|q| q.observed).collect();
    let exp: Vec<[f64; 4]> = table.iter().map(|q| q.expected).collect();
    let (value, used) = pearson_sum(&obs, &exp);
    if used == 0 {
        return Err(Error::NoValidCenters);
    }
    Ok(StatisticValue { value, centers_used: used, kind: StatisticKind::AdjustedHoeffding })
}

/// Inverse-weighted observed sums and their marginal-product expectations.
pub fn inverse_weighted_cells(
    geometry: &QuadrantGeometry,
    pi: &[usize],
    inv_w: &[f64],
) -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
    let (obs, margins, total) = geometry.weighted_counts(pi, inv_w);
    let exp = margins
        .iter()
        .map(|&(ax, ay)| {
            [ax * ay / total, ax * (total - ay) / total, (total - ax) * ay / total, (total - ax) * (total - ay) / total]
        })
        .collect();
    (obs, exp)
}

/// Inverse-weighted Pearson sum. The cell filter is applied in count
/// units: an expectation is compared with `MIN_EXPECTED` times the mean
/// inverse weight, so the filter does not depend on the scale of `w`.
pub fn inverse_weighted_pearson(geometry: &QuadrantGeometry, pi: &[usize], inv_w: &[f64]) -> (f64, usize) {
    let (obs, exp) = inverse_weighted_cells(geometry, pi, inv_w);
    let unit = inv_w.iter().sum::<f64>() / inv_w.len() as f64;
    pearson_sum_above(&obs, &exp, MIN_EXPECTED * unit)
}

pub fn inverse_weight_statistic(sample: &Sample, bias: &BiasFunction, seed: u64) -> Result<StatisticValue> {
    let mut inv = Vec::with_capacity(sample.len());
    for (i, o) in sample.observations().iter().enumerate() {
        let w = bias.evaluate(o.x, o.y)?;
        if w <= 0.0 {
            return Err(Error::ZeroWeightAtPoint { index: i });
        }
        inv.push(1.0 / w);
    }
    let centers = perturb_centers(sample, seed);
    let geom = QuadrantGeometry::new(&sample.xs(), &sample.ys(), &centers);
    let identity: Vec<usize> = (0..sample.len()).collect();
    let (value, used) = inverse_weighted_pearson(&geom, &identity, &inv);
    if used == 0 {
        return Err(Error::NoValidCenters);
    }
    Ok(StatisticValue { value, centers_used: used, kind: StatisticKind::InverseWeighting })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_is_deterministic_and_small() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let s = Sample::new(&xs, &xs).unwrap();
        let a = perturb_centers(&s, 4);
        assert_eq!(a, perturb_centers(&s, 4));
        assert_ne!(a, perturb_centers(&s, 5));
        for (c, x) in a.iter().zip(&xs) {
            assert!((c.0 - x).abs() < 1e-3 && (c.1 - x).abs() < 1e-3);
        }
        assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn observed_examples() {
        let pts = [(1.0, 1.0), (3.0, 3.0), (1.0, 3.0)];
        assert_eq!(quadrant_observed(&pts, (2.0, 2.0)), [1, 1, 0, 1]);
        assert_eq!(quadrant_observed(&pts, (10.0, 10.0)), [3, 0, 0, 0]);
    }

    #[test]
    fn pearson_examples() {
        let e = [[2.0; 4]];
        assert_eq!(pearson_sum(&e, &e), (0.0, 1));
        let (t, used) = pearson_sum(&[[3.0, 1.0, 1.0, 3.0]], &[[2.0; 4]]);
        assert_eq!((t, used), (2.0, 1));
        assert_eq!(pearson_sum(&[[2.0, 0.0, 0.0, 2.0]], &[[1.0; 4]]), (0.0, 0));
        assert_eq!(pearson_sum(&[[2.0, 0.0, 0.0, 2.0]], &[[1.0 + 1e-12; 4]]).1, 1);
    }

    #[test]
    fn uniform_pair_probs_grid() {
        let s = Sample::new(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let p = PairAssignmentProbs::from_raw(2, vec![0.5; 4]);
        assert_eq!(expected_from_pair_probs(&p, &s, (1.5, 1.5)).unwrap(), [0.5; 4]);
    }

    #[test]
    fn identity_pair_probs_give_observed() {
        let s = Sample::new(&[1.0, 2.0, 3.0, 0.5], &[2.0, 0.1, 5.0, 4.0]).unwrap();
        let p = PairAssignmentProbs::identity(4);
        let pts: Vec<(f64, f64)> = s.observations().iter().map(|o| (o.x, o.y)).collect();
        for c in [(1.5, 3.0), (0.0, 0.0), (2.5, 4.5)] {
            let e = expected_from_pair_probs(&p, &s, c).unwrap();
            let o = quadrant_observed(&pts, c);
            assert_eq!(e, o.map(|v| v as f64));
        }
    }

    #[test]
    fn geometry_matches_direct_counting() {
        let xs = [0.3, 1.7, 2.2, 0.9, 4.1, 3.3];
        let ys = [1.1, 0.4, 2.9, 3.5, 0.8, 2.0];
        let s = Sample::new(&xs, &ys).unwrap();
        let centers = perturb_centers(&s, 1);
        let g = QuadrantGeometry::new(&xs, &ys, &centers);
        let pi = [2, 0, 5, 1, 3, 4];
        let counts = g.counts(&pi);
        let pts: Vec<(f64, f64)> = (0..6).map(|l| (xs[l], ys[pi[l]])).collect();
        for (c, got) in centers.iter().zip(&counts) {
            assert_eq!(quadrant_observed(&pts, *c).map(|v| v as f64), *got);
        }
    }

    #[test]
    fn unit_weights_reduce_iw_to_count_statistic() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64).collect();
        let ys: Vec<f64> = (0..40).map(|i| ((i * 7 + 3) % 40) as f64 + 0.5).collect();
        let s = Sample::new(&xs, &ys).unwrap();
        let iw = inverse_weight_statistic(&s, &BiasFunction::Constant(1.0), 9).unwrap();
        let naive = adjusted_hoeffding(&s, &ExpectedCountProvider::NaiveEmpirical, 9).unwrap();
        assert!((iw.value - naive.value).abs() < 1e-9);
        assert_eq!(iw.centers_used, naive.centers_used);
    }

    #[test]
    fn two_point_inverse_weights() {
        let s = Sample::new(&[1.0, 3.0], &[1.0, 1.0]).unwrap();
        let centers = [(2.0, 2.0)];
        let g = QuadrantGeometry::new(&s.xs(), &s.ys(), &centers);
        let (obs, exp) = inverse_weighted_cells(&g, &[0, 1], &[0.5, 0.25]);
        assert_eq!(obs[0], [0.5, 0.0, 0.25, 0.0]);
        assert_eq!(exp[0], [0.5, 0.0, 0.25, 0.0]);
        let total: f64 = obs[0].iter().sum();
        assert_eq!(total, 0.75);
    }

    #[test]
    fn no_valid_centers() {
        let s = Sample::new(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let err = adjusted_hoeffding(&s, &ExpectedCountProvider::NaiveEmpirical, 0).unwrap_err();
        assert_eq!(err, Error::NoValidCenters);
    }

    #[test]
    fn zero_weight_rejected_by_iw() {
        let s = Sample::new(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        let err = inverse_weight_statistic(&s, &BiasFunction::Truncation, 0).unwrap_err();
        assert_eq!(err, Error::ZeroWeightAtPoint { index: 1 });
    }
}
