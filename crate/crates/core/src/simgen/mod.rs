//! Data generators, biased sampling and power studies.

pub mod power;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::sample::{Observation, Sample};

pub use power::{format_power_table, power_table, preset, write_power_csv, PowerResult, PowerRow, PRESET_NAMES};

/// Marginal family applied to a uniform through its quantile function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
    },
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// `exp(Z)`, `Z` standard normal.
    LogNormal,
}

impl Marginal {
    pub const STANDARD_NORMAL: Marginal = Marginal::Normal { mean: 0.0, sd: 1.0 };

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { sd, .. } => sd > 0.0,
            Marginal::Exponential { rate } => rate > 0.0,
            Marginal::Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            Marginal::Uniform { a, b } => a < b,
            Marginal::LogNormal => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad marginal {self}")))
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => mean + sd * std_normal_quantile(u),
            Marginal::Exponential { rate } => -(-u).ln_1p() / rate,
            Marginal::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            Marginal::Uniform { a, b } => a + (b - a) * u,
            Marginal::LogNormal => std_normal_quantile(u).exp(),
        }
    }

    /// Maps a standard normal draw to this marginal.
    fn from_normal(&self, z: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => mean + sd * z,
            Marginal::LogNormal => z.exp(),
            _ => self.quantile(std_normal_cdf(z)),
        }
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marginal::Normal { mean, sd } => write!(f, "N({mean},{sd})"),
            Marginal::Exponential { rate } => write!(f, "Exp({rate})"),
            Marginal::Weibull { shape, scale } => write!(f, "Weibull({shape},{scale})"),
            Marginal::Uniform { a, b } => write!(f, "U[{a},{b}]"),
            Marginal::LogNormal => write!(f, "LogN"),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn std_normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

fn std_normal_quantile(u: f64) -> f64 {
    std_normal().inverse_cdf(u)
}

/// Joint law of `(X, Y)` before biased sampling. Gumbel and Clayton
/// copulas carry standard normal marginals.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    BivariateNormal {
        rho: f64,
    },
    GaussianCopula {
        rho: f64,
        x: Marginal,
        y: Marginal,
    },
    GumbelCopula {
        theta: f64,
    },
    ClaytonCopula {
        theta: f64,
    },
    /// Clayton(`theta1`) with probability `p`, else Clayton(`theta2`).
    ClaytonMixture {
        theta1: f64,
        theta2: f64,
        p: f64,
    },
    /// `(exp Z1, exp Z2)` with `corr(Z1, Z2) = rho`.
    LogNormal {
        rho: f64,
    },
    /// Uniform on `{(x, y) ∈ [0,1]² : |x − y| < delta}`.
    UniformStrip {
        delta: f64,
    },
    /// Finite support with the given probabilities.
    Discrete {
        points: Vec<(f64, f64)>,
        probs: Vec<f64>,
    },
    /// The inner law conditioned on `Y ≥ X`.
    RetainYAboveX(Box<GeneratorSpec>),
}

impl GeneratorSpec {
    /// Lifetime model, `X ~ Exp(rate 0.2)`, `Y ~ Weibull(shape 3, scale 8.5)`.
    pub fn lifetime_a(rho: f64) -> Self {
        GeneratorSpec::GaussianCopula {
            rho,
            x: Marginal::Exponential { rate: 0.2 },
            y: Marginal::Weibull { shape: 3.0, scale: 8.5 },
        }
    }

    /// Lifetime model, `X ~ Exp(rate 5)`, `Y ~ Weibull(shape 8.5, scale 3)`.
    pub fn lifetime_b(rho: f64) -> Self {
        GeneratorSpec::GaussianCopula {
            rho,
            x: Marginal::Exponential { rate: 5.0 },
            y: Marginal::Weibull { shape: 8.5, scale: 3.0 },
        }
    }

    /// Gaussian copula with `X ~ Weibull(0.5, 4)`, `Y ~ U[0,16]`, kept when `Y ≥ X`.
    pub fn cnorm(rho: f64) -> Self {
        GeneratorSpec::RetainYAboveX(Box::new(GeneratorSpec::GaussianCopula {
            rho,
            x: Marginal::Weibull { shape: 0.5, scale: 4.0 },
            y: Marginal::Uniform { a: 0.0, b: 16.0 },
        }))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            GeneratorSpec::BivariateNormal { rho } | GeneratorSpec::LogNormal { rho } => {
                if !(rho.abs() < 1.0) {
                    return bad("|rho| must be < 1");
                }
            }
            GeneratorSpec::GaussianCopula { rho, x, y } => {
                if !(rho.abs() < 1.0) {
                    return bad("|rho| must be < 1");
                }
                x.validate()?;
                y.validate()?;
            }
            GeneratorSpec::GumbelCopula { theta } => {
                if !(*theta >= 1.0) {
                    return bad("Gumbel theta must be >= 1");
                }
            }
            GeneratorSpec::ClaytonCopula { theta } => check_clayton(*theta)?,
            GeneratorSpec::ClaytonMixture { theta1, theta2, p } => {
                check_clayton(*theta1)?;
                check_clayton(*theta2)?;
                if !(0.0..=1.0).contains(p) {
                    return bad("mixture weight must lie in [0, 1]");
                }
            }
            GeneratorSpec::UniformStrip { delta } => {
                if !(*delta > 0.0) {
                    return bad("strip width must be positive");
                }
            }
            GeneratorSpec::Discrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return bad("discrete law needs matching non-empty points and probs");
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || probs.iter().sum::<f64>() <= 0.0 {
                    return bad("discrete probabilities must be non-negative with positive total");
                }
            }
            GeneratorSpec::RetainYAboveX(inner) => inner.validate()?,
        }
        Ok(())
    }

    fn draw_one(&self, rng: &mut StreamRng) -> (f64, f64) {
        match self {
            GeneratorSpec::BivariateNormal { rho } => correlated_normals(*rho, rng),
            GeneratorSpec::GaussianCopula { rho, x, y } => {
                let (z1, z2) = correlated_normals(*rho, rng);
                (x.from_normal(z1), y.from_normal(z2))
            }
            GeneratorSpec::GumbelCopula { theta } => {
                let (u, v) = gumbel_uniforms(*theta, rng);
                (std_normal_quantile(u), std_normal_quantile(v))
            }
            GeneratorSpec::ClaytonCopula { theta } => {
                let (u, v) = clayton_uniforms(*theta, rng);
                (std_normal_quantile(u), std_normal_quantile(v))
            }
            GeneratorSpec::ClaytonMixture { theta1, theta2, p } => {
                let theta = if rng.random_bool(*p) { *theta1 } else { *theta2 };
                let (u, v) = clayton_uniforms(theta, rng);
                (std_normal_quantile(u), std_normal_quantile(v))
            }
            GeneratorSpec::LogNormal { rho } => {
                let (z1, z2) = correlated_normals(*rho, rng);
                (z1.exp(), z2.exp())
            }
            GeneratorSpec::UniformStrip { delta } => loop {
                let x: f64 = rng.random();
                let y: f64 = rng.random();
                if (x - y).abs() < *delta {
                    break (x, y);
                }
            },
            GeneratorSpec::Discrete { points, probs } => {
                let total: f64 = probs.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (pt, p) in points.iter().zip(probs) {
                    if u < *p {
                        return *pt;
                    }
                    u -= p;
                }
                *points.iter().zip(probs).rev().find(|(_, p)| **p > 0.0).expect("positive mass").0
            }
            GeneratorSpec::RetainYAboveX(inner) => loop {
                let (x, y) = inner.draw_one(rng);
                if y >= x {
                    break (x, y);
                }
            },
        }
    }
}

/// Parses generator names such as `norm:-0.3`, `lognormal:0.2`,
/// `gumbel:1.6`, `clayton:0.5`, `clmix:0.5:-0.5:0.5`, `lifetime-a:0`,
/// `lifetime-b:0.4`, `cnorm:0.3` and `strip:0.3`.
impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params: Vec<f64> = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad numeric parameter `{p}` in generator `{s}`")))
            })
            .collect::<Result<_>>()?;
        let arity = |k: usize| -> Result<()> {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("generator `{head}` takes {k} parameter(s), got {}", params.len())))
            }
        };
        let g = match head.as_str() {
            "norm" | "normal" => {
                arity(1)?;
                GeneratorSpec::BivariateNormal { rho: params[0] }
            }
            "lognormal" => {
                arity(1)?;
                GeneratorSpec::LogNormal { rho: params[0] }
            }
            "gumbel" | "gc" => {
                arity(1)?;
                GeneratorSpec::GumbelCopula { theta: params[0] }
            }
            "clayton" | "cc" => {
                arity(1)?;
                GeneratorSpec::ClaytonCopula { theta: params[0] }
            }
            "clmix" => {
                arity(3)?;
                GeneratorSpec::ClaytonMixture { theta1: params[0], theta2: params[1], p: params[2] }
            }
            "lifetime-a" | "ld-a" => {
                arity(1)?;
                GeneratorSpec::lifetime_a(params[0])
            }
            "lifetime-b" | "ld-b" => {
                arity(1)?;
                GeneratorSpec::lifetime_b(params[0])
            }
            "cnorm" => {
                arity(1)?;
                GeneratorSpec::cnorm(params[0])
            }
            "strip" => {
                arity(1)?;
                GeneratorSpec::UniformStrip { delta: params[0] }
            }
            _ => return Err(Error::InvalidParameter(format!("unknown generator `{s}`"))),
        };
        g.validate()?;
        Ok(g)
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::BivariateNormal { rho } => write!(f, "Norm({rho})"),
            GeneratorSpec::GaussianCopula { rho, x, y } => write!(f, "GaussCop({rho};{x};{y})"),
            GeneratorSpec::GumbelCopula { theta } => write!(f, "GC({theta})"),
            GeneratorSpec::ClaytonCopula { theta } => write!(f, "CC({theta})"),
            GeneratorSpec::ClaytonMixture { theta1, theta2, p } => write!(f, "CLmix({theta1};{theta2};{p})"),
            GeneratorSpec::LogNormal { rho } => write!(f, "LogNormal({rho})"),
            GeneratorSpec::UniformStrip { delta } => write!(f, "Strip({delta})"),
            GeneratorSpec::Discrete { points, .. } => write!(f, "Discrete({})", points.len()),
            GeneratorSpec::RetainYAboveX(inner) => write!(f, "{inner}|Y>=X"),
        }
    }
}

fn check_clayton(theta: f64) -> Result<()> {
    if theta > -1.0 && theta != 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Clayton theta {theta} must be > -1 and != 0")))
    }
}

fn correlated_normals(rho: f64, rng: &mut StreamRng) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

/// Conditional inversion of `∂C/∂u`.
fn clayton_uniforms(theta: f64, rng: &mut StreamRng) -> (f64, f64) {
    let u: f64 = open_unit(rng);
    let t: f64 = open_unit(rng);
    let base = (t.powf(-theta / (1.0 + theta)) - 1.0) * u.powf(-theta) + 1.0;
    let v = base.max(0.0).powf(-1.0 / theta);
    (u, v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// Marshall–Olkin construction with a positive stable frailty
/// (Laplace transform `exp(−t^α)`, `α = 1/θ`).
fn gumbel_uniforms(theta: f64, rng: &mut StreamRng) -> (f64, f64) {
    let alpha = 1.0 / theta;
    let e1: f64 = rng.sample(Exp1);
    let e2: f64 = rng.sample(Exp1);
    if alpha >= 1.0 {
        return ((-e1).exp(), (-e2).exp());
    }
    let v = positive_stable(alpha, rng);
    let u = (-(e1 / v).powf(alpha)).exp();
    let w = (-(e2 / v).powf(alpha)).exp();
    (u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON), w.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// Kanter's representation of a one-sided stable law.
fn positive_stable(alpha: f64, rng: &mut StreamRng) -> f64 {
    let th = PI * open_unit(rng);
    let w: f64 = rng.sample(Exp1);
    let a = (alpha * th).sin() / th.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * th).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn open_unit(rng: &mut StreamRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `n` independent pairs from the unbiased law.
pub fn draw_unbiased(spec: &GeneratorSpec, n: usize, rng: &mut StreamRng) -> Result<Sample> {
    spec.validate()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n).map(|_| spec.draw_one(rng)).unzip();
    Sample::new(&xs, &ys)
}

#[derive(Debug, Clone)]
pub struct BiasedSampler {
    pub generator: GeneratorSpec,
    pub bias: BiasFunction,
    /// Overrides the bias function's own bound.
    pub w_bound: Option<f64>,
}

impl BiasedSampler {
    pub fn new(generator: GeneratorSpec, bias: BiasFunction) -> Self {
        Self { generator, bias, w_bound: None }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.w_bound = Some(bound);
        self
    }

    fn exact_lognormal_tilt(&self) -> Option<f64> {
        match (&self.generator, &self.bias, self.w_bound) {
            (GeneratorSpec::LogNormal { rho }, BiasFunction::SumXY, None) => Some(*rho),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BiasedDraw {
    pub sample: Sample,
    /// Accepted over proposed pairs; 1 for exact tilts.
    pub acceptance_rate: f64,
}

const PROBE_BATCH: u64 = 1_000_000;

/// `n` pairs from the `w`-tilted law, by acceptance sampling against the
/// bound (or an exact tilt where one is available).
pub fn draw_biased(sampler: &BiasedSampler, n: usize, rng: &mut StreamRng) -> Result<BiasedDraw> {
    sampler.generator.validate()?;
    if let Some(rho) = sampler.exact_lognormal_tilt() {
        // f·(e^{z1} + e^{z2}) is an equal mixture of mean shifts (1, ρ) and (ρ, 1).
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (z1, z2) = correlated_normals(rho, rng);
            let (a, b) = if rng.random_bool(0.5) { (1.0, rho) } else { (rho, 1.0) };
            xs.push((z1 + a).exp());
            ys.push((z2 + b).exp());
        }
        return Ok(BiasedDraw { sample: Sample::new(&xs, &ys)?, acceptance_rate: 1.0 });
    }
    let bound = sampler
        .w_bound
        .or_else(|| sampler.bias.upper_bound())
        .ok_or_else(|| Error::InvalidParameter(format!("bias {} is unbounded; supply w_bound", sampler.bias)))?;
    if !(bound > 0.0) {
        return Err(Error::InvalidParameter("w_bound must be positive".into()));
    }
    let truncation = sampler.bias.is_truncation();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut proposed: u64 = 0;
    let mut accepted_in_batch: u64 = 0;
    while xs.len() < n {
        let (x, y) = sampler.generator.draw_one(rng);
        proposed += 1;
        let w = sampler.bias.evaluate(x, y)?;
        if w > bound {
            return Err(Error::BoundViolated { value: w, bound });
        }
        let keep = if truncation { w > 0.0 } else { w > 0.0 && rng.random::<f64>() * bound < w };
        if keep {
            if truncation {
                assert!(x < y, "truncated pair violates x < y");
            }
            xs.push(x);
            ys.push(y);
            accepted_in_batch += 1;
        }
        if proposed % PROBE_BATCH == 0 {
            let rate = accepted_in_batch as f64 / PROBE_BATCH as f64;
            if rate < 1e-6 {
                return Err(Error::AcceptanceTooLow { rate });
            }
            accepted_in_batch = 0;
        }
    }
    Ok(BiasedDraw { sample: Sample::new(&xs, &ys)?, acceptance_rate: n as f64 / proposed as f64 })
}

/// Gamma right-censoring `C ~ Gamma(shape, scale)` applied to the residual
/// `Y − X` of a truncated pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCensoring {
    pub shape: f64,
    pub scale: f64,
}

pub const DEFAULT_CENSORING_SHAPE: f64 = 2.0;
pub const TARGET_CENSORING_RATE: f64 = 0.275;
const CALIBRATION_PROBES: usize = 10_000;

impl GammaCensoring {
    fn gamma(&self) -> Result<Gamma<f64>> {
        Gamma::new(self.shape, self.scale)
            .map_err(|e| Error::InvalidParameter(format!("gamma({}, {}): {e}", self.shape, self.scale)))
    }

    /// Observes `(x, min(y, x + C), 1{y ≤ x + C})`.
    pub fn apply(&self, sample: &Sample, rng: &mut StreamRng) -> Result<Sample> {
        let g = self.gamma()?;
        let obs = sample
            .observations()
            .iter()
            .map(|o| {
                let c = g.sample(rng);
                let event = o.y <= o.x + c;
                Observation { x: o.x, y: if event { o.y } else { o.x + c }, delta: Some(event) }
            })
            .collect();
        Sample::from_observations(obs, true)
    }
}

/// Bisection on the Gamma scale so that a fixed probe of biased pairs is
/// censored at `target` rate.
pub fn calibrate_censoring(
    sampler: &BiasedSampler,
    shape: f64,
    target: f64,
    rng: &mut StreamRng,
) -> Result<(GammaCensoring, f64)> {
    if !(0.0 < target && target < 1.0) {
        return Err(Error::InvalidParameter("target censoring rate must lie in (0, 1)".into()));
    }
    let probe = draw_biased(sampler, CALIBRATION_PROBES, rng)?.sample;
    let unit = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let gaps: Vec<f64> = probe.observations().iter().map(|o| o.y - o.x).collect();
    let g: Vec<f64> = (0..gaps.len()).map(|_| unit.sample(rng)).collect();
    let rate_at =
        |scale: f64| gaps.iter().zip(&g).filter(|(gap, gi)| **gap > scale * **gi).count() as f64 / gaps.len() as f64;
    let (mut lo, mut hi) = (1e-9_f64, 1e9_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if rate_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = (lo * hi).sqrt();
    let achieved = rate_at(scale);
    log::info!("calibrated censoring for {}: shape {shape}, scale {scale:.6}, rate {achieved:.4}", sampler.generator);
    Ok((GammaCensoring { shape, scale }, achieved))
}

/// Kendall's tau-a in `O(n log n)` via merge-sort inversion counting.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let mut v: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut v, &mut buf);
    let pairs = (n * (n - 1) / 2) as f64;
    1.0 - 2.0 * discordant as f64 / pairs
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn kendall_small() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // pairs: (1,2) conc, (1,3) disc, (2,3) disc
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[2.0, 3.0, 1.0]) - (-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn kendall_matches_quadratic() {
        let mut rng = stream_rng(3, Stream::Data);
        let xs: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random::<f64>()).collect();
        let mut s = 0.0;
        for i in 0..200 {
            for j in i + 1..200 {
                s += ((xs[i] - xs[j]) * (ys[i] - ys[j])).signum();
            }
        }
        let brute = s / (200.0 * 199.0 / 2.0);
        assert!((kendall_tau(&xs, &ys) - brute).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let e = Marginal::Exponential { rate: 2.0 };
        assert!((e.quantile(1.0 - (-1.0f64).exp()) - 0.5).abs() < 1e-12);
        let w = Marginal::Weibull { shape: 2.0, scale: 3.0 };
        assert!((w.quantile(1.0 - (-1.0f64).exp()) - 3.0).abs() < 1e-12);
        assert_eq!(Marginal::Uniform { a: 0.0, b: 16.0 }.quantile(0.25), 4.0);
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = stream_rng(1, Stream::Data);
        for spec in [
            GeneratorSpec::GumbelCopula { theta: 0.9 },
            GeneratorSpec::ClaytonCopula { theta: 0.0 },
            GeneratorSpec::ClaytonCopula { theta: -1.0 },
            GeneratorSpec::BivariateNormal { rho: 1.0 },
        ] {
            assert!(matches!(draw_unbiased(&spec, 10, &mut rng), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn bound_violation_reported() {
        let mut rng = stream_rng(1, Stream::Data);
        let s = BiasedSampler::new(GeneratorSpec::LogNormal { rho: 0.0 }, BiasFunction::SumXY).with_bound(0.5);
        assert!(matches!(draw_biased(&s, 10, &mut rng), Err(Error::BoundViolated { .. })));
        let s = BiasedSampler::new(GeneratorSpec::BivariateNormal { rho: 0.0 }, BiasFunction::SumXY);
        assert!(matches!(draw_biased(&s, 10, &mut rng), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn calibration_hits_target() {
        let mut rng = stream_rng(9, Stream::Calibration);
        let s = BiasedSampler::new(GeneratorSpec::BivariateNormal { rho: 0.0 }, BiasFunction::Truncation);
        let (c, rate) = calibrate_censoring(&s, 2.0, 0.275, &mut rng).unwrap();
        assert!((rate - 0.275).abs() < 0.002);
        let mut rng = stream_rng(10, Stream::Censoring);
        let sample = draw_biased(&s, 20_000, &mut rng).unwrap().sample;
        let cens = c.apply(&sample, &mut rng).unwrap();
        let frac = cens.observations().iter().filter(|o| o.delta == Some(false)).count() as f64 / 20_000.0;
        assert!((frac - 0.275).abs() < 0.02, "{frac}");
        assert!(cens.observations().iter().all(|o| o.x < o.y));
    }

    #[test]
    fn parses_known_generators() {
        assert_eq!(GeneratorSpec::from_str("norm:-0.3").unwrap(), GeneratorSpec::BivariateNormal { rho: -0.3 });
        assert_eq!(GeneratorSpec::from_str("LD-A:0").unwrap(), GeneratorSpec::lifetime_a(0.0));
        assert!(matches!(GeneratorSpec::from_str("clmix:0.5:-0.5:0.5").unwrap(), GeneratorSpec::ClaytonMixture { .. }));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GeneratorSpec::from_str("norm").is_err());
        assert!(GeneratorSpec::from_str("norm:x").is_err());
        assert!(GeneratorSpec::from_str("norm:2").is_err());
        assert!(GeneratorSpec::from_str("banana:1").is_err());
    }
}
