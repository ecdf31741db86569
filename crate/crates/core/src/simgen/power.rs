use std::io::Write;

use super::{
    calibrate_censoring, draw_biased, BiasedSampler, GammaCensoring, GeneratorSpec, DEFAULT_CENSORING_SHAPE,
    TARGET_CENSORING_RATE,
};
use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::inference::{null_rejection_rate, RejectionRate, TestConfig, TestMethod};
use crate::marginals::MarginalEstimator;
use crate::permsample::SisScheme;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::stats::StatisticKind;

/// One configuration of a power study.
#[derive(Debug, Clone)]
pub struct PowerRow {
    pub model: String,
    pub sampler: BiasedSampler,
    pub censoring: Option<GammaCensoring>,
    pub config: TestConfig,
    pub n: usize,
}

impl PowerRow {
    pub fn new(sampler: BiasedSampler, config: TestConfig, n: usize) -> Self {
        Self { model: sampler.generator.to_string(), sampler, censoring: None, config, n }
    }

    pub fn labelled(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub row: PowerRow,
    pub reps: usize,
    pub alpha: f64,
    pub outcome: RejectionRate,
}

/// Rejection rate of every row; replicates within a row run in parallel.
/// Failed replicates are recorded in the row's outcome and skipped.
pub fn power_table(rows: &[PowerRow], alpha: f64, reps: usize) -> Vec<PowerResult> {
    rows.iter()
        .map(|row| {
            let gen = |rng: &mut _| {
                let s = draw_biased(&row.sampler, row.n, rng)?.sample;
                match &row.censoring {
                    Some(c) => c.apply(&s, rng),
                    None => Ok(s),
                }
            };
            let outcome = null_rejection_rate(gen, &row.sampler.bias, &row.config, alpha, reps);
            if !outcome.failures.is_empty() {
                log::warn!("{}: {} of {reps} replicates failed", row.model, outcome.failures.len());
            }
            PowerResult { row: row.clone(), reps, alpha, outcome }
        })
        .collect()
}

fn bias_label(row: &PowerRow) -> String {
    match row.censoring {
        Some(c) => format!("{}+gamma({},{:.4})", row.sampler.bias, c.shape, c.scale),
        None => row.sampler.bias.to_string(),
    }
}

pub fn write_power_csv<W: Write>(results: &[PowerResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "model",
        "bias",
        "method",
        "statistic",
        "n",
        "B",
        "reps",
        "alpha",
        "rate",
        "ci_lo",
        "ci_hi",
        "mean_runtime_s",
    ])
    .map_err(io)?;
    for r in results {
        let o = &r.outcome;
        w.write_record([
            r.row.model.clone(),
            bias_label(&r.row),
            r.row.config.method.to_string(),
            r.row.config.statistic.to_string(),
            r.row.n.to_string(),
            r.row.config.b.to_string(),
            r.reps.to_string(),
            r.alpha.to_string(),
            format!("{:.4}", o.rate),
            format!("{:.4}", o.ci_lo),
            format!("{:.4}", o.ci_hi),
            format!("{:.4}", o.mean_runtime_s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn format_power_table(results: &[PowerResult]) -> String {
    let mut s = format!(
        "{:<24} {:<22} {:<26} {:<10} {:>4} {:>6} {:>7} {:>17} {:>9}\n",
        "model", "bias", "method", "statistic", "n", "B", "rate", "95% CI", "sec/test"
    );
    for r in results {
        let o = &r.outcome;
        s.push_str(&format!(
            "{:<24} {:<22} {:<26} {:<10} {:>4} {:>6} {:>7.3} [{:>6.3}, {:>6.3}] {:>9.3}",
            r.row.model,
            bias_label(&r.row),
            r.row.config.method.to_string(),
            r.row.config.statistic.to_string(),
            r.row.n,
            r.row.config.b,
            o.rate,
            o.ci_lo,
            o.ci_hi,
            o.mean_runtime_s
        ));
        if !o.failures.is_empty() {
            s.push_str(&format!("  ({} failed)", o.failures.len()));
        }
        s.push('\n');
    }
    s
}

pub const PRESET_NAMES: &[&str] =
    &["table1-null", "table1", "table1-censored", "table2-lognormal", "table2-normal", "table2"];

const NORM_RHOS: [f64; 9] = [-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9];

fn table1_models() -> Vec<(String, GeneratorSpec)> {
    let mut m: Vec<(String, GeneratorSpec)> =
        NORM_RHOS.iter().map(|&r| (format!("Norm({r})"), GeneratorSpec::BivariateNormal { rho: r })).collect();
    m.push(("GC(1.6)".into(), GeneratorSpec::GumbelCopula { theta: 1.6 }));
    m.push(("CC(0.5)".into(), GeneratorSpec::ClaytonCopula { theta: 0.5 }));
    m.push(("LD-A(0)".into(), GeneratorSpec::lifetime_a(0.0)));
    m.push(("LD-A(0.4)".into(), GeneratorSpec::lifetime_a(0.4)));
    m.push(("LD-B(0)".into(), GeneratorSpec::lifetime_b(0.0)));
    m.push(("LD-B(0.4)".into(), GeneratorSpec::lifetime_b(0.4)));
    m.push(("CLmix(0.5)".into(), GeneratorSpec::ClaytonMixture { theta1: 0.5, theta2: -0.5, p: 0.5 }));
    for &r in &NORM_RHOS {
        m.push((format!("CNorm({r})"), GeneratorSpec::cnorm(r)));
    }
    m
}

fn uncensored_rows(models: Vec<(String, GeneratorSpec)>, b: usize, seed: u64) -> Vec<PowerRow> {
    let mut rows = Vec::new();
    for (label, g) in models {
        for method in [TestMethod::PermutationMcmc, TestMethod::Bootstrap(MarginalEstimator::ExchangeablePooled)] {
            let sampler = BiasedSampler::new(g.clone(), BiasFunction::Truncation);
            rows.push(PowerRow::new(sampler, TestConfig::new(method, b, seed), 100).labelled(label.clone()));
        }
    }
    rows
}

fn table2_rows(models: Vec<(String, BiasedSampler)>, b: usize, seed: u64) -> Vec<PowerRow> {
    let methods = [
        TestMethod::PermutationIs(SisScheme::KouMcCullagh),
        TestMethod::PermutationIs(SisScheme::Uniform),
        TestMethod::PermutationIs(SisScheme::Monotone),
        TestMethod::PermutationIs(SisScheme::Grid),
        TestMethod::PermutationMcmc,
        TestMethod::Bootstrap(MarginalEstimator::QuasiIndependence),
    ];
    let mut rows = Vec::new();
    for (label, sampler) in models {
        for method in methods {
            for stat in [StatisticKind::AdjustedHoeffding, StatisticKind::InverseWeighting] {
                let cfg = TestConfig::new(method, b, seed).with_statistic(stat);
                rows.push(PowerRow::new(sampler.clone(), cfg, 100).labelled(label.clone()));
            }
        }
    }
    rows
}

fn lognormal_models() -> Vec<(String, BiasedSampler)> {
    [0.0, 0.2]
        .iter()
        .map(|&r| {
            (format!("LogNormal({r})"), BiasedSampler::new(GeneratorSpec::LogNormal { rho: r }, BiasFunction::SumXY))
        })
        .collect()
}

fn masked_normal_models() -> Vec<(String, BiasedSampler)> {
    [0.0, 0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .map(|&r| {
            let s = BiasedSampler::new(
                GeneratorSpec::BivariateNormal { rho: r },
                BiasFunction::GaussianDensityProduct { rho: -r },
            );
            (format!("Norm({r})"), s)
        })
        .collect()
}

/// Named row sets. Censored rows are calibrated here, which draws from the
/// calibration stream of `seed`.
pub fn preset(name: &str, b: usize, seed: u64) -> Result<Vec<PowerRow>> {
    Ok(match name {
        "table1-null" => vec![PowerRow::new(
            BiasedSampler::new(GeneratorSpec::BivariateNormal { rho: 0.0 }, BiasFunction::Truncation),
            TestConfig::new(TestMethod::PermutationMcmc, b, seed),
            100,
        )
        .labelled("Norm(0)")],
        "table1" => uncensored_rows(table1_models(), b, seed),
        "table1-censored" => {
            let mut rows = Vec::new();
            for (k, (label, g)) in table1_models().into_iter().enumerate() {
                let sampler = BiasedSampler::new(g, BiasFunction::Truncation);
                let mut rng = stream_rng(derive_seed(seed, k as u64), Stream::Calibration);
                let (c, _) = calibrate_censoring(&sampler, DEFAULT_CENSORING_SHAPE, TARGET_CENSORING_RATE, &mut rng)?;
                let mut row =
                    PowerRow::new(sampler, TestConfig::new(TestMethod::PermutationMcmc, b, seed), 200).labelled(label);
                row.censoring = Some(c);
                rows.push(row);
            }
            rows
        }
        "table2-lognormal" => table2_rows(lognormal_models(), b, seed),
        "table2-normal" => table2_rows(masked_normal_models(), b, seed),
        "table2" => {
            let mut m = lognormal_models();
            m.extend(masked_normal_models());
            table2_rows(m, b, seed)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}
