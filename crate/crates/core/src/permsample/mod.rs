//! Samplers over the weighted permutation law `P_W`.

mod mcmc;
mod pairs;
mod sis;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Permutation;

pub use mcmc::{mh_swap_step, sample_permutations_mcmc};
pub use pairs::{estimate_pair_probs, exact_pair_probs, PairAssignmentProbs};
pub use sis::{sis_sample, GRID_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Retained permutations, counting the identity at index 0.
    pub b: usize,
    /// Steps between retained states; `None` means `2n`.
    pub m: Option<usize>,
    pub m0: usize,
    pub seed: u64,
    /// Accumulate pair-assignment frequencies over every visited state.
    pub accumulate_all_states: bool,
    /// Draw the two swap indices independently, holding when they coincide.
    pub lazy: bool,
}

impl McmcConfig {
    pub fn new(b: usize, seed: u64) -> Self {
        Self { b, m: None, m0: 0, seed, accumulate_all_states: true, lazy: true }
    }

    pub fn steps_between(&self, n: usize) -> usize {
        self.m.unwrap_or(2 * n)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidParameter("MCMC needs B >= 1 retained permutations".into()));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidParameter("MCMC thinning M must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SisScheme {
    Uniform,
    Monotone,
    Grid,
    KouMcCullagh,
    /// Proposal equal to the exact target law (enumeration; small `n` only).
    ExactLaw,
}

impl fmt::Display for SisScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SisScheme::Uniform => "uniform",
            SisScheme::Monotone => "monotone",
            SisScheme::Grid => "grid",
            SisScheme::KouMcCullagh => "kou-mccullagh",
            SisScheme::ExactLaw => "exact",
        })
    }
}

impl FromStr for SisScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "uniform" => Ok(SisScheme::Uniform),
            "monotone" => Ok(SisScheme::Monotone),
            "grid" => Ok(SisScheme::Grid),
            "kou-mccullagh" | "km" => Ok(SisScheme::KouMcCullagh),
            "exact" => Ok(SisScheme::ExactLaw),
            _ => Err(Error::InvalidParameter(format!("unknown SIS scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    Mcmc,
    Sis(SisScheme),
}

#[derive(Debug, Clone)]
pub struct PermutationDraws {
    /// Entry 0 is the identity.
    pub permutations: Vec<Permutation>,
    /// `Σ_i log W(i, π(i))`; `-∞` for SIS dead ends.
    pub log_target: Vec<f64>,
    /// `log P_IS(π)` for SIS draws.
    pub log_proposal: Option<Vec<f64>>,
    /// `log(P_W / P_IS)` up to a common constant, for SIS draws.
    pub log_weights: Option<Vec<f64>>,
    pub sampler: SamplerKind,
    pub acceptance_rate: Option<f64>,
    /// Pair-assignment frequencies over every visited chain state.
    pub all_state_probs: Option<PairAssignmentProbs>,
    pub dead_ends: usize,
    /// Kou–McCullagh steps where a denominator hit the positive floor.
    pub floored_steps: usize,
}

impl PermutationDraws {
    pub fn len(&self) -> usize {
        self.permutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutations.is_empty()
    }

    /// Importance weights scaled so the largest is 1 (all 1 for MCMC draws).
    pub fn relative_weights(&self) -> Result<Vec<f64>> {
        match &self.log_weights {
            None => Ok(vec![1.0; self.len()]),
            Some(lw) => {
                let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return Err(Error::ZeroTotalWeight);
                }
                Ok(lw.iter().map(|l| (l - max).exp()).collect())
            }
        }
    }

    /// Self-normalised importance weights (all equal for MCMC draws).
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        let raw = self.relative_weights()?;
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|r| r / total).collect())
    }

    /// Coefficient of variation of the importance ratios `P_W / P_IS`.
    pub fn weight_cv(&self) -> Option<f64> {
        let w = self.normalized_weights().ok()?;
        self.log_weights.as_ref()?;
        let k = w.len() as f64;
        let mean = 1.0 / k;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        Some(var.sqrt() / mean)
    }

    /// CSV with columns `draw_index,log_target,log_proposal,acceptance_rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["draw_index", "log_target", "log_proposal", "acceptance_rate"]).map_err(io)?;
        let fmt_f = |v: f64| {
            if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                v.to_string()
            }
        };
        let acc = self.acceptance_rate.map(|a| a.to_string()).unwrap_or_default();
        for k in 0..self.len() {
            let lp = self.log_proposal.as_ref().map(|v| fmt_f(v[k])).unwrap_or_default();
            w.write_record([k.to_string(), fmt_f(self.log_target[k]), lp, acc.clone()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
