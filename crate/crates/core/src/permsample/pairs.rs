use serde::Serialize;

use super::{PermutationDraws, SamplerKind};
use crate::error::{Error, Result};
use crate::weights::{enumerate_exact_pw, WeightMatrix};

/// `P_ij = P(π(i) = j)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAssignmentProbs {
    n: usize,
    probs: Vec<f64>,
}

impl PairAssignmentProbs {
    /// Row-major `n × n` probabilities; entries must be finite and
    /// non-negative.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: probs.len() });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("pair probabilities must be finite and non-negative".into()));
        }
        Ok(Self { n, probs })
    }

    pub(crate) fn from_raw(n: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n * n);
        Self { n, probs }
    }

    pub fn identity(n: usize) -> Self {
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            probs[i * n + i] = 1.0;
        }
        Self { n, probs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn max_margin_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let r: f64 = (0..n).map(|j| self.get(i, j)).sum();
            let c: f64 = (0..n).map(|j| self.get(j, i)).sum();
            worst = worst.max((r - 1.0).abs()).max((c - 1.0).abs());
        }
        worst
    }
}

/// Frequency (MCMC) or self-normalised importance-weighted (SIS) estimate.
/// MCMC draws carrying all-state frequencies use those.
pub fn estimate_pair_probs(draws: &PermutationDraws) -> Result<PairAssignmentProbs> {
    if let (SamplerKind::Mcmc, Some(p)) = (draws.sampler, &draws.all_state_probs) {
        return Ok(p.clone());
    }
    let n = draws.permutations[0].len();
    let weights = draws.normalized_weights()?;
    let mut probs = vec![0.0; n * n];
    for (pi, wt) in draws.permutations.iter().zip(&weights) {
        if *wt == 0.0 {
            continue;
        }
        for (i, &j) in pi.as_slice().iter().enumerate() {
            probs[i * n + j] += wt;
        }
    }
    Ok(PairAssignmentProbs { n, probs })
}

pub fn exact_pair_probs(w: &WeightMatrix) -> Result<PairAssignmentProbs> {
    let law = enumerate_exact_pw(w)?;
    let n = w.n();
    let mut probs = vec![0.0; n * n];
    for (pi, p) in &law.entries {
        for (i, &j) in pi.as_slice().iter().enumerate() {
            probs[i * n + j] += p;
        }
    }
    Ok(PairAssignmentProbs { n, probs })
}
