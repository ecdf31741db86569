//! Paired observations and permutations of their couplings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed pair. `delta` is the event indicator (`true` = uncensored)
/// and is present only in censored samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub delta: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    observations: Vec<Observation>,
    censored: bool,
}

impl Sample {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { expected: xs.len(), got: ys.len() });
        }
        let obs = xs.iter().zip(ys).map(|(&x, &y)| Observation { x, y, delta: None }).collect();
        Self::from_observations(obs, false)
    }

    /// A censored sample; `deltas[i]` is `true` when observation `i` is an
    /// event (uncensored).
    pub fn censored(xs: &[f64], ys: &[f64], deltas: &[bool]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() != deltas.len() {
            return Err(Error::LengthMismatch { expected: xs.len(), got: ys.len().min(deltas.len()) });
        }
        let obs = xs.iter().zip(ys).zip(deltas).map(|((&x, &y), &d)| Observation { x, y, delta: Some(d) }).collect();
        Self::from_observations(obs, true)
    }

    pub fn from_observations(observations: Vec<Observation>, censored: bool) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::InvalidSample(format!("need at least 2 observations, got {}", observations.len())));
        }
        for (i, o) in observations.iter().enumerate() {
            if !o.x.is_finite() || !o.y.is_finite() {
                return Err(Error::InvalidSample(format!("observation {i} is not finite")));
            }
            if censored != o.delta.is_some() {
                return Err(Error::InvalidSample(format!(
                    "observation {i}: censoring indicator must be present iff the sample is censored"
                )));
            }
        }
        Ok(Self { observations, censored })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_censored(&self) -> bool {
        self.censored
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn xs(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.observations[i].x
    }

    pub fn y(&self, i: usize) -> f64 {
        self.observations[i].y
    }
}

/// A bijection of `{0, …, n-1}`; `mapping[i]` is the y-index paired with x-index `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { mapping: (0..n).collect() }
    }

    pub fn from_vec(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::InvalidParameter(format!("{mapping:?} is not a permutation of 0..{n}")));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    /// Caller guarantees `mapping` is a bijection.
    pub(crate) fn from_vec_unchecked(mapping: Vec<usize>) -> Self {
        debug_assert!(Self::from_vec(mapping.clone()).is_ok());
        Self { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn get(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Self { mapping: inv }
    }

    /// `self ∘ other`: `i ↦ self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Self {
        Self { mapping: other.mapping.iter().map(|&j| self.mapping[j]).collect() }
    }

    pub(crate) fn swap(&mut self, i: usize, j: usize) {
        self.mapping.swap(i, j);
    }
}

/// Pairs `x_i` with `y_{π(i)}`. Censoring indicators move with their y.
pub fn apply_permutation(sample: &Sample, pi: &Permutation) -> Result<Sample> {
    if pi.len() != sample.len() {
        return Err(Error::LengthMismatch { expected: sample.len(), got: pi.len() });
    }
    let obs = sample.observations();
    let permuted = (0..obs.len())
        .map(|i| {
            let src = &obs[pi.get(i)];
            Observation { x: obs[i].x, y: src.y, delta: src.delta }
        })
        .collect();
    Ok(Sample { observations: permuted, censored: sample.censored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two() -> Sample {
        Sample::new(&[1.0, 2.0], &[10.0, 20.0]).unwrap()
    }

    #[test]
    fn identity_leaves_sample_unchanged() {
        let s = two();
        assert_eq!(apply_permutation(&s, &Permutation::identity(2)).unwrap(), s);
    }

    #[test]
    fn swap_exchanges_ys() {
        let s = two();
        let out = apply_permutation(&s, &Permutation::from_vec(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(out.xs(), vec![1.0, 2.0]);
        assert_eq!(out.ys(), vec![20.0, 10.0]);
    }

    #[test]
    fn length_mismatch() {
        let err = apply_permutation(&two(), &Permutation::identity(3)).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn censoring_travels_with_y() {
        let s = Sample::censored(&[1.0, 2.0], &[3.0, 4.0], &[true, false]).unwrap();
        let out = apply_permutation(&s, &Permutation::from_vec(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(out.observations()[0].delta, Some(false));
        assert_eq!(out.observations()[0].y, 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Sample::new(&[1.0], &[2.0]).is_err());
        assert!(Sample::new(&[1.0, f64::NAN], &[2.0, 3.0]).is_err());
        assert!(Permutation::from_vec(vec![0, 0]).is_err());
        assert!(Permutation::from_vec(vec![0, 2]).is_err());
    }

    fn arb_perm(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<_>>()).prop_shuffle().prop_map(|v| Permutation::from_vec(v).unwrap())
    }

    proptest! {
        #[test]
        fn inverse_restores(
            (xs, ys, pi) in (2usize..30).prop_flat_map(|n| (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
                arb_perm(n),
            ))
        ) {
            let s = Sample::new(&xs, &ys).unwrap();
            let p = apply_permutation(&s, &pi).unwrap();
            let back = apply_permutation(&p, &pi.inverse()).unwrap();
            prop_assert_eq!(back, s.clone());

            let mut a = s.ys(); let mut b = p.ys();
            a.sort_by(f64::total_cmp); b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert_eq!(p.xs(), s.xs());
        }
    }
}
