//! Weight matrices `W(i, j) = w(x_i, y_j)` and the exact permutation law they
//! induce, `P_W(π) ∝ ∏ W(i, π(i))`, for small `n`.

use std::fmt;

use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::sample::{Permutation, Sample};

/// Largest `n` the enumeration oracles accept by default.
pub const DEFAULT_ORACLE_CAP: usize = 10;

/// Logarithm of a non-negative quantity; `-∞` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogWeight(f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn from_value(v: f64) -> Self {
        debug_assert!(v >= 0.0);
        LogWeight(v.ln())
    }

    pub fn from_log(l: f64) -> Self {
        debug_assert!(!l.is_nan());
        LogWeight(l)
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

impl std::ops::Mul for LogWeight {
    type Output = LogWeight;
    fn mul(self, rhs: LogWeight) -> LogWeight {
        LogWeight(self.0 + rhs.0)
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl WeightMatrix {
    /// Row-major `n × n` entries; all must be finite and non-negative.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: entries.len() });
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("weight entry {bad} is not a finite non-negative number")));
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("weight matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn all_positive(&self) -> bool {
        self.entries.iter().all(|&v| v > 0.0)
    }

    pub fn diagonal_positive(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) > 0.0)
    }
}

/// Evaluates the bias on every `(x_i, y_j)`. The observed pairs must all have
/// positive weight.
pub fn build_weight_matrix(sample: &Sample, bias: &BiasFunction) -> Result<WeightMatrix> {
    let n = sample.len();
    let xs = sample.xs();
    let ys = sample.ys();
    let mut entries = Vec::with_capacity(n * n);
    for &x in &xs {
        for &y in &ys {
            entries.push(bias.evaluate(x, y)?);
        }
    }
    let w = WeightMatrix { n, entries };
    if let Some(row) = (0..n).find(|&i| w.get(i, i) <= 0.0) {
        return Err(Error::InfeasibleSample { row });
    }
    Ok(w)
}

/// `Σ_i log W(i, π(i))`.
pub fn log_perm_weight(w: &WeightMatrix, pi: &Permutation) -> Result<LogWeight> {
    if pi.len() != w.n() {
        return Err(Error::LengthMismatch { expected: w.n(), got: pi.len() });
    }
    Ok(log_perm_weight_unchecked(w, pi.as_slice()))
}

pub(crate) fn log_perm_weight_unchecked(w: &WeightMatrix, pi: &[usize]) -> LogWeight {
    let mut acc = 0.0;
    for (i, &j) in pi.iter().enumerate() {
        let v = w.get(i, j);
        if v <= 0.0 {
            return LogWeight::ZERO;
        }
        acc += v.ln();
    }
    LogWeight(acc)
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::OracleTooLarge { n, cap })
    } else {
        Ok(())
    }
}

/// Permanent by Ryser's inclusion–exclusion formula with Gray-code subset order.
pub fn permanent_exact(w: &WeightMatrix) -> Result<f64> {
    permanent_exact_with_cap(w, DEFAULT_ORACLE_CAP)
}

pub fn permanent_exact_with_cap(w: &WeightMatrix, cap: usize) -> Result<f64> {
    let n = w.n();
    check_cap(n, cap)?;
    let mut row_sums = vec![0.0f64; n];
    let mut total = 0.0f64;
    let mut in_set = vec![false; n];
    let mut size = 0usize;
    for k in 1u64..(1u64 << n) {
        // column whose membership flips between Gray codes k-1 and k
        let col = k.trailing_zeros() as usize;
        let sign = if in_set[col] { -1.0 } else { 1.0 };
        in_set[col] = !in_set[col];
        if in_set[col] {
            size += 1;
        } else {
            size -= 1;
        }
        for (i, rs) in row_sums.iter_mut().enumerate() {
            *rs += sign * w.get(i, col);
        }
        let prod: f64 = row_sums.iter().product();
        if (n - size) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total.max(0.0))
}

/// Calls `f` with every permutation of `0..n` (Heap's algorithm).
pub(crate) fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// The full law `P_W` as `(π, P_W(π))` for every π with positive probability.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    pub entries: Vec<(Permutation, f64)>,
    /// `log per(W)`.
    pub log_permanent: f64,
}

impl ExactLaw {
    pub fn probability(&self, pi: &Permutation) -> f64 {
        self.entries.iter().find(|(p, _)| p == pi).map_or(0.0, |(_, q)| *q)
    }
}

pub fn enumerate_exact_pw(w: &WeightMatrix) -> Result<ExactLaw> {
    enumerate_exact_pw_with_cap(w, DEFAULT_ORACLE_CAP)
}

pub fn enumerate_exact_pw_with_cap(w: &WeightMatrix, cap: usize) -> Result<ExactLaw> {
    check_cap(w.n(), cap)?;
    let mut logs: Vec<(Vec<usize>, f64)> = Vec::new();
    for_each_permutation(w.n(), |p| {
        let lw = log_perm_weight_unchecked(w, p);
        if !lw.is_zero() {
            logs.push((p.to_vec(), lw.ln()));
        }
    });
    if logs.is_empty() {
        return Err(Error::DegenerateLaw);
    }
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    let log_permanent = max + scaled.ln();
    let mut entries: Vec<(Permutation, f64)> =
        logs.into_iter().map(|(p, l)| (Permutation::from_vec_unchecked(p), (l - log_permanent).exp())).collect();
    entries.sort_by(|a, b| a.0.as_slice().cmp(b.0.as_slice()));
    Ok(ExactLaw { entries, log_permanent })
}
