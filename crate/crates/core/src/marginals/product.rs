use rand::Rng;

use super::DiscreteCDF;
use crate::bias::BiasFunction;
use crate::error::{Error, Result};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductBackend {
    /// Full support grid with 2-D prefix sums.
    Dense,
    /// Closed-form sums for `w = 1{x < y}`.
    Truncation,
}

/// The probability measure `∝ w(s, t) m_X(s) m_Y(t)` on the product of two
/// discrete supports.
#[derive(Debug, Clone)]
pub struct WeightedProductMeasure {
    fx: DiscreteCDF,
    fy: DiscreteCDF,
    backend: ProductBackend,
    z: f64,
    /// Dense: `(K_x + 1) × (K_y + 1)` prefix sums of normalised cell masses.
    /// Truncation: `G(k) = Σ_{s ≤ k} m_X(s) F_Y(s)` at each x-atom.
    prefix: Vec<f64>,
    /// Truncation only: cumulative of `m_X(s)(1 − F_Y(s)) / Z`.
    x_sampler: Vec<f64>,
}

impl WeightedProductMeasure {
    pub fn new(fx: DiscreteCDF, fy: DiscreteCDF, bias: &BiasFunction) -> Result<Self> {
        if bias.is_truncation() {
            Self::truncation(fx, fy)
        } else {
            Self::dense(fx, fy, bias)
        }
    }

    pub fn dense(fx: DiscreteCDF, fy: DiscreteCDF, bias: &BiasFunction) -> Result<Self> {
        let (kx, ky) = (fx.len(), fy.len());
        let stride = ky + 1;
        let mut prefix = vec![0.0; (kx + 1) * stride];
        for a in 0..kx {
            let s = fx.support()[a];
            let ma = fx.mass()[a];
            let mut row = 0.0;
            for b in 0..ky {
                row += bias.evaluate(s, fy.support()[b])? * ma * fy.mass()[b];
                prefix[(a + 1) * stride + b + 1] = prefix[a * stride + b + 1] + row;
            }
        }
        let z = prefix[kx * stride + ky];
        if !(z > 0.0) {
            return Err(Error::ZeroNormalizer);
        }
        prefix.iter_mut().for_each(|v| *v /= z);
        Ok(Self { fx, fy, backend: ProductBackend::Dense, z, prefix, x_sampler: Vec::new() })
    }

    pub fn truncation(fx: DiscreteCDF, fy: DiscreteCDF) -> Result<Self> {
        let mut g = Vec::with_capacity(fx.len());
        let mut xs = Vec::with_capacity(fx.len());
        let (mut acc_g, mut acc_x) = (0.0, 0.0);
        for (s, m) in fx.support().iter().zip(fx.mass()) {
            let fys = fy.eval(*s);
            acc_g += m * fys;
            acc_x += m * (1.0 - fys);
            g.push(acc_g);
            xs.push(acc_x);
        }
        let z = acc_x;
        if !(z > 0.0) {
            return Err(Error::ZeroNormalizer);
        }
        xs.iter_mut().for_each(|v| *v /= z);
        Ok(Self { fx, fy, backend: ProductBackend::Truncation, z, prefix: g, x_sampler: xs })
    }

    pub fn backend(&self) -> ProductBackend {
        self.backend
    }

    /// Unnormalised total mass `Σ w m_X m_Y`.
    pub fn normalizer(&self) -> f64 {
        self.z
    }

    pub fn marginals(&self) -> (&DiscreteCDF, &DiscreteCDF) {
        (&self.fx, &self.fy)
    }

    /// `P(S ≤ a, T ≤ b)`.
    pub fn joint_cdf(&self, a: f64, b: f64) -> f64 {
        match self.backend {
            ProductBackend::Dense => {
                let (ka, kb) = (self.fx.count_le(a), self.fy.count_le(b));
                self.prefix[ka * (self.fy.len() + 1) + kb]
            }
            ProductBackend::Truncation => {
                let u = a.min(b);
                let ku = self.fx.count_le(u);
                if ku == 0 {
                    return 0.0;
                }
                let v = (self.fx.cumulative()[ku - 1] * self.fy.eval(b) - self.prefix[ku - 1]) / self.z;
                v.max(0.0)
            }
        }
    }

    /// Masses of the four quadrants around `(a, b)` in the order
    /// `[00, 01, 10, 11]`, index bits being `1{s > a}`, `1{t > b}`.
    pub fn quadrant_masses(&self, a: f64, b: f64) -> [f64; 4] {
        let c = self.joint_cdf(a, b);
        let cx = self.joint_cdf(a, f64::INFINITY);
        let cy = self.joint_cdf(f64::INFINITY, b);
        [c, (cx - c).max(0.0), (cy - c).max(0.0), (1.0 - cx - cy + c).max(0.0)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        match self.backend {
            ProductBackend::Dense => {
                let (kx, ky) = (self.fx.len(), self.fy.len());
                let stride = ky + 1;
                let p = &self.prefix;
                let row_cum = |a: usize| p[(a + 1) * stride + ky];
                for _ in 0..n {
                    let u: f64 = rng.random::<f64>() * row_cum(kx - 1);
                    let a = first_exceeding(kx, row_cum, u);
                    let cell_cum = |b: usize| p[(a + 1) * stride + b + 1] - p[a * stride + b + 1];
                    let v: f64 = rng.random::<f64>() * cell_cum(ky - 1);
                    let b = first_exceeding(ky, cell_cum, v);
                    xs.push(self.fx.support()[a]);
                    ys.push(self.fy.support()[b]);
                }
            }
            ProductBackend::Truncation => {
                let cum_y = self.fy.cumulative();
                let ky = self.fy.len();
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let a = self.x_sampler.partition_point(|&c| c <= u).min(self.fx.len() - 1);
                    let s = self.fx.support()[a];
                    let first_above = self.fy.count_le(s);
                    let base = self.fy.eval(s);
                    let v = base + (1.0 - rng.random::<f64>()) * (1.0 - base);
                    let b = cum_y.partition_point(|&c| c < v).clamp(first_above, ky - 1);
                    xs.push(s);
                    ys.push(self.fy.support()[b]);
                }
            }
        }
        Sample::new(&xs, &ys)
    }
}

/// Smallest `k < len` with `cum(k) > u` for a non-decreasing `cum`; falls back
/// to the last index whose increment is positive.
fn first_exceeding(len: usize, cum: impl Fn(usize) -> f64, u: f64) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if cum(mid) > u {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut k = lo.min(len - 1);
    let prev = |k: usize| if k == 0 { 0.0 } else { cum(k - 1) };
    while k > 0 && cum(k) <= prev(k) {
        k -= 1;
    }
    k
}
