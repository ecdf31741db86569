#![allow(dead_code)]

use quasitest::rng::StreamRng;
use rand::Rng;

/// All permutations of `0..n` in lexicographic order.
pub fn all_perms(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Exact `P_W` by direct products over every permutation.
pub fn brute_law(w: &[f64], n: usize) -> Vec<(Vec<usize>, f64)> {
    let perms = all_perms(n);
    let weights: Vec<f64> = perms.iter().map(|p| (0..n).map(|i| w[i * n + p[i]]).product()).collect();
    let z: f64 = weights.iter().sum();
    perms.into_iter().zip(weights).map(|(p, x)| (p, x / z)).collect()
}

pub fn random_positive_w(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n * n).map(|_| rng.random_range(0.05..2.0)).collect()
}

/// Quadrant index of `(x, y)` relative to `c`: bits `1{x > cx}`, `1{y > cy}`.
pub fn quadrant(x: f64, y: f64, c: (f64, f64)) -> usize {
    2 * usize::from(x > c.0) + usize::from(y > c.1)
}

/// Lynden-Bell product-limit estimates for left-truncated pairs `x < y`.
/// Returns `(x atoms, x masses, y atoms, y masses)`, or `None` when a
/// risk set empties before the last atom.
pub fn product_limit(xs: &[f64], ys: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let uniq = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    };
    let ty = uniq(ys);
    let mut my = Vec::new();
    let mut surv = 1.0;
    for (k, &t) in ty.iter().enumerate() {
        let d = ys.iter().filter(|&&y| y == t).count() as f64;
        let r = xs.iter().zip(ys).filter(|(x, y)| **x < t && t <= **y).count() as f64;
        let h = d / r;
        if h >= 1.0 && k + 1 < ty.len() {
            return None;
        }
        my.push(surv * h);
        surv *= 1.0 - h;
    }
    let tx = uniq(xs);
    let mut mx = vec![0.0; tx.len()];
    let mut cdf = 1.0;
    for (k, &s) in tx.iter().enumerate().rev() {
        let d = xs.iter().filter(|&&x| x == s).count() as f64;
        let r = xs.iter().zip(ys).filter(|(x, y)| **x <= s && s < **y).count() as f64;
        let g = d / r;
        if g >= 1.0 && k > 0 {
            return None;
        }
        mx[k] = cdf * g;
        cdf *= 1.0 - g;
    }
    Some((tx, mx, ty, my))
}

pub fn cdf_from_mass(mass: &[f64]) -> Vec<f64> {
    mass.iter()
        .scan(0.0, |acc, m| {
            *acc += m;
            Some(*acc)
        })
        .collect()
}
