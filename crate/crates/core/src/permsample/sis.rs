use rand::Rng;

use super::{PermutationDraws, SamplerKind, SisScheme};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sample::Permutation;
use crate::weights::{enumerate_exact_pw, log_perm_weight_unchecked, WeightMatrix};

/// Number of tilting exponents in the grid scheme.
pub const GRID_SIZE: usize = 10;

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Rows with more zero weights first, then by decreasing variance of the
/// positive log-weights; ties keep index order.
fn monotone_row_order(w: &WeightMatrix) -> Vec<usize> {
    let n = w.n();
    let keys: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let logs: Vec<f64> = w.row(i).iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
            let zeros = n - logs.len();
            let var = if logs.len() < 2 {
                0.0
            } else {
                let mean = logs.iter().sum::<f64>() / logs.len() as f64;
                logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64
            };
            (zeros, var)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[b].0.cmp(&keys[a].0).then(keys[b].1.total_cmp(&keys[a].1)));
    order
}

/// Columns not yet assigned, with O(1) removal.
struct Remaining {
    cols: Vec<usize>,
    pos: Vec<usize>,
}

impl Remaining {
    fn new(n: usize) -> Self {
        Self { cols: (0..n).collect(), pos: (0..n).collect() }
    }

    fn remove(&mut self, c: usize) {
        let p = self.pos[c];
        let last = *self.cols.last().unwrap();
        self.cols.swap_remove(p);
        if last != c {
            self.pos[last] = p;
        }
    }
}

/// Row-by-row proposal; `probs` receives unnormalised selection weights for
/// the remaining columns of `row`.
trait Proposal {
    fn order(&self) -> &[usize];
    fn reset(&mut self);
    fn weights(&mut self, row: usize, cols: &[usize], probs: &mut Vec<f64>);
    fn commit(&mut self, _row: usize) {}
}

struct Tilted<'a> {
    w: &'a [f64],
    n: usize,
    order: Vec<usize>,
}

impl Proposal for Tilted<'_> {
    fn order(&self) -> &[usize] {
        &self.order
    }
    fn reset(&mut self) {}
    fn weights(&mut self, row: usize, cols: &[usize], probs: &mut Vec<f64>) {
        probs.clear();
        probs.extend(cols.iter().map(|&c| self.w[row * self.n + c]));
    }
}

struct KouMcCullagh<'a> {
    w: &'a WeightMatrix,
    order: Vec<usize>,
    initial: Vec<f64>,
    col_sums: Vec<f64>,
    floor: f64,
    floored: usize,
}

impl<'a> KouMcCullagh<'a> {
    fn new(w: &'a WeightMatrix) -> Self {
        let n = w.n();
        let mut initial = vec![0.0; n];
        for i in 0..n {
            for (j, v) in w.row(i).iter().enumerate() {
                initial[j] += v;
            }
        }
        let floor = f64::EPSILON * initial.iter().cloned().fold(0.0, f64::max);
        Self { w, order: (0..n).collect(), col_sums: initial.clone(), initial, floor, floored: 0 }
    }
}

impl Proposal for KouMcCullagh<'_> {
    fn order(&self) -> &[usize] {
        &self.order
    }
    fn reset(&mut self) {
        self.col_sums.copy_from_slice(&self.initial);
    }
    fn weights(&mut self, row: usize, cols: &[usize], probs: &mut Vec<f64>) {
        probs.clear();
        for &c in cols {
            let v = self.w.get(row, c);
            if v <= 0.0 {
                probs.push(0.0);
                continue;
            }
            let mut den = self.col_sums[c] - v;
            if den < self.floor {
                den = self.floor;
                self.floored += 1;
            }
            probs.push(v / den);
        }
    }
    fn commit(&mut self, row: usize) {
        for (c, v) in self.w.row(row).iter().enumerate() {
            self.col_sums[c] -= v;
        }
    }
}

/// Outcome of walking one path: `None` for a dead end.
fn walk<P: Proposal, R: Rng + ?Sized>(
    prop: &mut P,
    n: usize,
    rng: Option<&mut R>,
    forced: Option<&[usize]>,
    probs: &mut Vec<f64>,
) -> (Vec<usize>, Option<f64>) {
    prop.reset();
    let mut rem = Remaining::new(n);
    let mut pi = vec![usize::MAX; n];
    let mut log_p = 0.0;
    let mut rng = rng;
    let order = prop.order().to_vec();
    for (step, &row) in order.iter().enumerate() {
        prop.weights(row, &rem.cols, probs);
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            // complete arbitrarily so the draw is still a permutation
            for (&r, &c) in order[step..].iter().zip(rem.cols.clone().iter()) {
                pi[r] = c;
            }
            return (pi, None);
        }
        let k = match forced {
            Some(f) => rem.pos[f[row]],
            None => {
                let u: f64 = rng.as_mut().expect("rng or forced path").random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (idx, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc && *p > 0.0 {
                        pick = idx;
                        break;
                    }
                }
                while probs[pick] <= 0.0 {
                    pick -= 1;
                }
                pick
            }
        };
        if probs[k] <= 0.0 {
            return (pi, None);
        }
        log_p += (probs[k] / total).ln();
        let c = rem.cols[k];
        pi[row] = c;
        rem.remove(c);
        prop.commit(row);
    }
    (pi, Some(log_p))
}

/// Sequential importance sampling of `b` permutations (draw 0 is the
/// identity, scored under the proposal).
pub fn sis_sample(w: &WeightMatrix, scheme: SisScheme, b: usize, seed: u64) -> Result<PermutationDraws> {
    if b == 0 {
        return Err(Error::InvalidParameter("SIS needs at least one draw".into()));
    }
    let n = w.n();
    if let Some(row) = (0..n).find(|&i| w.get(i, i) <= 0.0) {
        return Err(Error::InfeasibleSample { row });
    }
    let mut rng = stream_rng(seed, Stream::Importance);
    let identity: Vec<usize> = (0..n).collect();
    let mut perms = Vec::with_capacity(b);
    let mut log_target = Vec::with_capacity(b);
    let mut log_proposal = Vec::with_capacity(b);
    let mut log_weights = Vec::with_capacity(b);
    let mut dead = 0;
    let mut floored = 0;

    let mut push = |pi: Vec<usize>, lp: Option<f64>, lw: Option<f64>| {
        let lt = log_perm_weight_unchecked(w, &pi).ln();
        match lp {
            Some(lp) if lt > f64::NEG_INFINITY => {
                log_target.push(lt);
                log_proposal.push(lp);
                log_weights.push(lw.unwrap_or(lt - lp));
            }
            Some(lp) => {
                log_target.push(lt);
                log_proposal.push(lp);
                log_weights.push(f64::NEG_INFINITY);
            }
            None => {
                dead += 1;
                log_target.push(f64::NEG_INFINITY);
                log_proposal.push(f64::NEG_INFINITY);
                log_weights.push(f64::NEG_INFINITY);
            }
        }
        perms.push(Permutation::from_vec_unchecked(pi));
    };

    let mut probs = Vec::with_capacity(n);
    match scheme {
        SisScheme::Uniform => {
            let lp = -ln_factorial(n);
            push(identity, Some(lp), None);
            let mut pi: Vec<usize> = (0..n).collect();
            for _ in 1..b {
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    pi.swap(i, j);
                }
                push(pi.clone(), Some(lp), None);
            }
        }
        SisScheme::Monotone => {
            let mut prop = Tilted { w: w.entries(), n, order: monotone_row_order(w) };
            let (p0, lp0) = walk(&mut prop, n, None::<&mut rand_chacha::ChaCha8Rng>, Some(&identity), &mut probs);
            push(p0, lp0, None);
            for _ in 1..b {
                let (p, lp) = walk(&mut prop, n, Some(&mut rng), None, &mut probs);
                push(p, lp, None);
            }
        }
        SisScheme::Grid => {
            let mats: Vec<Vec<f64>> = (0..GRID_SIZE)
                .map(|k| {
                    let a = k as f64 / (GRID_SIZE - 1) as f64;
                    w.entries().iter().map(|&v| if v > 0.0 { v.powf(a) } else { 0.0 }).collect()
                })
                .collect();
            let order = monotone_row_order(w);
            let mut props: Vec<Tilted> = mats.iter().map(|m| Tilted { w: m, n, order: order.clone() }).collect();
            let ln_g = (GRID_SIZE as f64).ln();
            let mut mixture = |pi: &[usize], probs: &mut Vec<f64>| -> Option<f64> {
                let logs: Vec<f64> = props
                    .iter_mut()
                    .map(|p| {
                        walk(p, n, None::<&mut rand_chacha::ChaCha8Rng>, Some(pi), probs).1.unwrap_or(f64::NEG_INFINITY)
                    })
                    .collect();
                let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return None;
                }
                Some(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - ln_g)
            };
            let lp0 = mixture(&identity, &mut probs);
            push(identity.clone(), lp0, None);
            for d in 1..b {
                let k = d % GRID_SIZE;
                let mut single = Tilted { w: &mats[k], n, order: order.clone() };
                let (p, lp) = walk(&mut single, n, Some(&mut rng), None, &mut probs);
                let lp = lp.and_then(|_| mixture(&p, &mut probs));
                push(p, lp, None);
            }
        }
        SisScheme::KouMcCullagh => {
            let mut prop = KouMcCullagh::new(w);
            let (p0, lp0) = walk(&mut prop, n, None::<&mut rand_chacha::ChaCha8Rng>, Some(&identity), &mut probs);
            push(p0, lp0, None);
            for _ in 1..b {
                let (p, lp) = walk(&mut prop, n, Some(&mut rng), None, &mut probs);
                push(p, lp, None);
            }
            floored = prop.floored;
        }
        SisScheme::ExactLaw => {
            let law = enumerate_exact_pw(w)?;
            let lz = law.log_permanent;
            let cum: Vec<f64> = law
                .entries
                .iter()
                .scan(0.0, |acc, (_, p)| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            // P_W / P_IS equals the permanent for every draw
            let lp_of = |pi: &[usize]| log_perm_weight_unchecked(w, pi).ln() - lz;
            push(identity.clone(), Some(lp_of(&identity)), Some(lz));
            let last = *cum.last().unwrap();
            for _ in 1..b {
                let u: f64 = rng.random::<f64>() * last;
                let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                let pi = law.entries[k].0.as_slice().to_vec();
                let lp = lp_of(&pi);
                push(pi, Some(lp), Some(lz));
            }
        }
    }

    if log_weights.iter().all(|&l| l == f64::NEG_INFINITY) {
        return Err(Error::AllDrawsDead);
    }
    Ok(PermutationDraws {
        permutations: perms,
        log_target,
        log_proposal: Some(log_proposal),
        log_weights: Some(log_weights),
        sampler: SamplerKind::Sis(scheme),
        acceptance_rate: None,
        all_state_probs: None,
        dead_ends: dead,
        floored_steps: floored,
    })
}
