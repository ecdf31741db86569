use rand::Rng;

use super::{McmcConfig, PairAssignmentProbs, PermutationDraws, SamplerKind};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sample::Permutation;
use crate::weights::{log_perm_weight_unchecked, WeightMatrix};

/// One Metropolis–Hastings step with a uniformly chosen transposition.
/// Returns whether the swap was accepted; `pi` is updated in place.
pub fn mh_swap_step<R: Rng + ?Sized>(w: &WeightMatrix, pi: &mut Permutation, rng: &mut R) -> bool {
    mh_step_raw(w, pi, rng, false).is_some()
}

/// Returns the swapped pair on acceptance. With `lazy`, the two indices are
/// drawn independently and `i = j` leaves the state unchanged, which makes
/// the chain aperiodic when every swap would be accepted.
#[inline]
fn mh_step_raw<R: Rng + ?Sized>(
    w: &WeightMatrix,
    pi: &mut Permutation,
    rng: &mut R,
    lazy: bool,
) -> Option<(usize, usize)> {
    let n = w.n();
    let a = rng.random_range(0..n);
    let b = if lazy {
        let b = rng.random_range(0..n);
        if a == b {
            return None;
        }
        b
    } else {
        let b = rng.random_range(0..n - 1);
        if b >= a {
            b + 1
        } else {
            b
        }
    };
    let (i, j) = if a < b { (a, b) } else { (b, a) };
    let (pi_i, pi_j) = (pi.get(i), pi.get(j));
    let num = w.get(i, pi_j) * w.get(j, pi_i);
    let den = w.get(i, pi_i) * w.get(j, pi_j);
    let u: f64 = rng.random();
    if num >= den || u * den < num {
        pi.swap(i, j);
        Some((i, j))
    } else {
        None
    }
}

/// Runs the swap chain from the identity and keeps every `M`-th state after
/// `M0` burn-in steps; draw 0 is the identity.
pub fn sample_permutations_mcmc(w: &WeightMatrix, cfg: &McmcConfig) -> Result<PermutationDraws> {
    cfg.validate()?;
    let n = w.n();
    if let Some(row) = (0..n).find(|&i| w.get(i, i) <= 0.0) {
        return Err(Error::InfeasibleSample { row });
    }
    let m = cfg.steps_between(n);
    let mut rng = stream_rng(cfg.seed, Stream::Mcmc);
    let mut pi = Permutation::identity(n);

    let accumulate = cfg.accumulate_all_states && cfg.b > 1;
    let mut counts = if accumulate { vec![0.0f64; n * n] } else { Vec::new() };
    let mut since = vec![0u64; n];
    let mut step: u64 = 0;
    let mut accepted: u64 = 0;

    let mut run = |steps: usize, pi: &mut Permutation, rng: &mut _| {
        for _ in 0..steps {
            step += 1;
            if let Some((i, j)) = mh_step_raw(w, pi, rng, cfg.lazy) {
                accepted += 1;
                if accumulate {
                    // states 0..step-1 held the old values at rows i and j
                    for (r, old) in [(i, pi.get(j)), (j, pi.get(i))] {
                        counts[r * n + old] += (step - since[r]) as f64;
                        since[r] = step;
                    }
                }
            }
        }
    };

    let mut permutations = Vec::with_capacity(cfg.b);
    let mut log_target = Vec::with_capacity(cfg.b);
    permutations.push(pi.clone());
    log_target.push(log_perm_weight_unchecked(w, pi.as_slice()).ln());
    if cfg.b > 1 {
        run(cfg.m0, &mut pi, &mut rng);
        for _ in 1..cfg.b {
            run(m, &mut pi, &mut rng);
            permutations.push(pi.clone());
            log_target.push(log_perm_weight_unchecked(w, pi.as_slice()).ln());
        }
    }
    let total_steps = step;
    let all_state_probs = if accumulate {
        let states = (total_steps + 1) as f64;
        for r in 0..n {
            counts[r * n + pi.get(r)] += (total_steps + 1 - since[r]) as f64;
        }
        counts.iter_mut().for_each(|c| *c /= states);
        Some(PairAssignmentProbs::from_raw(n, counts))
    } else {
        None
    };
    Ok(PermutationDraws {
        permutations,
        log_target,
        log_proposal: None,
        log_weights: None,
        sampler: SamplerKind::Mcmc,
        acceptance_rate: (total_steps > 0).then(|| accepted as f64 / total_steps as f64),
        all_state_probs,
        dead_ends: 0,
        floored_steps: 0,
    })
}
