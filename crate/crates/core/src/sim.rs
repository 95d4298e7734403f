//! Seeded trajectory simulation with a change point.
//!
//! Pre-change steps execute the victim's action unchanged; from the change
//! time `ν` on, the adversary draws the executed action from `φ(·|s, a)`.
//! The initial state is drawn from the victim policy's stationary
//! distribution, so the change happens on a converged system.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::AttackPolicy;
use crate::mdp::{stationary_distribution, Policy, TabularMdp};
use crate::{Error, Result};

/// One observed transition: chosen action `a`, executed action `a_exec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajStep {
    pub s: usize,
    pub a: usize,
    pub a_exec: usize,
    pub s_next: usize,
}

/// A simulated observation stream with its change time and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub change_time: usize,
    pub seed: u64,
}

/// Draw an index from a (sub)probability row by inverse transform.
///
/// Deterministic given the RNG stream; the last positive entry absorbs any
/// rounding slack.
pub fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Simulate `T` steps of the attacked system, poisoning from step `nu` on.
pub fn simulate_trajectory(
    mdp: &TabularMdp,
    policy: &Policy,
    attack: &AttackPolicy,
    nu: usize,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if nu > horizon {
        return Err(Error::InvalidInput(format!(
            "change time {nu} exceeds horizon {horizon}"
        )));
    }
    let mu = stationary_distribution(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sample_categorical(&mut rng, &mu.weights);
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = sample_categorical(&mut rng, &policy.probs[s]);
        let a_exec = if t < nu {
            a
        } else {
            sample_categorical(&mut rng, &attack.probs[s][a])
        };
        let s_next = sample_categorical(&mut rng, &mdp.transition[s][a_exec]);
        steps.push(TrajStep { s, a, a_exec, s_next });
        s = s_next;
    }
    Ok(Trajectory {
        steps,
        change_time: nu,
        seed,
    })
}
