//! Seeded random-instance generators shared by tests and property checks.
//!
//! Generated kernels are entrywise positive, so every policy induces an
//! irreducible aperiodic chain and every action pair is mutually absolutely
//! continuous.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::AttackPolicy;
use crate::mdp::{Policy, TabularMdp};

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn positive_simplex_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Exponential weights normalized; bounded away from zero for ergodicity.
    let mut row: Vec<f64> = (0..n)
        .map(|_| 0.05 + -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    row
}

/// Random dense MDP with rewards in [-1, 1].
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, discount: f64) -> TabularMdp {
    let transition: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| positive_simplex_row(rng, n_states))
                .collect()
        })
        .collect();
    let reward: Vec<Vec<f64>> = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let initial = positive_simplex_row(rng, n_states);
    TabularMdp::new(transition, reward, 1.0, initial, discount).expect("generated MDP is valid")
}

/// Random fully mixed policy.
pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> Policy {
    let probs = (0..n_states)
        .map(|_| positive_simplex_row(rng, n_actions))
        .collect();
    Policy::new(probs).expect("generated policy is valid")
}

/// Random deterministic policy.
pub fn random_deterministic_policy<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
) -> Policy {
    let actions: Vec<usize> = (0..n_states).map(|_| rng.gen_range(0..n_actions)).collect();
    Policy::deterministic(&actions, n_actions)
}

/// Random fully mixed attack policy.
pub fn random_attack_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> AttackPolicy {
    let probs = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| positive_simplex_row(rng, n_actions))
                .collect()
        })
        .collect();
    AttackPolicy { probs }
}

/// Random deterministic attack policy.
pub fn random_deterministic_attack<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
) -> AttackPolicy {
    let mut probs = vec![vec![vec![0.0; n_actions]; n_actions]; n_states];
    for srow in probs.iter_mut() {
        for arow in srow.iter_mut() {
            arow[rng.gen_range(0..n_actions)] = 1.0;
        }
    }
    AttackPolicy { probs }
}
