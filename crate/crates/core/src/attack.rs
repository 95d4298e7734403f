//! The adversary's side: the product-space attack MDP and deterministic
//! attack synthesis.
//!
//! For a fixed victim policy `π`, the pair process `(s_t, a_t)` is itself a
//! Markov chain the adversary can steer by choosing the executed action `ā`.
//! The adversary's MDP has state space `S×A`, action space `A`, kernel
//! `P^π(s',a'|s,a,ā) = π(a'|s') P(s'|s,ā)`, and a reward `r̄(s,a,ā)` of its
//! choosing (by default the negated victim reward).
//!
//! Two deterministic synthesizers live here:
//! * [`solve_constrained_attack`] — optimal attack whose support is limited
//!   to actions within distance `ε` of the victim's choice;
//! * [`solve_penalized_attack`] — optimal attack under a per-step KL penalty
//!   `β (1−γ̄) KL(P(s,ā), P(s,a))`.
//!
//! Both intersect the admissible set with actions whose next-state support
//! stays inside the nominal one; executing anything else makes the attack
//! detectable in finite time with probability one.

use serde::{Deserialize, Serialize};

use crate::info::kl_divergence;
use crate::mdp::{Policy, TabularMdp, PROB_TOL};
use crate::{Error, Result};

/// Conditional replacement distribution `φ(ā | s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPolicy {
    /// `probs[s][a][ā]`, each row a distribution over replacement actions.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl AttackPolicy {
    /// The do-nothing attack `φ(ā = a) = 1`.
    pub fn identity(n_states: usize, n_actions: usize) -> Self {
        let mut probs = vec![vec![vec![0.0; n_actions]; n_actions]; n_states];
        for srow in probs.iter_mut() {
            for (a, arow) in srow.iter_mut().enumerate() {
                arow[a] = 1.0;
            }
        }
        Self { probs }
    }

    /// Point-mass attack: at `(s, a)` execute `actions[s][a]`.
    pub fn deterministic(actions: &[Vec<usize>], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&ab| {
                        let mut dist = vec![0.0; n_actions];
                        dist[ab] = 1.0;
                        dist
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.first().map_or(0, |row| row.len())
    }

    pub fn validate(&self) -> Result<()> {
        for srow in &self.probs {
            for arow in srow {
                let sum: f64 = arow.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL || arow.iter().any(|&p| p < -PROB_TOL) {
                    return Err(Error::InvalidInput(format!(
                        "attack row sums to {sum} or has negative mass"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The replacement per pair for a deterministic attack.
    pub fn as_deterministic(&self) -> Option<Vec<Vec<usize>>> {
        self.probs
            .iter()
            .map(|srow| {
                srow.iter()
                    .map(|arow| {
                        let mut arg = None;
                        for (ab, &p) in arow.iter().enumerate() {
                            if p > 1.0 - PROB_TOL {
                                arg = Some(ab);
                            } else if p > PROB_TOL {
                                return None;
                            }
                        }
                        arg
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("attack policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let phi: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        phi.validate()?;
        Ok(phi)
    }
}

/// The adversary's problem data against a fixed victim.
#[derive(Debug, Clone)]
pub struct AttackProblem {
    pub victim: Policy,
    /// `adversary_reward[s][a][ā]`; defaults to `−r(s,a)` for every `ā`.
    pub adversary_reward: Vec<Vec<Vec<f64>>>,
    pub attack_discount: f64,
    /// Distance budget for the constrained synthesizer.
    pub epsilon: f64,
    /// Pairwise action distance `d[a][ā]`, symmetric with zero diagonal.
    pub distance: Vec<Vec<f64>>,
    /// KL penalty weight for the penalized synthesizer.
    pub penalty: f64,
}

impl AttackProblem {
    /// Zero-sum default: `r̄(s,a,ā) = −r(s,a)`, distance `|a − ā|`,
    /// unconstrained `ε`, zero penalty.
    pub fn new(mdp: &TabularMdp, victim: Policy, attack_discount: f64) -> Self {
        let a = mdp.n_actions;
        let adversary_reward = (0..mdp.n_states)
            .map(|s| {
                (0..a)
                    .map(|act| vec![-mdp.reward[s][act]; a])
                    .collect()
            })
            .collect();
        let distance = (0..a)
            .map(|x| (0..a).map(|y| (x as f64 - y as f64).abs()).collect())
            .collect();
        Self {
            victim,
            adversary_reward,
            attack_discount,
            epsilon: f64::INFINITY,
            distance,
            penalty: 0.0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_adversary_reward(mut self, reward: Vec<Vec<Vec<f64>>>) -> Self {
        self.adversary_reward = reward;
        self
    }

    pub fn with_distance(mut self, distance: Vec<Vec<f64>>) -> Self {
        self.distance = distance;
        self
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.victim.n_states() != mdp.n_states || self.victim.n_actions() != mdp.n_actions {
            return Err(Error::DimensionMismatch {
                expected: mdp.n_states,
                got: self.victim.n_states(),
            });
        }
        if !(0.0 < self.attack_discount && self.attack_discount < 1.0) {
            return Err(Error::InvalidInput(format!(
                "attack discount {} not in (0,1)",
                self.attack_discount
            )));
        }
        if self.epsilon < 0.0 || self.penalty < 0.0 {
            return Err(Error::InvalidInput(
                "epsilon and penalty must be nonnegative".into(),
            ));
        }
        let a = mdp.n_actions;
        if self.distance.len() != a {
            return Err(Error::DimensionMismatch {
                expected: a,
                got: self.distance.len(),
            });
        }
        for x in 0..a {
            if self.distance[x].len() != a {
                return Err(Error::DimensionMismatch {
                    expected: a,
                    got: self.distance[x].len(),
                });
            }
            if self.distance[x][x] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "distance diagonal d[{x}][{x}] must be zero"
                )));
            }
            for y in 0..a {
                let d = self.distance[x][y];
                if d < 0.0 || !d.is_finite() {
                    return Err(Error::InvalidInput(format!("invalid distance d[{x}][{y}]={d}")));
                }
                if (d - self.distance[y][x]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("distance matrix not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Whether `P(·|s,ab)` is absolutely continuous w.r.t. `P(·|s,a)`:
/// the replacement's next-state support is contained in the nominal one.
pub fn absolutely_continuous(mdp: &TabularMdp, s: usize, a: usize, ab: usize) -> bool {
    mdp.transition[s][ab]
        .iter()
        .zip(mdp.transition[s][a].iter())
        .all(|(&palt, &pnom)| palt == 0.0 || pnom > 0.0)
}

/// Mixture kernel of the attacked system:
/// `P^φ(s'|s,a) = Σ_ā φ(ā|s,a) P(s'|s,ā)`.
pub fn perturbed_kernel(mdp: &TabularMdp, attack: &AttackPolicy) -> Result<Vec<Vec<Vec<f64>>>> {
    if attack.n_states() != mdp.n_states || attack.n_actions() != mdp.n_actions {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: attack.n_states(),
        });
    }
    attack.validate()?;
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let mut out = vec![vec![vec![0.0; n]; na]; n];
    for s in 0..n {
        for a in 0..na {
            for ab in 0..na {
                let w = attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
                for (sp, &p) in mdp.transition[s][ab].iter().enumerate() {
                    out[s][a][sp] += w * p;
                }
            }
        }
    }
    Ok(out)
}

/// Materialize the adversary's MDP over pair states `(s, a) ↦ s·A + a`.
///
/// The kernel is the product `π(a'|s') P(s'|s,ā)`; the reward is the
/// adversary's `r̄[s][a][ā]`, which is already an expected per-step reward.
pub fn build_attack_mdp(mdp: &TabularMdp, problem: &AttackProblem) -> Result<TabularMdp> {
    mdp.validate()?;
    problem.validate(mdp)?;
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let pairs = n * na;
    let mut transition = vec![vec![vec![0.0; pairs]; na]; pairs];
    let mut reward = vec![vec![0.0; na]; pairs];
    let mut initial = vec![0.0; pairs];
    let mut bound: f64 = 0.0;
    for s in 0..n {
        for a in 0..na {
            let pair = s * na + a;
            initial[pair] = mdp.initial_dist[s] * problem.victim.probs[s][a];
            for ab in 0..na {
                reward[pair][ab] = problem.adversary_reward[s][a][ab];
                bound = bound.max(reward[pair][ab].abs());
                for sp in 0..n {
                    let p = mdp.transition[s][ab][sp];
                    if p == 0.0 {
                        continue;
                    }
                    for ap in 0..na {
                        let w = problem.victim.probs[sp][ap];
                        if w > 0.0 {
                            transition[pair][ab][sp * na + ap] = w * p;
                        }
                    }
                }
            }
        }
    }
    TabularMdp::new(transition, reward, bound, initial, problem.attack_discount)
}

/// Admissible replacements at `(s, a)`: within the distance budget and
/// absolutely continuous w.r.t. the nominal kernel.
fn feasible_replacements(
    mdp: &TabularMdp,
    problem: &AttackProblem,
    s: usize,
    a: usize,
    use_distance: bool,
) -> Vec<usize> {
    (0..mdp.n_actions)
        .filter(|&ab| {
            (!use_distance || problem.distance[a][ab] <= problem.epsilon)
                && absolutely_continuous(mdp, s, a, ab)
        })
        .collect()
}

/// Synthesis tolerance for the deterministic attack solvers.
const ATTACK_VI_TOL: f64 = 1e-8;

/// Value iteration on the pair process without materializing the product
/// kernel: `V̄(s,a) = max_ā r̄(s,a,ā) + γ̄ Σ_s' P(s'|s,ā) W(s')` with
/// `W(s') = Σ_a' π(a'|s') V̄(s',a')`.
fn product_value_iteration(
    mdp: &TabularMdp,
    problem: &AttackProblem,
    stage_reward: &dyn Fn(usize, usize, usize) -> f64,
    allowed: &[Vec<Vec<usize>>],
) -> Result<Vec<Vec<usize>>> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let gamma = problem.attack_discount;
    let pi = &problem.victim.probs;

    for s in 0..n {
        for a in 0..na {
            if allowed[s][a].is_empty() {
                return Err(Error::Infeasible(format!(
                    "empty feasible replacement set at state {s}, action {a}"
                )));
            }
        }
    }

    let mut value = vec![vec![0.0f64; na]; n];
    let mut q_next = vec![vec![0.0f64; na]; n];
    let max_iters = 5_000_000usize;
    let mut converged = false;
    for _ in 0..max_iters {
        // W(s) = sum_a pi(a|s) V(s,a)
        let w: Vec<f64> = (0..n)
            .map(|s| (0..na).map(|a| pi[s][a] * value[s][a]).sum())
            .collect();
        // QW(s, ab) = sum_s' P(s'|s,ab) W(s')
        let qw: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                (0..na)
                    .map(|ab| {
                        mdp.transition[s][ab]
                            .iter()
                            .zip(w.iter())
                            .map(|(p, wv)| p * wv)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut delta: f64 = 0.0;
        for s in 0..n {
            for a in 0..na {
                let mut best = f64::NEG_INFINITY;
                for &ab in &allowed[s][a] {
                    let q = stage_reward(s, a, ab) + gamma * qw[s][ab];
                    if q > best {
                        best = q;
                    }
                }
                q_next[s][a] = best;
                delta = delta.max((q_next[s][a] - value[s][a]).abs());
            }
        }
        std::mem::swap(&mut value, &mut q_next);
        if delta <= ATTACK_VI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "attack value iteration failed to converge".into(),
        ));
    }

    // Greedy replacement extraction, lowest-index ties.
    let w: Vec<f64> = (0..n)
        .map(|s| (0..na).map(|a| pi[s][a] * value[s][a]).sum())
        .collect();
    let mut actions = vec![vec![0usize; na]; n];
    for s in 0..n {
        for a in 0..na {
            let mut best = f64::NEG_INFINITY;
            let mut best_ab = allowed[s][a][0];
            for &ab in &allowed[s][a] {
                let exp: f64 = mdp.transition[s][ab]
                    .iter()
                    .zip(w.iter())
                    .map(|(p, wv)| p * wv)
                    .sum();
                let q = stage_reward(s, a, ab) + gamma * exp;
                if q > best {
                    best = q;
                    best_ab = ab;
                }
            }
            actions[s][a] = best_ab;
        }
    }
    Ok(actions)
}

/// Optimal deterministic attack with support restricted to
/// `{ā : d(a, ā) ≤ ε}` intersected with the absolutely continuous actions.
pub fn solve_constrained_attack(mdp: &TabularMdp, problem: &AttackProblem) -> Result<AttackPolicy> {
    mdp.validate()?;
    problem.validate(mdp)?;
    let allowed: Vec<Vec<Vec<usize>>> = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| feasible_replacements(mdp, problem, s, a, true))
                .collect()
        })
        .collect();
    let reward = |s: usize, a: usize, ab: usize| problem.adversary_reward[s][a][ab];
    let actions = product_value_iteration(mdp, problem, &reward, &allowed)?;
    Ok(AttackPolicy::deterministic(&actions, mdp.n_actions))
}

/// Optimal deterministic attack under the augmented reward
/// `r̄(s,a,ā) − β (1−γ̄) KL(P(s,ā), P(s,a))`, over absolutely continuous
/// replacements (anything else carries an infinite penalty).
pub fn solve_penalized_attack(mdp: &TabularMdp, problem: &AttackProblem) -> Result<AttackPolicy> {
    mdp.validate()?;
    problem.validate(mdp)?;
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let allowed: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|s| {
            (0..na)
                .map(|a| feasible_replacements(mdp, problem, s, a, false))
                .collect()
        })
        .collect();
    // Precompute expected KL penalties on the admissible triples.
    let mut penalty = vec![vec![vec![0.0f64; na]; na]; n];
    let scale = problem.penalty * (1.0 - problem.attack_discount);
    for s in 0..n {
        for a in 0..na {
            for &ab in &allowed[s][a] {
                penalty[s][a][ab] =
                    scale * kl_divergence(&mdp.transition[s][ab], &mdp.transition[s][a]);
            }
        }
    }
    let reward =
        |s: usize, a: usize, ab: usize| problem.adversary_reward[s][a][ab] - penalty[s][a][ab];
    let actions = product_value_iteration(mdp, problem, &reward, &allowed)?;
    Ok(AttackPolicy::deterministic(&actions, mdp.n_actions))
}

/// Exact pair-space value of an arbitrary attack policy:
/// `V̄(s,a) = Σ_ā φ(ā|s,a) [ r̄(s,a,ā) + γ̄ Σ_s' P(s'|s,ā) Σ_a' π(a'|s') V̄(s',a') ]`.
///
/// Returned flat over pairs `(s,a) ↦ s·A + a`.
pub fn attack_policy_value(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    adversary_reward: &[Vec<Vec<f64>>],
    gamma: f64,
) -> Result<Vec<f64>> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let pairs = n * na;
    let mut kernel = vec![vec![0.0f64; pairs]; pairs];
    let mut stage = vec![0.0f64; pairs];
    for s in 0..n {
        for a in 0..na {
            let row = s * na + a;
            for ab in 0..na {
                let w = attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
                stage[row] += w * adversary_reward[s][a][ab];
                for sp in 0..n {
                    let p = mdp.transition[s][ab][sp];
                    if p == 0.0 {
                        continue;
                    }
                    for ap in 0..na {
                        let pv = victim.probs[sp][ap];
                        if pv > 0.0 {
                            kernel[row][sp * na + ap] += w * p * pv;
                        }
                    }
                }
            }
        }
    }
    crate::mdp::evaluate_kernel(&kernel, &stage, gamma)
}

/// Victim-side value of the attacked system with a per-triple stage reward
/// (e.g. the realized reward when the executed action differs from the
/// chosen one). Returns the per-state value under `γ`.
pub fn attacked_policy_value(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    stage_reward: &[Vec<Vec<f64>>],
    gamma: f64,
) -> Result<Vec<f64>> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let mut kernel = vec![vec![0.0f64; n]; n];
    let mut stage = vec![0.0f64; n];
    for s in 0..n {
        for a in 0..na {
            let pa = victim.probs[s][a];
            if pa == 0.0 {
                continue;
            }
            for ab in 0..na {
                let w = pa * attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
                stage[s] += w * stage_reward[s][a][ab];
                for (sp, &p) in mdp.transition[s][ab].iter().enumerate() {
                    kernel[s][sp] += w * p;
                }
            }
        }
    }
    crate::mdp::evaluate_kernel(&kernel, &stage, gamma)
}

/// Parse a pairwise action-distance matrix from CSV text (one row per line).
pub fn distance_matrix_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty distance matrix".into()));
    }
    let n = rows.len();
    for row in &rows {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{policy_evaluation, tv_distance};
    use crate::testing::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn perturbed_kernel_identity_is_exact() {
        let mut rng = rng_from(1);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let phi = AttackPolicy::identity(4, 3);
        let pphi = perturbed_kernel(&mdp, &phi).unwrap();
        assert_eq!(pphi, mdp.transition);
    }

    #[test]
    fn perturbed_kernel_rows_are_stochastic() {
        let mut rng = rng_from(2);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 3, 3, 0.9);
            let phi = random_attack_policy(&mut rng, 3, 3);
            let pphi = perturbed_kernel(&mdp, &phi).unwrap();
            for s in 0..3 {
                for a in 0..3 {
                    let sum: f64 = pphi[s][a].iter().sum();
                    assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbed_kernel_matches_sampled_frequencies() {
        use crate::sim::sample_categorical;
        let mut rng = rng_from(3);
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        let phi = random_attack_policy(&mut rng, 3, 2);
        let pphi = perturbed_kernel(&mdp, &phi).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let mut counts = vec![0.0f64; 3];
                let n = 100_000;
                for _ in 0..n {
                    let ab = sample_categorical(&mut rng, &phi.probs[s][a]);
                    let sp = sample_categorical(&mut rng, &mdp.transition[s][ab]);
                    counts[sp] += 1.0;
                }
                let emp: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
                assert!(tv_distance(&emp, &pphi[s][a]).unwrap() < 1e-2);
            }
        }
    }

    #[test]
    fn attack_mdp_rows_sum_to_one() {
        let mut rng = rng_from(4);
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        let pi = random_policy(&mut rng, 3, 2);
        let problem = AttackProblem::new(&mdp, pi, 0.9);
        let attack_mdp = build_attack_mdp(&mdp, &problem).unwrap();
        assert_eq!(attack_mdp.n_states, 6);
        assert_eq!(attack_mdp.n_actions, 2);
        attack_mdp.validate().unwrap();
    }

    #[test]
    fn attack_mdp_deterministic_victim_concentrates_mass() {
        let mut rng = rng_from(5);
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        let acts = vec![1usize, 0, 1];
        let pi = Policy::deterministic(&acts, 2);
        let problem = AttackProblem::new(&mdp, pi, 0.9);
        let attack_mdp = build_attack_mdp(&mdp, &problem).unwrap();
        for pair in 0..6 {
            for ab in 0..2 {
                for sp in 0..3 {
                    for ap in 0..2 {
                        let p = attack_mdp.transition[pair][ab][sp * 2 + ap];
                        if ap != acts[sp] {
                            assert_eq!(p, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn identity_attack_value_matches_negated_policy_value() {
        let mut rng = rng_from(6);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let gamma = 0.9;
        let problem = AttackProblem::new(&mdp, pi.clone(), gamma);
        let attack_mdp = build_attack_mdp(&mdp, &problem).unwrap();

        // Evaluate the identity attack on the product MDP.
        let phi = AttackPolicy::identity(4, 3);
        let vbar = attack_policy_value(&mdp, &pi, &phi, &problem.adversary_reward, gamma).unwrap();
        let v = policy_evaluation(&mdp, &pi, gamma).unwrap();
        for s in 0..4 {
            let mixed: f64 = (0..3).map(|a| pi.probs[s][a] * vbar[s * 3 + a]).sum();
            assert_abs_diff_eq!(mixed, -v.values[s], epsilon = 1e-8);
        }
        // The materialized product MDP agrees with the structured evaluation.
        let id_pairs: Vec<usize> = (0..12).map(|pair| pair % 3).collect();
        let pol = Policy::deterministic(&id_pairs, 3);
        let v_prod = policy_evaluation(&attack_mdp, &pol, gamma).unwrap();
        for pair in 0..12 {
            assert_abs_diff_eq!(v_prod.values[pair], vbar[pair], epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_budget_forces_identity_attack() {
        let mut rng = rng_from(7);
        let mdp = random_mdp(&mut rng, 3, 3, 0.9);
        let pi = random_policy(&mut rng, 3, 3);
        let problem = AttackProblem::new(&mdp, pi.clone(), 0.9).with_epsilon(0.0);
        let phi = solve_constrained_attack(&mdp, &problem).unwrap();
        assert_eq!(phi, AttackPolicy::identity(3, 3));
        let vbar = attack_policy_value(&mdp, &pi, &phi, &problem.adversary_reward, 0.9).unwrap();
        let v = policy_evaluation(&mdp, &pi, 0.9).unwrap();
        for s in 0..3 {
            let mixed: f64 = (0..3).map(|a| pi.probs[s][a] * vbar[s * 3 + a]).sum();
            assert_abs_diff_eq!(mixed, -v.values[s], epsilon = 1e-7);
        }
    }

    #[test]
    fn unconstrained_attack_beats_deterministic_enumeration() {
        // 3-state, 3-action instance: enumerate all on-support deterministic
        // attacks by brute force and compare pair values.
        let mut rng = rng_from(8);
        let mdp = random_mdp(&mut rng, 3, 3, 0.85);
        let pi = random_deterministic_policy(&mut rng, 3, 3);
        let problem = AttackProblem::new(&mdp, pi.clone(), 0.85);
        let phi_star = solve_constrained_attack(&mdp, &problem).unwrap();
        let v_star = attack_policy_value(&mdp, &pi, &phi_star, &problem.adversary_reward, 0.85)
            .unwrap();

        // Enumerate deterministic attacks on the victim's on-support pairs.
        let acts = pi.as_deterministic().unwrap();
        let mut best = f64::NEG_INFINITY;
        for c0 in 0..3 {
            for c1 in 0..3 {
                for c2 in 0..3 {
                    let mut table = vec![vec![0usize; 3]; 3];
                    for s in 0..3 {
                        for a in 0..3 {
                            table[s][a] = a;
                        }
                    }
                    table[0][acts[0]] = c0;
                    table[1][acts[1]] = c1;
                    table[2][acts[2]] = c2;
                    let phi = AttackPolicy::deterministic(&table, 3);
                    let v =
                        attack_policy_value(&mdp, &pi, &phi, &problem.adversary_reward, 0.85)
                            .unwrap();
                    let val: f64 = (0..3).map(|s| v[s * 3 + acts[s]]).sum::<f64>() / 3.0;
                    best = best.max(val);
                }
            }
        }
        let val_star: f64 = (0..3).map(|s| v_star[s * 3 + acts[s]]).sum::<f64>() / 3.0;
        assert!(val_star >= best - 1e-6, "VI {val_star} below oracle {best}");
    }

    #[test]
    fn attack_value_monotone_in_epsilon() {
        let mut rng = rng_from(9);
        let mdp = random_mdp(&mut rng, 4, 4, 0.9);
        let pi = random_policy(&mut rng, 4, 4);
        let base = AttackProblem::new(&mdp, pi.clone(), 0.9);
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.0, 1.0, 2.0, 3.0, 10.0] {
            let problem = base.clone().with_epsilon(eps);
            let phi = solve_constrained_attack(&mdp, &problem).unwrap();
            let v = attack_policy_value(&mdp, &pi, &phi, &problem.adversary_reward, 0.9).unwrap();
            let val: f64 = v.iter().sum::<f64>() / v.len() as f64;
            assert!(val >= prev - 1e-9, "value dropped from {prev} to {val} at eps={eps}");
            prev = val;
        }
    }

    #[test]
    fn returned_attack_dominates_identity() {
        let mut rng = rng_from(10);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 3, 3, 0.9);
            let pi = random_policy(&mut rng, 3, 3);
            let eps = rng.gen_range(0.5..3.0);
            let problem = AttackProblem::new(&mdp, pi.clone(), 0.9).with_epsilon(eps);
            let phi = solve_constrained_attack(&mdp, &problem).unwrap();
            let v_phi =
                attack_policy_value(&mdp, &pi, &phi, &problem.adversary_reward, 0.9).unwrap();
            let v_id = attack_policy_value(
                &mdp,
                &pi,
                &AttackPolicy::identity(3, 3),
                &problem.adversary_reward,
                0.9,
            )
            .unwrap();
            for pair in 0..9 {
                assert!(v_phi[pair] >= v_id[pair] - 1e-6);
            }
        }
    }

    #[test]
    fn huge_penalty_recovers_identity_attack() {
        let mut rng = rng_from(11);
        let mdp = random_mdp(&mut rng, 3, 3, 0.9);
        let pi = random_policy(&mut rng, 3, 3);
        let problem = AttackProblem::new(&mdp, pi, 0.9).with_penalty(1e9);
        let phi = solve_penalized_attack(&mdp, &problem).unwrap();
        assert_eq!(phi, AttackPolicy::identity(3, 3));
    }

    #[test]
    fn zero_penalty_matches_unconstrained_attack() {
        let mut rng = rng_from(12);
        for _ in 0..5 {
            let mdp = random_mdp(&mut rng, 3, 3, 0.9);
            let pi = random_policy(&mut rng, 3, 3);
            let problem = AttackProblem::new(&mdp, pi.clone(), 0.9);
            let phi_pen = solve_penalized_attack(&mdp, &problem.clone().with_penalty(0.0)).unwrap();
            let phi_con =
                solve_constrained_attack(&mdp, &problem.clone().with_epsilon(f64::INFINITY))
                    .unwrap();
            let vp = attack_policy_value(&mdp, &pi, &phi_pen, &problem.adversary_reward, 0.9)
                .unwrap();
            let vc = attack_policy_value(&mdp, &pi, &phi_con, &problem.adversary_reward, 0.9)
                .unwrap();
            for pair in 0..9 {
                assert_abs_diff_eq!(vp[pair], vc[pair], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn regret_bound_dominates_measured_value_gap() {
        let mut rng = rng_from(13);
        for _ in 0..100 {
            let mdp = random_mdp(&mut rng, 4, 3, 0.9);
            let pi = random_policy(&mut rng, 4, 3);
            let phi = random_attack_policy(&mut rng, 4, 3);
            let bound = crate::mdp::regret_bound(&mdp, 0.9);
            let v = policy_evaluation(&mdp, &pi, 0.9).unwrap().values;
            // Attacked value: victim reward with the perturbed kernel.
            let pphi = perturbed_kernel(&mdp, &phi).unwrap();
            let attacked = TabularMdp::new(
                pphi,
                mdp.reward.clone(),
                mdp.reward_bound,
                mdp.initial_dist.clone(),
                mdp.discount,
            )
            .unwrap();
            let v_att = policy_evaluation(&attacked, &pi, 0.9).unwrap().values;
            let gap = v
                .iter()
                .zip(v_att.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(gap <= bound + 1e-9, "gap {gap} above bound {bound}");
        }
    }

    #[test]
    fn distance_csv_parses() {
        let d = distance_matrix_from_csv("0,1,2\n1,0,1\n2,1,0\n").unwrap();
        assert_eq!(d[2][0], 2.0);
        assert!(distance_matrix_from_csv("0,1\n1").is_err());
    }
}
