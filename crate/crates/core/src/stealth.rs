//! Occupancy-measure programs for optimal randomized stealthy attacks.
//!
//! Over the joint occupancy `ξ(s,a,ā) = μ_γ(s) π(a|s) φ(ā|s,a)`, both the
//! damage-maximization problem under a KL budget and the detectability
//! minimization under a damage floor are linear:
//!
//! * [`optimal_stealthy_attack`] — maximize the adversary's discounted value
//!   subject to `Ī_γ ≤ ε` (flow constraints in discounted form);
//! * [`min_info_rate`] — minimize `Ī` (or `Ī_γ`) subject to the victim's
//!   ergodic (or discounted) reward being at most `ρ`.
//!
//! Support constraints are enforced structurally: variables exist only for
//! triples with `π(a|s) > 0` and `P(s,ā) ≪ P(s,a)`, so infinite KL
//! coefficients never reach the solver. The extracted policy is
//! `φ(ā|s,a) = ξ(s,a,ā) / Σ_ā ξ(s,a,ā)`, stationary, Markov and randomized.

use serde::{Deserialize, Serialize};

use crate::attack::{absolutely_continuous, AttackPolicy};
use crate::info::kl_divergence;
use crate::lp::{solve_lp, LpStatus};
use crate::mdp::{Distribution, Policy, TabularMdp};
use crate::{Error, Result};

/// Whether an occupancy solves the discounted or the stationary flow system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OccupancyKind {
    Discounted { gamma: f64 },
    Stationary,
}

/// Joint replacement occupancy `ξ[s][a][ā]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub xi: Vec<Vec<Vec<f64>>>,
    pub kind: OccupancyKind,
}

impl OccupancyMeasure {
    pub fn total_mass(&self) -> f64 {
        self.xi
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|a| a.iter())
            .sum()
    }

    /// Pair marginal `Σ_ā ξ(s,a,ā)`.
    pub fn pair_marginal(&self, s: usize, a: usize) -> f64 {
        self.xi[s][a].iter().sum()
    }

    /// Sup-norm residual of the flow-conservation system this occupancy
    /// claims to satisfy (`α` weighted by `π` as the discounted source).
    pub fn flow_residual(&self, mdp: &TabularMdp, victim: &Policy, alpha: &Distribution) -> f64 {
        let (n, na) = (mdp.n_states, mdp.n_actions);
        let mut worst = 0.0f64;
        for s in 0..n {
            for a in 0..na {
                if victim.probs[s][a] == 0.0 {
                    continue;
                }
                let lhs = self.pair_marginal(s, a);
                let mut inflow = 0.0;
                for sp in 0..n {
                    for ap in 0..na {
                        for ab in 0..na {
                            let x = self.xi[sp][ap][ab];
                            if x == 0.0 {
                                continue;
                            }
                            inflow += victim.probs[s][a] * mdp.transition[sp][ab][s] * x;
                        }
                    }
                }
                let rhs = match self.kind {
                    OccupancyKind::Discounted { gamma } => {
                        (1.0 - gamma) * alpha.weights[s] * victim.probs[s][a] + gamma * inflow
                    }
                    OccupancyKind::Stationary => inflow,
                };
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("occupancy serializes")
    }
}

/// Extract the stationary randomized policy from an occupancy. Rows without
/// mass default to the identity replacement.
pub fn policy_from_occupancy(occupancy: &OccupancyMeasure) -> AttackPolicy {
    let probs = occupancy
        .xi
        .iter()
        .enumerate()
        .map(|(_, srow)| {
            srow.iter()
                .enumerate()
                .map(|(a, arow)| {
                    let mass: f64 = arow.iter().sum();
                    if mass > 1e-12 {
                        arow.iter().map(|&x| (x / mass).max(0.0)).collect()
                    } else {
                        let mut row = vec![0.0; arow.len()];
                        row[a] = 1.0;
                        row
                    }
                })
                .collect()
        })
        .collect();
    let mut phi = AttackPolicy { probs };
    // Renormalize away solver roundoff.
    for srow in phi.probs.iter_mut() {
        for arow in srow.iter_mut() {
            let sum: f64 = arow.iter().sum();
            for p in arow.iter_mut() {
                *p /= sum;
            }
        }
    }
    phi
}

struct TripleIndex {
    triples: Vec<(usize, usize, usize)>,
    kl: Vec<f64>,
}

fn admissible_triples(mdp: &TabularMdp, victim: &Policy) -> TripleIndex {
    let mut triples = Vec::new();
    let mut kl = Vec::new();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            if victim.probs[s][a] == 0.0 {
                continue;
            }
            for ab in 0..mdp.n_actions {
                if absolutely_continuous(mdp, s, a, ab) {
                    triples.push((s, a, ab));
                    kl.push(kl_divergence(
                        &mdp.transition[s][ab],
                        &mdp.transition[s][a],
                    ));
                }
            }
        }
    }
    TripleIndex { triples, kl }
}

/// Flow rows over the victim's support pairs. `gamma = None` builds the
/// stationary balance (no source); otherwise the discounted one.
fn flow_rows(
    mdp: &TabularMdp,
    victim: &Policy,
    index: &TripleIndex,
    gamma: Option<f64>,
    alpha: &Distribution,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let support: Vec<(usize, usize)> = victim.support();
    let n_vars = index.triples.len();
    let mut rows = Vec::with_capacity(support.len());
    let mut rhs = Vec::with_capacity(support.len());
    for &(s, a) in &support {
        let mut row = vec![0.0; n_vars];
        for (j, &(sp, ap, ab)) in index.triples.iter().enumerate() {
            if sp == s && ap == a {
                row[j] += 1.0;
            }
            let inflow = victim.probs[s][a] * mdp.transition[sp][ab][s];
            match gamma {
                Some(g) => row[j] -= g * inflow,
                None => row[j] -= inflow,
            }
        }
        rows.push(row);
        match gamma {
            Some(g) => rhs.push((1.0 - g) * alpha.weights[s] * victim.probs[s][a]),
            None => rhs.push(0.0),
        }
    }
    (rows, rhs)
}

fn occupancy_from_vars(
    mdp: &TabularMdp,
    index: &TripleIndex,
    vars: &[f64],
    kind: OccupancyKind,
) -> OccupancyMeasure {
    let mut xi = vec![vec![vec![0.0; mdp.n_actions]; mdp.n_actions]; mdp.n_states];
    for (j, &(s, a, ab)) in index.triples.iter().enumerate() {
        xi[s][a][ab] = vars[j].max(0.0);
    }
    OccupancyMeasure { xi, kind }
}

/// Optimal randomized stealthy attack: maximize the adversary's discounted
/// value subject to the discounted information-rate budget `ε`.
///
/// Returns the extracted policy, the optimal occupancy, and the adversary's
/// discounted value `(1/(1−γ)) Σ ξ r̄`.
pub fn optimal_stealthy_attack(
    mdp: &TabularMdp,
    victim: &Policy,
    epsilon: f64,
    gamma: f64,
    alpha: &Distribution,
    adversary_reward: &[Vec<Vec<f64>>],
) -> Result<(AttackPolicy, OccupancyMeasure, f64)> {
    mdp.validate()?;
    if epsilon < 0.0 {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} < 0")));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("discount {gamma} not in (0,1)")));
    }
    if alpha.dim() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: alpha.dim(),
        });
    }
    let index = admissible_triples(mdp, victim);
    // Maximize sum xi rbar == minimize sum xi (-rbar).
    let objective: Vec<f64> = index
        .triples
        .iter()
        .map(|&(s, a, ab)| -adversary_reward[s][a][ab])
        .collect();
    let (eq_rows, eq_rhs) = flow_rows(mdp, victim, &index, Some(gamma), alpha);
    let mut ub_rows = Vec::new();
    let mut ub_rhs = Vec::new();
    if epsilon.is_finite() {
        ub_rows.push(index.kl.clone());
        ub_rhs.push(epsilon);
    }
    let sol = solve_lp(&objective, (&eq_rows, &eq_rhs), (&ub_rows, &ub_rhs), true)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailed {
            status: sol.status,
            context: format!("stealthy attack LP with epsilon={epsilon}"),
        });
    }
    let occupancy = occupancy_from_vars(
        mdp,
        &index,
        &sol.variables,
        OccupancyKind::Discounted { gamma },
    );
    let value = -sol.objective / (1.0 - gamma);
    Ok((policy_from_occupancy(&occupancy), occupancy, value))
}

/// Objective mode for [`min_info_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinRateMode {
    /// Stationary flow; victim's ergodic reward constrained.
    Ergodic,
    /// Discounted flow from a uniform source; discounted reward constrained.
    Discounted { gamma: f64 },
}

/// Least-detectable attack among those driving the victim's reward to at
/// most `ρ`. Returns the policy and the achieved objective (`Ī` in ergodic
/// mode, `Ī_γ` in discounted mode).
pub fn min_info_rate(
    mdp: &TabularMdp,
    victim: &Policy,
    rho: f64,
    mode: MinRateMode,
) -> Result<(AttackPolicy, f64)> {
    mdp.validate()?;
    let index = admissible_triples(mdp, victim);
    let n_vars = index.triples.len();
    let objective = index.kl.clone();
    let alpha = Distribution::uniform(mdp.n_states);

    let (mut eq_rows, mut eq_rhs) = match mode {
        MinRateMode::Ergodic => flow_rows(mdp, victim, &index, None, &alpha),
        MinRateMode::Discounted { gamma } => {
            if !(0.0 < gamma && gamma < 1.0) {
                return Err(Error::InvalidInput(format!("discount {gamma} not in (0,1)")));
            }
            flow_rows(mdp, victim, &index, Some(gamma), &alpha)
        }
    };
    if matches!(mode, MinRateMode::Ergodic) {
        // Stationary balance alone is scale-invariant; pin the total mass.
        eq_rows.push(vec![1.0; n_vars]);
        eq_rhs.push(1.0);
    }
    // Victim reward at most rho.
    let reward_row: Vec<f64> = index
        .triples
        .iter()
        .map(|&(s, a, _)| mdp.reward[s][a])
        .collect();
    let ub_rows = vec![reward_row];
    let ub_rhs = vec![rho];

    let sol = solve_lp(&objective, (&eq_rows, &eq_rhs), (&ub_rows, &ub_rhs), true)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailed {
            status: sol.status,
            context: format!("min-rate LP with rho={rho}"),
        });
    }
    let kind = match mode {
        MinRateMode::Ergodic => OccupancyKind::Stationary,
        MinRateMode::Discounted { gamma } => OccupancyKind::Discounted { gamma },
    };
    let occupancy = occupancy_from_vars(mdp, &index, &sol.variables, kind);
    Ok((policy_from_occupancy(&occupancy), sol.objective.max(0.0)))
}
