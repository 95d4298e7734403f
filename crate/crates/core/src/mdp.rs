//! Finite tabular MDPs and exact planning primitives.
//!
//! A tabular MDP is the tuple `(S, A, P, r, p0)` with discount `γ`: transition
//! tensor `P[s][a][s']`, expected immediate reward `r[s][a]` bounded by `R*`,
//! and an initial state distribution. Everything in this module is exact at
//! desk scale: policy evaluation and distribution computations go through
//! direct linear solves rather than fixed-point iteration, and irreducibility
//! is checked structurally before any stationary quantity is produced.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-sum / distribution tolerance used by validators.
pub const PROB_TOL: f64 = 1e-9;

/// A finite controlled Markov chain with bounded rewards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']` = probability of moving to `s'` from `s` under `a`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]` = expected immediate reward, `|reward| <= reward_bound`.
    pub reward: Vec<Vec<f64>>,
    pub reward_bound: f64,
    pub initial_dist: Vec<f64>,
    pub discount: f64,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        reward_bound: f64,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = if n_states > 0 { transition[0].len() } else { 0 };
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            reward_bound,
            initial_dist,
            discount,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::InvalidInput("empty state or action space".into()));
        }
        if !(0.0 < self.discount && self.discount < 1.0) {
            return Err(Error::InvalidInput(format!(
                "discount {} not in (0,1)",
                self.discount
            )));
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                got: self.transition.len().min(self.reward.len()),
            });
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions || self.reward[s].len() != self.n_actions
            {
                return Err(Error::DimensionMismatch {
                    expected: self.n_actions,
                    got: self.transition[s].len().min(self.reward[s].len()),
                });
            }
            for a in 0..self.n_actions {
                validate_distribution(&self.transition[s][a], self.n_states)?;
                let r = self.reward[s][a];
                if !r.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite reward at ({s},{a})"
                    )));
                }
                if r.abs() > self.reward_bound + 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "|reward[{s}][{a}]| = {} exceeds bound {}",
                        r.abs(),
                        self.reward_bound
                    )));
                }
            }
        }
        validate_distribution(&self.initial_dist, self.n_states)?;
        Ok(())
    }

    #[inline]
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tabular MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        mdp.validate()?;
        Ok(mdp)
    }
}

/// A randomized stationary policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = probs.first().map_or(0, |row| row.len());
        for row in &probs {
            validate_distribution(row, n_actions)?;
        }
        Ok(Self { probs })
    }

    /// Point-mass policy choosing `actions[s]` at state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
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

    /// Support set `C(π) = {(s,a): π(a|s) > 0}`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, row) in self.probs.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    out.push((s, a));
                }
            }
        }
        out
    }

    /// The chosen action per state for a deterministic policy.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        self.probs
            .iter()
            .map(|row| {
                let mut arg = None;
                for (a, &p) in row.iter().enumerate() {
                    if p > 1.0 - PROB_TOL {
                        arg = Some(a);
                    } else if p > PROB_TOL {
                        return None;
                    }
                }
                arg
            })
            .collect()
    }
}

/// A probability vector over states or state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub weights: Vec<f64>,
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_distribution(&weights, weights.len())?;
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// A value function over states or state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn validate_distribution(row: &[f64], expected_len: usize) -> Result<()> {
    if row.len() != expected_len {
        return Err(Error::DimensionMismatch {
            expected: expected_len,
            got: row.len(),
        });
    }
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < -PROB_TOL {
            return Err(Error::InvalidInput(format!(
                "negative or non-finite probability {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// State-to-state kernel induced by a policy: `P_π(s'|s) = Σ_a π(a|s) P(s'|s,a)`.
pub fn induced_kernel(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
    let n = mdp.n_states;
    let mut kernel = vec![vec![0.0; n]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let pa = policy.probs[s][a];
            if pa == 0.0 {
                continue;
            }
            for (sp, &p) in mdp.transition[s][a].iter().enumerate() {
                kernel[s][sp] += pa * p;
            }
        }
    }
    kernel
}

/// Expected one-step reward under a policy: `r_π(s) = Σ_a π(a|s) r(s,a)`.
pub fn induced_reward(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| policy.probs[s][a] * mdp.reward[s][a])
                .sum()
        })
        .collect()
}

/// Solve `max_π V_γ^π` by value iteration.
///
/// The returned value function has Bellman residual `‖TV − V‖∞ ≤ tol`, and the
/// returned policy is greedy with ties broken toward the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<(ValueFunction, Policy)> {
    let allowed: Vec<Vec<usize>> = (0..mdp.n_states)
        .map(|_| (0..mdp.n_actions).collect())
        .collect();
    let (vf, actions) = value_iteration_restricted(mdp, gamma, tol, &allowed)?;
    let policy = Policy::deterministic(&actions, mdp.n_actions);
    Ok((vf, policy))
}

/// Value iteration with a per-state set of admissible actions.
///
/// Shared by the attack synthesizers, which restrict the adversary's choices
/// per product state. `allowed[s]` must be non-empty for every state.
pub fn value_iteration_restricted(
    mdp: &TabularMdp,
    gamma: f64,
    tol: f64,
    allowed: &[Vec<usize>],
) -> Result<(ValueFunction, Vec<usize>)> {
    mdp.validate()?;
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("discount {gamma} not in (0,1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be > 0")));
    }
    if allowed.len() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: allowed.len(),
        });
    }
    for (s, acts) in allowed.iter().enumerate() {
        if acts.is_empty() {
            return Err(Error::Infeasible(format!("no admissible action at state {s}")));
        }
    }

    let n = mdp.n_states;
    let mut value = vec![0.0; n];
    let mut next = vec![0.0; n];
    // Contraction: one extra application after the sup-norm step drops below
    // tol leaves the returned iterate with residual <= gamma * tol.
    let max_iters = 20_000_000usize;
    let mut converged = false;
    for _ in 0..max_iters {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for &a in &allowed[s] {
                let mut q = mdp.reward[s][a];
                let row = &mdp.transition[s][a];
                let mut exp = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        exp += p * value[sp];
                    }
                }
                q += gamma * exp;
                if q > best {
                    best = q;
                }
            }
            next[s] = best;
            delta = delta.max((next[s] - value[s]).abs());
        }
        std::mem::swap(&mut value, &mut next);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("value iteration failed to converge".into()));
    }

    // Greedy extraction, lowest-index tie break via strict improvement.
    let mut actions = vec![0usize; n];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = allowed[s][0];
        for &a in &allowed[s] {
            let row = &mdp.transition[s][a];
            let mut exp = 0.0;
            for (sp, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    exp += p * value[sp];
                }
            }
            let q = mdp.reward[s][a] + gamma * exp;
            if q > best {
                best = q;
                best_a = a;
            }
        }
        actions[s] = best_a;
    }
    Ok((ValueFunction { values: value }, actions))
}

/// Exact discounted policy evaluation: solve `(I − γ P_π) V = r_π` directly.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, gamma: f64) -> Result<ValueFunction> {
    mdp.validate()?;
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("discount {gamma} not in (0,1)")));
    }
    let kernel = induced_kernel(mdp, policy);
    let rewards = induced_reward(mdp, policy);
    let values = evaluate_kernel(&kernel, &rewards, gamma)?;
    Ok(ValueFunction { values })
}

/// Solve `(I − γ K) v = r` for an arbitrary row-stochastic kernel.
pub fn evaluate_kernel(kernel: &[Vec<f64>], rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = kernel.len();
    let mut mat = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for sp in 0..n {
            mat[(s, sp)] -= gamma * kernel[s][sp];
        }
    }
    let b = DVector::from_row_slice(rewards);
    let lu = mat.lu();
    let v = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular evaluation system".into()))?;

    // Residual check against the defining equation.
    let sup: f64 = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for s in 0..n {
        let mut rhs = rewards[s];
        for sp in 0..n {
            rhs += gamma * kernel[s][sp] * v[sp];
        }
        if (rhs - v[s]).abs() > 1e-9 * (1.0 + sup) {
            return Err(Error::Numerical(format!(
                "evaluation residual {} too large",
                (rhs - v[s]).abs()
            )));
        }
    }
    Ok(v.iter().copied().collect())
}

/// Check strong connectivity of the support graph of a kernel.
pub fn is_irreducible(kernel: &[Vec<f64>]) -> bool {
    let n = kernel.len();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let edge = if forward {
                    kernel[u][v] > 0.0
                } else {
                    kernel[v][u] > 0.0
                };
                if edge && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Stationary distribution of the chain induced by `π`.
///
/// The support graph must be strongly connected; reducible chains are
/// rejected rather than averaged.
pub fn stationary_distribution(mdp: &TabularMdp, policy: &Policy) -> Result<Distribution> {
    let kernel = induced_kernel(mdp, policy);
    let weights = stationary_of_kernel(&kernel)?;
    Ok(Distribution { weights })
}

/// Strongly connected components of a kernel's support graph, by Kosaraju's
/// two-pass search. Returned as a component id per state.
fn strongly_connected_components(kernel: &[Vec<f64>]) -> (usize, Vec<usize>) {
    let n = kernel.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    // Iterative post-order on the forward graph.
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(frame) = stack.last_mut() {
            let u = frame.0;
            let mut child = None;
            while frame.1 < n {
                let v = frame.1;
                frame.1 += 1;
                if kernel[u][v] > 0.0 && !seen[v] {
                    child = Some(v);
                    break;
                }
            }
            match child {
                Some(v) => {
                    seen[v] = true;
                    stack.push((v, 0));
                }
                None => {
                    order.push(u);
                    stack.pop();
                }
            }
        }
    }
    // Reverse pass in decreasing post-order.
    let mut comp = vec![usize::MAX; n];
    let mut n_comps = 0;
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = n_comps;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if kernel[v][u] > 0.0 && comp[v] == usize::MAX {
                    comp[v] = n_comps;
                    stack.push(v);
                }
            }
        }
        n_comps += 1;
    }
    (n_comps, comp)
}

/// States of the unique recurrent class of a unichain kernel.
///
/// Errors when the chain has two or more closed classes (no unique
/// stationary distribution).
pub fn recurrent_class(kernel: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = kernel.len();
    let (n_comps, comp) = strongly_connected_components(kernel);
    // A component is closed when no member has an edge leaving it.
    let mut closed = vec![true; n_comps];
    for u in 0..n {
        for v in 0..n {
            if kernel[u][v] > 0.0 && comp[v] != comp[u] {
                closed[comp[u]] = false;
            }
        }
    }
    let closed_ids: Vec<usize> = (0..n_comps).filter(|&c| closed[c]).collect();
    match closed_ids.len() {
        1 => Ok((0..n).filter(|&u| comp[u] == closed_ids[0]).collect()),
        k => Err(Error::ReducibleChain(format!(
            "{k} closed communicating classes; no unique stationary distribution"
        ))),
    }
}

/// Stationary distribution of a unichain row-stochastic kernel: the unique
/// `μ` with `μᵀ K = μᵀ`, `Σ μ = 1`, supported on the recurrent class
/// (transient states carry zero mass). Chains with several closed classes
/// are rejected.
pub fn stationary_of_kernel(kernel: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = kernel.len();
    let class = recurrent_class(kernel)?;
    let m = class.len();
    // (I - K^T) mu = 0 on the class, last balance row replaced by the
    // normalization.
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (i, &u) in class.iter().enumerate() {
        for (j, &v) in class.iter().enumerate() {
            mat[(i, j)] = (if i == j { 1.0 } else { 0.0 }) - kernel[v][u];
        }
    }
    for j in 0..m {
        mat[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let mu = mat
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::ReducibleChain("no unique stationary solution".into()))?;

    let mut weights = vec![0.0; n];
    for (i, &u) in class.iter().enumerate() {
        weights[u] = if mu[i] < 0.0 && mu[i] > -1e-12 { 0.0 } else { mu[i] };
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    // Invariance residual check.
    for j in 0..n {
        let mut back = 0.0;
        for i in 0..n {
            back += weights[i] * kernel[i][j];
        }
        if (back - weights[j]).abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "stationarity residual {} too large",
                (back - weights[j]).abs()
            )));
        }
    }
    Ok(weights)
}

/// Discounted state distribution `μ_γᵀ = (1−γ) Σ_t γᵗ αᵀ P_πᵗ`, obtained from
/// the linear system `μ_γᵀ = (1−γ) αᵀ + γ μ_γᵀ P_π`.
pub fn discounted_state_distribution(
    mdp: &TabularMdp,
    policy: &Policy,
    gamma: f64,
    alpha: &Distribution,
) -> Result<Distribution> {
    if !(0.0 <= gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("discount {gamma} not in [0,1)")));
    }
    if alpha.dim() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: alpha.dim(),
        });
    }
    let kernel = induced_kernel(mdp, policy);
    let weights = discounted_occupancy_of_kernel(&kernel, gamma, &alpha.weights)?;
    Ok(Distribution { weights })
}

/// Discounted occupancy of an arbitrary kernel from source `alpha`.
pub fn discounted_occupancy_of_kernel(
    kernel: &[Vec<f64>],
    gamma: f64,
    alpha: &[f64],
) -> Result<Vec<f64>> {
    let n = kernel.len();
    // (I - gamma K^T) mu = (1-gamma) alpha
    let mut mat = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            mat[(i, j)] -= gamma * kernel[j][i];
        }
    }
    let b = DVector::from_iterator(n, alpha.iter().map(|&a| (1.0 - gamma) * a));
    let mu = mat
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular occupancy system".into()))?;
    let mut weights: Vec<f64> = mu.iter().copied().collect();
    for w in weights.iter_mut() {
        if *w < 0.0 && *w > -1e-12 {
            *w = 0.0;
        }
    }
    Ok(weights)
}

/// Long-run average reward `h^π = Σ_s μ(s) Σ_a π(a|s) r(s,a)`.
pub fn ergodic_reward(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let mu = stationary_distribution(mdp, policy)?;
    let r = induced_reward(mdp, policy);
    Ok(mu.weights.iter().zip(r.iter()).map(|(m, r)| m * r).sum())
}

/// Total variation distance `½ ‖p − q‖₁` between probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Worst-case discounted value gap of any control-channel attack:
/// `(2γR*/(1−γ)²) · max_{s,a,ā} TV(P(·|s,a), P(·|s,ā))`.
pub fn regret_bound(mdp: &TabularMdp, gamma: f64) -> f64 {
    let mut max_tv: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for ab in (a + 1)..mdp.n_actions {
                let tv = tv_distance(&mdp.transition[s][a], &mdp.transition[s][ab])
                    .expect("same-state rows have equal length");
                max_tv = max_tv.max(tv);
            }
        }
    }
    let alpha = 2.0 * gamma * mdp.reward_bound / ((1.0 - gamma) * (1.0 - gamma));
    alpha * max_tv
}
