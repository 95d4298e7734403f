//! Information rates of control-channel attacks.
//!
//! The victim can discriminate the attacked kernel from the nominal one at a
//! rate governed by the average KL divergence along the attacked trajectory:
//!
//! * `I(π,φ)  = E_{s∼μ^{φ∘π}, a∼π} [ KL(P^φ(s,a), P(s,a)) ]` — the true rate,
//!   driving the asymptotic detection delay `E[T] ≳ ln(T̄)/I`;
//! * `Ī(π,φ)  = E_{s,a,ā} [ KL(P(s,ā), P(s,a)) ]` — a log-sum upper bound
//!   that is linear in `φ` (tight exactly for deterministic attacks);
//! * `Ī_γ(s,a)` — the discounted version with stage cost `(1−γ)·E_ā[KL]`,
//!   which converges to `Ī` as `γ ↑ 1` at a rate controlled by the chain's
//!   uniform-ergodicity constants.
//!
//! Infinite divergences are represented as `f64::INFINITY` (a value, not an
//! error): they arise exactly when a replacement's next-state support escapes
//! the nominal one.

use serde::{Deserialize, Serialize};

use crate::attack::{perturbed_kernel, AttackPolicy};
use crate::mdp::{stationary_of_kernel, Distribution, Policy, TabularMdp};
use crate::{Error, Result};

/// Pointwise KL divergence `Σ_i p_i ln(p_i/q_i)` with `0·ln(0/·) = 0`;
/// `+∞` when `p` puts mass where `q` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "KL arguments must have equal length");
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            total += pi * (pi / qi).ln();
        }
    }
    // Clamp the tiny negative values that appear when p == q up to rounding.
    total.max(0.0)
}

/// Per-transition log-likelihood ratio table `z_φ(s,a,s') = ln(P^φ/P)`.
///
/// Entries are `0` where both kernels vanish, `+∞` where only the nominal
/// one does, and `−∞` where only the attacked one does.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlrTable {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl LlrTable {
    #[inline]
    pub fn z(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.values[s][a][s_next]
    }
}

pub fn log_likelihood_ratio(mdp: &TabularMdp, attack: &AttackPolicy) -> Result<LlrTable> {
    let pphi = perturbed_kernel(mdp, attack)?;
    let values = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    (0..mdp.n_states)
                        .map(|sp| {
                            let num = pphi[s][a][sp];
                            let den = mdp.transition[s][a][sp];
                            if num == 0.0 && den == 0.0 {
                                0.0
                            } else if den == 0.0 {
                                f64::INFINITY
                            } else if num == 0.0 {
                                f64::NEG_INFINITY
                            } else {
                                (num / den).ln()
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(LlrTable { values })
}

/// State-to-state kernel of the attacked closed loop:
/// `P^{φ∘π}(s'|s) = Σ_a π(a|s) Σ_ā φ(ā|s,a) P(s'|s,ā)`.
pub fn attacked_state_kernel(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
) -> Vec<Vec<f64>> {
    let n = mdp.n_states;
    let mut kernel = vec![vec![0.0; n]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let pa = victim.probs[s][a];
            if pa == 0.0 {
                continue;
            }
            for ab in 0..mdp.n_actions {
                let w = pa * attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
                for (sp, &p) in mdp.transition[s][ab].iter().enumerate() {
                    kernel[s][sp] += w * p;
                }
            }
        }
    }
    kernel
}

/// Information rate `I(π,φ)` under the attacked stationary distribution.
pub fn information_rate(mdp: &TabularMdp, victim: &Policy, attack: &AttackPolicy) -> Result<f64> {
    let pphi = perturbed_kernel(mdp, attack)?;
    let kernel = attacked_state_kernel(mdp, victim, attack);
    let mu = stationary_of_kernel(&kernel)?;
    let mut rate = 0.0;
    for s in 0..mdp.n_states {
        if mu[s] == 0.0 {
            continue;
        }
        for a in 0..mdp.n_actions {
            let w = mu[s] * victim.probs[s][a];
            if w == 0.0 {
                continue;
            }
            let kl = kl_divergence(&pphi[s][a], &mdp.transition[s][a]);
            if kl.is_infinite() {
                return Ok(f64::INFINITY);
            }
            rate += w * kl;
        }
    }
    Ok(rate)
}

/// Upper information rate `Ī(π,φ)`: the φ-linear log-sum bound on `I`.
pub fn upper_information_rate(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
) -> Result<f64> {
    let kernel = attacked_state_kernel(mdp, victim, attack);
    let mu = stationary_of_kernel(&kernel)?;
    let mut rate = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for ab in 0..mdp.n_actions {
                let w = mu[s] * victim.probs[s][a] * attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
                let kl = kl_divergence(&mdp.transition[s][ab], &mdp.transition[s][a]);
                if kl.is_infinite() {
                    return Ok(f64::INFINITY);
                }
                rate += w * kl;
            }
        }
    }
    Ok(rate)
}

/// Expected replacement KL per pair: `g(s,a) = Σ_ā φ(ā|s,a) KL(P(s,ā), P(s,a))`.
fn stage_kl(mdp: &TabularMdp, attack: &AttackPolicy) -> Vec<Vec<f64>> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let mut g = 0.0;
                    for ab in 0..mdp.n_actions {
                        let w = attack.probs[s][a][ab];
                        if w == 0.0 {
                            continue;
                        }
                        let kl = kl_divergence(&mdp.transition[s][ab], &mdp.transition[s][a]);
                        if kl.is_infinite() {
                            return f64::INFINITY;
                        }
                        g += w * kl;
                    }
                    g
                })
                .collect()
        })
        .collect()
}

/// Discounted information rate.
///
/// Per pair, `Ī_γ(s,a)` solves the evaluation equation with stage cost
/// `(1−γ)·g(s,a)` on the attacked pair chain (a direct linear solve, so the
/// only error is the solver's). The scalar is the `α·π`-weighted average.
/// Pairs that can reach a support violation carry `+∞`.
pub fn discounted_information_rate(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    gamma: f64,
    alpha: &Distribution,
) -> Result<(f64, Vec<f64>)> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("discount {gamma} not in (0,1)")));
    }
    if alpha.dim() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: alpha.dim(),
        });
    }
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let pairs = n * na;
    let g = stage_kl(mdp, attack);

    // Pair-to-pair kernel M((s,a) -> (s',a')) = sum_ab phi P(s'|s,ab) pi(a'|s').
    let mut kernel = vec![vec![0.0f64; pairs]; pairs];
    for s in 0..n {
        for a in 0..na {
            let row = s * na + a;
            for ab in 0..na {
                let w = attack.probs[s][a][ab];
                if w == 0.0 {
                    continue;
                }
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

    // Pairs that can reach an infinite stage cost are infinite themselves;
    // the complement is closed, so the solve runs on finite rows only.
    let mut infinite = vec![false; pairs];
    for s in 0..n {
        for a in 0..na {
            if g[s][a].is_infinite() {
                infinite[s * na + a] = true;
            }
        }
    }
    loop {
        let mut changed = false;
        for row in 0..pairs {
            if infinite[row] {
                continue;
            }
            if (0..pairs).any(|col| kernel[row][col] > 0.0 && infinite[col]) {
                infinite[row] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let finite_rows: Vec<usize> = (0..pairs).filter(|&p| !infinite[p]).collect();
    let index_of: std::collections::HashMap<usize, usize> = finite_rows
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();
    let m = finite_rows.len();
    let mut per_pair = vec![f64::INFINITY; pairs];
    if m > 0 {
        let mut mat = nalgebra::DMatrix::<f64>::identity(m, m);
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for (i, &row) in finite_rows.iter().enumerate() {
            let (s, a) = (row / na, row % na);
            rhs[i] = (1.0 - gamma) * g[s][a];
            for (j, &col) in finite_rows.iter().enumerate() {
                mat[(i, j)] -= gamma * kernel[row][col];
            }
        }
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular discounted-rate system".into()))?;
        for (&row, i) in index_of.iter() {
            per_pair[row] = sol[*i].max(0.0);
        }
    }

    let mut scalar = 0.0;
    for s in 0..n {
        for a in 0..na {
            let w = alpha.weights[s] * victim.probs[s][a];
            if w == 0.0 {
                continue;
            }
            if per_pair[s * na + a].is_infinite() {
                return Ok((f64::INFINITY, per_pair));
            }
            scalar += w * per_pair[s * na + a];
        }
    }
    Ok((scalar, per_pair))
}

/// Flat report of the three rates for one `(π, φ)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoRateReport {
    pub rate: f64,
    pub upper_rate: f64,
    pub discounted_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_state: Option<Vec<f64>>,
}

pub fn info_rate_report(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    gamma: f64,
    alpha: &Distribution,
) -> Result<InfoRateReport> {
    let rate = information_rate(mdp, victim, attack)?;
    let upper_rate = upper_information_rate(mdp, victim, attack)?;
    let (discounted_rate, per_state) =
        discounted_information_rate(mdp, victim, attack, gamma, alpha)?;
    Ok(InfoRateReport {
        rate,
        upper_rate,
        discounted_rate,
        per_state: Some(per_state),
    })
}

/// Uniform-ergodicity envelope `sup_x ‖P₁ᵗ(x,·) − μ‖_TV ≤ L θᵗ` together
/// with the largest stage cost `D*` and the validity threshold `γ₀`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingBound {
    pub l_const: f64,
    pub theta: f64,
    pub d_star: f64,
    pub gamma0: f64,
}

impl MixingBound {
    /// Threshold from the statement form of the discounted-error result.
    pub fn gamma0_statement(l_const: f64, theta: f64) -> f64 {
        1.0 / (1.0 + (1.0 - theta) * l_const)
    }

    /// Threshold from the proof's series-convergence condition.
    pub fn gamma0_proof(l_const: f64, theta: f64) -> f64 {
        1.0 / (1.0 + (1.0 - theta) / l_const)
    }
}

/// Fit a valid `(L, θ)` envelope on the TV decay of `kernel` and record the
/// largest stage cost.
///
/// A plain least-squares line on `ln d_t` is kept as one candidate, but many
/// chains show a plateau followed by a cliff, where the LS intercept explodes
/// and invalidates the bound. Every candidate θ therefore gets the minimal
/// envelope constant `L(θ) = max_t d_t/θᵗ`, and the candidate minimizing
/// `L/(1−θ)` wins. The envelope is verified numerically up to `horizon`.
pub fn fit_mixing_bound(
    kernel: &[Vec<f64>],
    stage_costs: &[f64],
    horizon: usize,
) -> Result<MixingBound> {
    let n = kernel.len();
    if n == 0 || stage_costs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: stage_costs.len(),
        });
    }
    let mu = stationary_of_kernel(kernel)?;

    // d_t = sup_x TV(P^t(x,.), mu), t = 1..horizon.
    let mut power = kernel.to_vec();
    let mut decay = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut d = 0.0f64;
        for row in &power {
            let tv: f64 = 0.5
                * row
                    .iter()
                    .zip(mu.iter())
                    .map(|(p, m)| (p - m).abs())
                    .sum::<f64>();
            d = d.max(tv);
        }
        decay.push(d);
        power = mat_mul(&power, kernel);
    }

    // Least-squares candidate on the informative prefix.
    let mut candidates = Vec::new();
    let pts: Vec<(f64, f64)> = decay
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 1e-12)
        .map(|(i, &d)| ((i + 1) as f64, d.ln()))
        .collect();
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = m * sxx - sx * sx;
        if denom.abs() > 1e-12 {
            let slope = (m * sxy - sx * sy) / denom;
            let theta = slope.exp();
            if theta > 0.0 && theta < 1.0 {
                candidates.push(theta);
            }
        }
    }
    for k in 1..200 {
        candidates.push(k as f64 / 200.0);
    }

    let envelope_l = |theta: f64| -> f64 {
        let mut l: f64 = 1.0;
        let mut tp = theta;
        for &d in &decay {
            if d > 0.0 {
                l = l.max(d / tp);
            }
            tp *= theta;
            if tp < 1e-300 {
                break;
            }
        }
        l * 1.02
    };

    let mut best: Option<(f64, f64, f64)> = None;
    for theta in candidates {
        if !(0.0 < theta && theta < 1.0) {
            continue;
        }
        let l = envelope_l(theta);
        if !l.is_finite() {
            continue;
        }
        let score = l / (1.0 - theta);
        if best.map_or(true, |(_, _, s)| score < s) {
            best = Some((l, theta, score));
        }
    }
    let (l_const, theta, _) =
        best.ok_or_else(|| Error::Numerical("no valid mixing envelope found".into()))?;

    // Envelope invariant check up to the horizon.
    let mut tp = theta;
    for &d in &decay {
        if d > l_const * tp * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "mixing envelope violated: {d} > {}",
                l_const * tp
            )));
        }
        tp *= theta;
    }

    let d_star = stage_costs.iter().fold(0.0f64, |m, &c| m.max(c));
    let gamma0 = MixingBound::gamma0_statement(l_const, theta)
        .max(MixingBound::gamma0_proof(l_const, theta));
    Ok(MixingBound {
        l_const,
        theta,
        d_star,
        gamma0,
    })
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Error bound `|Ī_γ − Ī| ≤ (1−γ) L D* / (γ(1−θ) − (1−γ)L)` for `γ > γ₀`.
pub fn info_rate_error_bound(bound: &MixingBound, gamma: f64) -> Result<f64> {
    if gamma <= bound.gamma0 || gamma >= 1.0 {
        return Err(Error::DiscountOutOfRange {
            gamma,
            gamma0: bound.gamma0,
        });
    }
    let denom = gamma * (1.0 - bound.theta) - (1.0 - gamma) * bound.l_const;
    if denom <= 0.0 {
        return Err(Error::DiscountOutOfRange {
            gamma,
            gamma0: bound.gamma0,
        });
    }
    Ok((1.0 - gamma) * bound.l_const * bound.d_star / denom)
}

/// The attacked pair chain restricted to the victim's support, with the
/// expected replacement-KL as stage cost per pair. Returns the pair list,
/// the restricted kernel, and the costs.
pub fn attacked_support_chain(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
) -> Result<(Vec<(usize, usize)>, Vec<Vec<f64>>, Vec<f64>)> {
    let pairs = victim.support();
    let index: std::collections::HashMap<(usize, usize), usize> = pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();
    let m = pairs.len();
    let g = stage_kl(mdp, attack);
    let mut kernel = vec![vec![0.0f64; m]; m];
    let mut costs = vec![0.0f64; m];
    for (i, &(s, a)) in pairs.iter().enumerate() {
        costs[i] = g[s][a];
        for ab in 0..mdp.n_actions {
            let w = attack.probs[s][a][ab];
            if w == 0.0 {
                continue;
            }
            for (sp, &p) in mdp.transition[s][ab].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for ap in 0..mdp.n_actions {
                    let pv = victim.probs[sp][ap];
                    if pv > 0.0 {
                        let j = index[&(sp, ap)];
                        kernel[i][j] += w * p * pv;
                    }
                }
            }
        }
    }
    Ok((pairs, kernel, costs))
}
