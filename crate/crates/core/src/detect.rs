//! Quickest change detection on the victim's side.
//!
//! The victim watches the stream `(s_t, a_t)` and accumulates the
//! log-likelihood ratio `z_φ(s,a,s') = ln(P^φ/P)`:
//!
//! * CUSUM: `c_t = max(0, c_{t−1} + z_t)`, equal to the running maximum
//!   `(max_{1≤k≤t} Σ_{n=k}^t z_n)⁺`, with alarm threshold `c = ln(2m/δ)`
//!   for a false-alarm probability `δ` over `m` samples;
//! * window-limited GLR: parallel statistics whose n-th window re-estimates
//!   the post-change kernel from its last `5n` observations and scores the
//!   plug-in likelihood ratio; the statistic is the positive part of the
//!   max over full windows.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

use crate::attack::AttackPolicy;
use crate::info::{log_likelihood_ratio, LlrTable};
use crate::mdp::{stationary_distribution, Policy, TabularMdp};
use crate::sim::sample_categorical;
use crate::{Error, Result};

/// Running CUSUM statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub statistic: f64,
    pub step_count: u64,
}

impl CusumState {
    pub fn new() -> Self {
        Self {
            statistic: 0.0,
            step_count: 0,
        }
    }

    /// Reflected accumulation `c_t = max(0, c_{t−1} + z)`.
    #[must_use]
    pub fn step(self, z: f64) -> Self {
        Self {
            statistic: (self.statistic + z).max(0.0),
            step_count: self.step_count + 1,
        }
    }
}

impl Default for CusumState {
    fn default() -> Self {
        Self::new()
    }
}

/// Free-function form of [`CusumState::step`].
pub fn cusum_step(state: CusumState, z: f64) -> CusumState {
    state.step(z)
}

/// Threshold calibration `c = ln(2m/δ)` for false-alarm probability `δ`
/// over a horizon of `m` samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorCalibration {
    pub delta: f64,
    pub horizon: usize,
    pub threshold: f64,
}

impl DetectorCalibration {
    /// Round-trip: the δ implied by this threshold and horizon.
    pub fn implied_delta(&self) -> f64 {
        2.0 * self.horizon as f64 * (-self.threshold).exp()
    }

    /// The calibration is asymptotically valid only when the horizon exceeds
    /// `ln(1/δ)/I` for the attack's information rate `I`.
    pub fn horizon_valid_for(&self, rate: f64) -> bool {
        rate > 0.0 && (self.horizon as f64) > (1.0 / self.delta).ln() / rate
    }
}

pub fn calibrate_threshold(delta: f64, horizon: usize) -> Result<DetectorCalibration> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} not in (0,1)")));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    Ok(DetectorCalibration {
        delta,
        horizon,
        threshold: (2.0 * horizon as f64 / delta).ln(),
    })
}

/// Number of parallel GLR windows.
pub const GLR_WINDOWS: usize = 38;
/// Sample spacing between consecutive windows.
pub const GLR_SPACING: usize = 5;
/// Probability floor applied to the plug-in kernel estimate before logs.
const GLR_PROB_FLOOR: f64 = 1e-12;

/// Window-limited GLR detector state.
///
/// The n-th window (n = 1..38) holds the last `5n` observations; a window is
/// inactive until full. Each active window re-estimates the post-change
/// kernel by empirical transition frequencies over its buffer (floored at
/// 1e-12, then renormalized) and scores `Σ ln(P̂/P)`; the reported statistic
/// is the positive part of the max over active windows.
#[derive(Debug, Clone)]
pub struct GlrState {
    buffer: VecDeque<(usize, usize, usize)>,
    pub n_windows: usize,
    pub spacing: usize,
    pub statistic: f64,
    pub step_count: u64,
}

impl GlrState {
    pub fn new() -> Self {
        Self::with_windows(GLR_WINDOWS, GLR_SPACING)
    }

    pub fn with_windows(n_windows: usize, spacing: usize) -> Self {
        Self {
            buffer: VecDeque::with_capacity(n_windows * spacing),
            n_windows,
            spacing,
            statistic: 0.0,
            step_count: 0,
        }
    }

    /// Ingest one observed transition and refresh the statistic.
    ///
    /// Windows are nested suffixes of the buffer, so one backward pass
    /// (newest to oldest) accumulates counts incrementally and evaluates each
    /// full window at its boundary. The ordered map keeps summation order,
    /// and hence the statistic, bit-stable across runs.
    pub fn step(&mut self, obs: (usize, usize, usize), mdp: &TabularMdp) {
        let capacity = self.n_windows * self.spacing;
        self.buffer.push_back(obs);
        if self.buffer.len() > capacity {
            self.buffer.pop_front();
        }
        self.step_count += 1;

        let mut best = f64::NEG_INFINITY;
        let mut counts: BTreeMap<(usize, usize), (Vec<f64>, f64, usize)> = BTreeMap::new();
        let mut nominal_loglik = 0.0f64;
        let mut impossible_seen = false;
        for (back, &(s, a, sp)) in self.buffer.iter().rev().enumerate() {
            let entry = counts
                .entry((s, a))
                .or_insert_with(|| (vec![0.0; mdp.n_states], 0.0, 0));
            if entry.0[sp] == 0.0 {
                entry.2 += 1; // distinct next states observed in this row
            }
            entry.0[sp] += 1.0;
            entry.1 += 1.0;
            let pnom = mdp.transition[s][a][sp];
            if pnom <= 0.0 {
                impossible_seen = true;
            } else {
                nominal_loglik += pnom.ln();
            }
            let suffix = back + 1;
            if suffix % self.spacing == 0 && suffix / self.spacing <= self.n_windows {
                if impossible_seen {
                    best = f64::INFINITY;
                    continue;
                }
                // Plug-in log-likelihood: for observed cells the floored,
                // renormalized estimate is (c/total)/Z with
                // Z = 1 + floor * (#unobserved next states).
                let mut plug_in = 0.0;
                for ((_, _), (row, total, support)) in counts.iter() {
                    let z_row = 1.0 + GLR_PROB_FLOOR * (mdp.n_states - support) as f64;
                    let ln_norm = total.ln() + z_row.ln();
                    for &c in row.iter() {
                        if c > 0.0 {
                            plug_in += c * (c.ln() - ln_norm);
                        }
                    }
                }
                let stat = plug_in - nominal_loglik;
                if stat > best {
                    best = stat;
                }
            }
        }
        self.statistic = if best == f64::NEG_INFINITY {
            0.0
        } else {
            best.max(0.0)
        };
    }
}

impl Default for GlrState {
    fn default() -> Self {
        Self::new()
    }
}

/// Free-function form of [`GlrState::step`]. The victim policy argument is
/// unused by the statistic (the policy factor cancels in the likelihood
/// ratio) but kept for signature symmetry with the simulation layer.
pub fn glr_step(
    mut state: GlrState,
    obs: (usize, usize, usize),
    mdp: &TabularMdp,
    _victim: &Policy,
) -> GlrState {
    state.step(obs, mdp);
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorKind {
    Cusum,
    Glr,
}

/// Monte Carlo detection-delay estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayReport {
    pub detector: DetectorKind,
    pub trials: usize,
    pub detected: usize,
    /// Trials where the statistic never crossed the threshold within the
    /// horizon; excluded from the mean rather than censored into it.
    pub undetected: usize,
    pub mean_delay: f64,
    pub ci99_low: f64,
    pub ci99_high: f64,
}

/// Derive a per-trial seed that is stable under any parallel schedule.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    // splitmix64 over the pair.
    let mut x = base ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Estimate the mean detection delay `(T − ν)⁺` of an attack under the given
/// detector, over trajectories started from the victim's stationary
/// distribution with the attack applied from `ν` on.
pub fn estimate_detection_delay(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    detector: DetectorKind,
    calibration: &DetectorCalibration,
    nu: usize,
    trials: usize,
    seed: u64,
) -> Result<DelayReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial required".into()));
    }
    let llr = log_likelihood_ratio(mdp, attack)?;
    let mu = stationary_distribution(mdp, victim)?;
    let horizon = nu + calibration.horizon;

    let delays: Vec<Option<u64>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            run_detection_trial(
                mdp,
                victim,
                attack,
                &llr,
                &mu.weights,
                detector,
                calibration.threshold,
                nu,
                horizon,
                trial_seed(seed, trial),
            )
        })
        .collect();

    let detected: Vec<u64> = delays.iter().filter_map(|d| *d).collect();
    let undetected = trials - detected.len();
    let (mean, ci_low, ci_high) = if detected.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let n = detected.len() as f64;
        let mean = detected.iter().map(|&d| d as f64).sum::<f64>() / n;
        let var = detected
            .iter()
            .map(|&d| (d as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let half = 2.576 * (var / n).sqrt();
        (mean, mean - half, mean + half)
    };
    Ok(DelayReport {
        detector,
        trials,
        detected: detected.len(),
        undetected,
        mean_delay: mean,
        ci99_low: ci_low,
        ci99_high: ci_high,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_detection_trial(
    mdp: &TabularMdp,
    victim: &Policy,
    attack: &AttackPolicy,
    llr: &LlrTable,
    initial: &[f64],
    detector: DetectorKind,
    threshold: f64,
    nu: usize,
    horizon: usize,
    seed: u64,
) -> Option<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sample_categorical(&mut rng, initial);
    let mut cusum = CusumState::new();
    let mut glr = match detector {
        DetectorKind::Glr => Some(GlrState::new()),
        DetectorKind::Cusum => None,
    };
    for t in 0..horizon {
        let a = sample_categorical(&mut rng, &victim.probs[s]);
        let a_exec = if t < nu {
            a
        } else {
            sample_categorical(&mut rng, &attack.probs[s][a])
        };
        let s_next = sample_categorical(&mut rng, &mdp.transition[s][a_exec]);
        let stat = match detector {
            DetectorKind::Cusum => {
                cusum = cusum.step(llr.z(s, a, s_next));
                cusum.statistic
            }
            DetectorKind::Glr => {
                let g = glr.as_mut().expect("glr state exists");
                g.step((s, a, s_next), mdp);
                g.statistic
            }
        };
        if stat >= threshold {
            return Some((t as u64 + 1).saturating_sub(nu as u64));
        }
        s = s_next;
    }
    None
}
