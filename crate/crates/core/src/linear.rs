//! Control-channel attacks on linear-Gaussian systems.
//!
//! Plant: `x' = Ax + B(u + ū) + w`, `w ∼ N(0, Σ)`, victim feedback `u = Kx`
//! with `L = A + BK` Schur. The adversary injects `ū`, trading state damage
//! against the per-step Gaussian KL of attacked vs nominal transitions,
//! weighted by a penalty `β`:
//!
//!   minimize (1/T) E[ Σ_t z_t − β Σ_t xᵀx ].
//!
//! The optimal Gaussian attack is linear with injected noise:
//! `ū_t ∼ N(Θ_t x_t, V_t)` with `Θ_t = β B⁺ F_t⁻¹ P_{t+1} L`,
//! `V_t = β B⁺ F_t⁻¹ P_{t+1} Σ (B⁺)ᵀ`, `F_t = ½Σ⁻¹ − β P_{t+1}`, and the
//! backward matrix recursion `P_t = I + Lᵀ P_{t+1} (I − 2βΣP_{t+1})⁻¹ L`
//! from `P_T = I`. The recursion stays well-posed only for `β` below a
//! frontier `β* = min(β₀, β₁)`; past it the attacked loop destabilizes.
//! A deterministic attack shares the gains with `V_t = 0` and is strictly
//! worse for the adversary: the value gap accumulates the
//! `½·trace(ln(I + Σ⁻¹R_t))` terms, `R_t = B V_t Bᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::trial_seed;
use crate::{Error, Result};

/// Symmetrization tolerance applied after every matrix update.
const SYM_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub k_gain: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

/// JSON-friendly form of the system matrices (row-major nested arrays).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSystemSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub noise_cov: Vec<Vec<f64>>,
}

fn to_dmatrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("ragged or empty matrix".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &l| acc.min(l))
}

impl LinearSystem {
    pub fn new(
        a_mat: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        k_gain: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let sys = Self {
            a_mat,
            b_mat,
            k_gain,
            noise_cov,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_spec(spec: &LinearSystemSpec) -> Result<Self> {
        Self::new(
            to_dmatrix(&spec.a)?,
            to_dmatrix(&spec.b)?,
            to_dmatrix(&spec.k)?,
            to_dmatrix(&spec.noise_cov)?,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_mat.ncols()
    }

    /// Nominal closed loop `L = A + BK`.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a_mat + &self.b_mat * &self.k_gain
    }

    /// Moore-Penrose pseudo-inverse for full-column-rank `B`:
    /// `B⁺ = (BᵀB)⁻¹Bᵀ`.
    pub fn b_pseudo_inverse(&self) -> DMatrix<f64> {
        let bt = self.b_mat.transpose();
        (&bt * &self.b_mat)
            .try_inverse()
            .expect("validated B has full column rank")
            * bt
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        if self.a_mat.ncols() != n {
            return Err(Error::InvalidInput("A must be square".into()));
        }
        if self.b_mat.nrows() != n {
            return Err(Error::InvalidInput("B row count must match A".into()));
        }
        if self.k_gain.nrows() != m || self.k_gain.ncols() != n {
            return Err(Error::InvalidInput("K must be m x n".into()));
        }
        if self.noise_cov.nrows() != n || self.noise_cov.ncols() != n {
            return Err(Error::InvalidInput("noise covariance must be n x n".into()));
        }
        if (self.noise_cov.clone() - self.noise_cov.transpose()).abs().max() > 1e-9 {
            return Err(Error::InvalidInput("noise covariance must be symmetric".into()));
        }
        if min_symmetric_eigenvalue(&self.noise_cov) <= 0.0 {
            return Err(Error::InvalidInput(
                "noise covariance must be positive definite".into(),
            ));
        }
        let bt = self.b_mat.transpose();
        let gram = &bt * &self.b_mat;
        if gram.clone().try_inverse().is_none() || min_symmetric_eigenvalue(&gram) <= 1e-12 {
            return Err(Error::InvalidInput("B must have full column rank".into()));
        }
        let rho = spectral_radius(&self.closed_loop());
        if rho >= 1.0 {
            return Err(Error::UnstableLoop { rho });
        }
        Ok(())
    }
}

/// Backward Riccati data: `p_seq[t] = P_t` for `t = 0..=T` (`P_T = I`),
/// `f_seq[t] = F_t` for `t = 0..T`, and the two offset recursions.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_seq: Vec<DMatrix<f64>>,
    pub f_seq: Vec<DMatrix<f64>>,
    /// Deterministic offsets `p_t = p_{t+1} + trace(Σ P_{t+1})`.
    pub offsets_deterministic: Vec<f64>,
    /// Gaussian offsets with the injected-noise and log-det corrections.
    pub offsets_gaussian: Vec<f64>,
    pub beta: f64,
    pub stationary: bool,
}

impl RiccatiSolution {
    /// The stationary matrix (first entry of the backward sequence).
    pub fn stationary_matrix(&self) -> &DMatrix<f64> {
        &self.p_seq[0]
    }

    pub fn horizon(&self) -> usize {
        self.f_seq.len()
    }
}

struct RiccatiStep {
    p_prev: DMatrix<f64>,
    f: DMatrix<f64>,
    det_increment: f64,
    gauss_increment: f64,
}

/// One backward step from `P_{t+1}`; errors name the failing step.
fn riccati_step(
    sys: &LinearSystem,
    beta: f64,
    p_next: &DMatrix<f64>,
    step: usize,
) -> Result<RiccatiStep> {
    let n = sys.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let sigma = &sys.noise_cov;
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("noise covariance not invertible".into()))?;
    let f = symmetrize(&(&sigma_inv * 0.5 - p_next * beta));
    if min_symmetric_eigenvalue(&f) <= 0.0 {
        return Err(Error::InfeasibleBeta {
            beta,
            step,
            reason: "F lost positive definiteness".into(),
        });
    }
    let m = &eye - (sigma * p_next) * (2.0 * beta);
    let m_inv = m.try_inverse().ok_or(Error::InfeasibleBeta {
        beta,
        step,
        reason: "I - 2*beta*Sigma*P not invertible".into(),
    })?;
    let l = sys.closed_loop();
    let p_prev = symmetrize(&(&eye + l.transpose() * p_next * m_inv * &l));

    let f_inv = f.clone().try_inverse().ok_or(Error::InfeasibleBeta {
        beta,
        step,
        reason: "F not invertible".into(),
    })?;
    let r = symmetrize(&(&f_inv * p_next * sigma * beta));
    let det_increment = (sigma * p_next).trace();
    // Gaussian offset increment: beta*tr((Sigma+R)P) - 0.5 tr(Sigma^-1 R)
    // + 0.5 ln det(I + Sigma^-1 R), the log-det taken through the symmetric
    // similarity Sigma^-1/2 R Sigma^-1/2.
    let gauss_increment = beta * ((sigma + &r) * p_next).trace()
        - 0.5 * (&sigma_inv * &r).trace()
        + 0.5 * lndet_identity_plus(&sigma_inv, &r)?;
    Ok(RiccatiStep {
        p_prev,
        f,
        det_increment,
        gauss_increment,
    })
}

/// Symmetric PSD square root via eigendecomposition (negative rounding
/// eigenvalues are clamped to zero).
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut scale = DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        scale[(i, i)] = l.max(0.0).sqrt();
    }
    &eig.eigenvectors * scale * eig.eigenvectors.transpose()
}

/// `ln det(I + Σ⁻¹R)` via the eigenvalues of `Σ^{-1/2} R Σ^{-1/2}`.
fn lndet_identity_plus(sigma_inv: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(sigma_inv));
    let mut half = eig.eigenvectors.clone();
    let mut scale = DMatrix::<f64>::zeros(half.nrows(), half.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= 0.0 {
            return Err(Error::Numerical("noise covariance not positive definite".into()));
        }
        scale[(i, i)] = l.sqrt();
    }
    half = &half * scale * eig.eigenvectors.transpose(); // Sigma^{-1/2}
    let y = symmetrize(&(&half * r * &half));
    let mut total = 0.0;
    for &l in nalgebra::SymmetricEigen::new(y).eigenvalues.iter() {
        let arg = 1.0 + l;
        if arg <= 0.0 {
            return Err(Error::Numerical("log-det argument not positive".into()));
        }
        total += arg.ln();
    }
    Ok(total)
}

/// Finite-horizon backward recursion from `P_T = I`.
pub fn riccati_backward(sys: &LinearSystem, beta: f64, horizon: usize) -> Result<RiccatiSolution> {
    sys.validate()?;
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta {beta} must be positive")));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let n = sys.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut p_seq = vec![eye.clone()];
    let mut f_seq = Vec::with_capacity(horizon);
    let mut det = vec![0.0f64];
    let mut gauss = vec![0.0f64];
    for step in 0..horizon {
        let prev = p_seq.last().expect("nonempty");
        let out = riccati_step(sys, beta, prev, step)?;
        det.push(det.last().unwrap() + out.det_increment);
        gauss.push(gauss.last().unwrap() + out.gauss_increment);
        f_seq.push(out.f);
        p_seq.push(out.p_prev);
    }
    // Store in forward time order: p_seq[t] = P_t with P_T last.
    p_seq.reverse();
    f_seq.reverse();
    det.reverse();
    gauss.reverse();
    Ok(RiccatiSolution {
        p_seq,
        f_seq,
        offsets_deterministic: det,
        offsets_gaussian: gauss,
        beta,
        stationary: false,
    })
}

/// Iterate the backward map to its stationary fixed point `P̄`.
pub fn stationary_riccati(sys: &LinearSystem, beta: f64, tol: f64) -> Result<RiccatiSolution> {
    sys.validate()?;
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta {beta} must be positive")));
    }
    let n = sys.state_dim();
    let mut p = DMatrix::<f64>::identity(n, n);
    let cap = 100_000usize;
    for step in 0..cap {
        let out = riccati_step(sys, beta, &p, step)?;
        if out.p_prev.trace() > 1e8 {
            return Err(Error::InfeasibleBeta {
                beta,
                step,
                reason: "stationary recursion diverged".into(),
            });
        }
        let diff = (&out.p_prev - &p).abs().max();
        p = out.p_prev;
        if diff <= tol {
            let fixed = riccati_step(sys, beta, &p, step)?;
            return Ok(RiccatiSolution {
                p_seq: vec![p.clone(), p],
                f_seq: vec![fixed.f],
                offsets_deterministic: vec![fixed.det_increment, 0.0],
                offsets_gaussian: vec![fixed.gauss_increment, 0.0],
                beta,
                stationary: true,
            });
        }
    }
    Err(Error::InfeasibleBeta {
        beta,
        step: cap,
        reason: "no fixed point within the iteration cap".into(),
    })
}

/// Feasibility frontier for the penalty weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaFrontier {
    pub beta0: f64,
    pub beta1: f64,
    pub beta_star: f64,
}

const STATIONARY_TOL: f64 = 1e-11;

fn stationary_feasible(sys: &LinearSystem, beta: f64) -> Option<RiccatiSolution> {
    stationary_riccati(sys, beta, STATIONARY_TOL).ok()
}

/// Definiteness switch `(β/2) K̄ᵀBᵀΣ⁻¹BK̄ − I ≻ 0` with
/// `K̄ = B⁺ F̄⁻¹ P̄ L`; `None` when the stationary solution itself fails.
fn gain_condition(sys: &LinearSystem, beta: f64) -> Option<bool> {
    let sol = stationary_feasible(sys, beta)?;
    let p = sol.stationary_matrix();
    let f_inv = sol.f_seq[0].clone().try_inverse()?;
    let kbar = sys.b_pseudo_inverse() * f_inv * p * sys.closed_loop();
    let sigma_inv = sys.noise_cov.clone().try_inverse()?;
    let m = kbar.transpose() * sys.b_mat.transpose() * sigma_inv * &sys.b_mat * &kbar * (beta / 2.0)
        - DMatrix::<f64>::identity(sys.state_dim(), sys.state_dim());
    Some(min_symmetric_eigenvalue(&m) > 0.0)
}

/// Locate `β₀` (loss of the stationary solution / definiteness of `F`) and
/// `β₁` (the gain condition flipping on) by bisection; `β* = min`.
pub fn beta_star(sys: &LinearSystem, tol: f64) -> Result<BetaFrontier> {
    sys.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    // Bracket the feasibility boundary starting from {1e-4, 10}.
    let mut lo = 1e-4;
    let mut hi = 10.0;
    while stationary_feasible(sys, lo).is_none() {
        lo /= 4.0;
        if lo < 1e-12 {
            return Err(Error::Infeasible(
                "no feasible penalty found down to 1e-12".into(),
            ));
        }
    }
    while stationary_feasible(sys, hi).is_some() {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Infeasible(
                "feasibility bracket expansion failed: feasible beyond 1e6".into(),
            ));
        }
    }
    let (mut flo, mut fhi) = (lo, hi);
    while fhi - flo > tol {
        let mid = 0.5 * (flo + fhi);
        if stationary_feasible(sys, mid).is_some() {
            flo = mid;
        } else {
            fhi = mid;
        }
    }
    let beta0 = 0.5 * (flo + fhi);

    // Gain condition: false for small beta, true approaching beta0 (the gains
    // blow up with P-bar). Treat "stationary infeasible" as past the switch.
    let (mut glo, mut ghi) = (lo, beta0.max(lo * 2.0));
    if gain_condition(sys, glo) == Some(true) {
        // Already on from the smallest bracket; report it there.
        return Ok(BetaFrontier {
            beta0,
            beta1: glo,
            beta_star: glo.min(beta0),
        });
    }
    while ghi - glo > tol {
        let mid = 0.5 * (glo + ghi);
        match gain_condition(sys, mid) {
            Some(false) => glo = mid,
            _ => ghi = mid,
        }
    }
    let beta1 = 0.5 * (glo + ghi);
    Ok(BetaFrontier {
        beta0,
        beta1,
        beta_star: beta0.min(beta1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    Gaussian,
    Deterministic,
}

/// Synthesized attack: per-step gains `Θ_t` (mean `Θ_t x_t`) and injected
/// covariances `V_t` (zero for the deterministic kind).
#[derive(Debug, Clone)]
pub struct GaussianAttack {
    pub gain_seq: Vec<DMatrix<f64>>,
    pub cov_seq: Vec<DMatrix<f64>>,
    pub kind: AttackKind,
    pub beta: f64,
}

impl GaussianAttack {
    /// The no-op attack (zero gain, zero covariance).
    pub fn zero(sys: &LinearSystem) -> Self {
        Self {
            gain_seq: vec![DMatrix::zeros(sys.input_dim(), sys.state_dim())],
            cov_seq: vec![DMatrix::zeros(sys.input_dim(), sys.input_dim())],
            kind: AttackKind::Deterministic,
            beta: 0.0,
        }
    }

    pub fn gain_at(&self, t: usize) -> &DMatrix<f64> {
        &self.gain_seq[t.min(self.gain_seq.len() - 1)]
    }

    pub fn cov_at(&self, t: usize) -> &DMatrix<f64> {
        &self.cov_seq[t.min(self.cov_seq.len() - 1)]
    }
}

/// Build the attack from a Riccati solution:
/// `Θ_t = β B⁺ F_t⁻¹ P_{t+1} L`, `V_t = β B⁺ F_t⁻¹ P_{t+1} Σ (B⁺)ᵀ`.
pub fn synthesize_attack(
    riccati: &RiccatiSolution,
    sys: &LinearSystem,
    kind: AttackKind,
) -> Result<GaussianAttack> {
    let beta = riccati.beta;
    let b_pinv = sys.b_pseudo_inverse();
    let l = sys.closed_loop();
    let m = sys.input_dim();
    let mut gain_seq = Vec::with_capacity(riccati.horizon());
    let mut cov_seq = Vec::with_capacity(riccati.horizon());
    for t in 0..riccati.horizon() {
        let f_inv = riccati.f_seq[t]
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("F not invertible".into()))?;
        let p_next = &riccati.p_seq[t + 1];
        let gain = &b_pinv * &f_inv * p_next * &l * beta;
        let cov = match kind {
            AttackKind::Gaussian => {
                symmetrize(&(&b_pinv * &f_inv * p_next * &sys.noise_cov * b_pinv.transpose() * beta))
            }
            AttackKind::Deterministic => DMatrix::zeros(m, m),
        };
        if min_symmetric_eigenvalue(&cov) < -SYM_TOL {
            return Err(Error::Numerical("attack covariance not PSD".into()));
        }
        gain_seq.push(gain);
        cov_seq.push(cov);
    }
    Ok(GaussianAttack {
        gain_seq,
        cov_seq,
        kind,
        beta,
    })
}

/// Solve the discrete Lyapunov equation `X = M X Mᵀ + Q` by the vectorized
/// direct method.
pub fn discrete_lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let kron = m.kronecker(m);
    let sys = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let x = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Per-step simulation summary across trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    pub mean_x_sq: f64,
    pub mean_z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSimStats {
    pub steps: Vec<StepStats>,
    pub diverged_trials: usize,
    pub trials: usize,
}

/// Simulate the attacked loop from `x₀ = 0`, attack active from `ν`, and
/// report per-step means of `xᵀx` and the per-transition log-likelihood
/// ratio, with 99% normal CIs on `xᵀx`. State blow-ups are flagged, not
/// fatal.
pub fn simulate_linear(
    sys: &LinearSystem,
    attack: &GaussianAttack,
    horizon: usize,
    nu: usize,
    trials: usize,
    seed: u64,
) -> Result<LinearSimStats> {
    sys.validate()?;
    if trials == 0 || horizon == 0 {
        return Err(Error::InvalidInput("trials and horizon must be positive".into()));
    }
    let n = sys.state_dim();
    let l = sys.closed_loop();
    let sigma = &sys.noise_cov;
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("noise covariance not invertible".into()))?;
    let noise_chol = nalgebra::Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Numerical("noise covariance not PD".into()))?
        .l();
    let lndet_sigma = 2.0 * noise_chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();

    // Pre-factor the post-change densities per attack step index.
    struct PostStep {
        gain: DMatrix<f64>,
        sqrt_v: DMatrix<f64>,
        inject: bool,
        cov_inv: DMatrix<f64>,
        lndet_cov: f64,
    }
    let mut post_steps = Vec::with_capacity(attack.gain_seq.len());
    for t in 0..attack.gain_seq.len() {
        let v = attack.cov_at(t);
        let r = &sys.b_mat * v * sys.b_mat.transpose();
        let cov = symmetrize(&(sigma + &r));
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("attacked covariance not PD".into()))?;
        let lndet_cov = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let cov_inv = chol.inverse();
        let sqrt_v = psd_sqrt(v);
        let inject = sqrt_v.abs().max() > 0.0;
        post_steps.push(PostStep {
            gain: attack.gain_at(t).clone(),
            sqrt_v,
            inject,
            cov_inv,
            lndet_cov,
        });
    }

    let per_trial: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, trial));
            let mut x = DVector::<f64>::zeros(n);
            let mut xsq = Vec::with_capacity(horizon);
            let mut zs = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let attacking = t >= nu;
                let step = if attacking {
                    Some(&post_steps[(t - nu).min(post_steps.len() - 1)])
                } else {
                    None
                };
                let mean_nominal = &l * &x;
                let mut x_next = mean_nominal.clone();
                if let Some(ps) = step {
                    x_next += &sys.b_mat * (&ps.gain * &x);
                    if ps.inject {
                        let xi = DVector::from_iterator(
                            ps.sqrt_v.ncols(),
                            (0..ps.sqrt_v.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                        );
                        x_next += &sys.b_mat * (&ps.sqrt_v * xi);
                    }
                }
                let w = DVector::from_iterator(
                    n,
                    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                x_next += &noise_chol * w;

                // Log-likelihood ratio of the realized transition.
                let z = if let Some(ps) = step {
                    let mean_post = &mean_nominal + &sys.b_mat * (&ps.gain * &x);
                    let d_post = &x_next - &mean_post;
                    let d_pre = &x_next - &mean_nominal;
                    let lp_post =
                        -0.5 * ((&ps.cov_inv * &d_post).dot(&d_post) + ps.lndet_cov);
                    let lp_pre = -0.5 * ((&sigma_inv * &d_pre).dot(&d_pre) + lndet_sigma);
                    lp_post - lp_pre
                } else {
                    0.0
                };
                x = x_next;
                let norm_sq = x.norm_squared();
                if !norm_sq.is_finite() || norm_sq > 1e12 {
                    return None;
                }
                xsq.push(norm_sq);
                zs.push(z);
            }
            Some((xsq, zs))
        })
        .collect();

    let diverged = per_trial.iter().filter(|t| t.is_none()).count();
    let kept: Vec<&(Vec<f64>, Vec<f64>)> = per_trial.iter().flatten().collect();
    if kept.is_empty() {
        return Ok(LinearSimStats {
            steps: Vec::new(),
            diverged_trials: diverged,
            trials,
        });
    }
    let k = kept.len() as f64;
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let xs: Vec<f64> = kept.iter().map(|(x, _)| x[t]).collect();
        let zs: Vec<f64> = kept.iter().map(|(_, z)| z[t]).collect();
        let mean_x = xs.iter().sum::<f64>() / k;
        let mean_z = zs.iter().sum::<f64>() / k;
        let var_x = xs.iter().map(|v| (v - mean_x).powi(2)).sum::<f64>() / k.max(1.0);
        let half = 2.576 * (var_x / k).sqrt();
        steps.push(StepStats {
            t,
            mean_x_sq: mean_x,
            mean_z,
            ci_low: mean_x - half,
            ci_high: mean_x + half,
        });
    }
    Ok(LinearSimStats {
        steps,
        diverged_trials: diverged,
        trials,
    })
}

/// Closed-form stationary information rate of a (stationary) attack:
/// the expected Gaussian KL between attacked and nominal transition laws
/// under the attacked stationary state distribution.
pub fn stationary_info_rate_linear(sys: &LinearSystem, attack: &GaussianAttack) -> Result<f64> {
    sys.validate()?;
    let l = sys.closed_loop();
    let theta = attack.gain_at(usize::MAX >> 1);
    let v = attack.cov_at(usize::MAX >> 1);
    let l_att = &l + &sys.b_mat * theta;
    let rho = spectral_radius(&l_att);
    if rho >= 1.0 {
        return Err(Error::UnstableLoop { rho });
    }
    let r = symmetrize(&(&sys.b_mat * v * sys.b_mat.transpose()));
    let q = symmetrize(&(&sys.noise_cov + &r));
    let x = discrete_lyapunov(&l_att, &q)?;
    let sigma_inv = sys
        .noise_cov
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("noise covariance not invertible".into()))?;
    let lndet = lndet_identity_plus(&sigma_inv, &r)?;
    let mean_term = (theta.transpose() * sys.b_mat.transpose() * &sigma_inv * &sys.b_mat * theta
        * &x)
        .trace();
    Ok(0.5 * ((&sigma_inv * &r).trace() - lndet + mean_term))
}

/// Average objective values of the deterministic and Gaussian attacks over a
/// horizon: `(J_d, J_g)` with `J_g ≤ J_d` for every feasible `β > 0`.
pub fn compare_values(sys: &LinearSystem, beta: f64, horizon: usize) -> Result<(f64, f64)> {
    let riccati = riccati_backward(sys, beta, horizon)?;
    let t = horizon as f64;
    let j_d = -beta * riccati.offsets_deterministic[0] / t;
    let j_g = -riccati.offsets_gaussian[0] / t;
    Ok((j_d, j_g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// 2-D example system used across the linear tests.
    pub(crate) fn example_system() -> LinearSystem {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.9, 1.5, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 4.0, 2.0]);
        let k = DMatrix::from_row_slice(2, 2, &[-0.19, -0.26125, -0.3325, -0.4275]);
        let sigma = DMatrix::identity(2, 2);
        LinearSystem::new(a, b, k, sigma).unwrap()
    }

    fn scalar_system(l: f64, sigma: f64) -> LinearSystem {
        // A = 0, B = 1, K = l so that the closed loop is l.
        LinearSystem::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[l]),
            DMatrix::from_row_slice(1, 1, &[sigma]),
        )
        .unwrap()
    }

    #[test]
    fn example_closed_loop_eigenvalues() {
        let sys = example_system();
        let mut eigs: Vec<f64> = sys
            .closed_loop()
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(eigs[0], 0.001, epsilon = 5e-4);
        assert_abs_diff_eq!(eigs[1], 0.134, epsilon = 5e-4);
    }

    #[test]
    fn scalar_stationary_riccati_beta_zero_limit() {
        // beta -> 0: P solves the Lyapunov equation P = 1 + L^2 P = 4/3.
        let sys = scalar_system(0.5, 1.0);
        let sol = stationary_riccati(&sys, 1e-12, 1e-13).unwrap();
        assert_abs_diff_eq!(sol.stationary_matrix()[(0, 0)], 4.0 / 3.0, epsilon = 1e-6);
        // Independent vectorized Lyapunov solve.
        let lyap = discrete_lyapunov(
            &DMatrix::from_row_slice(1, 1, &[0.5]),
            &DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(lyap[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_stationary_riccati_closed_form_root() {
        // L=0.5, Sigma=1, beta=0.1: fixed point solves 0.2 P^2 - 0.95 P + 1 = 0,
        // the backward iteration selecting the smaller root.
        let sys = scalar_system(0.5, 1.0);
        let sol = stationary_riccati(&sys, 0.1, 1e-12).unwrap();
        let root = (0.95 - (0.95f64 * 0.95 - 4.0 * 0.2).sqrt()) / (2.0 * 0.2);
        assert_abs_diff_eq!(sol.stationary_matrix()[(0, 0)], root, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.stationary_matrix()[(0, 0)], 1.5746, epsilon = 1e-4);
    }

    #[test]
    fn backward_sequence_dominates_identity() {
        let sys = example_system();
        let sol = riccati_backward(&sys, 0.25, 100).unwrap();
        for p in &sol.p_seq {
            let shifted = p - DMatrix::<f64>::identity(2, 2);
            assert!(min_symmetric_eigenvalue(&shifted) >= -1e-9, "P_t not >= I");
            assert!((p - p.transpose()).abs().max() <= 1e-10);
        }
        for f in &sol.f_seq {
            assert!(min_symmetric_eigenvalue(f) > 0.0);
        }
    }

    #[test]
    fn stationary_monotone_in_beta() {
        let sys = example_system();
        let mut prev: Option<DMatrix<f64>> = None;
        for beta in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3] {
            let p = stationary_riccati(&sys, beta, 1e-12).unwrap().p_seq[0].clone();
            if let Some(q) = prev {
                assert!(
                    min_symmetric_eigenvalue(&(&p - &q)) >= -1e-8,
                    "P-bar not monotone at beta={beta}"
                );
            }
            prev = Some(p);
        }
    }

    #[test]
    fn frontier_matches_expected_window_on_example() {
        let sys = example_system();
        let frontier = beta_star(&sys, 1e-5).unwrap();
        assert!(
            frontier.beta_star > 0.368 && frontier.beta_star < 0.378,
            "beta* = {} outside the expected window",
            frontier.beta_star
        );
        // Consistency: below the frontier the recursion converges, above it
        // the stationary solution fails or destabilizes.
        assert!(stationary_riccati(&sys, 0.9 * frontier.beta_star, 1e-11).is_ok());
        assert!(stationary_riccati(&sys, 1.1 * frontier.beta_star, 1e-11).is_err());
    }

    #[test]
    fn scalar_frontier_scales_inversely_with_noise() {
        let s1 = scalar_system(0.5, 1.0);
        let s2 = scalar_system(0.5, 2.0);
        let b1 = beta_star(&s1, 1e-7).unwrap().beta_star;
        let b2 = beta_star(&s2, 1e-7).unwrap().beta_star;
        assert_abs_diff_eq!(b1 / 2.0, b2, epsilon = 1e-4);
    }

    #[test]
    fn synthesized_attack_shapes_and_limits() {
        let sys = example_system();
        let sol = stationary_riccati(&sys, 0.25, 1e-12).unwrap();
        let atk = synthesize_attack(&sol, &sys, AttackKind::Gaussian).unwrap();
        // Zero state has zero attack mean by construction of the gain form.
        let x = DVector::<f64>::zeros(2);
        assert_eq!((atk.gain_at(0) * x).abs().max(), 0.0);
        // Covariance symmetric PSD.
        let v = atk.cov_at(0);
        assert!((v - v.transpose()).abs().max() <= 1e-10);
        assert!(min_symmetric_eigenvalue(v) >= -1e-12);
        // Deterministic kind shares the gain and zeroes the covariance.
        let det = synthesize_attack(&sol, &sys, AttackKind::Deterministic).unwrap();
        assert_eq!(det.cov_at(0).abs().max(), 0.0);
        assert!((det.gain_at(0) - atk.gain_at(0)).abs().max() == 0.0);
        // beta -> 0 kills both the gain and the covariance.
        let tiny = stationary_riccati(&sys, 1e-9, 1e-13).unwrap();
        let atk0 = synthesize_attack(&tiny, &sys, AttackKind::Gaussian).unwrap();
        assert!(atk0.gain_at(0).abs().max() < 1e-6);
        assert!(atk0.cov_at(0).abs().max() < 1e-6);
    }

    #[test]
    fn unattacked_simulation_matches_lyapunov_covariance() {
        let sys = example_system();
        let zero = GaussianAttack::zero(&sys);
        let stats = simulate_linear(&sys, &zero, 60, 60, 10_000, 42).unwrap();
        let x_inf = discrete_lyapunov(&sys.closed_loop(), &sys.noise_cov).unwrap();
        let expect = x_inf.trace();
        // Average the tail where the chain has mixed.
        let tail: Vec<f64> = stats.steps[30..].iter().map(|s| s.mean_x_sq).collect();
        let mean_tail = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            (mean_tail - expect).abs() / expect < 0.05,
            "measured {mean_tail} vs Lyapunov {expect}"
        );
        // No attack: z identically zero.
        assert!(stats.steps.iter().all(|s| s.mean_z == 0.0));
        assert_eq!(stats.diverged_trials, 0);
    }

    #[test]
    fn info_rate_zero_for_zero_attack_and_matches_simulated_llr() {
        let sys = example_system();
        let zero = GaussianAttack::zero(&sys);
        assert_abs_diff_eq!(stationary_info_rate_linear(&sys, &zero).unwrap(), 0.0);

        let sol = stationary_riccati(&sys, 0.25, 1e-12).unwrap();
        let atk = synthesize_attack(&sol, &sys, AttackKind::Gaussian).unwrap();
        let rate = stationary_info_rate_linear(&sys, &atk).unwrap();
        let stats = simulate_linear(&sys, &atk, 260, 10, 4000, 7).unwrap();
        let tail: Vec<f64> = stats.steps[60..].iter().map(|s| s.mean_z).collect();
        let mean_tail = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            (mean_tail - rate).abs() / rate < 0.05,
            "empirical {mean_tail} vs closed form {rate}"
        );
    }

    #[test]
    fn gaussian_beats_deterministic_with_vanishing_gap_at_zero() {
        let sys = example_system();
        let (jd, jg) = compare_values(&sys, 0.25, 200).unwrap();
        assert!(jg < jd, "J_g {jg} must undercut J_d {jd}");
        let (jd0, jg0) = compare_values(&sys, 1e-8, 200).unwrap();
        assert!((jd0 - jg0).abs() < 1e-6);
    }

    #[test]
    fn value_gap_matches_logdet_identity() {
        let sys = example_system();
        let beta = 0.25;
        let horizon = 200;
        let riccati = riccati_backward(&sys, beta, horizon).unwrap();
        let (jd, jg) = compare_values(&sys, beta, horizon).unwrap();
        // Recompute the gap from the accumulated log-det terms.
        let sigma_inv = sys.noise_cov.clone().try_inverse().unwrap();
        let mut lndet_sum = 0.0;
        let mut det_offset = 0.0;
        for t in 0..horizon {
            let f_inv = riccati.f_seq[t].clone().try_inverse().unwrap();
            let p_next = &riccati.p_seq[t + 1];
            let r = symmetrize(&(&f_inv * p_next * &sys.noise_cov * beta));
            lndet_sum += 0.5 * lndet_identity_plus(&sigma_inv, &r).unwrap();
            det_offset += beta * (&sys.noise_cov * p_next).trace();
        }
        // The Gaussian offset telescopes to exactly the log-det terms.
        assert_abs_diff_eq!(riccati.offsets_gaussian[0], lndet_sum, epsilon = 1e-8);
        let gap_identity = (lndet_sum - det_offset) / horizon as f64;
        assert_abs_diff_eq!(jd - jg, gap_identity, epsilon = 1e-8);
    }

    #[test]
    fn attacked_spectral_radius_grows_toward_one() {
        let sys = example_system();
        let mut prev = 0.0;
        for beta in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35] {
            let sol = stationary_riccati(&sys, beta, 1e-12).unwrap();
            let atk = synthesize_attack(&sol, &sys, AttackKind::Gaussian).unwrap();
            let l_att = sys.closed_loop() + &sys.b_mat * atk.gain_at(0);
            let rho = spectral_radius(&l_att);
            assert!(rho < 1.0);
            assert!(rho > prev, "spectral radius not increasing at beta={beta}");
            prev = rho;
        }
    }

    #[test]
    fn feasible_betas_simulate_long_horizons_without_divergence() {
        let sys = example_system();
        for beta in [0.1, 0.25, 0.35] {
            let sol = stationary_riccati(&sys, beta, 1e-12).unwrap();
            for f in &sol.f_seq {
                assert!(min_symmetric_eigenvalue(f) > 0.0);
            }
            let atk = synthesize_attack(&sol, &sys, AttackKind::Gaussian).unwrap();
            assert!(min_symmetric_eigenvalue(atk.cov_at(0)) >= -1e-12);
            let stats = simulate_linear(&sys, &atk, 10_000, 0, 1, 5).unwrap();
            assert_eq!(stats.diverged_trials, 0, "beta={beta} diverged");
        }
    }

    #[test]
    fn infeasible_beta_errors_name_the_step() {
        let sys = example_system();
        match stationary_riccati(&sys, 5.0, 1e-11) {
            Err(Error::InfeasibleBeta { beta, .. }) => assert_eq!(beta, 5.0),
            other => panic!("expected infeasible beta, got {other:?}"),
        }
    }
}
