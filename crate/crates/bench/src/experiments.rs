//! Experiment pipelines behind the CLI subcommands.
//!
//! Every pipeline is a pure function of its resolved config: trials draw
//! their seeds from `trial_seed(seed, index)` and all aggregation runs in a
//! fixed order, so re-running a config produces byte-identical CSV and JSON
//! artifacts regardless of thread count.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::Path;

use anyhow::Context;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mdp_stealth::attack::{
    attack_policy_value, attacked_policy_value, solve_constrained_attack, solve_penalized_attack,
    AttackPolicy, AttackProblem,
};
use mdp_stealth::detect::{
    calibrate_threshold, estimate_detection_delay, trial_seed, CusumState, DetectorCalibration,
    DetectorKind, DelayReport, GlrState,
};
use mdp_stealth::info::{
    attacked_support_chain, discounted_information_rate, fit_mixing_bound, info_rate_error_bound,
    information_rate, log_likelihood_ratio, upper_information_rate,
};
use mdp_stealth::inventory::{build_inventory, realized_reward_under_replacement, InventoryParams};
use mdp_stealth::linear::{
    beta_star, discrete_lyapunov, simulate_linear, spectral_radius, stationary_info_rate_linear,
    stationary_riccati, synthesize_attack, AttackKind, LinearSystem,
};
use mdp_stealth::mdp::{
    stationary_distribution, value_iteration, Distribution, Policy, TabularMdp,
};
use mdp_stealth::sim::sample_categorical;
use mdp_stealth::stealth::{min_info_rate, optimal_stealthy_attack, MinRateMode};

use crate::config::{
    ExperimentConfig, InventoryDetectConfig, InventoryGammaSweepConfig, InventoryTradeoffConfig,
    LinearAttackConfig, LinearFrontierConfig, Manifest, REPORT_SCHEMA,
};

/// Run the configured experiment, writing its report bundle under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<Manifest> {
    let files = match config {
        ExperimentConfig::InventoryTradeoff(c) => inventory_tradeoff(c)?,
        ExperimentConfig::InventoryDetect(c) => inventory_detect(c)?,
        ExperimentConfig::InventoryGammaSweep(c) => inventory_gamma_sweep(c)?,
        ExperimentConfig::LinearAttack(c) => linear_attack(c)?,
        ExperimentConfig::LinearFrontier(c) => linear_frontier(c)?,
    };
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut names = Vec::new();
    for (name, content) in &files {
        fs::write(out_dir.join(name), content)
            .with_context(|| format!("writing {name}"))?;
        names.push(name.clone());
    }
    let manifest = Manifest {
        schema: REPORT_SCHEMA.to_string(),
        experiment: config.name().to_string(),
        config_hash: config.config_hash(),
        seed: config.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        files: names,
    };
    let manifest_text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(out_dir.join("manifest.json"), manifest_text)?;
    Ok(manifest)
}

/// Shared inventory setup: environment, optimal victim policy, realized
/// rewards under replacement, and the adversary reward (their negation).
pub struct InventoryWorkbench {
    pub params: InventoryParams,
    pub mdp: TabularMdp,
    pub victim: Policy,
    /// Realized per-triple victim reward `ρ[s][a][ā]`.
    pub realized: Vec<Vec<Vec<f64>>>,
    /// Adversary reward `r̄ = −ρ`.
    pub adversary: Vec<Vec<Vec<f64>>>,
    pub alpha: Distribution,
    pub gamma: f64,
    pub unattacked_value: f64,
}

impl InventoryWorkbench {
    pub fn build(params: &InventoryParams, gamma: f64) -> anyhow::Result<Self> {
        let mdp = build_inventory(params)?;
        let (_, victim) = value_iteration(&mdp, gamma, 1e-10)?;
        let realized = realized_reward_under_replacement(params, &mdp);
        let adversary: Vec<Vec<Vec<f64>>> = realized
            .iter()
            .map(|s| s.iter().map(|a| a.iter().map(|&v| -v).collect()).collect())
            .collect();
        let alpha = Distribution::uniform(mdp.n_states);
        let identity = AttackPolicy::identity(mdp.n_states, mdp.n_actions);
        let v0 = attacked_policy_value(&mdp, &victim, &identity, &realized, gamma)?;
        let unattacked_value = mean(&v0);
        Ok(Self {
            params: params.clone(),
            mdp,
            victim,
            realized,
            adversary,
            alpha,
            gamma,
            unattacked_value,
        })
    }

    /// Victim's realized discounted value under the attack, uniform-averaged.
    pub fn victim_value(&self, attack: &AttackPolicy) -> anyhow::Result<f64> {
        let v = attacked_policy_value(&self.mdp, &self.victim, attack, &self.realized, self.gamma)?;
        Ok(mean(&v))
    }

    /// Adversary's discounted value, `α·π`-weighted.
    pub fn adversary_value(&self, attack: &AttackPolicy, gamma_bar: f64) -> anyhow::Result<f64> {
        let v = attack_policy_value(&self.mdp, &self.victim, attack, &self.adversary, gamma_bar)?;
        let na = self.mdp.n_actions;
        let mut total = 0.0;
        for s in 0..self.mdp.n_states {
            for a in 0..na {
                total += self.alpha.weights[s] * self.victim.probs[s][a] * v[s * na + a];
            }
        }
        Ok(total)
    }

    pub fn rates(&self, attack: &AttackPolicy, gamma_bar: f64) -> anyhow::Result<(f64, f64, f64)> {
        let i = information_rate(&self.mdp, &self.victim, attack)?;
        let ibar = upper_information_rate(&self.mdp, &self.victim, attack)?;
        let (ig, _) =
            discounted_information_rate(&self.mdp, &self.victim, attack, gamma_bar, &self.alpha)?;
        Ok((i, ibar, ig))
    }

    /// Monte Carlo estimate of the victim's realized discounted value with
    /// the attack active from the start (99% normal CI).
    pub fn mc_victim_value(
        &self,
        attack: &AttackPolicy,
        trials: usize,
        horizon: usize,
        seed: u64,
    ) -> (f64, f64, f64) {
        let totals: Vec<f64> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, trial));
                let mut s = sample_categorical(&mut rng, &self.mdp.initial_dist);
                let mut disc = 1.0;
                let mut total = 0.0;
                for _ in 0..horizon {
                    let a = sample_categorical(&mut rng, &self.victim.probs[s]);
                    let ab = sample_categorical(&mut rng, &attack.probs[s][a]);
                    total += disc * self.realized[s][a][ab];
                    disc *= self.gamma;
                    s = sample_categorical(&mut rng, &self.mdp.transition[s][ab]);
                }
                total
            })
            .collect();
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let half = 2.576 * (var / n).sqrt();
        (mean, mean - half, mean + half)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.12e}")
    }
}

// ---------------------------------------------------------------------------
// inventory-tradeoff
// ---------------------------------------------------------------------------

fn inventory_tradeoff(cfg: &InventoryTradeoffConfig) -> anyhow::Result<Vec<(String, String)>> {
    let bench = InventoryWorkbench::build(&cfg.inventory, cfg.gamma)?;
    let mut csv = String::from(
        "attack_kind,parameter,adversary_value,victim_value,victim_value_normalized,\
         mc_victim_value,mc_ci99_low,mc_ci99_high,info_rate,upper_info_rate,\
         discounted_info_rate,status\n",
    );
    let mut row_seed = cfg.seed;

    let push_row = |kind: &str, parameter: f64, attack: anyhow::Result<AttackPolicy>,
                        csv: &mut String, row_seed: &mut u64|
     -> anyhow::Result<Option<(f64, f64, f64)>> {
        *row_seed = row_seed.wrapping_add(1);
        match attack {
            Ok(phi) => {
                let adv = bench.adversary_value(&phi, cfg.gamma_bar)?;
                let vv = bench.victim_value(&phi)?;
                let (i, ibar, ig) = bench.rates(&phi, cfg.gamma_bar)?;
                let (mc, lo, hi) =
                    bench.mc_victim_value(&phi, cfg.mc_trials, cfg.mc_horizon, *row_seed);
                writeln!(
                    csv,
                    "{kind},{},{},{},{},{},{},{},{},{},{},ok",
                    fmt_f(parameter),
                    fmt_f(adv),
                    fmt_f(vv),
                    fmt_f(vv / bench.unattacked_value),
                    fmt_f(mc),
                    fmt_f(lo),
                    fmt_f(hi),
                    fmt_f(i),
                    fmt_f(ibar),
                    fmt_f(ig)
                )?;
                Ok(Some((vv, i, ig)))
            }
            Err(e) => {
                writeln!(
                    csv,
                    "{kind},{},nan,nan,nan,nan,nan,nan,nan,nan,nan,error: {e}",
                    fmt_f(parameter)
                )?;
                Ok(None)
            }
        }
    };

    // Distance-constrained deterministic attacks, and the LP attack matched
    // to each one's discounted information rate.
    let mut matched_points = Vec::new();
    for &eps in &cfg.constrained_epsilons {
        let problem = AttackProblem::new(&bench.mdp, bench.victim.clone(), cfg.gamma_bar)
            .with_adversary_reward(bench.adversary.clone())
            .with_epsilon(eps);
        let phi = solve_constrained_attack(&bench.mdp, &problem).map_err(anyhow::Error::from);
        if let Some((_, _, ig)) = push_row("constrained", eps, phi, &mut csv, &mut row_seed)? {
            matched_points.push(ig);
        }
    }
    for &eps in &cfg.lp_epsilons {
        let phi = optimal_stealthy_attack(
            &bench.mdp,
            &bench.victim,
            eps,
            cfg.gamma_bar,
            &bench.alpha,
            &bench.adversary,
        )
        .map(|(phi, _, _)| phi)
        .map_err(anyhow::Error::from);
        push_row("lp", eps, phi, &mut csv, &mut row_seed)?;
    }
    for &eps in &matched_points {
        let phi = optimal_stealthy_attack(
            &bench.mdp,
            &bench.victim,
            eps,
            cfg.gamma_bar,
            &bench.alpha,
            &bench.adversary,
        )
        .map(|(phi, _, _)| phi)
        .map_err(anyhow::Error::from);
        push_row("lp_matched", eps, phi, &mut csv, &mut row_seed)?;
    }
    for &beta in &cfg.penalized_betas {
        let problem = AttackProblem::new(&bench.mdp, bench.victim.clone(), cfg.gamma_bar)
            .with_adversary_reward(bench.adversary.clone())
            .with_penalty(beta);
        let phi = solve_penalized_attack(&bench.mdp, &problem).map_err(anyhow::Error::from);
        push_row("penalized", beta, phi, &mut csv, &mut row_seed)?;
    }

    // Stealth sweep: the damage-constrained minimum-rate curve next to the
    // budget-constrained LP curve, in one schema.
    let mut sweep = String::from("mode,epsilon_or_rho,adversary_value,victim_value,i_bar,status\n");
    for &eps in &cfg.lp_epsilons {
        match optimal_stealthy_attack(
            &bench.mdp,
            &bench.victim,
            eps,
            cfg.gamma_bar,
            &bench.alpha,
            &bench.adversary,
        ) {
            Ok((phi, _, adv)) => {
                let vv = bench.victim_value(&phi)?;
                let ibar = upper_information_rate(&bench.mdp, &bench.victim, &phi)?;
                writeln!(
                    sweep,
                    "epsilon,{},{},{},{},ok",
                    fmt_f(eps),
                    fmt_f(adv),
                    fmt_f(vv),
                    fmt_f(ibar)
                )?;
            }
            Err(e) => writeln!(sweep, "epsilon,{},nan,nan,nan,error: {e}", fmt_f(eps))?,
        }
    }
    let h_pi = mdp_stealth::mdp::ergodic_reward(&bench.mdp, &bench.victim)?;
    let acts = bench.victim.as_deterministic().expect("optimal victim policy is deterministic");
    let victim_kernel = mdp_stealth::mdp::induced_kernel(&bench.mdp, &bench.victim);
    let reward_floor = mdp_stealth::mdp::recurrent_class(&victim_kernel)
        .map_err(anyhow::Error::from)?
        .into_iter()
        .map(|s| bench.mdp.reward[s][acts[s]])
        .fold(f64::INFINITY, f64::min);
    for k in 0..10 {
        let rho = h_pi - (k as f64 / 9.0) * 0.999 * (h_pi - reward_floor);
        match min_info_rate(&bench.mdp, &bench.victim, rho, MinRateMode::Ergodic) {
            Ok((phi, rate)) => {
                let vv = bench.victim_value(&phi)?;
                writeln!(
                    sweep,
                    "rho,{},{},{},{},ok",
                    fmt_f(rho),
                    fmt_f(-vv),
                    fmt_f(vv),
                    fmt_f(rate)
                )?;
            }
            Err(e) => writeln!(sweep, "rho,{},nan,nan,nan,error: {e}", fmt_f(rho))?,
        }
    }

    let summary = serde_json::json!({
        "unattacked_value": bench.unattacked_value,
        "unattacked_ergodic_reward": h_pi,
        "victim_policy": bench.victim.as_deterministic(),
    });
    Ok(vec![
        ("tradeoff.csv".to_string(), csv),
        ("stealth_sweep.csv".to_string(), sweep),
        (
            "tradeoff_summary.json".to_string(),
            serde_json::to_string_pretty(&summary)? + "\n",
        ),
    ])
}

// ---------------------------------------------------------------------------
// inventory-detect
// ---------------------------------------------------------------------------

/// The three attack policies of the detection experiment.
pub fn detect_attacks(
    bench: &InventoryWorkbench,
    cfg: &InventoryDetectConfig,
) -> anyhow::Result<Vec<(&'static str, AttackPolicy)>> {
    let constrained = solve_constrained_attack(
        &bench.mdp,
        &AttackProblem::new(&bench.mdp, bench.victim.clone(), cfg.gamma_bar)
            .with_adversary_reward(bench.adversary.clone())
            .with_epsilon(cfg.constrained_epsilon),
    )?;
    let (lp, _, _) = optimal_stealthy_attack(
        &bench.mdp,
        &bench.victim,
        cfg.lp_epsilon,
        cfg.gamma_bar,
        &bench.alpha,
        &bench.adversary,
    )?;
    let penalized = solve_penalized_attack(
        &bench.mdp,
        &AttackProblem::new(&bench.mdp, bench.victim.clone(), cfg.gamma_bar)
            .with_adversary_reward(bench.adversary.clone())
            .with_penalty(cfg.penalized_beta),
    )?;
    Ok(vec![
        ("constrained", constrained),
        ("lp", lp),
        ("penalized", penalized),
    ])
}

fn inventory_detect(cfg: &InventoryDetectConfig) -> anyhow::Result<Vec<(String, String)>> {
    let bench = InventoryWorkbench::build(&cfg.inventory, cfg.gamma)?;
    let attacks = detect_attacks(&bench, cfg)?;
    let calibration = calibrate_threshold(cfg.delta, cfg.horizon_m)?;

    // Detection delays per attack under both detectors.
    let mut delays = serde_json::Map::new();
    let mut cusum_means = std::collections::BTreeMap::new();
    for (name, phi) in &attacks {
        let cusum = estimate_detection_delay(
            &bench.mdp,
            &bench.victim,
            phi,
            DetectorKind::Cusum,
            &calibration,
            cfg.change_time,
            cfg.trials,
            cfg.seed,
        )?;
        let glr = estimate_detection_delay(
            &bench.mdp,
            &bench.victim,
            phi,
            DetectorKind::Glr,
            &calibration,
            cfg.change_time,
            cfg.trials.min(100),
            cfg.seed.wrapping_add(1),
        )?;
        cusum_means.insert(*name, cusum.mean_delay);
        delays.insert(
            (*name).to_string(),
            serde_json::json!({
                "cusum": report_json(&cusum),
                "glr": report_json(&glr),
                "info_rate": information_rate(&bench.mdp, &bench.victim, phi)?,
                "upper_info_rate": upper_information_rate(&bench.mdp, &bench.victim, phi)?,
            }),
        );
    }
    let ratio = cusum_means["lp"] / cusum_means["constrained"];
    delays.insert(
        "ratio_lp_over_constrained".to_string(),
        serde_json::json!(ratio),
    );

    // Per-trial statistic traces.
    let mut traces = String::from("attack_kind,trial,t,cusum,glr\n");
    let horizon = cfg.change_time + cfg.trace_steps;
    for (name, phi) in &attacks {
        let llr = log_likelihood_ratio(&bench.mdp, phi)?;
        let mu = stationary_distribution(&bench.mdp, &bench.victim)?;
        let rows: Vec<String> = (0..cfg.trace_trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(
                    cfg.seed.wrapping_add(2),
                    trial,
                ));
                let mut s = sample_categorical(&mut rng, &mu.weights);
                let mut cusum = CusumState::new();
                let mut glr = GlrState::new();
                let mut out = String::new();
                for t in 0..horizon {
                    let a = sample_categorical(&mut rng, &bench.victim.probs[s]);
                    let ab = if t < cfg.change_time {
                        a
                    } else {
                        sample_categorical(&mut rng, &phi.probs[s][a])
                    };
                    let sp = sample_categorical(&mut rng, &bench.mdp.transition[s][ab]);
                    cusum = cusum.step(llr.z(s, a, sp));
                    glr.step((s, a, sp), &bench.mdp);
                    writeln!(
                        out,
                        "{name},{trial},{t},{},{}",
                        fmt_f(cusum.statistic),
                        fmt_f(glr.statistic)
                    )
                    .expect("string write");
                    s = sp;
                }
                out
            })
            .collect();
        for row in rows {
            traces.push_str(&row);
        }
    }

    let delays_text = serde_json::to_string_pretty(&serde_json::Value::Object(delays))? + "\n";
    let calibration_text = serde_json::to_string_pretty(&calibration)? + "\n";
    Ok(vec![
        ("delays.json".to_string(), delays_text),
        ("traces.csv".to_string(), traces),
        ("calibration.json".to_string(), calibration_text),
    ])
}

fn report_json(report: &DelayReport) -> serde_json::Value {
    serde_json::json!({
        "trials": report.trials,
        "detected": report.detected,
        "undetected": report.undetected,
        "mean_delay": report.mean_delay,
        "ci99_low": report.ci99_low,
        "ci99_high": report.ci99_high,
    })
}

// ---------------------------------------------------------------------------
// inventory-gamma-sweep
// ---------------------------------------------------------------------------

fn inventory_gamma_sweep(cfg: &InventoryGammaSweepConfig) -> anyhow::Result<Vec<(String, String)>> {
    let bench = InventoryWorkbench::build(&cfg.inventory, cfg.gamma)?;
    let mut csv = String::from("epsilon,gamma_bar,i,i_bar,i_bar_gamma,gap,status\n");
    let gamma_max = cfg
        .gamma_bars
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mixing_entries = Vec::new();
    for &eps in &cfg.epsilons {
        for &gb in &cfg.gamma_bars {
            match optimal_stealthy_attack(
                &bench.mdp,
                &bench.victim,
                eps,
                gb,
                &bench.alpha,
                &bench.adversary,
            ) {
                Ok((phi, _, _)) => {
                    let i = information_rate(&bench.mdp, &bench.victim, &phi)?;
                    let ibar = upper_information_rate(&bench.mdp, &bench.victim, &phi)?;
                    let (ig, _) = discounted_information_rate(
                        &bench.mdp,
                        &bench.victim,
                        &phi,
                        gb,
                        &bench.alpha,
                    )?;
                    writeln!(
                        csv,
                        "{},{},{},{},{},{},ok",
                        fmt_f(eps),
                        fmt_f(gb),
                        fmt_f(i),
                        fmt_f(ibar),
                        fmt_f(ig),
                        fmt_f((ibar - ig).abs())
                    )?;
                    if (gb - gamma_max).abs() < 1e-15 {
                        let (_, kernel, costs) =
                            attacked_support_chain(&bench.mdp, &bench.victim, &phi)?;
                        let fit = fit_mixing_bound(&kernel, &costs, cfg.mixing_horizon)?;
                        let bound = info_rate_error_bound(&fit, gb)?;
                        mixing_entries.push(serde_json::json!({
                            "epsilon": eps,
                            "gamma_bar": gb,
                            "l_const": fit.l_const,
                            "theta": fit.theta,
                            "d_star": fit.d_star,
                            "gamma0": fit.gamma0,
                            "bound": bound,
                            "gap": (ibar - ig).abs(),
                            "gap_within_bound": (ibar - ig).abs() <= bound,
                        }));
                    }
                }
                Err(e) => {
                    writeln!(
                        csv,
                        "{},{},nan,nan,nan,nan,error: {e}",
                        fmt_f(eps),
                        fmt_f(gb)
                    )?;
                }
            }
        }
    }
    let mixing_text =
        serde_json::to_string_pretty(&serde_json::Value::Array(mixing_entries))? + "\n";
    Ok(vec![
        ("gamma_sweep.csv".to_string(), csv),
        ("mixing.json".to_string(), mixing_text),
    ])
}

// ---------------------------------------------------------------------------
// linear-attack
// ---------------------------------------------------------------------------

fn linear_attack(cfg: &LinearAttackConfig) -> anyhow::Result<Vec<(String, String)>> {
    let sys = LinearSystem::from_spec(&cfg.system)?;
    let mut csv = String::from("beta,t,mean_x_sq,mean_z,ci_low,ci_high,status\n");
    let mut values = Vec::new();
    for &beta in &cfg.betas {
        match stationary_riccati(&sys, beta, 1e-11)
            .and_then(|r| synthesize_attack(&r, &sys, AttackKind::Gaussian))
        {
            Ok(attack) => {
                let stats = simulate_linear(
                    &sys,
                    &attack,
                    cfg.horizon,
                    cfg.change_time,
                    cfg.trials,
                    cfg.seed,
                )?;
                for step in &stats.steps {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{},ok",
                        fmt_f(beta),
                        step.t,
                        fmt_f(step.mean_x_sq),
                        fmt_f(step.mean_z),
                        fmt_f(step.ci_low),
                        fmt_f(step.ci_high)
                    )?;
                }
                let (jd, jg) = mdp_stealth::linear::compare_values(&sys, beta, 200)?;
                values.push(serde_json::json!({
                    "beta": beta,
                    "j_deterministic": jd,
                    "j_gaussian": jg,
                    "diverged_trials": stats.diverged_trials,
                }));
            }
            Err(e) => {
                writeln!(csv, "{},nan,nan,nan,nan,nan,error: {e}", fmt_f(beta))?;
            }
        }
    }
    let values_text = serde_json::to_string_pretty(&serde_json::Value::Array(values))? + "\n";
    Ok(vec![
        ("linear_attack.csv".to_string(), csv),
        ("attack_values.json".to_string(), values_text),
    ])
}

// ---------------------------------------------------------------------------
// linear-frontier
// ---------------------------------------------------------------------------

fn linear_frontier(cfg: &LinearFrontierConfig) -> anyhow::Result<Vec<(String, String)>> {
    let sys = LinearSystem::from_spec(&cfg.system)?;
    let frontier = beta_star(&sys, cfg.bisection_tol)?;
    let mut csv = String::from("beta,info_rate,stationary_mean_x_sq,spectral_radius,status\n");
    for &beta in &cfg.betas {
        match stationary_riccati(&sys, beta, 1e-11)
            .and_then(|r| synthesize_attack(&r, &sys, AttackKind::Gaussian))
        {
            Ok(attack) => {
                let rate = stationary_info_rate_linear(&sys, &attack)?;
                let l_att = sys.closed_loop() + &sys.b_mat * attack.gain_at(0);
                let r = &sys.b_mat * attack.cov_at(0) * sys.b_mat.transpose();
                let x = discrete_lyapunov(&l_att, &(&sys.noise_cov + r))?;
                writeln!(
                    csv,
                    "{},{},{},{},ok",
                    fmt_f(beta),
                    fmt_f(rate),
                    fmt_f(x.trace()),
                    fmt_f(spectral_radius(&l_att))
                )?;
            }
            Err(e) => {
                writeln!(csv, "{},nan,nan,nan,error: {e}", fmt_f(beta))?;
            }
        }
    }
    let frontier_text = serde_json::to_string_pretty(&frontier)? + "\n";
    Ok(vec![
        ("frontier.csv".to_string(), csv),
        ("frontier.json".to_string(), frontier_text),
    ])
}

/// Convenience wrapper for detector thresholds reused by tests.
pub fn detect_calibration(cfg: &InventoryDetectConfig) -> anyhow::Result<DetectorCalibration> {
    Ok(calibrate_threshold(cfg.delta, cfg.horizon_m)?)
}
