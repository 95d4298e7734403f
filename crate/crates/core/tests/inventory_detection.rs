//! Detection behavior on the inventory environment: GLR growth rates and
//! CUSUM delay scaling against the computed information rates.

use mdp_stealth::detect::{
    calibrate_threshold, estimate_detection_delay, trial_seed, DetectorKind, GlrState,
};
use mdp_stealth::info::{information_rate, upper_information_rate};
use mdp_stealth::inventory::{build_inventory, realized_reward_under_replacement, InventoryParams};
use mdp_stealth::mdp::{stationary_distribution, value_iteration, Distribution};
use mdp_stealth::sim::sample_categorical;
use mdp_stealth::stealth::optimal_stealthy_attack;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Setup {
    mdp: mdp_stealth::mdp::TabularMdp,
    victim: mdp_stealth::mdp::Policy,
    adversary: Vec<Vec<Vec<f64>>>,
    alpha: Distribution,
}

fn setup() -> Setup {
    let params = InventoryParams::default();
    let mdp = build_inventory(&params).unwrap();
    let (_, victim) = value_iteration(&mdp, 0.95, 1e-10).unwrap();
    let realized = realized_reward_under_replacement(&params, &mdp);
    let adversary = realized
        .iter()
        .map(|s| {
            s.iter()
                .map(|a| a.iter().map(|&v| -v).collect())
                .collect()
        })
        .collect();
    let alpha = Distribution::uniform(mdp.n_states);
    Setup {
        mdp,
        victim,
        adversary,
        alpha,
    }
}

/// Mean GLR statistic slope after the change, regressed over the window
/// growth region, across trials.
fn glr_slope(setup: &Setup, phi: &mdp_stealth::attack::AttackPolicy, trials: u64) -> f64 {
    let nu = 25usize;
    let fit_from = nu + 40;
    let fit_to = nu + 160; // stay inside the 5*38-step window growth region
    let mu = stationary_distribution(&setup.mdp, &setup.victim).unwrap();
    let sums: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(4242, trial));
            let mut s = sample_categorical(&mut rng, &mu.weights);
            let mut glr = GlrState::new();
            let mut out = Vec::with_capacity(fit_to);
            for t in 0..fit_to {
                let a = sample_categorical(&mut rng, &setup.victim.probs[s]);
                let ab = if t < nu {
                    a
                } else {
                    sample_categorical(&mut rng, &phi.probs[s][a])
                };
                let sp = sample_categorical(&mut rng, &setup.mdp.transition[s][ab]);
                glr.step((s, a, sp), &setup.mdp);
                out.push(glr.statistic);
                s = sp;
            }
            out
        })
        .collect();
    let n = sums.len() as f64;
    let mean_at = |t: usize| sums.iter().map(|v| v[t]).sum::<f64>() / n;
    // Least-squares slope of the mean statistic over the fit range.
    let pts: Vec<(f64, f64)> = (fit_from..fit_to).map(|t| (t as f64, mean_at(t))).collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// At a loose budget the LP optimum is deterministic (its true and upper
/// rates coincide) and the GLR statistic climbs at that shared rate.
#[test]
fn glr_slope_tracks_upper_rate_for_deterministic_lp_attack() {
    let setup = setup();
    let (phi, _, _) = optimal_stealthy_attack(
        &setup.mdp,
        &setup.victim,
        1.0,
        0.95,
        &setup.alpha,
        &setup.adversary,
    )
    .unwrap();
    let i = information_rate(&setup.mdp, &setup.victim, &phi).unwrap();
    let ibar = upper_information_rate(&setup.mdp, &setup.victim, &phi).unwrap();
    assert!((i - ibar).abs() < 1e-9, "loose-budget optimum should be deterministic");
    let slope = glr_slope(&setup, &phi, 100);
    assert!(
        (slope - ibar).abs() / ibar < 0.3,
        "slope {slope} not within 30% of upper rate {ibar}"
    );
}

/// At a tight budget the optimum randomizes; the plug-in GLR estimates the
/// mixture kernel, so its growth follows the true rate I, strictly below
/// the upper rate.
#[test]
fn glr_slope_tracks_true_rate_for_randomized_lp_attack() {
    let setup = setup();
    let (phi, _, _) = optimal_stealthy_attack(
        &setup.mdp,
        &setup.victim,
        0.21,
        0.95,
        &setup.alpha,
        &setup.adversary,
    )
    .unwrap();
    let i = information_rate(&setup.mdp, &setup.victim, &phi).unwrap();
    let ibar = upper_information_rate(&setup.mdp, &setup.victim, &phi).unwrap();
    assert!(ibar > i * 1.5, "tight-budget optimum should randomize heavily");
    let slope = glr_slope(&setup, &phi, 100);
    assert!(
        (slope - i).abs() / i < 0.3,
        "slope {slope} not within 30% of true rate {i}"
    );
}

/// The minimum achievable rate is nonincreasing as the damage requirement
/// relaxes, traced over ten reward ceilings on the inventory instance.
#[test]
fn inventory_min_rate_curve_is_nonincreasing() {
    let setup = setup();
    let h = mdp_stealth::mdp::ergodic_reward(&setup.mdp, &setup.victim).unwrap();
    // Absolutely continuous attacks only drain stock, so the achievable
    // ergodic band is pinned by the victim chain's recurrent class.
    let acts = setup.victim.as_deterministic().unwrap();
    let kernel = mdp_stealth::mdp::induced_kernel(&setup.mdp, &setup.victim);
    let floor = mdp_stealth::mdp::recurrent_class(&kernel)
        .unwrap()
        .into_iter()
        .map(|s| setup.mdp.reward[s][acts[s]])
        .fold(f64::INFINITY, f64::min);
    let mut prev = f64::INFINITY;
    let mut feasible = 0;
    for k in 0..10 {
        let rho = h - (k as f64 / 9.0) * 0.999 * (h - floor);
        match mdp_stealth::stealth::min_info_rate(
            &setup.mdp,
            &setup.victim,
            rho,
            mdp_stealth::stealth::MinRateMode::Ergodic,
        ) {
            Ok((_, rate)) => {
                // Smaller rho = more required damage = larger minimum rate.
                assert!(
                    prev == f64::INFINITY || rate >= prev - 1e-7,
                    "min rate dropped from {prev} to {rate} as rho decreased"
                );
                prev = rate;
                feasible += 1;
            }
            Err(mdp_stealth::Error::LpFailed { .. }) => break,
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(feasible >= 8, "only {feasible} feasible ceilings");
    // No damage required: zero rate.
    let (_, zero) = mdp_stealth::stealth::min_info_rate(
        &setup.mdp,
        &setup.victim,
        h + 1e-9,
        mdp_stealth::stealth::MinRateMode::Ergodic,
    )
    .unwrap();
    assert!(zero <= 1e-9);
}

/// CUSUM delay scales like threshold / drift: delay * I / c within 50% of
/// one for both a deterministic and a randomized inventory attack.
#[test]
fn cusum_delay_scales_with_threshold_over_drift() {
    let setup = setup();
    let calibration = calibrate_threshold(0.01, 1000).unwrap();
    for eps in [0.21, 1.0] {
        let (phi, _, _) = optimal_stealthy_attack(
            &setup.mdp,
            &setup.victim,
            eps,
            0.95,
            &setup.alpha,
            &setup.adversary,
        )
        .unwrap();
        let i = information_rate(&setup.mdp, &setup.victim, &phi).unwrap();
        let report = estimate_detection_delay(
            &setup.mdp,
            &setup.victim,
            &phi,
            DetectorKind::Cusum,
            &calibration,
            25,
            200,
            9,
        )
        .unwrap();
        let normalized = report.mean_delay * i / calibration.threshold;
        assert!(
            (0.5..=1.5).contains(&normalized),
            "eps={eps}: delay*I/c = {normalized} outside [0.5, 1.5]"
        );
    }
}
