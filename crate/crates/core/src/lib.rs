//! Stealthy poisoning attacks on the control channel of Markov decision
//! processes, and the detectors that catch them.
//!
//! The adversary sits between a fixed victim policy `π` and the plant: it
//! replaces the chosen action `a` with `ā` before execution, while the victim
//! observes only the state/action stream `(s_t, a_t)`. The crate covers both
//! sides of that game:
//!
//! * [`mdp`] — finite tabular MDPs, exact planning (value iteration, policy
//!   evaluation by direct solve), stationary and discounted state
//!   distributions, and the total-variation regret bound for attacked
//!   policies.
//! * [`attack`] — the adversary's product-space MDP over `(s, a)` pairs plus
//!   the distance-constrained and KL-penalized deterministic attack
//!   synthesizers.
//! * [`info`] — log-likelihood ratios, the information rate `I`, its
//!   upper bound `Ī`, the discounted rate `Ī_γ`, and uniform-ergodicity
//!   error bounds relating the two.
//! * [`lp`] / [`stealth`] — a deterministic simplex solver and the
//!   occupancy-measure linear programs for optimal randomized stealthy
//!   attacks and minimum-achievable information rates.
//! * [`detect`] — CUSUM and window-limited GLR change detectors, threshold
//!   calibration, and Monte Carlo detection-delay estimation.
//! * [`linear`] — linear-Gaussian control-channel attacks: backward Riccati
//!   recursion, the feasibility frontier `β*`, Gaussian vs deterministic
//!   attack values, and closed-form information rates.
//! * [`inventory`] / [`sim`] — the inventory-control benchmark environment
//!   and seeded trajectory simulation with a change point.

pub mod attack;
pub mod detect;
mod error;
pub mod info;
pub mod inventory;
pub mod linear;
pub mod lp;
pub mod mdp;
pub mod sim;
pub mod stealth;
pub mod testing;

pub use error::{Error, Result};
