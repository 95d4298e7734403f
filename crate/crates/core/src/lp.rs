//! A small deterministic linear-program solver.
//!
//! Dense two-phase primal simplex with Bland's rule: entering variable is the
//! lowest-index negative reduced cost, leaving row breaks ratio ties toward
//! the lowest basis index. Bland's rule cannot cycle, and the fixed ordering
//! makes every solve bit-for-bit reproducible. Optimality is certified by the
//! dual solution recovered from the final basis; the reported `dual_gap` is
//! the relative complementarity gap `|cᵀx − bᵀy| / (1 + |cᵀx|)`.
//!
//! Problem form: minimize `cᵀx` subject to `A_eq x = b_eq`, `A_ub x ≤ b_ub`,
//! and optionally `x ≥ 0`. Free variables are handled by sign splitting.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub variables: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    /// Relative duality gap; meaningful only when `status == Optimal`.
    pub dual_gap: f64,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

/// Minimize `cᵀx` s.t. `A_eq x = b_eq`, `A_ub x ≤ b_ub`, and `x ≥ 0` when
/// `nonneg` is set. Infeasibility and unboundedness are reported through the
/// status, never as an error.
pub fn solve_lp(
    objective: &[f64],
    eq_constraints: (&[Vec<f64>], &[f64]),
    ineq_constraints: (&[Vec<f64>], &[f64]),
    nonneg: bool,
) -> Result<LpSolution> {
    let n = objective.len();
    let (a_eq, b_eq) = eq_constraints;
    let (a_ub, b_ub) = ineq_constraints;
    if a_eq.len() != b_eq.len() || a_ub.len() != b_ub.len() {
        return Err(Error::DimensionMismatch {
            expected: a_eq.len(),
            got: b_eq.len(),
        });
    }
    for row in a_eq.iter().chain(a_ub.iter()) {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
    }

    // Standard form: split free variables, add slacks for inequalities.
    let n_split = if nonneg { n } else { 2 * n };
    let n_slack = a_ub.len();
    let n_total = n_split + n_slack;
    let m = a_eq.len() + a_ub.len();

    let expand = |row: &[f64], out: &mut Vec<f64>| {
        if nonneg {
            out.extend_from_slice(row);
        } else {
            for &v in row {
                out.push(v);
            }
            for &v in row {
                out.push(-v);
            }
        }
    };

    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    let mut cost = vec![0.0; n_total];
    expand_cost(objective, nonneg, &mut cost);
    for (i, row) in a_eq.iter().enumerate() {
        let mut r = Vec::with_capacity(n_total);
        expand(row, &mut r);
        r.resize(n_total, 0.0);
        a.push(r);
        b.push(b_eq[i]);
    }
    for (i, row) in a_ub.iter().enumerate() {
        let mut r = Vec::with_capacity(n_total);
        expand(row, &mut r);
        r.resize(n_total, 0.0);
        r[n_split + i] = 1.0;
        a.push(r);
        b.push(b_ub[i]);
    }
    // Nonnegative right-hand side.
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
        }
    }

    if m == 0 {
        // No constraints: with x >= 0 the optimum sits at the origin unless
        // some cost direction is improving, which makes the problem unbounded.
        if cost.iter().any(|&c| c < -COST_TOL) {
            return Ok(LpSolution {
                variables: Vec::new(),
                objective: f64::NAN,
                status: LpStatus::Unbounded,
                dual_gap: f64::NAN,
            });
        }
        return Ok(LpSolution {
            variables: vec![0.0; n],
            objective: 0.0,
            status: LpStatus::Optimal,
            dual_gap: 0.0,
        });
    }

    let mut tableau = Tableau::new(a, b, n_total);
    match tableau.two_phase(&cost) {
        PhaseOutcome::Infeasible => Ok(LpSolution {
            variables: Vec::new(),
            objective: f64::NAN,
            status: LpStatus::Infeasible,
            dual_gap: f64::NAN,
        }),
        PhaseOutcome::Unbounded => Ok(LpSolution {
            variables: Vec::new(),
            objective: f64::NAN,
            status: LpStatus::Unbounded,
            dual_gap: f64::NAN,
        }),
        PhaseOutcome::Optimal => {
            let x_std = tableau.solution();
            let variables: Vec<f64> = if nonneg {
                x_std[..n].to_vec()
            } else {
                (0..n).map(|j| x_std[j] - x_std[n + j]).collect()
            };
            let objective_value: f64 = objective
                .iter()
                .zip(variables.iter())
                .map(|(c, x)| c * x)
                .sum();
            let dual_gap = tableau.duality_gap(&cost);
            Ok(LpSolution {
                variables,
                objective: objective_value,
                status: LpStatus::Optimal,
                dual_gap,
            })
        }
    }
}

fn expand_cost(objective: &[f64], nonneg: bool, out: &mut Vec<f64>) {
    if nonneg {
        out[..objective.len()].copy_from_slice(objective);
    } else {
        let n = objective.len();
        for j in 0..n {
            out[j] = objective[j];
            out[n + j] = -objective[j];
        }
    }
}

enum PhaseOutcome {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// Current `B⁻¹A` rows followed by `B⁻¹b` in the last column.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_vars: usize,
    /// Columns of the original standard-form matrix, kept for the dual.
    original: Vec<Vec<f64>>,
    original_b: Vec<f64>,
}

impl Tableau {
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>, n_vars: usize) -> Self {
        let m = a.len();
        let original = a.clone();
        let original_b = b.clone();
        // Append artificial columns and the rhs; basis starts artificial.
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = a[i].clone();
            row.resize(n_vars + m, 0.0);
            row[n_vars + i] = 1.0;
            row.push(b[i]);
            rows.push(row);
        }
        let basis = (0..m).map(|i| n_vars + i).collect();
        Self {
            rows,
            basis,
            n_vars,
            original,
            original_b,
        }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn rhs_col(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len() - 1)
    }

    /// Reduced costs for the given cost vector (artificials get `artif_cost`).
    fn reduced_costs(&self, cost: &[f64], artif_cost: f64) -> Vec<f64> {
        let width = self.rhs_col();
        let cost_of = |j: usize| -> f64 {
            if j < self.n_vars {
                cost[j]
            } else {
                artif_cost
            }
        };
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost_of(j)).collect();
        (0..width)
            .map(|j| {
                let mut rc = cost_of(j);
                for i in 0..self.m() {
                    rc -= cb[i] * self.rows[i][j];
                }
                rc
            })
            .collect()
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let rhs = self.rhs_col();
        let piv = self.rows[row][col];
        for j in 0..=rhs {
            self.rows[row][j] /= piv;
        }
        for i in 0..self.m() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..=rhs {
                self.rows[i][j] -= factor * self.rows[row][j];
            }
        }
        self.basis[row] = col;
    }

    /// One simplex phase over the admissible columns. Returns `None` at
    /// optimality, `Some(false)` on unboundedness.
    fn run(&mut self, cost: &[f64], artif_cost: f64, allow_artificial: bool) -> Option<()> {
        let rhs = self.rhs_col();
        loop {
            let rc = self.reduced_costs(cost, artif_cost);
            let limit = if allow_artificial { rhs } else { self.n_vars };
            // Bland: lowest-index improving column.
            let entering = (0..limit).find(|&j| rc[j] < -COST_TOL);
            let Some(col) = entering else {
                return Some(());
            };
            // Ratio test; ties toward the lowest basis index.
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.m() {
                let coef = self.rows[i][col];
                if coef > PIVOT_TOL {
                    let ratio = self.rows[i][rhs] / coef;
                    let key = (ratio, self.basis[i], i);
                    match best {
                        None => best = Some(key),
                        Some((r, bidx, _)) => {
                            if ratio < r - 1e-12 || ((ratio - r).abs() <= 1e-12 && self.basis[i] < bidx)
                            {
                                best = Some(key);
                            }
                        }
                    }
                }
            }
            match best {
                Some((_, _, row)) => self.pivot(row, col),
                None => return None, // unbounded
            }
        }
    }

    fn two_phase(&mut self, cost: &[f64]) -> PhaseOutcome {
        let rhs = self.rhs_col();
        // Phase 1: minimize the sum of artificials.
        let zero = vec![0.0; self.n_vars];
        if self.run(&zero, 1.0, true).is_none() {
            // Cannot happen: phase-1 objective is bounded below by zero.
            return PhaseOutcome::Infeasible;
        }
        let phase1: f64 = (0..self.m())
            .filter(|&i| self.basis[i] >= self.n_vars)
            .map(|i| self.rows[i][rhs])
            .sum();
        if phase1 > 1e-7 {
            return PhaseOutcome::Infeasible;
        }
        // Drive remaining artificials out or drop redundant rows.
        let mut drop_rows = Vec::new();
        for i in 0..self.m() {
            if self.basis[i] < self.n_vars {
                continue;
            }
            let col = (0..self.n_vars).find(|&j| self.rows[i][j].abs() > PIVOT_TOL);
            match col {
                Some(j) => self.pivot(i, j),
                None => drop_rows.push(i),
            }
        }
        for &i in drop_rows.iter().rev() {
            self.rows.remove(i);
            self.basis.remove(i);
            self.original.remove(i);
            self.original_b.remove(i);
        }
        // Phase 2 over the original columns only.
        match self.run(cost, 0.0, false) {
            Some(()) => PhaseOutcome::Optimal,
            None => PhaseOutcome::Unbounded,
        }
    }

    fn solution(&self) -> Vec<f64> {
        let rhs = self.rhs_col();
        let mut x = vec![0.0; self.n_vars];
        for i in 0..self.m() {
            if self.basis[i] < self.n_vars {
                x[self.basis[i]] = self.rows[i][rhs].max(0.0);
            }
        }
        x
    }

    /// Recover `y` from `Bᵀy = c_B` on the original columns and report the
    /// relative gap `|cᵀx − bᵀy|`.
    fn duality_gap(&self, cost: &[f64]) -> f64 {
        let m = self.m();
        let mut bt = DMatrix::<f64>::zeros(m, m);
        let mut cb = DVector::<f64>::zeros(m);
        for (i, &j) in self.basis.iter().enumerate() {
            cb[i] = cost[j];
            for r in 0..m {
                bt[(i, r)] = self.original[r][j];
            }
        }
        let Some(y) = bt.lu().solve(&cb) else {
            return f64::INFINITY;
        };
        let x = self.solution();
        let primal: f64 = cost.iter().zip(x.iter()).map(|(c, x)| c * x).sum();
        let dual: f64 = self
            .original_b
            .iter()
            .zip(y.iter())
            .map(|(b, y)| b * y)
            .sum();
        (primal - dual).abs() / (1.0 + primal.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn no_eq() -> (Vec<Vec<f64>>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }

    #[test]
    fn lower_bounded_single_variable() {
        // minimize x s.t. x >= 1  <=>  -x <= -1, x >= 0.
        let (eq_a, eq_b) = no_eq();
        let sol = solve_lp(
            &[1.0],
            (&eq_a, &eq_b),
            (&[vec![-1.0]], &[-1.0]),
            true,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.variables[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
        assert!(sol.dual_gap <= 1e-7);
    }

    #[test]
    fn boundary_optimum() {
        // minimize -x-y s.t. x+y <= 1, x,y >= 0 -> objective -1.
        let (eq_a, eq_b) = no_eq();
        let sol = solve_lp(
            &[-1.0, -1.0],
            (&eq_a, &eq_b),
            (&[vec![1.0, 1.0]], &[1.0]),
            true,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -1.0, epsilon = 1e-9);
        assert!(sol.dual_gap <= 1e-7);
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        // x <= -1 and x >= 0.
        let (eq_a, eq_b) = no_eq();
        let sol = solve_lp(&[1.0], (&eq_a, &eq_b), (&[vec![1.0]], &[-1.0]), true).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let (eq_a, eq_b) = no_eq();
        let (ub_a, ub_b) = no_eq();
        let sol = solve_lp(&[-1.0], (&eq_a, &eq_b), (&ub_a, &ub_b), true).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_inequality_mix() {
        // minimize x + 2y s.t. x + y = 1, y <= 0.25, x,y >= 0 -> x=0.75,y=0.25?
        // objective prefers y small: y=0, x=1 -> 1. y bound not binding at optimum.
        let sol = solve_lp(
            &[1.0, 2.0],
            (&[vec![1.0, 1.0]], &[1.0]),
            (&[vec![0.0, 1.0]], &[0.25]),
            true,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.variables[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn free_variables_supported() {
        // minimize x s.t. x >= -3 with x free -> x = -3.
        let (eq_a, eq_b) = no_eq();
        let sol = solve_lp(&[1.0], (&eq_a, &eq_b), (&[vec![-1.0]], &[3.0]), false).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.variables[0], -3.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_vertices_terminate() {
        // Redundant constraints meeting at one vertex.
        let sol = solve_lp(
            &[-1.0, -1.0],
            (&[vec![1.0, 1.0]], &[1.0]),
            (
                &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]],
                &[1.0, 1.0, 1.0, 2.0],
            ),
            true,
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -1.0, epsilon = 1e-9);
    }

    /// Brute-force vertex enumeration oracle for small LPs in `<=` form.
    fn vertex_oracle(c: &[f64], a_ub: &[Vec<f64>], b_ub: &[f64]) -> Option<f64> {
        // Rows: given inequalities + nonnegativity.
        let n = c.len();
        let mut rows = a_ub.to_vec();
        let mut rhs = b_ub.to_vec();
        for j in 0..n {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            rows.push(r);
            rhs.push(0.0);
        }
        let m = rows.len();
        let mut best: Option<f64> = None;
        let idx: Vec<usize> = (0..m).collect();
        fn combos(idx: &[usize], k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            if idx.len() < k {
                return vec![];
            }
            let mut out = Vec::new();
            for (i, &first) in idx.iter().enumerate() {
                for mut rest in combos(&idx[i + 1..], k - 1) {
                    let mut v = vec![first];
                    v.append(&mut rest);
                    out.push(v);
                }
            }
            out
        }
        for combo in combos(&idx, n) {
            let mut mat = DMatrix::<f64>::zeros(n, n);
            let mut bv = DVector::<f64>::zeros(n);
            for (i, &r) in combo.iter().enumerate() {
                for j in 0..n {
                    mat[(i, j)] = rows[r][j];
                }
                bv[i] = rhs[r];
            }
            let Some(x) = mat.lu().solve(&bv) else { continue };
            // Feasibility of the candidate vertex.
            let feasible = rows.iter().zip(rhs.iter()).all(|(row, &b)| {
                row.iter().zip(x.iter()).map(|(a, x)| a * x).sum::<f64>() <= b + 1e-8
            });
            if feasible {
                let val: f64 = c.iter().zip(x.iter()).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(val, |b: f64| b.min(val)));
            }
        }
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = crate::testing::rng_from(99);
        let mut solved = 0;
        for _ in 0..60 {
            let n = rng.gen_range(2..4usize);
            let m = rng.gen_range(2..5usize);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a_ub: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect())
                .collect();
            let b_ub: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
            let (eq_a, eq_b) = no_eq();
            let sol = solve_lp(&c, (&eq_a, &eq_b), (&a_ub, &b_ub), true).unwrap();
            let oracle = vertex_oracle(&c, &a_ub, &b_ub);
            match sol.status {
                LpStatus::Optimal => {
                    let best = oracle.expect("oracle should find a vertex");
                    assert_abs_diff_eq!(sol.objective, best, epsilon = 1e-7);
                    assert!(sol.dual_gap <= 1e-7, "gap {}", sol.dual_gap);
                    solved += 1;
                }
                LpStatus::Unbounded => {
                    // Oracle cannot certify unboundedness; skip.
                }
                LpStatus::Infeasible => panic!("origin is always feasible here"),
            }
        }
        assert!(solved >= 30, "too few optimal instances: {solved}");
    }

    #[test]
    fn primal_feasibility_residuals_small() {
        let mut rng = crate::testing::rng_from(7);
        for _ in 0..40 {
            let n = rng.gen_range(3..6usize);
            // Random transportation-like equality structure with slack room.
            let a_eq: Vec<Vec<f64>> = vec![(0..n).map(|_| rng.gen_range(0.5..1.5)).collect()];
            let b_eq = vec![1.0];
            let a_ub: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let b_ub: Vec<f64> = (0..2).map(|_| rng.gen_range(0.4..1.5)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sol = solve_lp(&c, (&a_eq, &b_eq), (&a_ub, &b_ub), true).unwrap();
            if sol.status != LpStatus::Optimal {
                continue;
            }
            let x = &sol.variables;
            let eq_resid: f64 = (a_eq[0]
                .iter()
                .zip(x.iter())
                .map(|(a, x)| a * x)
                .sum::<f64>()
                - 1.0)
                .abs();
            assert!(eq_resid <= 1e-7);
            for (row, &b) in a_ub.iter().zip(b_ub.iter()) {
                let lhs: f64 = row.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
                assert!(lhs <= b + 1e-7);
            }
            assert!(x.iter().all(|&v| v >= -1e-9));
        }
    }
}
