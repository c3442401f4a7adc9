//! Dense two-phase simplex for small linear programs (a few hundred variables at most).

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// optimize cᵀx subject to the constraints and 0 ≤ x ≤ upper.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub direction: Direction,
    pub constraints: Vec<Constraint>,
    /// Per-variable upper bounds; `f64::INFINITY` for none.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, direction: Direction) -> Self {
        let n = objective.len();
        Self { objective, direction, constraints: Vec::new(), upper: vec![f64::INFINITY; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { coeffs, sense, rhs });
    }

    /// Largest violation of any constraint or bound at `x` (absolute, unscaled).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (v, u) in x.iter().zip(&self.upper) {
            worst = worst.max(-v).max(v - u);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if n == 0 {
            return Err(invalid("lp", "needs at least one variable"));
        }
        if self.upper.len() != n || self.constraints.iter().any(|c| c.coeffs.len() != n) {
            return Err(invalid("lp", "dimension mismatch"));
        }
        let finite = |x: &f64| x.is_finite();
        if !self.objective.iter().all(finite)
            || !self.constraints.iter().all(|c| c.rhs.is_finite() && c.coeffs.iter().all(finite))
            || self.upper.iter().any(|u| u.is_nan() || *u < 0.0)
        {
            return Err(invalid("lp", "coefficients must be finite and bounds non-negative"));
        }
        Ok(())
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-12;
/// Largest relative row violation accepted in the returned solution.
const VERIFY_TOL: f64 = 1e-11;

struct Tableau {
    /// rows × (cols + 1), last column is the right-hand side.
    t: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced costs, with the negated objective value in the last slot.
    d: Vec<f64>,
    /// Columns that may never enter (artificials in phase two).
    barred: Vec<bool>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.t[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for (v, p) in self.t[r * w..(r + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        let f = self.d[pc];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.d[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Rebuild the tableau as B⁻¹[A | b] from the original rows for the current basis,
    /// discarding the rounding accumulated by the pivots.
    fn refactor(&mut self, original: &[f64]) -> Result<()> {
        let (m, w) = (self.rows, self.cols + 1);
        let mut b = vec![0.0; m * m];
        for r in 0..m {
            for (k, &col) in self.basis.iter().enumerate() {
                b[r * m + k] = original[r * w + col];
            }
        }
        let mut t = original.to_vec();
        // Gauss–Jordan on [B | A b] with partial pivoting.
        for k in 0..m {
            let p = (k..m)
                .max_by(|&i, &j| b[i * m + k].abs().total_cmp(&b[j * m + k].abs()))
                .unwrap_or(k);
            if b[p * m + k].abs() < 1e-300 {
                return Err(Error::IllConditioned { violation: f64::INFINITY });
            }
            if p != k {
                for c in 0..m {
                    b.swap(p * m + c, k * m + c);
                }
                for c in 0..w {
                    t.swap(p * w + c, k * w + c);
                }
            }
            let inv = 1.0 / b[k * m + k];
            for c in 0..m {
                b[k * m + c] *= inv;
            }
            for c in 0..w {
                t[k * w + c] *= inv;
            }
            for r in 0..m {
                let f = b[r * m + k];
                if r == k || f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    b[r * m + c] -= f * b[k * m + c];
                }
                for c in 0..w {
                    t[r * w + c] -= f * t[k * w + c];
                }
            }
        }
        // Row k of the result belongs to basis[k]; clean the basic columns exactly.
        for (k, &col) in self.basis.iter().enumerate() {
            for r in 0..m {
                t[r * w + col] = if r == k { 1.0 } else { 0.0 };
            }
        }
        self.t = t;
        Ok(())
    }

    /// Optimize, then refactor and re-optimize until no pivot is needed on a fresh tableau.
    fn optimize_refined(&mut self, original: &[f64], cost: &[f64], limit: usize) -> Result<()> {
        self.optimize(limit)?;
        for _ in 0..4 {
            // A basis that cannot be refactored is kept as is; the caller verifies the result.
            let kept = (self.t.clone(), self.basis.clone());
            if self.refactor(original).is_err() {
                (self.t, self.basis) = kept;
                self.set_costs(cost);
                return Ok(());
            }
            self.set_costs(cost);
            if self.optimize(limit)? == 0 {
                return Ok(());
            }
        }
        Ok(())
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.d = vec![0.0; self.cols + 1];
        self.d[..self.cols].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..=self.cols {
                    self.d[c] -= cb * self.at(r, c);
                }
            }
        }
    }

    /// Minimizes the current costs. Dantzig pricing, switching to Bland's rule after a run of
    /// degenerate pivots.
    fn optimize(&mut self, limit: usize) -> Result<usize> {
        let mut degenerate = 0usize;
        for pivots in 0..limit {
            let bland = degenerate > 50;
            let mut enter = None;
            let mut best = -COST_TOL;
            for c in 0..self.cols {
                if self.barred[c] || self.d[c] >= -COST_TOL {
                    continue;
                }
                if bland {
                    enter = Some(c);
                    break;
                }
                if self.d[c] < best {
                    best = self.d[c];
                    enter = Some(c);
                }
            }
            let Some(pc) = enter else { return Ok(pivots) };
            // Harris ratio test: find the largest step allowed with rows relaxed by a small
            // tolerance, then among rows blocking within that step pivot on the largest entry.
            let mut step = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    step = step.min((self.rhs(r).max(0.0) + HARRIS_TOL) / a);
                }
            }
            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    if ratio <= step {
                        let better = match leave {
                            None => true,
                            Some((lr, _, la)) => {
                                if bland {
                                    self.basis[r] < self.basis[lr]
                                } else {
                                    a > la
                                }
                            }
                        };
                        if better {
                            leave = Some((r, ratio, a));
                        }
                    }
                }
            }
            let leave = leave.map(|(r, ratio, _)| (r, ratio));
            let Some((pr, ratio)) = leave else { return Err(Error::Unbounded) };
            degenerate = if ratio == 0.0 { degenerate + 1 } else { 0 };
            self.pivot(pr, pc);
        }
        Err(Error::IterationLimit(limit))
    }
}

/// Solves a linear program; rows and columns are equilibrated internally.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();

    // Rows: the constraints, then finite upper bounds.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = lp
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.sense, c.rhs))
        .collect();
    for (k, &u) in lp.upper.iter().enumerate() {
        if u.is_finite() {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            rows.push((e, Sense::Le, u));
        }
    }

    // Column scaling x_k = s_k x'_k, then row scaling.
    let mut col_scale = vec![1.0; n];
    for (k, s) in col_scale.iter_mut().enumerate() {
        let big = rows.iter().map(|r| r.0[k].abs()).fold(0.0, f64::max);
        if big > 0.0 {
            *s = 1.0 / big;
        }
    }
    for (coeffs, sense, rhs) in &mut rows {
        for (a, s) in coeffs.iter_mut().zip(&col_scale) {
            *a *= s;
        }
        let big = coeffs.iter().map(|a| a.abs()).fold(0.0, f64::max);
        if big > 0.0 {
            for a in coeffs.iter_mut() {
                *a /= big;
            }
            *rhs /= big;
        }
        if *rhs < 0.0 {
            for a in coeffs.iter_mut() {
                *a = -*a;
            }
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let cols = n + n_slack + n_art;
    let mut tab = Tableau {
        t: vec![0.0; m * (cols + 1)],
        rows: m,
        cols,
        basis: vec![0; m],
        d: Vec::new(),
        barred: vec![false; cols],
    };
    let (mut slack, mut art) = (n, n + n_slack);
    for (r, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        let w = cols + 1;
        tab.t[r * w..r * w + n].copy_from_slice(coeffs);
        tab.t[r * w + cols] = *rhs;
        match sense {
            Sense::Le => {
                tab.t[r * w + slack] = 1.0;
                tab.basis[r] = slack;
                slack += 1;
            }
            Sense::Ge => {
                tab.t[r * w + slack] = -1.0;
                slack += 1;
                tab.t[r * w + art] = 1.0;
                tab.basis[r] = art;
                art += 1;
            }
            Sense::Eq => {
                tab.t[r * w + art] = 1.0;
                tab.basis[r] = art;
                art += 1;
            }
        }
    }
    let limit = 50 * (m + cols) + 1000;
    let original = tab.t.clone();

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(n + n_slack) {
            *c = 1.0;
        }
        tab.set_costs(&cost);
        tab.optimize_refined(&original, &cost, limit)?;
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= n + n_slack)
            .map(|r| tab.rhs(r).abs())
            .sum();
        if infeasibility > FEAS_TOL {
            return Err(Error::Infeasible);
        }
        // Drive remaining (zero-level) artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n + n_slack {
                if let Some(c) = (0..n + n_slack).find(|&c| tab.at(r, c).abs() > PIVOT_TOL) {
                    tab.pivot(r, c);
                }
            }
        }
        for b in tab.barred.iter_mut().skip(n + n_slack) {
            *b = true;
        }
    }

    let sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut cost = vec![0.0; cols];
    for k in 0..n {
        cost[k] = sign * lp.objective[k] * col_scale[k];
    }
    tab.set_costs(&cost);
    tab.optimize_refined(&original, &cost, limit)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0) * col_scale[tab.basis[r]];
        }
    }
    for (v, u) in x.iter_mut().zip(&lp.upper) {
        *v = v.min(*u);
    }
    // Check the answer against the caller's rows: a violated row means the problem was too
    // ill-conditioned for double precision, and its bound must not be trusted. Violations are
    // measured against the largest value the row's left side can take.
    let mut worst = 0.0f64;
    for c in &lp.constraints {
        let lhs: f64 = c.coeffs.iter().zip(&x).map(|(a, v)| a * v).sum();
        let scale: f64 = c
            .coeffs
            .iter()
            .zip(&x)
            .zip(&lp.upper)
            .map(|((a, v), u)| a.abs() * if u.is_finite() { *u } else { v.abs() })
            .sum::<f64>()
            .max(c.rhs.abs());
        let v = match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        if scale > 0.0 {
            worst = worst.max(v / scale);
        }
    }
    if worst > VERIFY_TOL {
        return Err(Error::IllConditioned { violation: worst });
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, x })
}
