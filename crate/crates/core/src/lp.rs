//! Dense two-phase simplex.
//!
//! Problems are stated as `max cᵀx` over rows `aᵀx {≤,≥,=} b` with per-variable
//! bounds, and normalized internally to nonnegative variables. Pricing is
//! Dantzig's largest reduced cost; after a run of degenerate pivots the solver
//! switches to Bland's rule for the remainder of the phase, which cannot cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A maximization problem in solver-facing form.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<LinearConstraint>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest constraint or bound violation of `x`.
    pub residual: f64,
    pub pivots: usize,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `lower ≤ x ≤ upper` (either may be
    /// infinite) and objective coefficient `cost`; returns its column.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(LinearConstraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(Error::Numeric(format!(
                    "variable {j} has bounds [{lo}, {hi}]"
                )));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::Numeric(format!(
                    "variable {j} has a non-finite cost"
                )));
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() || c.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Numeric(format!("constraint {r} has invalid data")));
            }
        }
        Ok(())
    }
}

/// How an original variable maps onto nonnegative solver columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// x = offset + y
    Shifted { col: usize, offset: f64 },
    /// x = offset - y
    Mirrored { col: usize, offset: f64 },
    /// x = y⁺ - y⁻
    Free { pos: usize, neg: usize },
}

/// Solves `problem`, returning the optimum or `Error::Lp` with the terminal
/// status.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;

    // Normalize to y ≥ 0.
    let mut maps = Vec::with_capacity(problem.num_vars());
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    for j in 0..problem.num_vars() {
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        let map = if lo.is_finite() {
            let col = ncols;
            ncols += 1;
            if hi.is_finite() {
                extra_rows.push((vec![(col, 1.0)], Relation::Le, hi - lo));
            }
            VarMap::Shifted { col, offset: lo }
        } else if hi.is_finite() {
            let col = ncols;
            ncols += 1;
            VarMap::Mirrored { col, offset: hi }
        } else {
            let pos = ncols;
            ncols += 2;
            VarMap::Free { pos, neg: pos + 1 }
        };
        maps.push(map);
    }

    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        let c = problem.objective[j];
        match *map {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &problem.constraints {
        let mut dense = vec![0.0; ncols];
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    dense[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    dense[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Free { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        rows.push((dense, c.relation, rhs));
    }
    for (coeffs, rel, rhs) in extra_rows {
        let mut dense = vec![0.0; ncols];
        for (col, a) in coeffs {
            dense[col] = a;
        }
        rows.push((dense, rel, rhs));
    }

    let (status, y, pivots) = Tableau::build(&rows, ncols).solve(&cost);
    if status != LpStatus::Optimal {
        return Err(Error::Lp(status));
    }

    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, offset } => offset + y[col],
            VarMap::Mirrored { col, offset } => offset - y[col],
            VarMap::Free { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = problem.objective_value(&x);
    let residual = problem.residual(&x);
    Ok(LpSolution {
        x,
        objective,
        residual,
        pivots,
    })
}

/// Row-major simplex tableau. The last column holds the right-hand side and
/// the last row the reduced costs of the current phase.
struct Tableau {
    data: Vec<f64>,
    rows: usize,
    width: usize,
    /// structural + slack columns; artificials follow.
    real_cols: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn build(rows: &[(Vec<f64>, Relation, f64)], ncols: usize) -> Tableau {
        let m = rows.len();
        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        // orient every row to a nonnegative rhs first
        let oriented: Vec<(Vec<f64>, Relation, f64)> = rows
            .iter()
            .map(|(a, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *rel, *b)
                }
            })
            .collect();
        let num_art = oriented.iter().filter(|r| r.1 != Relation::Le).count();
        let real_cols = ncols + num_slack;
        let width = real_cols + num_art + 1;
        let mut data = vec![0.0; (m + 1) * width];
        let mut basis = vec![0usize; m];
        let mut slack = ncols;
        let mut art = real_cols;
        for (r, (a, rel, b)) in oriented.iter().enumerate() {
            let row = &mut data[r * width..(r + 1) * width];
            row[..ncols].copy_from_slice(a);
            row[width - 1] = *b;
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[r] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[r] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[r] = art;
                    art += 1;
                }
            }
        }
        Tableau {
            data,
            rows: m,
            width,
            real_cols,
            basis,
            pivots: 0,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    /// Loads the objective row for maximizing `cost · columns`.
    fn load_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.rows * w;
        for c in 0..w {
            self.data[obj + c] = if c < cost.len() { -cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] += cb * self.data[r * w + c];
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..w {
            self.data[pr * w + c] *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Runs simplex iterations over columns `< allowed`.
    fn iterate(&mut self, allowed: usize, limit: usize) -> LpStatus {
        let obj = self.rows;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.pivots >= limit {
                return LpStatus::IterationLimit;
            }
            let entering = if bland {
                (0..allowed).find(|&c| self.at(obj, c) < -COST_TOL)
            } else {
                let mut best = None;
                let mut best_val = -COST_TOL;
                for c in 0..allowed {
                    let v = self.at(obj, c);
                    if v < best_val {
                        best_val = v;
                        best = Some(c);
                    }
                }
                best
            };
            let Some(pc) = entering else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-12
                                || (ratio <= bv + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((pr, ratio)) = leave else {
                return LpStatus::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }

    fn solve(mut self, cost: &[f64]) -> (LpStatus, Vec<f64>, usize) {
        let limit = 50_000 + 200 * (self.rows + self.width);
        let total_cols = self.width - 1;

        if total_cols > self.real_cols {
            // phase 1: maximize -Σ artificials
            let mut phase1 = vec![0.0; total_cols];
            for c in self.real_cols..total_cols {
                phase1[c] = -1.0;
            }
            self.load_objective(&phase1);
            let status = self.iterate(total_cols, limit);
            if status == LpStatus::IterationLimit {
                return (status, Vec::new(), self.pivots);
            }
            let infeasibility = -self.at(self.rows, self.width - 1);
            let scale = 1.0
                + (0..self.rows)
                    .map(|r| self.rhs(r).abs())
                    .fold(0.0f64, f64::max);
            if infeasibility > 1e-9 * scale {
                return (LpStatus::Infeasible, Vec::new(), self.pivots);
            }
            // drive zero-valued artificials out of the basis where possible
            for r in 0..self.rows {
                if self.basis[r] >= self.real_cols {
                    if let Some(c) = (0..self.real_cols).find(|&c| self.at(r, c).abs() > 1e-7) {
                        self.pivot(r, c);
                    }
                }
            }
        }

        self.load_objective(cost);
        let status = self.iterate(self.real_cols, limit);
        let mut y = vec![0.0; cost.len()];
        for r in 0..self.rows {
            let b = self.basis[r];
            if b < cost.len() {
                y[b] = self.rhs(r).max(0.0);
            }
        }
        (status, y, self.pivots)
    }
}
