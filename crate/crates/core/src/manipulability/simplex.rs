//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are small (a few hundred columns at most), so a full tableau is
//! simpler and plenty fast. Bland's smallest-index rule makes cycling
//! impossible, which matters because the certificate LP is heavily
//! degenerate.

use crate::error::{Error, Result};

/// `Σ coef·x_var = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Minimise `objective · x` subject to equality rows, `x ≥ 0` and optional
/// per-variable upper bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<LinearConstraint>,
    pub upper_bounds: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub optimum: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 50_000;

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            equalities: Vec::new(),
            upper_bounds: vec![None; num_vars],
        }
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint { terms, rhs });
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.equalities {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * x[v]).sum();
            worst = worst.max((lhs - c.rhs).abs());
        }
        for (v, &xv) in x.iter().enumerate() {
            worst = worst.max(-xv);
            if let Some(u) = self.upper_bounds[v] {
                worst = worst.max(xv - u);
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn check_shape(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::dims("LP objective", self.num_vars, self.objective.len()));
        }
        if self.upper_bounds.len() != self.num_vars {
            return Err(Error::dims("LP upper bounds", self.num_vars, self.upper_bounds.len()));
        }
        for c in &self.equalities {
            if let Some(&(v, _)) = c.terms.iter().find(|&&(v, _)| v >= self.num_vars) {
                return Err(Error::arg(format!("LP constraint references variable {v} of {}", self.num_vars)));
            }
        }
        Ok(())
    }
}

struct Tableau {
    /// Row-major, `cols + 1` entries per row (last is the right-hand side).
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize, cost: &mut [f64]) {
        let w = self.width();
        let p = self.at(pr, pc);
        for v in &mut self.a[pr * w..(pr + 1) * w] {
            *v /= p;
        }
        let pivot_row = self.a[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.a[r * w + pc];
            if f != 0.0 {
                for (v, pv) in self.a[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.a[r * w + pc] = 0.0;
            }
        }
        let f = cost[pc];
        if f != 0.0 {
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    /// Runs Bland's rule on reduced costs `cost` (length `cols + 1`, last
    /// entry is minus the objective value) using only columns `< allowed`.
    fn optimise(&mut self, cost: &mut [f64], allowed: usize, tol: f64) -> Result<()> {
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(Error::Numerical(format!(
                    "simplex hit the iteration budget of {MAX_ITERATIONS}"
                )));
            }
            let Some(pc) = (0..allowed).find(|&c| cost[c] < -tol) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-12 || (ratio <= bv + 1e-12 && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = best else {
                return Err(Error::Numerical(format!("LP unbounded along column {pc}")));
            };
            self.pivot(pr, pc, cost);
        }
    }
}

/// Solves `lp` to optimality; `tol` bounds both the reduced-cost test and
/// the final feasibility check of the returned point.
pub fn solve_lp(lp: &LpProblem, tol: f64) -> Result<LpSolution> {
    lp.check_shape()?;
    if !(tol > 0.0) {
        return Err(Error::arg(format!("LP tolerance must be positive, got {tol}")));
    }
    let n = lp.num_vars;
    let bounded: Vec<(usize, f64)> = lp
        .upper_bounds
        .iter()
        .enumerate()
        .filter_map(|(v, u)| u.map(|u| (v, u)))
        .collect();
    let m_eq = lp.equalities.len();
    let rows = bounded.len() + m_eq;
    // columns: structural | bound slacks | artificials (one per equality)
    let slack0 = n;
    let art0 = n + bounded.len();
    let cols = art0 + m_eq;
    let w = cols + 1;
    let mut a = vec![0.0; rows * w];
    let mut basis = Vec::with_capacity(rows);
    for (r, &(v, u)) in bounded.iter().enumerate() {
        if u < 0.0 {
            return Err(Error::arg(format!("negative upper bound on variable {v}")));
        }
        a[r * w + v] = 1.0;
        a[r * w + slack0 + r] = 1.0;
        a[r * w + cols] = u;
        basis.push(slack0 + r);
    }
    for (e, c) in lp.equalities.iter().enumerate() {
        let r = bounded.len() + e;
        let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
        for &(v, coef) in &c.terms {
            a[r * w + v] += sign * coef;
        }
        a[r * w + art0 + e] = 1.0;
        a[r * w + cols] = sign * c.rhs;
        basis.push(art0 + e);
    }
    let mut t = Tableau {
        a,
        rows,
        cols,
        basis,
        iterations: 0,
    };

    // phase 1: minimise the sum of artificials
    let mut cost = vec![0.0; w];
    for r in bounded.len()..rows {
        for c in 0..w {
            if c < art0 || c == cols {
                cost[c] -= t.at(r, c);
            }
        }
    }
    t.optimise(&mut cost, art0, tol)?;
    let infeasibility = -cost[cols];
    if infeasibility > tol.max(1e-9) * (1 + m_eq) as f64 {
        return Err(Error::Numerical(format!(
            "phase 1 ended with infeasibility {infeasibility:.3e} after {} pivots",
            t.iterations
        )));
    }

    // drive artificials out of the basis; rows where that is impossible are
    // redundant and dropped
    let mut r = 0;
    while r < t.rows {
        if t.basis[r] < art0 {
            r += 1;
            continue;
        }
        match (0..art0).find(|&c| t.at(r, c).abs() > PIVOT_TOL) {
            Some(c) => {
                t.pivot(r, c, &mut cost);
                r += 1;
            }
            None => {
                t.a.drain(r * w..(r + 1) * w);
                t.basis.remove(r);
                t.rows -= 1;
            }
        }
    }

    // phase 2
    let mut cost = vec![0.0; w];
    cost[..n].copy_from_slice(&lp.objective);
    for r in 0..t.rows {
        let cb = if t.basis[r] < n { lp.objective[t.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..w {
                cost[c] -= cb * t.at(r, c);
            }
        }
    }
    t.optimise(&mut cost, art0, tol)?;

    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let violation = lp.max_violation(&x);
    if violation > tol.max(1e-9) {
        return Err(Error::Numerical(format!(
            "simplex solution violates constraints by {violation:.3e} after {} pivots",
            t.iterations
        )));
    }
    Ok(LpSolution {
        optimum: lp.objective_value(&x),
        x,
        iterations: t.iterations,
    })
}
