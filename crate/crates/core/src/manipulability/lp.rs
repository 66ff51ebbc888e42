//! The linear relaxation of the manipulation program.
//!
//! The bilinear relay matrix `Υ1 ⊗ Υ2` is replaced by a free joint matrix
//! `W` tied to `Υ1` and `Υ2` only through its marginal block sums.

use super::simplex::{solve_lp, LpProblem};
use crate::channel::{ObservationChannel, StochasticMatrix};
use crate::error::Result;

/// Certificate LP together with the variable layout needed to read
/// solutions back.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateLp {
    pub problem: LpProblem,
    pub u1_size: usize,
    pub u2_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateSolution {
    pub optimum: f64,
    /// Joint relay matrix, `|U1||U2|` square.
    pub w: StochasticMatrix,
    pub relay1: StochasticMatrix,
    pub relay2: StochasticMatrix,
    pub iterations: usize,
}

impl CertificateLp {
    pub fn joint_size(&self) -> usize {
        self.u1_size * self.u2_size
    }

    /// Variable index of `W[i, j]` (0-based pair indices).
    pub fn w_var(&self, i: usize, j: usize) -> usize {
        j * self.joint_size() + i
    }

    /// Variable index of `Υ1[a, b]` (0-based).
    pub fn relay1_var(&self, a: usize, b: usize) -> usize {
        let j = self.joint_size();
        j * j + b * self.u1_size + a
    }

    /// Variable index of `Υ2[a, b]` (0-based).
    pub fn relay2_var(&self, a: usize, b: usize) -> usize {
        let j = self.joint_size();
        j * j + self.u1_size * self.u1_size + b * self.u2_size + a
    }

    /// Packs a candidate point into the LP's variable vector.
    pub fn point(&self, w: &StochasticMatrix, y1: &StochasticMatrix, y2: &StochasticMatrix) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.num_vars];
        let j = self.joint_size();
        for c in 0..j {
            for r in 0..j {
                x[self.w_var(r, c)] = w.at(r, c);
            }
        }
        for b in 0..self.u1_size {
            for a in 0..self.u1_size {
                x[self.relay1_var(a, b)] = y1.at(a, b);
            }
        }
        for b in 0..self.u2_size {
            for a in 0..self.u2_size {
                x[self.relay2_var(a, b)] = y2.at(a, b);
            }
        }
        x
    }

    pub fn solve(&self, tol: f64) -> Result<CertificateSolution> {
        let s = solve_lp(&self.problem, tol)?;
        let j = self.joint_size();
        let (n1, n2) = (self.u1_size, self.u2_size);
        let w = s.x[..j * j].to_vec();
        let y1 = s.x[j * j..j * j + n1 * n1].to_vec();
        let y2 = s.x[j * j + n1 * n1..].to_vec();
        Ok(CertificateSolution {
            optimum: s.optimum,
            w: StochasticMatrix::from_col_major_unchecked(j, j, w),
            relay1: StochasticMatrix::from_col_major_unchecked(n1, n1, y1),
            relay2: StochasticMatrix::from_col_major_unchecked(n2, n2, y2),
            iterations: s.iterations,
        })
    }
}

/// Builds the relaxation: minimise `tr Υ1 + tr Υ2` over `W`, `Υ1`, `Υ2` in
/// `[0, 1]` subject to
///
/// * the output constraint `Σ_{i,j} F[r, i] W[i, j] p_j = (F p)_r`,
/// * unit column sums of `W`, `Υ1` and `Υ2`,
/// * `Σ_{t'} W[(k', t'), (k, s)] = Υ1[k', k]` for every `s`,
/// * `Σ_{k'} W[(k', t'), (l, t)] = Υ2[t', t]` for every `l`.
///
/// Any `(Υ1, Υ2, Υ1 ⊗ Υ2)` with `Υ1`, `Υ2` solving the manipulation
/// equation is feasible, so the optimum is a lower bound on the non-convex
/// program's.
pub fn build_certificate_lp(ch: &ObservationChannel) -> CertificateLp {
    let (n1, n2) = (ch.u1_size(), ch.u2_size());
    let j = n1 * n2;
    let num_vars = j * j + n1 * n1 + n2 * n2;
    let mut lp = CertificateLp {
        problem: LpProblem::new(num_vars),
        u1_size: n1,
        u2_size: n2,
    };
    let p = ch.joint_input().as_slice();
    let fwd = ch.forward();
    let target = ch.predicted_output();

    for r in 0..ch.y_size() {
        let mut terms = Vec::new();
        for c in 0..j {
            if p[c] == 0.0 {
                continue;
            }
            for i in 0..j {
                let coef = fwd.at(r, i) * p[c];
                if coef != 0.0 {
                    terms.push((lp.w_var(i, c), coef));
                }
            }
        }
        lp.problem.add_equality(terms, target.as_slice()[r]);
    }
    for c in 0..j {
        let terms = (0..j).map(|i| (lp.w_var(i, c), 1.0)).collect();
        lp.problem.add_equality(terms, 1.0);
    }
    for b in 0..n1 {
        let terms = (0..n1).map(|a| (lp.relay1_var(a, b), 1.0)).collect();
        lp.problem.add_equality(terms, 1.0);
    }
    for b in 0..n2 {
        let terms = (0..n2).map(|a| (lp.relay2_var(a, b), 1.0)).collect();
        lp.problem.add_equality(terms, 1.0);
    }
    for k in 0..n1 {
        for k_out in 0..n1 {
            for s in 0..n2 {
                let mut terms: Vec<(usize, f64)> =
                    (0..n2).map(|t_out| (lp.w_var(k_out * n2 + t_out, k * n2 + s), 1.0)).collect();
                terms.push((lp.relay1_var(k_out, k), -1.0));
                lp.problem.add_equality(terms, 0.0);
            }
        }
    }
    for t in 0..n2 {
        for t_out in 0..n2 {
            for l in 0..n1 {
                let mut terms: Vec<(usize, f64)> =
                    (0..n1).map(|k_out| (lp.w_var(k_out * n2 + t_out, l * n2 + t), 1.0)).collect();
                terms.push((lp.relay2_var(t_out, t), -1.0));
                lp.problem.add_equality(terms, 0.0);
            }
        }
    }
    for a in 0..n1 {
        let v = lp.relay1_var(a, a);
        lp.problem.objective[v] = 1.0;
    }
    for a in 0..n2 {
        let v = lp.relay2_var(a, a);
        lp.problem.objective[v] = 1.0;
    }
    lp.problem.upper_bounds = vec![Some(1.0); num_vars];
    lp
}
