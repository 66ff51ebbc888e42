//! Deciding whether an observation channel can be fooled.
//!
//! A channel is manipulable when some pair of non-identity relay matrices
//! produces exactly the no-attack output distribution. [`check`] first tries
//! to certify the opposite with the linear relaxation in [`lp`], and falls
//! back to a direct witness search when the relaxation is not tight.
//!
//! The objective counts the diagonals of `Υ1` and `Υ2` from index 1 in
//! both sums; with the second sum starting at 2 the optimum could equal
//! `|U1| + |U2|` away from the identity, which defeats the certificate.

pub mod lp;
pub mod simplex;

use rayon::prelude::*;

use crate::channel::{check_relay_pair, ObservationChannel, StochasticMatrix};
use crate::error::Result;
use crate::search::{
    descend, identity, pair_distance, permutation_matrix, permutations, random_stochastic,
    PairResidual,
};
use crate::simulate::{Role, RngStream};

pub use lp::{build_certificate_lp, CertificateLp, CertificateSolution};
pub use simplex::{solve_lp, LinearConstraint, LpProblem, LpSolution};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Slack allowed below `|U1| + |U2|` for the certificate.
    pub cert: f64,
    /// Residual bound for witnesses that are exact in principle
    /// (permutation pairs).
    pub eq_exact: f64,
    /// Residual bound for witnesses found by local search.
    pub eq_numeric: f64,
    /// Minimum `Σ‖Υm − I‖` for a witness to count as non-trivial.
    pub dist: f64,
    pub lp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cert: 1e-6,
            eq_exact: 1e-9,
            eq_numeric: 1e-7,
            dist: 1e-3,
            lp: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManipulabilityVerdict {
    NonManipulable {
        lp_optimum: f64,
    },
    Manipulable {
        lp_optimum: f64,
        witness: (StochasticMatrix, StochasticMatrix),
        residual: f64,
    },
    /// The relaxation is not tight and no witness turned up.
    Inconclusive {
        lp_optimum: f64,
        best_witness_objective: f64,
        best_residual: f64,
    },
}

impl ManipulabilityVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            ManipulabilityVerdict::NonManipulable { .. } => "NonManipulable",
            ManipulabilityVerdict::Manipulable { .. } => "Manipulable",
            ManipulabilityVerdict::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub fn lp_optimum(&self) -> f64 {
        match *self {
            ManipulabilityVerdict::NonManipulable { lp_optimum }
            | ManipulabilityVerdict::Manipulable { lp_optimum, .. }
            | ManipulabilityVerdict::Inconclusive { lp_optimum, .. } => lp_optimum,
        }
    }
}

/// A pair passing [`verify_witness`].
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub relay1: StochasticMatrix,
    pub relay2: StochasticMatrix,
    pub residual: f64,
    pub distance: f64,
    /// Index of the candidate that produced it: permutation pairs come
    /// first, then random starts.
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessSearch {
    pub witness: Option<Witness>,
    /// Among non-trivial candidates, the smallest residual seen and its
    /// distance from `(I, I)`; infinite residual if every candidate
    /// collapsed to the identity.
    pub best_residual: f64,
    pub best_distance: f64,
    pub candidates: usize,
}

/// Manipulation-equation residual `‖out(Υ1, Υ2) − out(I, I)‖₂`.
pub fn witness_residual(ch: &ObservationChannel, y1: &StochasticMatrix, y2: &StochasticMatrix) -> Result<f64> {
    check_relay_pair(ch, y1, y2)?;
    let f = PairResidual::new(ch, ch.predicted_output().as_slice().to_vec());
    Ok(f.value(y1.col_major(), y2.col_major()).sqrt())
}

pub fn verify_witness(
    ch: &ObservationChannel,
    y1: &StochasticMatrix,
    y2: &StochasticMatrix,
    eq_tol: f64,
    dist_tol: f64,
) -> Result<bool> {
    let residual = witness_residual(ch, y1, y2)?;
    if y1.validate(1e-9).is_err() || y2.validate(1e-9).is_err() {
        return Ok(false);
    }
    let distance = y1.distance_from_identity() + y2.distance_from_identity();
    Ok(residual <= eq_tol && distance >= dist_tol)
}

const DESCENT_ITERS: usize = 400;
const CHUNK: usize = 32;
const BLENDS: [f64; 4] = [0.5, 0.25, 0.1, 0.03];

/// Looks for a non-identity pair solving the manipulation equation.
///
/// Every pair of permutation matrices is tried first, then `budget` random
/// stochastic starts are pulled onto the solution set by projected descent.
/// A start that slides back to `(I, I)` is retried from points on the
/// segment between it and the identity, which is where small non-trivial
/// solutions hide. Finding nothing proves nothing.
pub fn search_witness(
    ch: &ObservationChannel,
    eq_tol: f64,
    dist_tol: f64,
    budget: usize,
    seed: u64,
) -> Result<WitnessSearch> {
    let (n1, n2) = (ch.u1_size(), ch.u2_size());
    let f = PairResidual::new(ch, ch.predicted_output().as_slice().to_vec());
    let mut best_residual = f64::INFINITY;
    let mut best_distance = 0.0;

    let (p1, p2) = (permutations(n1), permutations(n2));
    let mut index = 0;
    for a in &p1 {
        for b in &p2 {
            if index > 0 {
                let (y1, y2) = (permutation_matrix(a), permutation_matrix(b));
                let residual = f.value(&y1, &y2).sqrt();
                let distance = pair_distance(&y1, n1, &y2, n2);
                if residual < best_residual {
                    best_residual = residual;
                    best_distance = distance;
                }
                if residual <= eq_tol && distance >= dist_tol {
                    return Ok(found(y1, y2, n1, n2, residual, distance, index - 1, best_residual, best_distance));
                }
            }
            index += 1;
        }
    }
    let perm_candidates = index - 1;

    for chunk_start in (0..budget).step_by(CHUNK) {
        let chunk_end = (chunk_start + CHUNK).min(budget);
        let outcomes: Vec<StartOutcome> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|r| run_start(&f, n1, n2, eq_tol, dist_tol, seed, r))
            .collect();
        for (offset, o) in outcomes.into_iter().enumerate() {
            if o.distance >= dist_tol && o.residual < best_residual {
                best_residual = o.residual;
                best_distance = o.distance;
            }
            if o.passed {
                let start = perm_candidates + chunk_start + offset;
                return Ok(found(o.y1, o.y2, n1, n2, o.residual, o.distance, start, best_residual, best_distance));
            }
        }
    }
    Ok(WitnessSearch {
        witness: None,
        best_residual,
        best_distance,
        candidates: perm_candidates + budget,
    })
}

#[allow(clippy::too_many_arguments)]
fn found(
    y1: Vec<f64>,
    y2: Vec<f64>,
    n1: usize,
    n2: usize,
    residual: f64,
    distance: f64,
    start: usize,
    best_residual: f64,
    best_distance: f64,
) -> WitnessSearch {
    WitnessSearch {
        witness: Some(Witness {
            relay1: StochasticMatrix::from_col_major_unchecked(n1, n1, y1),
            relay2: StochasticMatrix::from_col_major_unchecked(n2, n2, y2),
            residual,
            distance,
            start,
        }),
        best_residual,
        best_distance,
        candidates: start + 1,
    }
}

struct StartOutcome {
    y1: Vec<f64>,
    y2: Vec<f64>,
    residual: f64,
    distance: f64,
    passed: bool,
}

fn run_start(
    f: &PairResidual<'_>,
    n1: usize,
    n2: usize,
    eq_tol: f64,
    dist_tol: f64,
    seed: u64,
    r: usize,
) -> StartOutcome {
    let mut rng = RngStream::new(seed, r as u64, Role::Search).rng();
    let s1 = random_stochastic(n1, &mut rng);
    let s2 = random_stochastic(n2, &mut rng);
    let settle = |mut y1: Vec<f64>, mut y2: Vec<f64>| {
        let residual = descend(f, &mut y1, &mut y2, 0.5 * eq_tol, DESCENT_ITERS).sqrt();
        let distance = pair_distance(&y1, n1, &y2, n2);
        StartOutcome {
            passed: residual <= eq_tol && distance >= dist_tol,
            y1,
            y2,
            residual,
            distance,
        }
    };
    let mut out = settle(s1.clone(), s2.clone());
    if out.passed || out.residual > eq_tol {
        return out;
    }
    // collapsed to the identity: retry closer to it
    let (i1, i2) = (identity(n1), identity(n2));
    for alpha in BLENDS {
        let b1 = i1.iter().zip(&s1).map(|(i, s)| i + alpha * (s - i)).collect();
        let b2 = i2.iter().zip(&s2).map(|(i, s)| i + alpha * (s - i)).collect();
        let o = settle(b1, b2);
        if o.passed {
            return o;
        }
        if o.distance >= dist_tol && o.residual < out.residual {
            out = o;
        }
    }
    out
}

/// Certificate first, witness search second.
pub fn check(ch: &ObservationChannel, tol: &Tolerances, budget: usize, seed: u64) -> Result<ManipulabilityVerdict> {
    let lp_optimum = build_certificate_lp(ch).solve(tol.lp)?.optimum;
    let full = (ch.u1_size() + ch.u2_size()) as f64;
    if lp_optimum >= full - tol.cert {
        return Ok(ManipulabilityVerdict::NonManipulable { lp_optimum });
    }
    let exact = search_witness(ch, tol.eq_exact, tol.dist, 0, seed)?;
    let search = match exact.witness {
        Some(_) => exact,
        None => search_witness(ch, tol.eq_numeric, tol.dist, budget, seed)?,
    };
    Ok(match search.witness {
        Some(w) => ManipulabilityVerdict::Manipulable {
            lp_optimum,
            witness: (w.relay1, w.relay2),
            residual: w.residual,
        },
        None => ManipulabilityVerdict::Inconclusive {
            lp_optimum,
            best_witness_objective: search.best_distance,
            best_residual: search.best_residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{joint_pmf_from_product, kron, Pmf};

    fn sec5_channel(px: [f64; 2]) -> ObservationChannel {
        let a = StochasticMatrix::from_rows(&[vec![0.9, 0.0], vec![0.1, 0.1], vec![0.0, 0.9]]).unwrap();
        let joint = joint_pmf_from_product(&Pmf::new(px.to_vec()).unwrap(), &a, &a).unwrap();
        ObservationChannel::new(3, 3, joint, StochasticMatrix::identity(9)).unwrap()
    }

    fn random_channel(seed: u64, n1: usize, n2: usize, ny: usize) -> ObservationChannel {
        let mut rng = RngStream::new(seed, 0, Role::Source).rng();
        let mut p: Vec<f64> = (0..n1 * n2).map(|_| rng.uniform() + 0.01).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let mut fwd = vec![0.0; ny * n1 * n2];
        for col in fwd.chunks_exact_mut(ny) {
            col.iter_mut().for_each(|v| *v = rng.uniform() + 0.01);
            let s: f64 = col.iter().sum();
            col.iter_mut().for_each(|v| *v /= s);
        }
        ObservationChannel::new(
            n1,
            n2,
            Pmf::new(p).unwrap(),
            StochasticMatrix::from_col_major(ny, n1 * n2, fwd).unwrap(),
        )
        .unwrap()
    }

    // Optima of the same LP solved independently with HiGHS (dual simplex).
    const SEC5A_LP: f64 = 1.5554666488853326;
    const SEC5B_LP: f64 = 1.5555555555555554;

    #[test]
    fn lp_optima_match_reference_solver() {
        let a = build_certificate_lp(&sec5_channel([0.4999, 0.5001])).solve(1e-9).unwrap();
        assert!((a.optimum - SEC5A_LP).abs() < 1e-6, "{}", a.optimum);
        let b = build_certificate_lp(&sec5_channel([0.5, 0.5])).solve(1e-9).unwrap();
        assert!((b.optimum - SEC5B_LP).abs() < 1e-6, "{}", b.optimum);
    }

    fn minilp_optimum(lp: &LpProblem) -> f64 {
        use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..lp.num_vars)
            .map(|v| p.add_var(lp.objective[v], (0.0, lp.upper_bounds[v].unwrap_or(f64::INFINITY))))
            .collect();
        for c in &lp.equalities {
            let mut e = LinearExpr::empty();
            for &(v, a) in &c.terms {
                e.add(vars[v], a);
            }
            p.add_constraint(e, ComparisonOp::Eq, c.rhs);
        }
        p.solve().unwrap().objective()
    }

    #[test]
    fn lp_optima_agree_with_minilp_on_random_channels() {
        for seed in 0..6 {
            let ch = random_channel(seed, 2 + (seed as usize % 2), 2, 2 + seed as usize % 3);
            let lp = build_certificate_lp(&ch);
            let ours = lp.solve(1e-9).unwrap().optimum;
            let theirs = minilp_optimum(&lp.problem);
            assert!((ours - theirs).abs() < 1e-6, "seed {seed}: {ours} vs {theirs}");
        }
    }

    #[test]
    fn lp_solution_is_feasible() {
        let lp = build_certificate_lp(&sec5_channel([0.4999, 0.5001]));
        let s = lp.solve(1e-9).unwrap();
        let x = lp.point(&s.w, &s.relay1, &s.relay2);
        assert!(lp.problem.max_violation(&x) < 1e-9);
        s.relay1.validate(1e-9).unwrap();
        s.w.validate(1e-9).unwrap();
    }

    #[test]
    fn identity_and_kron_points_are_feasible() {
        let ch = sec5_channel([0.5, 0.5]);
        let lp = build_certificate_lp(&ch);
        let i = StochasticMatrix::identity(3);
        let x = lp.point(&StochasticMatrix::identity(9), &i, &i);
        assert!(lp.problem.max_violation(&x) < 1e-12);
        assert_eq!(lp.problem.objective_value(&x), 6.0);
        let f = StochasticMatrix::flip(3);
        let x = lp.point(&kron(&f, &f), &f, &f);
        assert!(lp.problem.max_violation(&x) < 1e-12);
        assert_eq!(lp.problem.objective_value(&x), 2.0);
    }

    #[test]
    fn single_symbol_relays_are_certified() {
        let ch = ObservationChannel::new(1, 1, Pmf::new(vec![1.0]).unwrap(), StochasticMatrix::identity(1)).unwrap();
        let v = check(&ch, &Tolerances::default(), 50, 0).unwrap();
        assert!(matches!(v, ManipulabilityVerdict::NonManipulable { lp_optimum } if (lp_optimum - 2.0).abs() < 1e-9));
        // nothing to find either
        assert!(search_witness(&ch, 1e-7, 1e-3, 50, 0).unwrap().witness.is_none());
    }

    #[test]
    fn blind_destination_takes_first_permutation_pair() {
        let p = Pmf::uniform(4).unwrap();
        let fwd = StochasticMatrix::from_rows(&[vec![1.0; 4]]).unwrap();
        let ch = ObservationChannel::new(2, 2, p, fwd).unwrap();
        let w = search_witness(&ch, 1e-9, 1e-3, 10, 0).unwrap().witness.unwrap();
        assert_eq!(w.relay1, StochasticMatrix::identity(2));
        assert_eq!(w.relay2, StochasticMatrix::flip(2));
        assert_eq!(w.start, 0);
    }

    #[test]
    fn flip_pair_is_a_witness_only_on_the_symmetric_channel() {
        let f = StochasticMatrix::flip(3);
        let i = StochasticMatrix::identity(3);
        let b = sec5_channel([0.5, 0.5]);
        assert!(verify_witness(&b, &f, &f, 1e-9, 1e-3).unwrap());
        assert!(!verify_witness(&b, &i, &i, 1e-9, 1e-3).unwrap());
        let a = sec5_channel([0.4999, 0.5001]);
        assert!(!verify_witness(&a, &f, &f, 1e-9, 1e-3).unwrap());
        assert!(verify_witness(&a, &StochasticMatrix::identity(2), &i, 1e-9, 1e-3).is_err());
    }

    #[test]
    fn check_refutes_symmetric_channel_with_flip() {
        let v = check(&sec5_channel([0.5, 0.5]), &Tolerances::default(), 100, 0).unwrap();
        match v {
            ManipulabilityVerdict::Manipulable { lp_optimum, witness, residual } => {
                assert!(lp_optimum <= 2.0 + 1e-6);
                assert_eq!(witness.0, StochasticMatrix::flip(3));
                assert_eq!(witness.1, StochasticMatrix::flip(3));
                assert!(residual <= 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_witness_on_asymmetric_channel() {
        let s = search_witness(&sec5_channel([0.4999, 0.5001]), 1e-7, 1e-3, 200, 1).unwrap();
        assert!(s.witness.is_none(), "{:?}", s.witness);
    }

    #[test]
    fn relaxation_lower_bounds_feasible_points() {
        // feasible points of the non-convex program: solution pairs of the
        // manipulation equation found by descent from random starts
        let ch = sec5_channel([0.5, 0.5]);
        let lp = build_certificate_lp(&ch).solve(1e-9).unwrap().optimum;
        let f = PairResidual::new(&ch, ch.predicted_output().as_slice().to_vec());
        let mut checked = 0;
        for r in 0..40 {
            let mut rng = RngStream::new(9, r, Role::Search).rng();
            let mut y1 = random_stochastic(3, &mut rng);
            let mut y2 = random_stochastic(3, &mut rng);
            if descend(&f, &mut y1, &mut y2, 1e-9, 2000).sqrt() > 1e-8 {
                continue;
            }
            checked += 1;
            let tr: f64 = (0..3).map(|k| y1[k * 3 + k] + y2[k * 3 + k]).sum();
            assert!(tr >= lp - 1e-6, "trace {tr} below relaxation {lp}");
        }
        assert!(checked > 0);
    }
}
