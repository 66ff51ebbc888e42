//! Destination-side decision statistics and verdicts.

use rayon::prelude::*;

use crate::channel::{l2_distance, Alphabet, ObservationChannel, Pmf, StochasticMatrix, Symbol};
use crate::empirics::empirical_pmf;
use crate::error::{Error, Result};
use crate::search::{
    descend, identity, pair_distance, permutation_matrix, permutations, project_columns,
    random_stochastic, PairResidual,
};
use crate::simulate::{Role, RngStream};

/// Outcome of comparing a statistic against the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Safe,
    AttackDetected,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Safe => "Safe",
            Decision::AttackDetected => "AttackDetected",
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Safe" => Ok(Decision::Safe),
            "AttackDetected" => Ok(Decision::AttackDetected),
            other => Err(Error::arg(format!("unknown verdict `{other}`"))),
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionVerdict {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
}

/// `D(y^n) = ‖Π_{y^n} − P_{U1,U2} P_{Y|V1,V2}ᵀ‖₂`.
pub fn decision_statistic(y: &[Symbol], ch: &ObservationChannel) -> Result<f64> {
    let pi = empirical_pmf(y, Alphabet::new(ch.y_size())?)?;
    Ok(statistic_from_type(&pi, ch))
}

/// [`decision_statistic`] for an already computed type `Π_{y^n}`.
pub fn statistic_from_type(pi_y: &Pmf, ch: &ObservationChannel) -> f64 {
    pi_y.l2_distance(&ch.predicted_output())
}

/// `AttackDetected` iff `statistic > delta`; ties are `Safe`.
pub fn classify(statistic: f64, delta: f64) -> Result<DetectionVerdict> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::arg(format!("threshold must be positive, got {delta}")));
    }
    let decision = if statistic > delta {
        Decision::AttackDetected
    } else {
        Decision::Safe
    };
    Ok(DetectionVerdict {
        statistic,
        threshold: delta,
        decision,
    })
}

/// Estimated relay conditional types and the resulting statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackTypeEstimate {
    pub relay1: StochasticMatrix,
    pub relay2: StochasticMatrix,
    /// `Σ_m ‖Υ̂_m − I‖₂`; the best objective found, so a lower bound on the
    /// true maximum over the feasible set.
    pub d_theory: f64,
    pub starts: usize,
    pub feasible_starts: usize,
    /// True when no start reached the feasible set and `(I, I)` was
    /// returned.
    pub fallback: bool,
}

const ASCENT_ITERS: usize = 300;
const RESTORE_ITERS: usize = 200;

/// Searches for the pair of stochastic matrices farthest from `(I, I)`
/// whose predicted output is within `mu` of `pi_y`.
///
/// Candidates start at `(I, I)`, every pair of permutation matrices and
/// random Dirichlet pairs (up to `starts` in total, never fewer than the
/// deterministic ones). Each start is first pulled into the feasible set by
/// residual descent, then pushed away from the identity by projected
/// ascent, restoring feasibility after every step.
pub fn estimate_attack_types(
    pi_y: &Pmf,
    ch: &ObservationChannel,
    mu: f64,
    starts: usize,
    seed: u64,
) -> Result<AttackTypeEstimate> {
    if !(mu > 0.0) {
        return Err(Error::arg(format!("slack mu must be positive, got {mu}")));
    }
    if pi_y.len() != ch.y_size() {
        return Err(Error::dims("observed type length", ch.y_size(), pi_y.len()));
    }
    let (n1, n2) = (ch.u1_size(), ch.u2_size());
    let mut initial: Vec<(Vec<f64>, Vec<f64>)> = vec![(identity(n1), identity(n2))];
    let (p1, p2) = (permutations(n1), permutations(n2));
    for a in &p1 {
        for b in &p2 {
            initial.push((permutation_matrix(a), permutation_matrix(b)));
        }
    }
    initial.remove(1); // (I, I) again
    let random = starts.saturating_sub(initial.len());
    let mut rng = RngStream::new(seed, 0, Role::Search).rng();
    for _ in 0..random {
        initial.push((random_stochastic(n1, &mut rng), random_stochastic(n2, &mut rng)));
    }

    let f = PairResidual::new(ch, pi_y.as_slice().to_vec());
    let total = initial.len();
    let results: Vec<Option<(f64, Vec<f64>, Vec<f64>)>> = initial
        .into_par_iter()
        .map(|(y1, y2)| ascend_from(&f, y1, y2, mu))
        .collect();

    let feasible_starts = results.iter().filter(|r| r.is_some()).count();
    let best = results.into_iter().flatten().reduce(|a, b| {
        match b.0.total_cmp(&a.0) {
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Equal => {
                if lex_cmp(&b.1, &b.2, &a.1, &a.2).is_lt() {
                    b
                } else {
                    a
                }
            }
        }
    });
    Ok(match best {
        Some((obj, y1, y2)) => AttackTypeEstimate {
            relay1: StochasticMatrix::from_col_major_unchecked(n1, n1, y1),
            relay2: StochasticMatrix::from_col_major_unchecked(n2, n2, y2),
            d_theory: obj,
            starts: total,
            feasible_starts,
            fallback: false,
        },
        None => AttackTypeEstimate {
            relay1: StochasticMatrix::identity(n1),
            relay2: StochasticMatrix::identity(n2),
            d_theory: 0.0,
            starts: total,
            feasible_starts: 0,
            fallback: true,
        },
    })
}

fn lex_cmp(a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64]) -> std::cmp::Ordering {
    a1.iter()
        .chain(a2)
        .zip(b1.iter().chain(b2))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn ascend_from(
    f: &PairResidual<'_>,
    mut y1: Vec<f64>,
    mut y2: Vec<f64>,
    mu: f64,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let (n1, n2) = (y1.len().isqrt(), y2.len().isqrt());
    let inner = 0.95 * mu;
    if f.value(&y1, &y2).sqrt() > mu {
        descend(f, &mut y1, &mut y2, inner, 4 * RESTORE_ITERS);
        if f.value(&y1, &y2).sqrt() > mu {
            return None;
        }
    }
    let mut obj = pair_distance(&y1, n1, &y2, n2);
    let mut step = 0.1;
    for _ in 0..ASCENT_ITERS {
        if step < 1e-7 {
            break;
        }
        let g1 = away_from_identity(&y1, n1);
        let g2 = away_from_identity(&y2, n2);
        if g1.iter().chain(&g2).all(|&g| g == 0.0) {
            break;
        }
        let mut c1: Vec<f64> = y1.iter().zip(&g1).map(|(y, g)| y + step * g).collect();
        let mut c2: Vec<f64> = y2.iter().zip(&g2).map(|(y, g)| y + step * g).collect();
        project_columns(&mut c1, n1);
        project_columns(&mut c2, n2);
        if f.value(&c1, &c2).sqrt() > inner {
            descend(f, &mut c1, &mut c2, inner, RESTORE_ITERS);
        }
        let cand = pair_distance(&c1, n1, &c2, n2);
        if f.value(&c1, &c2).sqrt() <= mu && cand > obj + 1e-12 {
            y1 = c1;
            y2 = c2;
            obj = cand;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    debug_assert!(f.value(&y1, &y2).sqrt() <= mu);
    Some((obj, y1, y2))
}

/// Gradient of `‖Y − I‖_F`; zero at the identity.
fn away_from_identity(y: &[f64], n: usize) -> Vec<f64> {
    let id = identity(n);
    let d = l2_distance(y, &id);
    if d == 0.0 {
        return vec![0.0; y.len()];
    }
    y.iter().zip(&id).map(|(a, b)| (a - b) / d).collect()
}
