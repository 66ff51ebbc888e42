//! Relay attack strategies and a first-order stationarity diagnostic.

use crate::channel::{Alphabet, Pmf, StochasticMatrix, Symbol, PROB_TOL};
use crate::error::{Error, Result};
use crate::simulate::{ChannelSampler, ColumnSampler, Relay, Role, RngStream};

/// How a relay maps its received sequence `u^n` to the forwarded `v^n`.
#[derive(Clone, Debug, PartialEq)]
pub enum AttackSpec {
    /// Faithful forwarding.
    Identity,
    /// Memoryless switching through `p_v_given_u`.
    Iid { p_v_given_u: StochasticMatrix },
    /// `p_odd` at odd (1-based) positions, `p_even` at even positions.
    Alternating {
        p_odd: StochasticMatrix,
        p_even: StochasticMatrix,
    },
    /// `v_i = (J_i + u_i) mod q` with `J^n` a Markov chain started from
    /// `p_j1`. `transition[a][b] = Pr{J_{i+1} = b | J_i = a}` is
    /// row-stochastic, unlike every other matrix in the crate.
    MarkovJammer {
        p_j1: Pmf,
        transition: Vec<Vec<f64>>,
        q: usize,
    },
    /// Cyclic shift by half the block: `v_i = u_{(i + n/2) mod n}`.
    PermutationShift,
    /// Explicit reordering: `v_i = u_{order[i]}` with 1-based positions.
    Permutation { order: Vec<usize> },
}

impl AttackSpec {
    /// Short name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            AttackSpec::Identity => "identity",
            AttackSpec::Iid { .. } => "iid",
            AttackSpec::Alternating { .. } => "alternating",
            AttackSpec::MarkovJammer { .. } => "markov-jammer",
            AttackSpec::PermutationShift => "permutation-shift",
            AttackSpec::Permutation { .. } => "permutation",
        }
    }

    /// Checks the parameters against the relay alphabet.
    pub fn validate(&self, alphabet: Alphabet) -> Result<()> {
        let n = alphabet.size();
        let square = |m: &StochasticMatrix, name: &str| -> Result<()> {
            if m.rows() != n || m.cols() != n {
                return Err(Error::field(
                    name,
                    format!("expected a {n}x{n} matrix, found {}x{}", m.rows(), m.cols()),
                ));
            }
            Ok(())
        };
        match self {
            AttackSpec::Identity | AttackSpec::PermutationShift => Ok(()),
            AttackSpec::Iid { p_v_given_u } => square(p_v_given_u, "p_v_given_u"),
            AttackSpec::Alternating { p_odd, p_even } => {
                square(p_odd, "p_odd")?;
                square(p_even, "p_even")
            }
            AttackSpec::MarkovJammer { p_j1, transition, q } => {
                if *q != n {
                    return Err(Error::field(
                        "q",
                        format!("field size {q} differs from the relay alphabet size {n}"),
                    ));
                }
                if !is_prime(*q) {
                    return Err(Error::field("q", format!("{q} is not prime")));
                }
                if p_j1.len() != *q {
                    return Err(Error::field("p_j1", format!("expected {q} entries, found {}", p_j1.len())));
                }
                validate_transition(transition, *q)
            }
            AttackSpec::Permutation { order } => {
                let mut seen = vec![false; order.len()];
                for &p in order {
                    if p == 0 || p > order.len() || std::mem::replace(&mut seen[p - 1], true) {
                        return Err(Error::field("order", "not a permutation of 1..=n"));
                    }
                }
                Ok(())
            }
        }
    }
}

fn validate_transition(rows: &[Vec<f64>], q: usize) -> Result<()> {
    if rows.len() != q {
        return Err(Error::field("transition_rows", format!("expected {q} rows, found {}", rows.len())));
    }
    for (a, row) in rows.iter().enumerate() {
        if row.len() != q {
            return Err(Error::field(
                "transition_rows",
                format!("row {} has {} entries, expected {q}", a + 1, row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::field("transition_rows", format!("row {} has an entry outside [0, 1]", a + 1)));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::field(
                "transition_rows",
                format!("row {} sums to {s}; the jammer transition is row-stochastic", a + 1),
            ));
        }
    }
    Ok(())
}

fn is_prime(q: usize) -> bool {
    q >= 2 && (2..q).take_while(|d| d * d <= q).all(|d| q % d != 0)
}

/// Applies `spec` to the relay's own received sequence `u`.
///
/// `stream` is the relay's attack stream; the Markov jammer draws its chain
/// from the matching jammer role.
pub fn apply_attack(
    spec: &AttackSpec,
    u: &[Symbol],
    alphabet: Alphabet,
    stream: &RngStream,
) -> Result<Vec<Symbol>> {
    if u.is_empty() {
        return Err(Error::arg("attack input must be non-empty"));
    }
    spec.validate(alphabet)?;
    alphabet.check_sequence(u)?;
    let n = u.len();
    match spec {
        AttackSpec::Identity => Ok(u.to_vec()),
        AttackSpec::Iid { p_v_given_u } => ChannelSampler::new(p_v_given_u).run(u, &mut stream.rng()),
        AttackSpec::Alternating { p_odd, p_even } => {
            let (odd, even) = (ChannelSampler::new(p_odd), ChannelSampler::new(p_even));
            let mut rng = stream.rng();
            Ok(u.iter()
                .enumerate()
                // index 0 is position 1, which is odd
                .map(|(i, &s)| if i % 2 == 0 { odd.draw(s, &mut rng) } else { even.draw(s, &mut rng) })
                .collect())
        }
        AttackSpec::MarkovJammer { p_j1, transition, q } => {
            let relay = match stream.role {
                Role::Attack(r) | Role::Jammer(r) => r,
                _ => Relay::One,
            };
            let jam = markov_chain(p_j1, transition, n, &stream.with_role(Role::Jammer(relay)));
            Ok(u.iter()
                .zip(&jam)
                .map(|(&s, &j)| (((j as usize - 1) + (s as usize - 1)) % q + 1) as Symbol)
                .collect())
        }
        AttackSpec::PermutationShift => {
            if n % 2 != 0 {
                return Err(Error::arg(format!("the half-shift permutation needs an even block length, got {n}")));
            }
            let half = n / 2;
            Ok((0..n).map(|i| u[(i + half) % n]).collect())
        }
        AttackSpec::Permutation { order } => {
            if order.len() != n {
                return Err(Error::dims("permutation length", n, order.len()));
            }
            Ok(order.iter().map(|&p| u[p - 1]).collect())
        }
    }
}

/// Samples `J^n` with `J_1 ~ p_j1` and row-stochastic transitions.
pub fn markov_chain(p_j1: &Pmf, transition: &[Vec<f64>], n: usize, stream: &RngStream) -> Vec<Symbol> {
    let start = ColumnSampler::new(p_j1.as_slice());
    let steps: Vec<ColumnSampler> = transition.iter().map(|row| ColumnSampler::new(row)).collect();
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut j = start.draw(&mut rng);
    out.push(j);
    for _ in 1..n {
        j = steps[j as usize - 1].draw(&mut rng);
        out.push(j);
    }
    out
}

/// Largest entry of `|p − p T|`; zero when `p` is stationary for `T`.
pub fn jammer_stationary_check(p_j1: &Pmf, transition: &[Vec<f64>]) -> Result<f64> {
    let q = p_j1.len();
    if transition.len() != q || transition.iter().any(|r| r.len() != q) {
        return Err(Error::dims("jammer transition size", q, transition.len()));
    }
    let p = p_j1.as_slice();
    Ok((0..q)
        .map(|b| {
            let next: f64 = (0..q).map(|a| p[a] * transition[a][b]).sum();
            (p[b] - next).abs()
        })
        .fold(0.0, f64::max))
}

/// Result of [`stationarity_diagnostic`].
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    /// Largest spread of pooled class means (see [`stationarity_diagnostic`]).
    pub deviation: f64,
    /// Largest spread of the raw per-index estimates within one input symbol.
    /// Dominated by sampling noise for long blocks; kept for reference.
    pub per_index_spread: f64,
    pub replications: usize,
}

const RESIDUE_PERIODS: std::ops::RangeInclusive<usize> = 2..=8;
const BLOCK_SPLITS: [usize; 3] = [2, 4, 8];

/// Empirical check of first-order stationarity on a fixed input block.
///
/// The attack is re-run `replications` times on `u` (relay 2's stream for
/// trial `r`, `r = 0..replications`), giving per-index estimates of
/// `E{1_i(v | V^n) | U^n = u}`. For a stationary strategy these depend only
/// on `u_i`. Within each input-symbol group the estimates are averaged over
/// index classes (residues modulo 2..=8 and contiguous blocks of n/2, n/4,
/// n/8); the deviation is the largest max-minus-min spread of class means.
pub fn stationarity_diagnostic(
    spec: &AttackSpec,
    u: &[Symbol],
    alphabet: Alphabet,
    replications: usize,
    master_seed: u64,
) -> Result<StationarityReport> {
    if replications < 100 {
        return Err(Error::arg(format!("at least 100 replications are required, got {replications}")));
    }
    let n = u.len();
    let q = alphabet.size();
    let mut hits = vec![0u32; n * q];
    for r in 0..replications {
        let stream = RngStream::new(master_seed, r as u64, Role::Attack(Relay::Two));
        let v = apply_attack(spec, u, alphabet, &stream)?;
        for (i, &s) in v.iter().enumerate() {
            hits[i * q + s as usize - 1] += 1;
        }
    }
    let est = |i: usize, v: usize| hits[i * q + v] as f64 / replications as f64;

    let mut per_index_spread: f64 = 0.0;
    let mut deviation: f64 = 0.0;
    for sym in alphabet.symbols() {
        let group: Vec<usize> = (0..n).filter(|&i| u[i] == sym).collect();
        if group.is_empty() {
            continue;
        }
        for v in 0..q {
            let (lo, hi) = group
                .iter()
                .map(|&i| est(i, v))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
            per_index_spread = per_index_spread.max(hi - lo);

            let mut families: Vec<Box<dyn Fn(usize) -> usize>> = Vec::new();
            for p in RESIDUE_PERIODS {
                families.push(Box::new(move |i| i % p));
            }
            for k in BLOCK_SPLITS {
                families.push(Box::new(move |i| i * k / n));
            }
            for class_of in &families {
                let mut sums: Vec<(f64, usize)> = Vec::new();
                for &i in &group {
                    let c = class_of(i);
                    if sums.len() <= c {
                        sums.resize(c + 1, (0.0, 0));
                    }
                    sums[c].0 += est(i, v);
                    sums[c].1 += 1;
                }
                let means = sums.iter().filter(|(_, m)| *m > 0).map(|(s, m)| s / *m as f64);
                let (lo, hi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
                if hi >= lo {
                    deviation = deviation.max(hi - lo);
                }
            }
        }
    }
    Ok(StationarityReport {
        deviation,
        per_index_spread,
        replications,
    })
}
