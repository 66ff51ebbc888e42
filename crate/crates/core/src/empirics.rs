//! Counting functions, types and conditional types of symbol sequences.
//!
//! Counting is exact: conditional types keep their integer counts and only
//! divide when a matrix is requested.

use crate::channel::{pack_pairs, Alphabet, Pmf, StochasticMatrix, Symbol};
use crate::error::{Error, Result};

/// Number of occurrences of `symbol` in `seq`.
pub fn count(symbol: Symbol, seq: &[Symbol]) -> usize {
    seq.iter().filter(|&&s| s == symbol).count()
}

/// Occurrence counts of every symbol of `alphabet`, indexed from 0.
pub fn histogram(seq: &[Symbol], alphabet: Alphabet) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; alphabet.size()];
    for (i, &s) in seq.iter().enumerate() {
        if !alphabet.contains(s) {
            return Err(Error::arg(format!(
                "symbol {s} at position {} outside 1..={}",
                i + 1,
                alphabet.size()
            )));
        }
        counts[s as usize - 1] += 1;
    }
    Ok(counts)
}

/// The type of `seq`: entry `j` is `N(j | seq) / n`.
pub fn empirical_pmf(seq: &[Symbol], alphabet: Alphabet) -> Result<Pmf> {
    if seq.is_empty() {
        return Err(Error::arg("empirical PMF of an empty sequence"));
    }
    let counts = histogram(seq, alphabet)?;
    let n = seq.len() as f64;
    Ok(Pmf::from_vec_unchecked(
        counts.into_iter().map(|c| c as f64 / n).collect(),
    ))
}

/// Empirical conditional PMF of an output sequence given an input sequence.
///
/// Columns whose input symbol never occurs are *undefined*; they are stored
/// as the identity column and contribute no deviation from the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalType {
    out_size: usize,
    in_size: usize,
    // counts[j * out_size + i] = N(output i, input j)
    counts: Vec<u64>,
    column_counts: Vec<u64>,
}

impl ConditionalType {
    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn in_size(&self) -> usize {
        self.in_size
    }

    /// `N(u_j | u^n) > 0` for the 1-based input symbol `j`.
    pub fn is_defined(&self, j: usize) -> bool {
        self.column_counts[j - 1] > 0
    }

    pub fn defined_columns(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.in_size).filter(|&j| self.is_defined(j))
    }

    /// Joint count `N(v_i, u_j | v^n, u^n)`, 1-based.
    pub fn joint_count(&self, i: usize, j: usize) -> u64 {
        self.counts[(j - 1) * self.out_size + (i - 1)]
    }

    /// `N(u_j | u^n)`, 1-based.
    pub fn column_count(&self, j: usize) -> u64 {
        self.column_counts[j - 1]
    }

    /// Entry `(i, j)` as an exact ratio `(numerator, denominator)`; `None`
    /// for undefined columns.
    pub fn ratio(&self, i: usize, j: usize) -> Option<(u64, u64)> {
        self.is_defined(j)
            .then(|| (self.joint_count(i, j), self.column_count(j)))
    }

    /// Entry `(i, j)` including the identity fill of undefined columns.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self.ratio(i, j) {
            Some((num, den)) => num as f64 / den as f64,
            None => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The conditional type as a matrix (identity fill on undefined columns).
    /// Only square types can be filled with identity columns; rectangular
    /// types fill undefined columns with a point mass on the first symbol.
    pub fn matrix(&self) -> StochasticMatrix {
        let mut data = vec![0.0; self.out_size * self.in_size];
        for j in 0..self.in_size {
            let col = &mut data[j * self.out_size..(j + 1) * self.out_size];
            let den = self.column_counts[j];
            if den > 0 {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = self.counts[j * self.out_size + i] as f64 / den as f64;
                }
            } else {
                col[j.min(self.out_size - 1)] = 1.0;
            }
        }
        StochasticMatrix::from_col_major_unchecked(self.out_size, self.in_size, data)
    }

    /// Frobenius distance from the identity over defined columns.
    pub fn distance_from_identity(&self) -> f64 {
        assert_eq!(self.out_size, self.in_size);
        let mut s = 0.0;
        for j in self.defined_columns() {
            for i in 1..=self.out_size {
                let d = self.entry(i, j) - if i == j { 1.0 } else { 0.0 };
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Frobenius distance from `p` over defined columns.
    pub fn distance_to(&self, p: &StochasticMatrix) -> f64 {
        assert_eq!((self.out_size, self.in_size), (p.rows(), p.cols()));
        let mut s = 0.0;
        for j in self.defined_columns() {
            for i in 1..=self.out_size {
                let d = self.entry(i, j) - p.entry(i, j);
                s += d * d;
            }
        }
        s.sqrt()
    }
}

/// Conditional type of `outputs` given `inputs`.
pub fn conditional_type(
    outputs: &[Symbol],
    inputs: &[Symbol],
    out_alphabet: Alphabet,
    in_alphabet: Alphabet,
) -> Result<ConditionalType> {
    if outputs.len() != inputs.len() {
        return Err(Error::dims(
            "conditional type sequence length",
            inputs.len(),
            outputs.len(),
        ));
    }
    if inputs.is_empty() {
        return Err(Error::arg("conditional type of empty sequences"));
    }
    out_alphabet.check_sequence(outputs)?;
    in_alphabet.check_sequence(inputs)?;
    let (no, ni) = (out_alphabet.size(), in_alphabet.size());
    let mut counts = vec![0u64; no * ni];
    let mut column_counts = vec![0u64; ni];
    for (&v, &u) in outputs.iter().zip(inputs) {
        let (v, u) = (v as usize - 1, u as usize - 1);
        counts[u * no + v] += 1;
        column_counts[u] += 1;
    }
    Ok(ConditionalType {
        out_size: no,
        in_size: ni,
        counts,
        column_counts,
    })
}

/// Joint conditional type of `(v1, v2)` given `(u1, u2)` over pair-packed
/// alphabets.
pub fn joint_conditional_type(
    v1: &[Symbol],
    v2: &[Symbol],
    u1: &[Symbol],
    u2: &[Symbol],
    a1: Alphabet,
    a2: Alphabet,
) -> Result<ConditionalType> {
    let n = u1.len();
    for (len, ctx) in [
        (v1.len(), "relay 1 output length"),
        (v2.len(), "relay 2 output length"),
        (u2.len(), "relay 2 input length"),
    ] {
        if len != n {
            return Err(Error::dims(ctx, n, len));
        }
    }
    let joint = Alphabet::new(a1.size() * a2.size())?;
    let v = pack_pairs(v1, v2, a1, a2)?;
    let u = pack_pairs(u1, u2, a1, a2)?;
    conditional_type(&v, &u, joint, joint)
}

/// L1 distance between the joint conditional type and the Kronecker product
/// of the per-relay conditional types, summed over jointly defined columns.
/// Zero exactly when the joint type factorises on the observed inputs.
pub fn factorization_gap(
    v1: &[Symbol],
    v2: &[Symbol],
    u1: &[Symbol],
    u2: &[Symbol],
    a1: Alphabet,
    a2: Alphabet,
) -> Result<f64> {
    let joint = joint_conditional_type(v1, v2, u1, u2, a1, a2)?;
    let c1 = conditional_type(v1, u1, a1, a1)?;
    let c2 = conditional_type(v2, u2, a2, a2)?;
    let (n1, n2) = (a1.size(), a2.size());
    let mut gap = 0.0;
    for k1 in 1..=n1 {
        for k2 in 1..=n2 {
            let j = (k1 - 1) * n2 + k2;
            if !joint.is_defined(j) || !c1.is_defined(k1) || !c2.is_defined(k2) {
                continue;
            }
            for t1 in 1..=n1 {
                for t2 in 1..=n2 {
                    let i = (t1 - 1) * n2 + t2;
                    gap += (joint.entry(i, j) - c1.entry(t1, k1) * c2.entry(t2, k2)).abs();
                }
            }
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn a(n: usize) -> Alphabet {
        Alphabet::new(n).unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<Symbol> {
        (0..n).map(|_| (rng.next_u32() as usize % size + 1) as Symbol).collect()
    }

    #[test]
    fn count_examples() {
        assert_eq!(count(1, &[1, 1, 2, 1]), 3);
        assert_eq!(count(3, &[1, 1, 2, 1]), 0);
    }

    #[test]
    fn counts_sum_to_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.next_u32() as usize % 50 + 1;
            let seq = random_seq(&mut rng, n, 4);
            let total: usize = (1..=4).map(|s| count(s, &seq)).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn empirical_pmf_examples() {
        let p = empirical_pmf(&[1, 1, 2, 1], a(3)).unwrap();
        assert_eq!(p.as_slice(), &[0.75, 0.25, 0.0]);
        let p = empirical_pmf(&[2; 7], a(3)).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(empirical_pmf(&[], a(3)).is_err());
        assert!(empirical_pmf(&[4], a(3)).is_err());
    }

    #[test]
    fn conditional_type_hand_count() {
        let ct = conditional_type(&[1, 2, 2, 2], &[1, 2, 1, 2], a(2), a(2)).unwrap();
        assert_eq!(ct.ratio(1, 1), Some((1, 2)));
        assert_eq!(ct.ratio(2, 1), Some((1, 2)));
        assert_eq!(ct.ratio(1, 2), Some((0, 2)));
        assert_eq!(ct.ratio(2, 2), Some((2, 2)));
        assert_eq!(ct.matrix().column(1), &[0.5, 0.5]);
        assert_eq!(ct.matrix().column(2), &[0.0, 1.0]);
    }

    #[test]
    fn faithful_relay_gives_identity() {
        let seq = [1, 3, 2, 2, 1, 3];
        let ct = conditional_type(&seq, &seq, a(3), a(3)).unwrap();
        assert_eq!(ct.matrix(), StochasticMatrix::identity(3));
        assert_eq!(ct.distance_from_identity(), 0.0);
    }

    #[test]
    fn unobserved_input_column_is_flagged() {
        let ct = conditional_type(&[1, 2, 1], &[1, 1, 2], a(3), a(3)).unwrap();
        assert!(ct.is_defined(1) && ct.is_defined(2));
        assert!(!ct.is_defined(3));
        assert_eq!(ct.ratio(3, 3), None);
        assert_eq!(ct.matrix().column(3), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn conditional_type_length_mismatch() {
        assert!(conditional_type(&[1, 2], &[1], a(2), a(2)).is_err());
        assert!(joint_conditional_type(&[1], &[1, 1], &[1], &[1], a(2), a(2)).is_err());
    }

    #[test]
    fn joint_type_of_faithful_relays_is_identity() {
        let u1 = [1, 2, 3, 1, 2];
        let u2 = [3, 3, 1, 2, 2];
        let jt = joint_conditional_type(&u1, &u2, &u1, &u2, a(3), a(3)).unwrap();
        for j in jt.defined_columns() {
            for i in 1..=9 {
                assert_eq!(jt.entry(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_joint_input_gives_one_defined_column() {
        let jt = joint_conditional_type(&[1, 2, 3], &[2, 2, 1], &[2, 2, 2], &[3, 3, 3], a(3), a(3)).unwrap();
        assert_eq!(jt.defined_columns().collect::<Vec<_>>(), vec![6]);
    }

    #[test]
    fn joint_type_reduces_to_packed_conditional_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.next_u32() as usize % 60 + 1;
            let (s1, s2) = (rng.next_u32() as usize % 3 + 2, rng.next_u32() as usize % 3 + 2);
            let (v1, u1) = (random_seq(&mut rng, n, s1), random_seq(&mut rng, n, s1));
            let (v2, u2) = (random_seq(&mut rng, n, s2), random_seq(&mut rng, n, s2));
            let jt = joint_conditional_type(&v1, &v2, &u1, &u2, a(s1), a(s2)).unwrap();
            let pv = pack_pairs(&v1, &v2, a(s1), a(s2)).unwrap();
            let pu = pack_pairs(&u1, &u2, a(s1), a(s2)).unwrap();
            let direct = conditional_type(&pv, &pu, a(s1 * s2), a(s1 * s2)).unwrap();
            assert_eq!(jt, direct);
        }
    }

    #[test]
    fn factorization_gap_is_zero_for_faithful_relays() {
        let u1 = [1, 2, 3, 1, 2, 2];
        let u2 = [3, 3, 1, 2, 2, 1];
        assert_eq!(factorization_gap(&u1, &u2, &u1, &u2, a(3), a(3)).unwrap(), 0.0);
    }

    #[test]
    fn factorization_gap_detects_collusion_on_small_case() {
        // relay outputs copy each other's input: (v1, v2) = (u2, u1) given
        // perfectly correlated inputs on symbol pairs (1,1) and (2,2)
        let u1 = [1, 1, 2, 2];
        let u2 = [1, 2, 1, 2];
        let v1 = [1, 2, 2, 1];
        let v2 = [1, 2, 2, 1];
        let gap = factorization_gap(&v1, &v2, &u1, &u2, a(2), a(2)).unwrap();
        assert!(gap > 0.5, "gap {gap}");
    }

    #[test]
    fn joint_empirical_pmf_matches_flattened_joint_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u1 = random_seq(&mut rng, 200, 3);
        let u2 = random_seq(&mut rng, 200, 2);
        let packed = pack_pairs(&u1, &u2, a(3), a(2)).unwrap();
        let p = empirical_pmf(&packed, a(6)).unwrap();
        for k in 1..=3u8 {
            for t in 1..=2u8 {
                let n = u1.iter().zip(&u2).filter(|(&x, &y)| x == k && y == t).count();
                let j = (k as usize - 1) * 2 + t as usize;
                assert_eq!(p.prob(j), n as f64 / 200.0);
            }
        }
    }
}
