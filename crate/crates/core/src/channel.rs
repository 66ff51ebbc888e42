//! Alphabets, probability vectors, column-stochastic matrices and the
//! observation channel seen by the destination.
//!
//! Every matrix in this crate is column-stochastic: entry `(i, j)` is the
//! probability of output symbol `i` given input symbol `j`, and each column
//! sums to one. Symbols are 1-based (`1..=size`); the 0-based storage is an
//! implementation detail.
//!
//! Joint symbols over `U1 x U2` are packed as `j = (k - 1) * |U2| + t`, see
//! [`pair_index`]. [`kron`] uses the same block ordering.

use crate::error::{Error, Result};

/// A symbol drawn from a finite alphabet, 1-based.
pub type Symbol = u8;

/// Tolerance applied when validating user-supplied probabilities.
pub const PROB_TOL: f64 = 1e-12;

/// A finite alphabet `{1, ..., size}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub const MAX_SIZE: usize = Symbol::MAX as usize;

    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::arg("alphabet size must be at least 1"));
        }
        if size > Self::MAX_SIZE {
            return Err(Error::arg(format!(
                "alphabet size {size} exceeds the supported maximum {}",
                Self::MAX_SIZE
            )));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s >= 1 && (s as usize) <= self.size
    }

    /// Fails on the first symbol outside `1..=size`.
    pub fn check_sequence(&self, seq: &[Symbol]) -> Result<()> {
        match seq.iter().position(|&s| !self.contains(s)) {
            None => Ok(()),
            Some(i) => Err(Error::arg(format!(
                "symbol {} at position {} is outside the alphabet 1..={}",
                seq[i],
                i + 1,
                self.size
            ))),
        }
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        1..=(self.size as Symbol)
    }
}

/// A probability mass function over `1..=len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    values: Vec<f64>,
}

impl Pmf {
    /// Validates non-negativity and unit sum within [`PROB_TOL`]. No
    /// renormalisation is attempted.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("a PMF needs at least one entry"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg(format!(
                "PMF entry {} is {} (must be a non-negative number)",
                i + 1,
                values[i]
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::arg(format!("PMF entries sum to {sum}, not 1")));
        }
        Ok(Pmf { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        Pmf { values }
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::arg("a PMF needs at least one entry"));
        }
        Ok(Pmf {
            values: vec![1.0 / len as f64; len],
        })
    }

    /// Point mass on the 1-based `symbol`.
    pub fn one_hot(len: usize, symbol: usize) -> Result<Self> {
        if symbol == 0 || symbol > len {
            return Err(Error::arg(format!("symbol {symbol} outside 1..={len}")));
        }
        let mut values = vec![0.0; len];
        values[symbol - 1] = 1.0;
        Ok(Pmf { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Probability of the 1-based `symbol`.
    pub fn prob(&self, symbol: usize) -> f64 {
        self.values[symbol - 1]
    }

    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn l2_distance(&self, other: &Pmf) -> f64 {
        l2_distance(&self.values, &other.values)
    }
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A column-stochastic matrix: column `j` is the output distribution given
/// input symbol `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    // column-major, so each conditional PMF is contiguous
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix from a list of rows and validates it.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::arg("matrix has no rows"));
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err(Error::arg("matrix has no columns"));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::arg(format!(
                "row {} has {} entries, expected {ncols}",
                r + 1,
                rows[r].len()
            )));
        }
        let mut data = vec![0.0; nrows * ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * nrows + i] = v;
            }
        }
        Self::from_col_major(nrows, ncols, data)
    }

    /// Builds a matrix from column-major storage and validates it.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix storage", rows * cols, data.len()));
        }
        let m = StochasticMatrix { rows, cols, data };
        m.validate(PROB_TOL)?;
        Ok(m)
    }

    pub(crate) fn from_col_major_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        StochasticMatrix { rows, cols, data }
    }

    /// Checks entries in `[0, 1]` and unit column sums within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for j in 0..self.cols {
            let col = self.column_slice(j);
            if let Some(i) = col
                .iter()
                .position(|v| !v.is_finite() || *v < -tol || *v > 1.0 + tol)
            {
                return Err(Error::arg(format!(
                    "entry ({}, {}) = {} is not a probability",
                    i + 1,
                    j + 1,
                    col[i]
                )));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::arg(format!(
                    "column {} sums to {s}, not 1 (matrices are column-stochastic)",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            data[j * n + j] = 1.0;
        }
        StochasticMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    /// Deterministic map sending input `j` to output `image[j - 1]` (both
    /// 1-based). `image` must be a permutation for the result to be square
    /// and invertible, but any map into `1..=len` is accepted.
    pub fn from_map(image: &[usize]) -> Result<Self> {
        let n = image.len();
        let mut data = vec![0.0; n * n];
        for (j, &i) in image.iter().enumerate() {
            if i == 0 || i > n {
                return Err(Error::arg(format!("map image {i} outside 1..={n}")));
            }
            data[j * n + (i - 1)] = 1.0;
        }
        Ok(StochasticMatrix {
            rows: n,
            cols: n,
            data,
        })
    }

    /// Anti-diagonal permutation swapping symbol `k` with `n + 1 - k`.
    pub fn flip(n: usize) -> Self {
        let image: Vec<usize> = (1..=n).rev().collect();
        Self::from_map(&image).expect("reversal is a valid map")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Entry `(i, j)`, both 1-based.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(
            (1..=self.rows).contains(&i) && (1..=self.cols).contains(&j),
            "entry ({i}, {j}) outside {}x{}",
            self.rows,
            self.cols
        );
        self.data[(j - 1) * self.rows + (i - 1)]
    }

    /// Conditional PMF given the 1-based input symbol `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        self.column_slice(j - 1)
    }

    pub(crate) fn column_slice(&self, j0: usize) -> &[f64] {
        &self.data[j0 * self.rows..(j0 + 1) * self.rows]
    }

    pub(crate) fn at(&self, i0: usize, j0: usize) -> f64 {
        self.data[j0 * self.rows + i0]
    }

    pub(crate) fn col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j)).collect())
            .collect()
    }

    /// `self * v` for a column vector `v` of length `cols`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.column_slice(j)) {
                *o += a * vj;
            }
        }
        out
    }

    /// Frobenius distance to another matrix of the same shape.
    pub fn frobenius_distance(&self, other: &StochasticMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        l2_distance(&self.data, &other.data)
    }

    /// Frobenius distance to the identity; this is the `‖Υ − I‖₂` used
    /// throughout the detection and certification code.
    pub fn distance_from_identity(&self) -> f64 {
        assert!(self.is_square());
        identity_distance(&self.data, self.rows)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|k| self.at(k, k)).sum()
    }

    /// True when every column is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.cols).all(|j| self.column_slice(j).iter().all(|&v| v == 0.0 || v == 1.0))
    }
}

pub(crate) fn identity_distance(col_major: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = col_major[j * n + i] - if i == j { 1.0 } else { 0.0 };
            s += d * d;
        }
    }
    s.sqrt()
}

/// Packs the pair `(k, t)` into the joint index `(k - 1) * u2_size + t`.
pub fn pair_index(k: usize, t: usize, u1_size: usize, u2_size: usize) -> Result<usize> {
    if k == 0 || k > u1_size || t == 0 || t > u2_size {
        return Err(Error::arg(format!(
            "pair ({k}, {t}) outside 1..={u1_size} x 1..={u2_size}"
        )));
    }
    Ok((k - 1) * u2_size + t)
}

/// Inverse of [`pair_index`].
pub fn pair_unindex(j: usize, u1_size: usize, u2_size: usize) -> Result<(usize, usize)> {
    if j == 0 || j > u1_size * u2_size {
        return Err(Error::arg(format!(
            "joint index {j} outside 1..={}",
            u1_size * u2_size
        )));
    }
    Ok(((j - 1) / u2_size + 1, (j - 1) % u2_size + 1))
}

/// Packs two equal-length sequences into the joint alphabet.
pub fn pack_pairs(a: &[Symbol], b: &[Symbol], a_alpha: Alphabet, b_alpha: Alphabet) -> Result<Vec<Symbol>> {
    if a.len() != b.len() {
        return Err(Error::dims("pair packing", a.len(), b.len()));
    }
    let joint = a_alpha.size() * b_alpha.size();
    if joint > Alphabet::MAX_SIZE {
        return Err(Error::arg(format!("joint alphabet of size {joint} is too large")));
    }
    a_alpha.check_sequence(a)?;
    b_alpha.check_sequence(b)?;
    let m = b_alpha.size();
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| ((x as usize - 1) * m + y as usize) as Symbol)
        .collect())
}

/// Kronecker product with block ordering matching [`pair_index`].
pub fn kron(a: &StochasticMatrix, b: &StochasticMatrix) -> StochasticMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![0.0; rows * cols];
    for ja in 0..a.cols {
        for jb in 0..b.cols {
            let col = ja * b.cols + jb;
            let out = &mut data[col * rows..(col + 1) * rows];
            for ia in 0..a.rows {
                let av = a.at(ia, ja);
                if av == 0.0 {
                    continue;
                }
                for ib in 0..b.rows {
                    out[ia * b.rows + ib] = av * b.at(ib, jb);
                }
            }
        }
    }
    StochasticMatrix::from_col_major_unchecked(rows, cols, data)
}

/// Joint PMF of `(U1, U2)` when both relays observe the source through
/// independent channels: `P(u1, u2) = Σ_x P_X(x) P(u1|x) P(u2|x)`.
pub fn joint_pmf_from_product(
    p_x: &Pmf,
    p_u1_given_x: &StochasticMatrix,
    p_u2_given_x: &StochasticMatrix,
) -> Result<Pmf> {
    let nx = p_x.len();
    if p_u1_given_x.cols() != nx {
        return Err(Error::dims("P(U1|X) columns", nx, p_u1_given_x.cols()));
    }
    if p_u2_given_x.cols() != nx {
        return Err(Error::dims("P(U2|X) columns", nx, p_u2_given_x.cols()));
    }
    let (n1, n2) = (p_u1_given_x.rows(), p_u2_given_x.rows());
    let mut joint = vec![0.0; n1 * n2];
    for (x, &px) in p_x.as_slice().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let c1 = p_u1_given_x.column_slice(x);
        let c2 = p_u2_given_x.column_slice(x);
        for k in 0..n1 {
            for t in 0..n2 {
                joint[k * n2 + t] += px * c1[k] * c2[t];
            }
        }
    }
    Ok(Pmf::from_vec_unchecked(joint))
}

/// The pair `(P_{U1,U2}, P_{Y|V1,V2})` known to the destination.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationChannel {
    u1_size: usize,
    u2_size: usize,
    joint_input: Pmf,
    forward: StochasticMatrix,
}

impl ObservationChannel {
    pub fn new(
        u1_size: usize,
        u2_size: usize,
        joint_input: Pmf,
        forward: StochasticMatrix,
    ) -> Result<Self> {
        Alphabet::new(u1_size)?;
        Alphabet::new(u2_size)?;
        let joint = u1_size * u2_size;
        if joint_input.len() != joint {
            return Err(Error::dims("joint input PMF", joint, joint_input.len()));
        }
        if forward.cols() != joint {
            return Err(Error::dims("forward channel columns", joint, forward.cols()));
        }
        Alphabet::new(forward.rows())?;
        Ok(ObservationChannel {
            u1_size,
            u2_size,
            joint_input,
            forward,
        })
    }

    pub fn u1_size(&self) -> usize {
        self.u1_size
    }

    pub fn u2_size(&self) -> usize {
        self.u2_size
    }

    pub fn y_size(&self) -> usize {
        self.forward.rows()
    }

    pub fn joint_input(&self) -> &Pmf {
        &self.joint_input
    }

    pub fn forward(&self) -> &StochasticMatrix {
        &self.forward
    }

    /// Output distribution when relay `m` acts through `Υm`; for `(I, I)`
    /// this is the no-attack prediction `P_{U1,U2} P_{Y|V1,V2}ᵀ`.
    pub(crate) fn output_for_pair(&self, y1: &[f64], y2: &[f64]) -> Vec<f64> {
        let (n1, n2) = (self.u1_size, self.u2_size);
        let p = self.joint_input.as_slice();
        // inner = Υ2 applied along t, then Υ1 along k
        let mut half = vec![0.0; n1 * n2];
        for k in 0..n1 {
            for t_out in 0..n2 {
                let mut s = 0.0;
                for t in 0..n2 {
                    s += y2[t * n2 + t_out] * p[k * n2 + t];
                }
                half[k * n2 + t_out] = s;
            }
        }
        let mut relayed = vec![0.0; n1 * n2];
        for k_out in 0..n1 {
            for k in 0..n1 {
                let a = y1[k * n1 + k_out];
                if a == 0.0 {
                    continue;
                }
                for t_out in 0..n2 {
                    relayed[k_out * n2 + t_out] += a * half[k * n2 + t_out];
                }
            }
        }
        self.forward.apply(&relayed)
    }

    /// No-attack prediction of the destination's symbol distribution.
    pub fn predicted_output(&self) -> Pmf {
        Pmf::from_vec_unchecked(self.forward.apply(self.joint_input.as_slice()))
    }
}

/// Destination distribution `P_{U1,U2} (Υ1ᵀ ⊗ Υ2ᵀ) P_{Y|V1,V2}ᵀ` for the
/// relay conditional PMFs `y1`, `y2`.
pub fn expected_output_pmf(
    ch: &ObservationChannel,
    y1: &StochasticMatrix,
    y2: &StochasticMatrix,
) -> Result<Pmf> {
    check_relay_pair(ch, y1, y2)?;
    Ok(Pmf::from_vec_unchecked(
        ch.output_for_pair(y1.col_major(), y2.col_major()),
    ))
}

pub(crate) fn check_relay_pair(
    ch: &ObservationChannel,
    y1: &StochasticMatrix,
    y2: &StochasticMatrix,
) -> Result<()> {
    if y1.rows() != ch.u1_size() {
        return Err(Error::dims("relay 1 matrix size", ch.u1_size(), y1.rows()));
    }
    if !y1.is_square() {
        return Err(Error::dims("relay 1 matrix columns", y1.rows(), y1.cols()));
    }
    if y2.rows() != ch.u2_size() {
        return Err(Error::dims("relay 2 matrix size", ch.u2_size(), y2.rows()));
    }
    if !y2.is_square() {
        return Err(Error::dims("relay 2 matrix columns", y2.rows(), y2.cols()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sec5_relay() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.9, 0.0], vec![0.1, 0.1], vec![0.0, 0.9]]).unwrap()
    }

    #[test]
    fn pair_index_examples() {
        assert_eq!(pair_index(1, 1, 3, 3).unwrap(), 1);
        assert_eq!(pair_index(2, 3, 3, 3).unwrap(), 6);
        assert_eq!(pair_index(3, 1, 3, 3).unwrap(), 7);
        assert!(pair_index(0, 1, 3, 3).is_err());
        assert!(pair_index(1, 4, 3, 3).is_err());
        assert!(pair_index(4, 1, 3, 3).is_err());
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron(&StochasticMatrix::identity(2), &StochasticMatrix::identity(3));
        assert_eq!(k, StochasticMatrix::identity(6));
    }

    #[test]
    fn kron_identity_with_swap() {
        let swap = StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let k = kron(&StochasticMatrix::identity(2), &swap);
        let expected = StochasticMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_of_flips_reverses_joint_index() {
        let f = StochasticMatrix::flip(3);
        let k = kron(&f, &f);
        k.validate(1e-12).unwrap();
        for j in 1..=9 {
            assert_eq!(k.entry(10 - j, j), 1.0);
        }
    }

    #[test]
    fn joint_pmf_sec5b() {
        let p_x = Pmf::new(vec![0.5, 0.5]).unwrap();
        let a = sec5_relay();
        let joint = joint_pmf_from_product(&p_x, &a, &a).unwrap();
        // 0.5 (0.9, 0.1, 0)ᵀ(0.9, 0.1, 0) + 0.5 (0, 0.1, 0.9)ᵀ(0, 0.1, 0.9)
        let expected = [0.405, 0.045, 0.0, 0.045, 0.01, 0.045, 0.0, 0.045, 0.405];
        for (got, want) in joint.as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn quarter_grid_joint_needs_even_split_relays() {
        // The 1/8-grid joint [[.125,.125,0],[.125,.25,.125],[0,.125,.125]]
        // comes from relays that split each source symbol evenly, not from
        // the 0.9/0.1 relays above.
        let p_x = Pmf::new(vec![0.5, 0.5]).unwrap();
        let half = StochasticMatrix::from_rows(&[vec![0.5, 0.0], vec![0.5, 0.5], vec![0.0, 0.5]]).unwrap();
        let joint = joint_pmf_from_product(&p_x, &half, &half).unwrap();
        assert_eq!(joint.as_slice(), &[0.125, 0.125, 0.0, 0.125, 0.25, 0.125, 0.0, 0.125, 0.125]);
        let other = joint_pmf_from_product(&p_x, &sec5_relay(), &sec5_relay()).unwrap();
        assert!(other.l1_distance(&joint) > 0.5);
    }

    #[test]
    fn joint_pmf_degenerate_source_is_outer_product() {
        let p_x = Pmf::new(vec![1.0, 0.0]).unwrap();
        let a = sec5_relay();
        let b = StochasticMatrix::from_rows(&[vec![0.3, 0.5], vec![0.7, 0.5]]).unwrap();
        let joint = joint_pmf_from_product(&p_x, &a, &b).unwrap();
        let expected = [0.27, 0.63, 0.03, 0.07, 0.0, 0.0];
        for (got, want) in joint.as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_pmf_sec5a_matches_brute_force() {
        let px = [0.4999, 0.5001];
        let p_x = Pmf::new(px.to_vec()).unwrap();
        let a = sec5_relay();
        let joint = joint_pmf_from_product(&p_x, &a, &a).unwrap();
        let cols = [[0.9, 0.1, 0.0], [0.0, 0.1, 0.9]];
        for k in 0..3 {
            for t in 0..3 {
                let mut s = 0.0;
                for x in 0..2 {
                    s += px[x] * cols[x][k] * cols[x][t];
                }
                let j = pair_index(k + 1, t + 1, 3, 3).unwrap();
                assert!((joint.prob(j) - s).abs() < 1e-15);
            }
        }
        // hand values for the two largest cells
        assert!((joint.prob(1) - 0.404919).abs() < 1e-12);
        assert!((joint.prob(9) - 0.405081).abs() < 1e-12);
        assert!(joint_pmf_from_product(&p_x, &a, &StochasticMatrix::identity(3)).is_err());
    }

    fn sec5b_channel() -> ObservationChannel {
        let p_x = Pmf::new(vec![0.5, 0.5]).unwrap();
        let a = sec5_relay();
        let joint = joint_pmf_from_product(&p_x, &a, &a).unwrap();
        ObservationChannel::new(3, 3, joint, StochasticMatrix::identity(9)).unwrap()
    }

    #[test]
    fn expected_output_identity_returns_joint_input() {
        let ch = sec5b_channel();
        let i3 = StochasticMatrix::identity(3);
        let out = expected_output_pmf(&ch, &i3, &i3).unwrap();
        assert_eq!(out.as_slice(), ch.joint_input().as_slice());
    }

    #[test]
    fn expected_output_flip_pair_matches_identity_on_symmetric_input() {
        let ch = sec5b_channel();
        let f = StochasticMatrix::flip(3);
        let i3 = StochasticMatrix::identity(3);
        let a = expected_output_pmf(&ch, &f, &f).unwrap();
        let b = expected_output_pmf(&ch, &i3, &i3).unwrap();
        assert!(a.l2_distance(&b) < 1e-15);
    }

    #[test]
    fn expected_output_sec5a_identity_is_joint_input() {
        let p_x = Pmf::new(vec![0.4999, 0.5001]).unwrap();
        let a = sec5_relay();
        let joint = joint_pmf_from_product(&p_x, &a, &a).unwrap();
        let ch = ObservationChannel::new(3, 3, joint.clone(), StochasticMatrix::identity(9)).unwrap();
        let i3 = StochasticMatrix::identity(3);
        let out = expected_output_pmf(&ch, &i3, &i3).unwrap();
        // matrix-vector oracle: I_9 * p
        let mv = StochasticMatrix::identity(9).apply(joint.as_slice());
        for (x, y) in out.as_slice().iter().zip(&mv) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_output_rejects_wrong_sizes() {
        let ch = sec5b_channel();
        let i2 = StochasticMatrix::identity(2);
        let i3 = StochasticMatrix::identity(3);
        assert!(expected_output_pmf(&ch, &i2, &i3).is_err());
        assert!(expected_output_pmf(&ch, &i3, &i2).is_err());
    }

    #[test]
    fn pmf_refuses_to_renormalise() {
        assert!(Pmf::new(vec![0.5, 0.5000001]).is_err());
        assert!(Pmf::new(vec![-0.1, 1.1]).is_err());
        assert!(Pmf::new(vec![]).is_err());
        assert!(Pmf::new(vec![0.4999, 0.5001]).is_ok());
    }

    #[test]
    fn row_stochastic_input_is_rejected() {
        // rows sum to one but columns do not
        let err = StochasticMatrix::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap_err();
        assert!(err.to_string().contains("column-stochastic"));
    }

    fn stochastic(rows: usize, cols: usize) -> impl Strategy<Value = StochasticMatrix> {
        prop::collection::vec(0.01f64..1.0, rows * cols).prop_map(move |mut d| {
            for j in 0..cols {
                let s: f64 = d[j * rows..(j + 1) * rows].iter().sum();
                d[j * rows..(j + 1) * rows].iter_mut().for_each(|v| *v /= s);
            }
            StochasticMatrix::from_col_major_unchecked(rows, cols, d)
        })
    }

    /// Explicit Kronecker oracle: row vector p times (A ⊗ B)ᵀ times Fᵀ.
    fn oracle_output(ch: &ObservationChannel, a: &StochasticMatrix, b: &StochasticMatrix) -> Vec<f64> {
        let w = kron(a, b);
        let relayed = w.apply(ch.joint_input().as_slice());
        ch.forward().apply(&relayed)
    }

    proptest! {
        #[test]
        fn kron_preserves_column_sums(a in stochastic(3, 2), b in stochastic(2, 3)) {
            let k = kron(&a, &b);
            prop_assert!(k.validate(1e-9).is_ok());
        }

        #[test]
        fn pair_index_round_trips(n1 in 1usize..10, n2 in 1usize..10, k in 0usize..10, t in 0usize..10) {
            let (k, t) = (k % n1 + 1, t % n2 + 1);
            let j = pair_index(k, t, n1, n2).unwrap();
            prop_assert!(j >= 1 && j <= n1 * n2);
            prop_assert_eq!(pair_unindex(j, n1, n2).unwrap(), (k, t));
        }

        #[test]
        fn expected_output_is_pmf_and_matches_kron_oracle(
            p in prop::collection::vec(0.01f64..1.0, 6),
            fwd in stochastic(4, 6),
            a in stochastic(2, 2),
            b in stochastic(3, 3),
        ) {
            let s: f64 = p.iter().sum();
            let joint = Pmf::from_vec_unchecked(p.iter().map(|v| v / s).collect());
            let ch = ObservationChannel::new(2, 3, joint, fwd).unwrap();
            let out = expected_output_pmf(&ch, &a, &b).unwrap();
            prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let oracle = oracle_output(&ch, &a, &b);
            for (x, y) in out.as_slice().iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let id = expected_output_pmf(&ch, &StochasticMatrix::identity(2), &StochasticMatrix::identity(3)).unwrap();
            let direct = ch.forward().apply(ch.joint_input().as_slice());
            for (x, y) in id.as_slice().iter().zip(&direct) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
