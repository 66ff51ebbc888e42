//! Local search over pairs of column-stochastic matrices, shared by the
//! attack-type estimator and the manipulation-witness search.
//!
//! Matrices are handled as raw column-major slices; `(y1, y2)` always means
//! relay 1's `|U1| x |U1|` and relay 2's `|U2| x |U2|` matrices.

use crate::channel::{identity_distance, ObservationChannel};
use crate::simulate::StreamRng;

/// Squared residual `‖P_{U1,U2}(Υ1ᵀ⊗Υ2ᵀ)P_{Y|V1,V2}ᵀ − target‖²` and its
/// gradient.
pub(crate) struct PairResidual<'a> {
    ch: &'a ObservationChannel,
    target: Vec<f64>,
}

impl<'a> PairResidual<'a> {
    pub(crate) fn new(ch: &'a ObservationChannel, target: Vec<f64>) -> Self {
        debug_assert_eq!(target.len(), ch.y_size());
        PairResidual { ch, target }
    }

    pub(crate) fn value(&self, y1: &[f64], y2: &[f64]) -> f64 {
        let out = self.ch.output_for_pair(y1, y2);
        out.iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Returns the squared residual and writes its gradient into `g1`, `g2`.
    pub(crate) fn value_and_grad(&self, y1: &[f64], y2: &[f64], g1: &mut [f64], g2: &mut [f64]) -> f64 {
        let (n1, n2) = (self.ch.u1_size(), self.ch.u2_size());
        let p = self.ch.joint_input().as_slice();
        let fwd = self.ch.forward();

        // h[k][t'] = Σ_t p[k][t] Υ2[t'][t];  kk[k'][t] = Σ_k Υ1[k'][k] p[k][t]
        let mut h = vec![0.0; n1 * n2];
        let mut kk = vec![0.0; n1 * n2];
        for k in 0..n1 {
            for t_out in 0..n2 {
                h[k * n2 + t_out] = (0..n2).map(|t| y2[t * n2 + t_out] * p[k * n2 + t]).sum();
            }
        }
        for k_out in 0..n1 {
            for t in 0..n2 {
                kk[k_out * n2 + t] = (0..n1).map(|k| y1[k * n1 + k_out] * p[k * n2 + t]).sum();
            }
        }
        let mut relayed = vec![0.0; n1 * n2];
        for k_out in 0..n1 {
            for k in 0..n1 {
                let a = y1[k * n1 + k_out];
                for t_out in 0..n2 {
                    relayed[k_out * n2 + t_out] += a * h[k * n2 + t_out];
                }
            }
        }
        let out = fwd.apply(&relayed);
        let err: Vec<f64> = out.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let value = err.iter().map(|e| e * e).sum();

        // e_relayed = 2 Fᵀ err
        let mut e = vec![0.0; n1 * n2];
        for (j, ej) in e.iter_mut().enumerate() {
            *ej = 2.0 * fwd.column_slice(j).iter().zip(&err).map(|(f, r)| f * r).sum::<f64>();
        }
        for b in 0..n1 {
            for a in 0..n1 {
                g1[b * n1 + a] = (0..n2).map(|t| e[a * n2 + t] * h[b * n2 + t]).sum();
            }
        }
        for d in 0..n2 {
            for c in 0..n2 {
                g2[d * n2 + c] = (0..n1).map(|k| e[k * n2 + c] * kk[k * n2 + d]).sum();
            }
        }
        value
    }
}

/// Euclidean projection of every column of an `n x n` column-major matrix
/// onto the probability simplex.
pub(crate) fn project_columns(m: &mut [f64], n: usize) {
    let mut sorted = vec![0.0; n];
    for col in m.chunks_exact_mut(n) {
        sorted.copy_from_slice(col);
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut theta = 0.0;
        for (k, &s) in sorted.iter().enumerate() {
            acc += s;
            let t = (acc - 1.0) / (k + 1) as f64;
            if s - t > 0.0 {
                theta = t;
            }
        }
        for v in col.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
    }
}

pub(crate) fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for j in 0..n {
        m[j * n + j] = 1.0;
    }
    m
}

/// Random column-stochastic matrix with Dirichlet(1, ..., 1) columns.
pub(crate) fn random_stochastic(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    for col in m.chunks_exact_mut(n) {
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// All permutations of `0..n` in lexicographic order, identity first.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Column-major permutation matrix sending input `j` to output `perm[j]`.
pub(crate) fn permutation_matrix(perm: &[usize]) -> Vec<f64> {
    let n = perm.len();
    let mut m = vec![0.0; n * n];
    for (j, &i) in perm.iter().enumerate() {
        m[j * n + i] = 1.0;
    }
    m
}

pub(crate) fn pair_distance(y1: &[f64], n1: usize, y2: &[f64], n2: usize) -> f64 {
    identity_distance(y1, n1) + identity_distance(y2, n2)
}

/// Projected gradient descent on the squared residual with Armijo
/// backtracking. Stops once the residual (not squared) drops to `goal`.
/// Returns the final squared residual.
pub(crate) fn descend(
    f: &PairResidual<'_>,
    y1: &mut Vec<f64>,
    y2: &mut Vec<f64>,
    goal: f64,
    max_iter: usize,
) -> f64 {
    let (n1, n2) = (f.ch.u1_size(), f.ch.u2_size());
    let mut g1 = vec![0.0; n1 * n1];
    let mut g2 = vec![0.0; n2 * n2];
    let mut step = 1.0;
    let mut value = f.value_and_grad(y1, y2, &mut g1, &mut g2);
    let mut stalled = 0;
    for _ in 0..max_iter {
        if value <= goal * goal {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let mut c1: Vec<f64> = y1.iter().zip(&g1).map(|(y, g)| y - step * g).collect();
            let mut c2: Vec<f64> = y2.iter().zip(&g2).map(|(y, g)| y - step * g).collect();
            project_columns(&mut c1, n1);
            project_columns(&mut c2, n2);
            let moved: f64 = c1.iter().zip(y1.iter()).chain(c2.iter().zip(y2.iter())).map(|(a, b)| (a - b) * (a - b)).sum();
            let cand = f.value(&c1, &c2);
            if moved > 0.0 && cand <= value - 1e-4 * moved / step {
                let improvement = value - cand;
                *y1 = c1;
                *y2 = c2;
                value = f.value_and_grad(y1, y2, &mut g1, &mut g2);
                stalled = if improvement <= 1e-14 * value.max(1e-300) { stalled + 1 } else { 0 };
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalled > 20 {
            break;
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{joint_pmf_from_product, Pmf, StochasticMatrix};
    use crate::simulate::{Role, RngStream};

    fn channel() -> ObservationChannel {
        let a = StochasticMatrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.3], vec![0.0, 0.5]]).unwrap();
        let b = StochasticMatrix::from_rows(&[vec![0.6, 0.1], vec![0.4, 0.9]]).unwrap();
        let joint = joint_pmf_from_product(&Pmf::new(vec![0.3, 0.7]).unwrap(), &a, &b).unwrap();
        let mut fwd = vec![0.0; 4 * 6];
        let mut rng = RngStream::new(3, 0, Role::Forward).rng();
        for col in fwd.chunks_exact_mut(4) {
            let mut s = 0.0;
            for v in col.iter_mut() {
                *v = rng.uniform() + 0.05;
                s += *v;
            }
            col.iter_mut().for_each(|v| *v /= s);
        }
        ObservationChannel::new(3, 2, joint, StochasticMatrix::from_col_major(4, 6, fwd).unwrap()).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ch = channel();
        let f = PairResidual::new(&ch, vec![0.1, 0.2, 0.3, 0.4]);
        let mut rng = RngStream::new(1, 0, Role::Search).rng();
        let y1 = random_stochastic(3, &mut rng);
        let y2 = random_stochastic(2, &mut rng);
        let (mut g1, mut g2) = (vec![0.0; 9], vec![0.0; 4]);
        f.value_and_grad(&y1, &y2, &mut g1, &mut g2);
        let h = 1e-6;
        for k in 0..9 {
            let (mut a, mut b) = (y1.clone(), y1.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f.value(&a, &y2) - f.value(&b, &y2)) / (2.0 * h);
            assert!((fd - g1[k]).abs() < 1e-7, "g1[{k}] {fd} vs {}", g1[k]);
        }
        for k in 0..4 {
            let (mut a, mut b) = (y2.clone(), y2.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f.value(&y1, &a) - f.value(&y1, &b)) / (2.0 * h);
            assert!((fd - g2[k]).abs() < 1e-7, "g2[{k}] {fd} vs {}", g2[k]);
        }
    }

    #[test]
    fn projection_lands_on_simplex() {
        let mut m = vec![0.5, 0.9, -0.3, 2.0, 0.0, 0.0, 0.2, 0.2, 0.2];
        project_columns(&mut m, 3);
        for col in m.chunks(3) {
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(&m[3..6], &[1.0, 0.0, 0.0]);
        let mut c = vec![0.2, 0.2, 0.6];
        project_columns(&mut c, 3);
        assert!((c[2] - 0.6).abs() < 1e-15, "points on the simplex stay put");
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn descent_reduces_residual() {
        let ch = channel();
        let target = ch.predicted_output().as_slice().to_vec();
        let f = PairResidual::new(&ch, target);
        let mut rng = RngStream::new(2, 0, Role::Search).rng();
        let mut y1 = random_stochastic(3, &mut rng);
        let mut y2 = random_stochastic(2, &mut rng);
        let before = f.value(&y1, &y2);
        let after = descend(&f, &mut y1, &mut y2, 0.0, 500);
        assert!(after < before);
    }
}
