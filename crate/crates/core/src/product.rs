//! Product chains on `{0..d-1}^m` and the coordinate-shuffling symmetries.
//!
//! States are encoded in base `d` with the first coordinate most
//! significant, matching [`Matrix::kron`].

use crate::error::{Error, Result};
use crate::kernel::{MarkovKernel, ProbabilityVector, Tolerances};
use crate::matrix::Matrix;
use crate::symmetry::Permutation;

/// Cap on the product state count.
pub const PRODUCT_LIMIT: usize = 4096;

fn state_count(d: usize, m: usize) -> Result<usize> {
    if d == 0 || m == 0 {
        return Err(Error::Empty);
    }
    d.checked_pow(m as u32)
        .filter(|&s| s <= PRODUCT_LIMIT)
        .ok_or(Error::SizeLimitExceeded {
            n: usize::MAX,
            limit: PRODUCT_LIMIT,
        })
}

/// `P ⊗ ... ⊗ P` with `m` factors: all coordinates move at once.
pub fn tensor_power(p: &MarkovKernel, m: usize) -> Result<MarkovKernel> {
    state_count(p.n(), m)?;
    let mut acc = p.matrix().clone();
    for _ in 1..m {
        acc = acc.kron(p.matrix());
    }
    MarkovKernel::from_matrix(acc, &product_tol())
}

/// `(1/m) sum_i I ⊗ .. ⊗ P ⊗ .. ⊗ I`: one uniformly chosen coordinate moves.
pub fn coordinate_average(p: &MarkovKernel, m: usize) -> Result<MarkovKernel> {
    state_count(p.n(), m)?;
    let d = p.n();
    let id = Matrix::identity(d);
    let mut sum: Option<Matrix> = None;
    for i in 0..m {
        let mut term = if i == 0 {
            p.matrix().clone()
        } else {
            id.clone()
        };
        for j in 1..m {
            term = term.kron(if j == i { p.matrix() } else { &id });
        }
        sum = Some(match sum {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    let avg = sum.expect("m >= 1").scale(1.0 / m as f64);
    MarkovKernel::from_matrix(avg, &product_tol())
}

/// Product measure `mu^{⊗m}`.
pub fn product_measure(mu: &ProbabilityVector, m: usize) -> Result<ProbabilityVector> {
    let d = mu.len();
    let total = state_count(d, m)?;
    let w = (0..total)
        .map(|s| digits(s, d, m).iter().map(|&x| mu[x]).product())
        .collect();
    ProbabilityVector::normalized(w)
}

/// Coordinates of a product state, first coordinate first.
pub fn digits(mut s: usize, d: usize, m: usize) -> Vec<usize> {
    let mut out = vec![0; m];
    for i in (0..m).rev() {
        out[i] = s % d;
        s /= d;
    }
    out
}

fn encode(xs: &[usize], d: usize) -> usize {
    xs.iter().fold(0, |acc, &x| acc * d + x)
}

/// The `m!` state permutations obtained by shuffling coordinates.
pub fn coordinate_permutations(d: usize, m: usize) -> Result<Vec<Permutation>> {
    let total = state_count(d, m)?;
    let mut orders = Vec::new();
    let mut current: Vec<usize> = Vec::with_capacity(m);
    let mut used = vec![false; m];
    shuffles(m, &mut current, &mut used, &mut orders);
    orders
        .into_iter()
        .map(|sigma| {
            let map = (0..total)
                .map(|s| {
                    let xs = digits(s, d, m);
                    let moved: Vec<usize> = sigma.iter().map(|&i| xs[i]).collect();
                    encode(&moved, d)
                })
                .collect();
            Permutation::new(map)
        })
        .collect()
}

fn shuffles(m: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
    if current.len() == m {
        out.push(current.clone());
        return;
    }
    for i in 0..m {
        if !used[i] {
            used[i] = true;
            current.push(i);
            shuffles(m, current, used, out);
            current.pop();
            used[i] = false;
        }
    }
}

fn product_tol() -> Tolerances {
    Tolerances {
        tol_stochastic: 1e-9,
        ..Tolerances::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::stationary_distribution;
    use crate::symmetry::{is_closed_group, symmetry_defect};

    fn biased() -> MarkovKernel {
        MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap()
    }

    #[test]
    fn shuffles_preserve_both_products() {
        let perms = coordinate_permutations(2, 3).unwrap();
        assert_eq!(perms.len(), 6);
        assert!(is_closed_group(&perms));
        let t = tensor_power(&biased(), 3).unwrap();
        let a = coordinate_average(&biased(), 3).unwrap();
        for g in &perms {
            assert!(symmetry_defect(&t, g).unwrap() < 1e-15);
            assert!(symmetry_defect(&a, g).unwrap() < 1e-15);
        }
    }

    #[test]
    fn product_measure_is_invariant() {
        let mu = stationary_distribution(&biased()).unwrap();
        let mu3 = product_measure(&mu, 3).unwrap();
        let a = coordinate_average(&biased(), 3).unwrap();
        let moved = a.matrix().left_mul(mu3.weights());
        for (u, v) in moved.iter().zip(mu3.weights()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn digits_round_trip() {
        for s in 0..27 {
            assert_eq!(encode(&digits(s, 3, 3), 3), s);
        }
        assert_eq!(digits(6, 2, 3), vec![1, 1, 0]);
    }
}
