//! Validated Markov kernels, probability vectors and structural predicates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{solve_tall, Matrix};

/// Numerical thresholds shared by every computation in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of a row sum from 1.
    pub tol_stochastic: f64,
    /// Entries above `-tol_nonneg` count as non-negative.
    pub tol_nonneg: f64,
    /// Eigenvalue gaps at or below this are treated as multiplicities.
    pub tol_eig_gap: f64,
    /// Residual threshold for algebraic identities.
    pub tol_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_stochastic: 1e-12,
            tol_nonneg: 1e-9,
            tol_eig_gap: 1e-8,
            tol_residual: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tol_stochastic,
            self.tol_nonneg,
            self.tol_eig_gap,
            self.tol_residual,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidMeasure(
                "tolerances must be finite and strictly positive".into(),
            ))
        }
    }
}

/// A probability measure on `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbabilityVectorJson", into = "ProbabilityVectorJson")]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProbabilityVectorJson {
    n: usize,
    weights: Vec<f64>,
}

impl TryFrom<ProbabilityVectorJson> for ProbabilityVector {
    type Error = Error;

    fn try_from(raw: ProbabilityVectorJson) -> Result<Self> {
        if raw.n != raw.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.n,
                found: raw.weights.len(),
            });
        }
        ProbabilityVector::new(raw.weights, &Tolerances::default())
    }
}

impl From<ProbabilityVector> for ProbabilityVectorJson {
    fn from(p: ProbabilityVector) -> Self {
        ProbabilityVectorJson {
            n: p.weights.len(),
            weights: p.weights,
        }
    }
}

impl ProbabilityVector {
    /// Validates non-negativity and unit mass; the mass is renormalized to 1
    /// when it is within `tol_stochastic`.
    pub fn new(weights: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("non-finite weight at {i}")));
            }
            if *w < 0.0 {
                return Err(Error::InvalidMeasure(format!("negative weight {w} at {i}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol.tol_stochastic {
            return Err(Error::InvalidMeasure(format!("total mass {total}")));
        }
        Ok(ProbabilityVector {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalizes arbitrary non-negative weights with positive total mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        Ok(ProbabilityVector {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn dirac(n: usize, x: usize) -> Result<Self> {
        if x >= n {
            return Err(Error::IndexOutOfRange { index: x, n });
        }
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Ok(ProbabilityVector { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        Ok(ProbabilityVector {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }

    pub(crate) fn ensure_positive(&self) -> Result<()> {
        match self.weights.iter().position(|w| *w <= 0.0) {
            Some(x) => Err(Error::NonPositiveMeasure(x)),
            None => Ok(()),
        }
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// A row-stochastic square matrix with cached structure flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct MarkovKernel {
    entries: Matrix,
    irreducible: bool,
    birth_death: bool,
}

/// On-disk kernel format: `{"n": 3, "rows": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelJson {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<KernelJson> for MarkovKernel {
    type Error = Error;

    fn try_from(raw: KernelJson) -> Result<Self> {
        if raw.rows.len() != raw.n {
            return Err(Error::DimensionMismatch {
                expected: raw.n,
                found: raw.rows.len(),
            });
        }
        validate_kernel(&raw.rows, &Tolerances::default())
    }
}

impl From<MarkovKernel> for KernelJson {
    fn from(k: MarkovKernel) -> Self {
        KernelJson {
            n: k.n(),
            rows: k.entries.to_rows(),
        }
    }
}

/// Validates a raw square matrix as a Markov kernel.
///
/// Entries in `[-tol_stochastic, 0)` are treated as round-off and clamped to
/// zero; rows whose sum is within `tol_stochastic` of 1 are renormalized.
pub fn validate_kernel(raw: &[Vec<f64>], tol: &Tolerances) -> Result<MarkovKernel> {
    let m = Matrix::from_rows(raw)?;
    MarkovKernel::from_matrix(m, tol)
}

impl MarkovKernel {
    pub fn from_matrix(mut m: Matrix, tol: &Tolerances) -> Result<Self> {
        let n = m.rows();
        if n == 0 {
            return Err(Error::Empty);
        }
        if m.cols() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: m.cols(),
            });
        }
        for x in 0..n {
            for y in 0..n {
                let v = m[(x, y)];
                if !v.is_finite() {
                    return Err(Error::NonFinite(x, y));
                }
                if v < -tol.tol_stochastic {
                    return Err(Error::NegativeEntry { x, y, value: v });
                }
                if v < 0.0 {
                    m[(x, y)] = 0.0;
                }
            }
            let sum: f64 = m.row(x).iter().sum();
            if (sum - 1.0).abs() > tol.tol_stochastic {
                return Err(Error::RowSumViolation { x, sum });
            }
            m.row_mut(x).iter_mut().for_each(|v| *v /= sum);
        }
        let irreducible = support_irreducible(&m);
        let birth_death = support_birth_death(&m);
        Ok(MarkovKernel {
            entries: m,
            irreducible,
            birth_death,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        validate_kernel(rows, &Tolerances::default())
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_matrix(Matrix::identity(n), &Tolerances::default())
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.to_rows()
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn is_birth_death(&self) -> bool {
        self.birth_death
    }

    /// `P(x, y)`, with zero for indices outside the state space.
    pub fn rate(&self, x: isize, y: isize) -> f64 {
        let n = self.n() as isize;
        if x < 0 || y < 0 || x >= n || y >= n {
            0.0
        } else {
            self.entries[(x as usize, y as usize)]
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel serialization cannot fail")
    }
}

impl std::ops::Index<(usize, usize)> for MarkovKernel {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.entries[idx]
    }
}

fn reachable(m: &Matrix, transpose: bool) -> usize {
    let n = m.rows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            let w = if transpose { m[(y, x)] } else { m[(x, y)] };
            if w > 0.0 && !seen[y] {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count
}

fn support_irreducible(m: &Matrix) -> bool {
    let n = m.rows();
    reachable(m, false) == n && reachable(m, true) == n
}

fn support_birth_death(m: &Matrix) -> bool {
    let n = m.rows();
    (0..n).all(|x| (0..n).all(|y| x.abs_diff(y) <= 1 || m[(x, y)] == 0.0))
}

/// Irreducibility by forward and backward reachability from state 0.
pub fn is_irreducible(p: &MarkovKernel) -> bool {
    p.is_irreducible()
}

pub fn is_birth_death(p: &MarkovKernel) -> bool {
    p.is_birth_death()
}

/// Invariant probability of an irreducible kernel.
///
/// Birth-death kernels use the detailed-balance product, which keeps full
/// relative precision on states of tiny mass; all other kernels solve
/// `mu (P - I) = 0` together with the normalization row by Gaussian
/// elimination.
pub fn stationary_distribution(p: &MarkovKernel) -> Result<ProbabilityVector> {
    if !p.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let n = p.n();
    if p.is_birth_death() {
        let mut w = Vec::with_capacity(n);
        let mut log_w = 0.0f64;
        w.push(0.0);
        for x in 0..n - 1 {
            log_w += p[(x, x + 1)].ln() - p[(x + 1, x)].ln();
            w.push(log_w);
        }
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return ProbabilityVector::normalized(w.iter().map(|l| (l - top).exp()).collect());
    }
    let a = Matrix::from_fn(n + 1, n, |i, j| {
        if i == n {
            1.0
        } else {
            p[(j, i)] - if i == j { 1.0 } else { 0.0 }
        }
    });
    let mut b = vec![0.0; n + 1];
    b[n] = 1.0;
    let mu = solve_tall(&a, &b).ok_or(Error::NotIrreducible)?;
    let cleaned = mu.into_iter().map(|v| v.max(0.0)).collect();
    ProbabilityVector::normalized(cleaned)
}

/// `max |mu(x) P(x,y) - mu(y) P(y,x)|`.
pub fn reversibility_residual(p: &MarkovKernel, mu: &ProbabilityVector) -> f64 {
    let n = p.n();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            worst = worst.max((mu[x] * p[(x, y)] - mu[y] * p[(y, x)]).abs());
        }
    }
    worst
}

pub fn is_reversible(p: &MarkovKernel, mu: &ProbabilityVector, tol: &Tolerances) -> bool {
    mu.len() == p.n() && mu.is_positive() && reversibility_residual(p, mu) <= tol.tol_residual
}

/// `sup_x 1 - m(x)/mu(x)` with `r/0 = +inf` for `r > 0`. States where both
/// masses vanish contribute 0, so that `s(mu, mu) = 0` for any `mu`.
pub fn separation_discrepancy(m: &ProbabilityVector, mu: &ProbabilityVector) -> Result<f64> {
    if m.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: m.len(),
        });
    }
    let mut sup = 0.0f64;
    for x in 0..m.len() {
        let term = match (m[x], mu[x]) {
            (_, w) if w > 0.0 => 1.0 - m[x] / w,
            (r, _) if r > 0.0 => f64::NEG_INFINITY,
            _ => 0.0,
        };
        sup = sup.max(term);
    }
    Ok(sup)
}

/// `max |mu P - mu|` for a candidate invariant measure.
pub fn invariance_residual(p: &MarkovKernel, mu: &ProbabilityVector) -> f64 {
    p.matrix()
        .left_mul(mu.weights())
        .iter()
        .zip(mu.weights())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m0_n2() -> MarkovKernel {
        MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap()
    }

    fn cycle(n: usize, up: f64) -> MarkovKernel {
        let mut rows = vec![vec![0.0; n]; n];
        for (x, row) in rows.iter_mut().enumerate() {
            row[(x + 1) % n] += up;
            row[(x + n - 1) % n] += 1.0 - up;
        }
        MarkovKernel::from_rows(&rows).unwrap()
    }

    #[test]
    fn identity_is_valid_but_reducible() {
        let id = MarkovKernel::identity(3).unwrap();
        assert!(!is_irreducible(&id));
        assert!(is_birth_death(&id));
        assert_eq!(
            stationary_distribution(&id).unwrap_err(),
            Error::NotIrreducible
        );
    }

    #[test]
    fn m0_flags() {
        let p = m0_n2();
        assert!(is_irreducible(&p));
        assert!(is_birth_death(&p));
    }

    #[test]
    fn negative_entry_rejected() {
        let err = MarkovKernel::from_rows(&[vec![1.1, -0.1], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { x: 0, y: 1, .. }));
    }

    #[test]
    fn row_sum_violation_rejected() {
        let err = MarkovKernel::from_rows(&[vec![0.5, 0.4], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::RowSumViolation { x: 0, .. }));
    }

    #[test]
    fn non_square_rejected() {
        let err = MarkovKernel::from_rows(&[vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));
    }

    #[test]
    fn near_unit_rows_renormalized() {
        let p = MarkovKernel::from_rows(&[vec![0.5, 0.5 + 5e-13], vec![1.0, 0.0]]).unwrap();
        let s: f64 = p.matrix().row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn irreducibility_examples() {
        assert!(!is_irreducible(&MarkovKernel::identity(2).unwrap()));
        assert!(is_irreducible(&cycle(3, 0.5)));
        let blocks = MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.3, 0.7],
            vec![0.0, 0.0, 0.6, 0.4],
        ])
        .unwrap();
        assert!(!is_irreducible(&blocks));
        // One-way connection: reachable forward but not backward.
        let one_way = MarkovKernel::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(!is_irreducible(&one_way));
    }

    #[test]
    fn stationary_examples() {
        let mu = stationary_distribution(&m0_n2()).unwrap();
        for w in mu.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        // closed form (b, a)/(a + b)
        let two = MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let mu = stationary_distribution(&two).unwrap();
        assert!((mu[0] - 0.25).abs() < 1e-15 && (mu[1] - 0.75).abs() < 1e-15);
        // general (non birth-death) route
        let c = cycle(3, 0.7);
        let mu = stationary_distribution(&c).unwrap();
        assert!(invariance_residual(&c, &mu) < 1e-15);
        for w in mu.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn general_route_on_nonsymmetric_kernel() {
        let p = MarkovKernel::from_rows(&[
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.4, 0.2],
            vec![0.5, 0.25, 0.25],
        ])
        .unwrap();
        let mu = stationary_distribution(&p).unwrap();
        assert!(invariance_residual(&p, &mu) < 1e-14);
        assert!((mu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reversibility_examples() {
        let tol = Tolerances::default();
        let p = m0_n2();
        let mu = stationary_distribution(&p).unwrap();
        assert!(is_reversible(&p, &mu, &tol));
        assert!(is_reversible(
            &cycle(4, 0.5),
            &ProbabilityVector::uniform(4).unwrap(),
            &tol
        ));
        let c = cycle(3, 0.7);
        let mu = stationary_distribution(&c).unwrap();
        assert!(!is_reversible(&c, &mu, &tol));
    }

    #[test]
    fn birth_death_examples() {
        assert!(is_birth_death(&MarkovKernel::identity(4).unwrap()));
        assert!(!is_birth_death(&cycle(3, 0.5)));
    }

    #[test]
    fn separation_examples() {
        let u3 = ProbabilityVector::uniform(3).unwrap();
        assert_eq!(separation_discrepancy(&u3, &u3).unwrap(), 0.0);
        let d0 = ProbabilityVector::dirac(3, 0).unwrap();
        assert!((separation_discrepancy(&d0, &u3).unwrap() - 1.0).abs() < 1e-15);
        let m = ProbabilityVector::new(vec![0.5, 0.5], &Tolerances::default()).unwrap();
        let mu = ProbabilityVector::new(vec![0.25, 0.75], &Tolerances::default()).unwrap();
        assert!((separation_discrepancy(&m, &mu).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // conventions r/0 = inf and 0/0 = 0
        let mu0 = ProbabilityVector::new(vec![1.0, 0.0], &Tolerances::default()).unwrap();
        assert_eq!(separation_discrepancy(&mu0, &mu0).unwrap(), 0.0);
        let spread = ProbabilityVector::uniform(2).unwrap();
        assert_eq!(separation_discrepancy(&spread, &mu0).unwrap(), 0.5);
    }

    #[test]
    fn kernel_json_round_trip() {
        let p = m0_n2();
        let s = p.to_json();
        assert!(s.starts_with("{\"n\":3,\"rows\":"));
        let back: MarkovKernel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"n": 2, "rows": [[1.0, 0.0]]}"#;
        assert!(serde_json::from_str::<MarkovKernel>(bad).is_err());
    }

    #[test]
    fn probability_vector_json() {
        let v: ProbabilityVector =
            serde_json::from_str(r#"{"n":2,"weights":[0.25,0.75]}"#).unwrap();
        assert_eq!(v.weights(), &[0.25, 0.75]);
        assert!(
            serde_json::from_str::<ProbabilityVector>(r#"{"n":2,"weights":[0.5,0.75]}"#).is_err()
        );
    }
}
