//! Kernels commuting with a reversible kernel, the hypergroup set and the
//! triple-sum criterion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{stationary_distribution, MarkovKernel, ProbabilityVector, Tolerances};
use crate::lp::phase_one;
use crate::matrix::{solve_tall, Matrix};
use crate::spectral::{decompose, is_uniplicit, SpectralDecomposition};

/// Largest state count accepted by the linear-programming fallback.
pub const LP_LIMIT: usize = 40;

/// The unique commuting matrix with a prescribed row at the base point.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorSolution {
    pub kernel: Matrix,
    /// Eigenvalue of the solution on each eigenfunction.
    pub coefficients: Vec<f64>,
    pub min_entry: f64,
    /// Position of `min_entry`.
    pub argmin: (usize, usize),
    pub is_markov: bool,
}

impl CommutatorSolution {
    fn from_parts(kernel: Matrix, coefficients: Vec<f64>, tol: &Tolerances) -> Self {
        let mut min_entry = f64::INFINITY;
        let mut argmin = (0, 0);
        for x in 0..kernel.rows() {
            for y in 0..kernel.cols() {
                if kernel[(x, y)] < min_entry {
                    min_entry = kernel[(x, y)];
                    argmin = (x, y);
                }
            }
        }
        CommutatorSolution {
            kernel,
            coefficients,
            min_entry,
            argmin,
            is_markov: min_entry >= -tol.tol_nonneg,
        }
    }

    /// Validated Markov kernel, available when `is_markov` holds.
    pub fn to_markov(&self) -> Result<MarkovKernel> {
        let clipped = Matrix::from_fn(self.kernel.rows(), self.kernel.cols(), |x, y| {
            self.kernel[(x, y)].max(0.0)
        });
        let tol = Tolerances {
            tol_stochastic: 1e-8,
            ..Tolerances::default()
        };
        MarkovKernel::from_matrix(clipped, &tol)
    }
}

/// Result of the hypergroup test at one base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergroupCertificate {
    pub base_point: usize,
    pub holds: bool,
    pub min_triple_sum: f64,
    pub argmin: [usize; 3],
    /// Target points `x` whose commuting kernel with row `delta_x` at the
    /// base point has a negative entry, with that entry.
    pub failing_targets: Vec<(usize, f64)>,
}

fn require_base(d: &SpectralDecomposition, x0: usize) -> Result<()> {
    if x0 >= d.n() {
        return Err(Error::IndexOutOfRange {
            index: x0,
            n: d.n(),
        });
    }
    if !is_uniplicit(d) {
        return Err(Error::NotUniplicit(d.min_gap()));
    }
    if let Some(l) = d.vanishing_index(x0) {
        return Err(Error::VanishingEigenvectorAt { x: x0, l });
    }
    Ok(())
}

/// Solves `K P = P K`, `K(x0, .) = m0` for a uniplicit kernel.
pub fn solve_commutator(
    d: &SpectralDecomposition,
    x0: usize,
    m0: &ProbabilityVector,
) -> Result<CommutatorSolution> {
    require_base(d, x0)?;
    let n = d.n();
    if m0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m0.len(),
        });
    }
    let coefficients: Vec<f64> = (0..n)
        .map(|l| (0..n).map(|y| m0[y] * d.phi(l, y)).sum::<f64>() / d.phi(l, x0))
        .collect();
    let mu = d.mu();
    let k = Matrix::from_fn(n, n, |x, y| {
        (0..n)
            .map(|l| coefficients[l] * d.phi(l, x) * d.phi(l, y))
            .sum::<f64>()
            * mu[y]
    });
    Ok(CommutatorSolution::from_parts(
        k,
        coefficients,
        d.tolerances(),
    ))
}

/// `T(x, y, z) = sum_k phi_k(x) phi_k(y) phi_k(z) / phi_k(x0)`.
fn triple(d: &SpectralDecomposition, inv_base: &[f64], x: usize, y: usize, z: usize) -> f64 {
    (0..d.n())
        .map(|k| d.phi(k, x) * d.phi(k, y) * d.phi(k, z) * inv_base[k])
        .sum()
}

fn inverse_base(d: &SpectralDecomposition, x0: usize) -> Vec<f64> {
    (0..d.n()).map(|k| 1.0 / d.phi(k, x0)).collect()
}

/// The commuting kernel with row `delta_x` at `x0`, from the triple-product
/// formula.
pub fn point_kernel(d: &SpectralDecomposition, x0: usize, x: usize) -> Result<CommutatorSolution> {
    require_base(d, x0)?;
    let n = d.n();
    if x >= n {
        return Err(Error::IndexOutOfRange { index: x, n });
    }
    let inv = inverse_base(d, x0);
    let mu = d.mu();
    let k = Matrix::from_fn(n, n, |y, z| triple(d, &inv, x, y, z) * mu[z]);
    let coefficients = (0..n).map(|l| d.phi(l, x) * inv[l]).collect();
    Ok(CommutatorSolution::from_parts(
        k,
        coefficients,
        d.tolerances(),
    ))
}

/// `max |K P - P K|` for square matrices of equal size.
pub fn commutation_residual(p: &Matrix, k: &Matrix) -> Result<f64> {
    if p.rows() != k.rows() {
        return Err(Error::DimensionMismatch {
            expected: p.rows(),
            found: k.rows(),
        });
    }
    Ok(k.matmul(p)?.max_abs_diff(&p.matmul(k)?))
}

pub fn is_in_commutator(p: &MarkovKernel, k: &MarkovKernel, tol: &Tolerances) -> Result<bool> {
    Ok(commutation_residual(p.matrix(), k.matrix())? <= tol.tol_residual)
}

/// Minimum of the triple sum over all `(x, y, z)` with its first minimizer
/// in lexicographic order.
pub fn triple_sum_min(d: &SpectralDecomposition, x0: usize) -> Result<(f64, [usize; 3])> {
    if x0 >= d.n() {
        return Err(Error::IndexOutOfRange {
            index: x0,
            n: d.n(),
        });
    }
    if let Some(l) = d.vanishing_index(x0) {
        return Err(Error::VanishingEigenvectorAt { x: x0, l });
    }
    let n = d.n();
    let inv = inverse_base(d, x0);
    let mut best = (f64::INFINITY, [0; 3]);
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let t = triple(d, &inv, x, y, z);
                if t < best.0 {
                    best = (t, [x, y, z]);
                }
            }
        }
    }
    Ok(best)
}

/// Feasibility of `{K >= 0, K 1 = 1, K P = P K, K(x0, .) = m0}`.
pub fn commutator_membership_lp(
    p: &MarkovKernel,
    x0: usize,
    m0: &ProbabilityVector,
    tol: &Tolerances,
) -> Result<bool> {
    let n = p.n();
    if n > LP_LIMIT {
        return Err(Error::LpTooLarge(n));
    }
    if x0 >= n {
        return Err(Error::IndexOutOfRange { index: x0, n });
    }
    if m0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m0.len(),
        });
    }
    let var = |x: usize, y: usize| x * n + y;
    let rows = n + n * n + n;
    let mut a = Matrix::zeros(rows, n * n);
    let mut b = vec![0.0; rows];
    for x in 0..n {
        for y in 0..n {
            a[(x, var(x, y))] = 1.0;
        }
        b[x] = 1.0;
    }
    // (KP - PK)(x, z) = sum_y K(x,y) P(y,z) - P(x,y) K(y,z)
    for x in 0..n {
        for z in 0..n {
            let r = n + x * n + z;
            for y in 0..n {
                a[(r, var(x, y))] += p[(y, z)];
                a[(r, var(y, z))] -= p[(x, y)];
            }
        }
    }
    for y in 0..n {
        let r = n + n * n + y;
        a[(r, var(x0, y))] = 1.0;
        b[r] = m0[y];
    }
    Ok(phase_one(&a, &b, tol.tol_nonneg).is_some())
}

/// How the hypergroup set was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsetMethod {
    Direct,
    LinearProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsetResult {
    pub members: Vec<usize>,
    /// Base points `x0` skipped because `phi_l(x0)` vanishes, with `l`.
    pub excluded: Vec<(usize, usize)>,
    pub method: HsetMethod,
}

impl HsetResult {
    pub fn contains(&self, x: usize) -> bool {
        self.members.contains(&x)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `x0` belongs to the set iff every Dirac mass is an admissible row at `x0`.
pub fn hset(p: &MarkovKernel, tol: &Tolerances) -> Result<HsetResult> {
    let mu = stationary_distribution(p)?;
    let d = decompose(p, &mu, tol)?;
    hset_with(p, &d)
}

/// As [`hset`] with a precomputed decomposition.
pub fn hset_with(p: &MarkovKernel, d: &SpectralDecomposition) -> Result<HsetResult> {
    let n = p.n();
    let tol = *d.tolerances();
    if is_uniplicit(d) {
        let mut excluded = Vec::new();
        let mut candidates = Vec::new();
        for x0 in 0..n {
            match d.vanishing_index(x0) {
                Some(l) => excluded.push((x0, l)),
                None => candidates.push(x0),
            }
        }
        let members: Vec<usize> = candidates
            .into_par_iter()
            .map(|x0| -> Result<Option<usize>> {
                for x in 0..n {
                    if !point_solution(d, x0, x)?.is_markov {
                        return Ok(None);
                    }
                }
                Ok(Some(x0))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(HsetResult {
            members,
            excluded,
            method: HsetMethod::Direct,
        })
    } else {
        let members = (0..n)
            .into_par_iter()
            .map(|x0| -> Result<Option<usize>> {
                for x in 0..n {
                    let m0 = ProbabilityVector::dirac(n, x)?;
                    if !commutator_membership_lp(p, x0, &m0, &tol)? {
                        return Ok(None);
                    }
                }
                Ok(Some(x0))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(HsetResult {
            members,
            excluded: Vec::new(),
            method: HsetMethod::LinearProgram,
        })
    }
}

fn point_solution(d: &SpectralDecomposition, x0: usize, x: usize) -> Result<CommutatorSolution> {
    solve_commutator(d, x0, &ProbabilityVector::dirac(d.n(), x)?)
}

/// Hypergroup test at `x0`, computed by the triple-sum route and by solving
/// for every Dirac row. The verdict follows the commuting kernels (the same
/// rule as [`hset`]); the routes are cross-checked in triple-sum units.
pub fn check_hypergroup(
    p: &MarkovKernel,
    x0: usize,
    tol: &Tolerances,
) -> Result<HypergroupCertificate> {
    let mu = stationary_distribution(p)?;
    let d = decompose(p, &mu, tol)?;
    check_hypergroup_with(&d, x0)
}

pub fn check_hypergroup_with(
    d: &SpectralDecomposition,
    x0: usize,
) -> Result<HypergroupCertificate> {
    require_base(d, x0)?;
    let tol = d.tolerances();
    let n = d.n();
    let (min_triple_sum, argmin) = triple_sum_min(d, x0)?;
    let mut failing_targets = Vec::new();
    let mut min_scaled = f64::INFINITY;
    let mut scale = 1.0f64;
    for x in 0..n {
        let sol = point_solution(d, x0, x)?;
        if !sol.is_markov {
            failing_targets.push((x, sol.min_entry));
        }
        for y in 0..n {
            for z in 0..n {
                let t = sol.kernel[(y, z)] / d.mu()[z];
                min_scaled = min_scaled.min(t);
                scale = scale.max(t.abs());
            }
        }
    }
    let holds = failing_targets.is_empty();
    let triple_holds = min_triple_sum >= -tol.tol_nonneg;
    if holds != triple_holds && (min_triple_sum - min_scaled).abs() > tol.tol_nonneg * scale {
        return Err(Error::InternalInconsistency {
            triple: min_triple_sum,
            commutator: min_scaled,
        });
    }
    Ok(HypergroupCertificate {
        base_point: x0,
        holds,
        min_triple_sum,
        argmin,
        failing_targets,
    })
}

/// Every member of the hypergroup set carries the minimal invariant mass.
pub fn check_min_weight(mu: &ProbabilityVector, h: &HsetResult, tol: &Tolerances) -> bool {
    let min = mu.min();
    h.members.iter().all(|&x| mu[x] <= min + tol.tol_residual)
}

/// Fits the polynomial `Q` of degree `n - 1` with `Q(theta_l) = a_l` for the
/// spectral coefficients `a_l` of `k`, and returns `max |Q(P) - K|`.
pub fn polynomial_fit_residual(
    p: &MarkovKernel,
    d: &SpectralDecomposition,
    k: &Matrix,
) -> Result<f64> {
    if !is_uniplicit(d) {
        return Err(Error::NotUniplicit(d.min_gap()));
    }
    let n = d.n();
    let mu = d.mu();
    // a_l = <phi_l, K phi_l>_mu
    let coeffs: Vec<f64> = (0..n)
        .map(|l| {
            let f = d.eigenvectors().column(l);
            let kf = k.apply(&f);
            (0..n).map(|x| f[x] * kf[x] * mu[x]).sum()
        })
        .collect();
    let vander = Matrix::from_fn(n, n, |l, j| d.eigenvalues()[l].powi(j as i32));
    let c = solve_tall(&vander, &coeffs).ok_or(Error::NotUniplicit(d.min_gap()))?;
    let mut q = Matrix::zeros(n, n);
    for cj in c.iter().rev() {
        q = q.matmul(p.matrix())?.add(&Matrix::identity(n).scale(*cj));
    }
    Ok(q.max_abs_diff(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn m0_n2() -> MarkovKernel {
        MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap()
    }

    fn m0_hat_n2() -> MarkovKernel {
        MarkovKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn cycle(n: usize) -> MarkovKernel {
        let mut rows = vec![vec![0.0; n]; n];
        for (x, row) in rows.iter_mut().enumerate() {
            row[(x + 1) % n] += 0.5;
            row[(x + n - 1) % n] += 0.5;
        }
        MarkovKernel::from_rows(&rows).unwrap()
    }

    fn decomp(p: &MarkovKernel) -> SpectralDecomposition {
        decompose(p, &stationary_distribution(p).unwrap(), &tol()).unwrap()
    }

    #[test]
    fn dirac_at_base_gives_identity() {
        let d = decomp(&m0_n2());
        let s = solve_commutator(&d, 0, &ProbabilityVector::dirac(3, 0).unwrap()).unwrap();
        assert!(s.kernel.max_abs_diff(&Matrix::identity(3)) < 1e-12);
        assert!(s.coefficients.iter().all(|a| (a - 1.0).abs() < 1e-12));
        assert!(s.is_markov);
    }

    #[test]
    fn invariant_row_gives_projector() {
        let p = m0_hat_n2();
        let d = decomp(&p);
        let mu = d.mu().clone();
        let s = solve_commutator(&d, 0, &mu).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((s.kernel[(x, y)] - mu[y]).abs() < 1e-12);
            }
        }
        assert!(s.is_markov);
    }

    #[test]
    fn m0_dirac_one_is_negative() {
        let p = m0_n2();
        let d = decomp(&p);
        let s = solve_commutator(&d, 0, &ProbabilityVector::dirac(3, 1).unwrap()).unwrap();
        // The unnormalized wave field has k(1,1) = -1; with row delta_1 / mu
        // it is scaled by 1 / mu(1) = 3, so K(1,1) = mu(1) * (-3).
        assert!((s.kernel[(1, 1)] + 1.0).abs() < 1e-12);
        assert!(!s.is_markov);
        assert!(commutation_residual(p.matrix(), &s.kernel).unwrap() < 1e-12);
        let pk = point_kernel(&d, 0, 1).unwrap();
        assert!(pk.kernel.max_abs_diff(&s.kernel) < 1e-12);
    }

    #[test]
    fn m0_hat_point_kernels_are_markov() {
        let d = decomp(&m0_hat_n2());
        for x in 0..3 {
            assert!(point_kernel(&d, 0, x).unwrap().is_markov);
        }
        let (min, _) = triple_sum_min(&d, 0).unwrap();
        assert!(min >= -1e-12);
        assert!(check_hypergroup_with(&d, 0).unwrap().holds);
    }

    #[test]
    fn m0_certificate_fails() {
        let d = decomp(&m0_n2());
        let c = check_hypergroup_with(&d, 0).unwrap();
        assert!(!c.holds);
        assert!(c.min_triple_sum < 0.0);
        assert!(c.failing_targets.iter().any(|(x, _)| *x == 1));
    }

    #[test]
    fn commutator_membership_examples() {
        let p = cycle(3);
        assert!(is_in_commutator(&p, &p, &tol()).unwrap());
        assert!(is_in_commutator(&p, &MarkovKernel::identity(3).unwrap(), &tol()).unwrap());
        let shift = MarkovKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(is_in_commutator(&p, &shift, &tol()).unwrap());
    }

    #[test]
    fn hset_examples() {
        assert!(hset(&m0_n2(), &tol()).unwrap().is_empty());
        let h = hset(&cycle(5), &tol()).unwrap();
        assert_eq!(h.members, vec![0, 1, 2, 3, 4]);
        assert_eq!(h.method, HsetMethod::LinearProgram);
        let two = MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let h = hset(&two, &tol()).unwrap();
        assert!(h.contains(0));
        assert!(!h.contains(1));
        assert!(check_min_weight(
            &stationary_distribution(&two).unwrap(),
            &h,
            &tol()
        ));
    }

    #[test]
    fn lp_examples() {
        let p = cycle(3);
        let t = tol();
        assert!(
            commutator_membership_lp(&p, 0, &ProbabilityVector::dirac(3, 0).unwrap(), &t).unwrap()
        );
        assert!(
            commutator_membership_lp(&p, 0, &ProbabilityVector::dirac(3, 1).unwrap(), &t).unwrap()
        );
        assert!(!commutator_membership_lp(
            &m0_n2(),
            0,
            &ProbabilityVector::dirac(3, 1).unwrap(),
            &t
        )
        .unwrap());
    }

    #[test]
    fn triple_sum_at_base_diagonal() {
        let d = decomp(&m0_n2());
        let inv = inverse_base(&d, 0);
        let diag = triple(&d, &inv, 0, 0, 0);
        let sq: f64 = (0..3).map(|k| d.phi(k, 0).powi(2)).sum();
        assert!((diag - sq).abs() < 1e-12 && sq >= 1.0);
    }

    #[test]
    fn polynomial_fit_reproduces_solution() {
        let p = m0_hat_n2();
        let d = decomp(&p);
        let s = point_kernel(&d, 0, 2).unwrap();
        assert!(polynomial_fit_residual(&p, &d, &s.kernel).unwrap() < 1e-8);
    }

    #[test]
    fn certificate_json_shape() {
        let d = decomp(&m0_hat_n2());
        let c = check_hypergroup_with(&d, 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        for key in [
            "base_point",
            "holds",
            "min_triple_sum",
            "argmin",
            "failing_targets",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
