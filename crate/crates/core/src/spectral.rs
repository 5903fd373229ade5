//! Orthonormal eigenbases of reversible kernels in the weighted space of the
//! invariant measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{reversibility_residual, MarkovKernel, ProbabilityVector, Tolerances};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted descending with matching `mu`-orthonormal eigenvectors.
///
/// Column `l` of `eigenvectors` holds the eigenfunction for `eigenvalues[l]`;
/// column 0 is the constant function 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    mu: ProbabilityVector,
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
    tol: Tolerances,
    simple_by_structure: bool,
}

#[derive(Serialize, Deserialize)]
struct DecompositionJson {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    mu: Vec<f64>,
}

/// Symmetric eigenproblem by cyclic Jacobi rotations. Returns the eigenvalues
/// (unsorted) and the orthogonal matrix whose columns are eigenvectors.
pub fn jacobi_eigen(sym: &Matrix, tol_offdiag: f64) -> Result<(Vec<f64>, Matrix)> {
    let n = sym.rows();
    let mut a = sym.clone();
    let mut v = Matrix::identity(n);
    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                // Skip rotations that cannot change the diagonal in floating point.
                if apq.abs() <= f64::EPSILON * 1e-3 * (app.abs() * aqq.abs()).sqrt() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let residual = off(&a);
    if residual > tol_offdiag {
        return Err(Error::NoConvergence(residual));
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// Decomposes a kernel reversible with respect to `mu`.
pub fn decompose(
    p: &MarkovKernel,
    mu: &ProbabilityVector,
    tol: &Tolerances,
) -> Result<SpectralDecomposition> {
    let n = p.n();
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: mu.len(),
        });
    }
    mu.ensure_positive()?;
    let rev = reversibility_residual(p, mu);
    if rev > tol.tol_residual {
        return Err(Error::NotReversible(rev));
    }
    let sqrt_mu: Vec<f64> = mu.weights().iter().map(|w| w.sqrt()).collect();
    // Under reversibility D^{1/2} P D^{-1/2} has off-diagonal entries
    // sqrt(P(x,y) P(y,x)), which avoids dividing by tiny masses.
    let s = Matrix::from_fn(n, n, |x, y| {
        if x == y {
            p[(x, x)]
        } else {
            (p[(x, y)] * p[(y, x)]).sqrt()
        }
    });
    let reflective = reflection_invariant(p, tol.tol_stochastic);
    let (vals, vecs) = if reflective {
        // Work in the basis of even and odd functions under x -> N - x, so
        // that nearly equal eigenvalues of opposite parity never mix.
        let q = parity_basis(n);
        let mut a = q.transpose().matmul(&s)?.matmul(&q)?;
        let even = n.div_ceil(2);
        for i in 0..n {
            for j in 0..n {
                if (i < even) != (j < even) {
                    a[(i, j)] = 0.0;
                }
            }
        }
        let a = a.add(&a.transpose()).scale(0.5);
        let (vals, w) = jacobi_eigen(&a, tol.tol_residual)?;
        (vals, q.matmul(&w)?)
    } else {
        jacobi_eigen(&s, tol.tol_residual)?
    };
    let simple_by_structure = p.is_birth_death() && p.is_irreducible();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i].clamp(-1.0, 1.0)).collect();
    let mut cols: Vec<Vec<f64>> = order.iter().map(|&i| vecs.column(i)).collect();

    // The top cluster contains sqrt(mu); rebuild it so that column 0 is exact.
    let top = if simple_by_structure {
        1
    } else {
        eigenvalues
            .iter()
            .take_while(|t| **t >= eigenvalues[0] - tol.tol_eig_gap)
            .count()
    };
    let mut basis = vec![sqrt_mu.clone()];
    let mut pool: Vec<Vec<f64>> = cols[..top].to_vec();
    while basis.len() < top {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (i, c) in pool.iter().enumerate() {
            let mut w = c.clone();
            for b in &basis {
                let d = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= d * bi);
            }
            let nrm = dot(&w, &w).sqrt();
            if best.as_ref().is_none_or(|b| nrm > b.2) {
                best = Some((i, w, nrm));
            }
        }
        let (i, w, nrm) = best.expect("cluster pool is non-empty");
        pool.remove(i);
        basis.push(w.into_iter().map(|wi| wi / nrm).collect());
    }
    cols[..top].clone_from_slice(&basis);

    let mut phi = Matrix::zeros(n, n);
    for (l, c) in cols.iter().enumerate() {
        let mut f: Vec<f64> = c.iter().zip(&sqrt_mu).map(|(v, s)| v / s).collect();
        if l == 0 {
            f = vec![1.0; n];
        } else {
            let nrm: f64 = f
                .iter()
                .zip(mu.weights())
                .map(|(a, w)| a * a * w)
                .sum::<f64>()
                .sqrt();
            let scale = f.iter().map(|a| a.abs()).fold(0.0, f64::max);
            let first = f
                .iter()
                .copied()
                .find(|a| a.abs() > 1e-12 * scale)
                .unwrap_or(1.0);
            let sign = if first < 0.0 { -1.0 } else { 1.0 };
            f.iter_mut().for_each(|a| *a *= sign / nrm);
        }
        for x in 0..n {
            phi[(x, l)] = f[x];
        }
    }
    Ok(SpectralDecomposition {
        mu: mu.clone(),
        eigenvalues,
        eigenvectors: phi,
        tol: *tol,
        simple_by_structure,
    })
}

fn reflection_invariant(p: &MarkovKernel, slack: f64) -> bool {
    let n = p.n();
    (0..n).all(|x| (0..n).all(|y| (p[(n - 1 - x, n - 1 - y)] - p[(x, y)]).abs() <= slack))
}

/// Orthonormal basis whose first `ceil(n/2)` columns are even and remaining
/// columns odd under `x -> n - 1 - x`.
fn parity_basis(n: usize) -> Matrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let even = n.div_ceil(2);
    let mut q = Matrix::zeros(n, n);
    for i in 0..n / 2 {
        let j = n - 1 - i;
        q[(i, i)] = h;
        q[(j, i)] = h;
        q[(i, even + i)] = h;
        q[(j, even + i)] = -h;
    }
    if n % 2 == 1 {
        q[(n / 2, n / 2)] = 1.0;
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mu(&self) -> &ProbabilityVector {
        &self.mu
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// `phi_l(x)`.
    pub fn phi(&self, l: usize, x: usize) -> f64 {
        self.eigenvectors[(x, l)]
    }

    /// Smallest gap between consecutive eigenvalues (infinite for n = 1).
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// First eigenfunction index whose value at `x` is within `tol_eig_gap` of 0.
    pub fn vanishing_index(&self, x: usize) -> Option<usize> {
        (0..self.n()).find(|&l| self.phi(l, x).abs() <= self.tol.tol_eig_gap)
    }

    /// `max |sum_x phi_k phi_l mu - delta_kl|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for k in 0..n {
            for l in k..n {
                let g: f64 = (0..n)
                    .map(|x| self.phi(k, x) * self.phi(l, x) * self.mu[x])
                    .sum();
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// `max |P phi_l - theta_l phi_l|` over all eigenpairs.
    pub fn eigen_residual(&self, p: &MarkovKernel) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for l in 0..n {
            let f = self.eigenvectors.column(l);
            let pf = p.matrix().apply(&f);
            for x in 0..n {
                worst = worst.max((pf[x] - self.eigenvalues[l] * f[x]).abs());
            }
        }
        worst
    }

    /// `sum_l g(theta_l) phi_l(x) phi_l(y) mu(y)`.
    pub fn functional_calculus(&self, g: impl Fn(f64) -> f64) -> Matrix {
        let n = self.n();
        let coeffs: Vec<f64> = self.eigenvalues.iter().map(|t| g(*t)).collect();
        Matrix::from_fn(n, n, |x, y| {
            (0..n)
                .map(|l| coeffs[l] * self.phi(l, x) * self.phi(l, y))
                .sum::<f64>()
                * self.mu[y]
        })
    }

    pub fn to_json(&self) -> String {
        let j = DecompositionJson {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: (0..self.n()).map(|l| self.eigenvectors.column(l)).collect(),
            mu: self.mu.weights().to_vec(),
        };
        serde_json::to_string(&j).expect("decomposition serialization cannot fail")
    }
}

/// Simple spectrum: either by structure (irreducible birth-death kernels have
/// simple spectrum) or because every eigenvalue gap exceeds `tol_eig_gap`.
pub fn is_uniplicit(d: &SpectralDecomposition) -> bool {
    d.simple_by_structure || d.min_gap() > d.tol.tol_eig_gap
}

/// Rebuilds the kernel from its spectral data.
pub fn reconstruct(d: &SpectralDecomposition) -> Result<MarkovKernel> {
    let m = reconstruct_matrix(d);
    let loose = Tolerances {
        tol_stochastic: 1e-9,
        ..d.tol
    };
    MarkovKernel::from_matrix(m, &loose)
}

pub fn reconstruct_matrix(d: &SpectralDecomposition) -> Matrix {
    d.functional_calculus(|t| t)
}
