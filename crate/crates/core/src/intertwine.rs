//! Markov links between state spaces, their duals and the lifting identities
//! that transport commuting kernels from `Pbar` down to `P = L* Pbar L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{is_reversible, MarkovKernel, ProbabilityVector, Tolerances};
use crate::matrix::Matrix;

/// A Markov kernel from `0..n_bar` to `0..n`, stored as an `n_bar x n`
/// row-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkJson", into = "LinkJson")]
pub struct Link {
    entries: Matrix,
    deterministic: bool,
}

/// On-disk link format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkJson {
    pub n_bar: usize,
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
    pub deterministic: bool,
}

impl TryFrom<LinkJson> for Link {
    type Error = Error;

    fn try_from(raw: LinkJson) -> Result<Self> {
        if raw.rows.len() != raw.n_bar {
            return Err(Error::DimensionMismatch {
                expected: raw.n_bar,
                found: raw.rows.len(),
            });
        }
        let m = Matrix::from_rows(&raw.rows)?;
        if raw.n_bar > 0 && m.cols() != raw.n {
            return Err(Error::DimensionMismatch {
                expected: raw.n,
                found: m.cols(),
            });
        }
        let link = Link::new(m, &Tolerances::default())?;
        if link.deterministic != raw.deterministic {
            return Err(Error::InvalidLink(format!(
                "`deterministic` is {} but the rows say {}",
                raw.deterministic, link.deterministic
            )));
        }
        Ok(link)
    }
}

impl From<Link> for LinkJson {
    fn from(l: Link) -> Self {
        LinkJson {
            n_bar: l.n_bar(),
            n: l.n(),
            rows: l.entries.to_rows(),
            deterministic: l.deterministic,
        }
    }
}

impl Link {
    /// Validates a rectangular row-stochastic matrix.
    pub fn new(mut m: Matrix, tol: &Tolerances) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::Empty);
        }
        for x in 0..m.rows() {
            for y in 0..m.cols() {
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
        let deterministic = (0..m.rows()).all(|x| m.row(x).iter().all(|&v| v == 0.0 || v == 1.0));
        Ok(Link {
            entries: m,
            deterministic,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Link::new(Matrix::identity(n), &Tolerances::default())
    }

    pub fn n_bar(&self) -> usize {
        self.entries.rows()
    }

    pub fn n(&self) -> usize {
        self.entries.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// Image of a measure on the source space: `mu_bar L`.
    pub fn push_forward(&self, mu_bar: &[f64]) -> Vec<f64> {
        self.entries.left_mul(mu_bar)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("link serialization cannot fail")
    }
}

/// `L(x, .) = delta_{pi(x)}` for a surjection `pi: 0..n_bar -> 0..n`.
pub fn deterministic_link(pi: &[usize], n: usize) -> Result<Link> {
    if pi.is_empty() || n == 0 {
        return Err(Error::Empty);
    }
    let mut hit = vec![false; n];
    for &y in pi {
        if y >= n {
            return Err(Error::IndexOutOfRange { index: y, n });
        }
        hit[y] = true;
    }
    if let Some(y) = hit.iter().position(|h| !h) {
        return Err(Error::NotSurjective(y));
    }
    let m = Matrix::from_fn(pi.len(), n, |x, y| if pi[x] == y { 1.0 } else { 0.0 });
    Link::new(m, &Tolerances::default())
}

/// `L*(x, xbar) = mu_bar(xbar) L(xbar, x) / mu(x)` with `mu = mu_bar L`.
pub fn dual_link(link: &Link, mu_bar: &ProbabilityVector) -> Result<Link> {
    if mu_bar.len() != link.n_bar() {
        return Err(Error::DimensionMismatch {
            expected: link.n_bar(),
            found: mu_bar.len(),
        });
    }
    if let Some(x) = mu_bar.weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::NonPositiveMeasure(x));
    }
    let mu = link.push_forward(mu_bar.weights());
    if let Some(x) = mu.iter().position(|&w| w <= 0.0) {
        return Err(Error::DegenerateImageMeasure(x));
    }
    let l = link.matrix();
    let m = Matrix::from_fn(link.n(), link.n_bar(), |x, xb| {
        mu_bar[xb] * l[(xb, x)] / mu[x]
    });
    Link::new(
        m,
        &Tolerances {
            tol_stochastic: 1e-9,
            ..Tolerances::default()
        },
    )
}

/// `max |(Pbar L - L P)(xbar, y)|`.
pub fn check_intertwining(pbar: &MarkovKernel, link: &Link, p: &MarkovKernel) -> Result<f64> {
    if pbar.n() != link.n_bar() {
        return Err(Error::DimensionMismatch {
            expected: link.n_bar(),
            found: pbar.n(),
        });
    }
    if p.n() != link.n() {
        return Err(Error::DimensionMismatch {
            expected: link.n(),
            found: p.n(),
        });
    }
    let left = pbar.matrix().matmul(link.matrix())?;
    let right = link.matrix().matmul(p.matrix())?;
    Ok(left.max_abs_diff(&right))
}

/// Residuals of `L L* Pbar L = Pbar L` and `L L* L = L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftingResiduals {
    pub kernel: f64,
    pub identity: f64,
}

impl LiftingResiduals {
    pub fn max(&self) -> f64 {
        self.kernel.max(self.identity)
    }
}

pub fn lifting_residuals(
    pbar: &MarkovKernel,
    link: &Link,
    mu_bar: &ProbabilityVector,
) -> Result<LiftingResiduals> {
    if pbar.n() != link.n_bar() {
        return Err(Error::DimensionMismatch {
            expected: link.n_bar(),
            found: pbar.n(),
        });
    }
    let dual = dual_link(link, mu_bar)?;
    let l = link.matrix();
    let projector = l.matmul(dual.matrix())?;
    let pl = pbar.matrix().matmul(l)?;
    Ok(LiftingResiduals {
        kernel: projector.matmul(&pl)?.max_abs_diff(&pl),
        identity: projector.matmul(l)?.max_abs_diff(l),
    })
}

/// Larger of the two lifting residuals.
pub fn check_hyp_condition(
    pbar: &MarkovKernel,
    link: &Link,
    mu_bar: &ProbabilityVector,
) -> Result<f64> {
    Ok(lifting_residuals(pbar, link, mu_bar)?.max())
}

/// The projected kernel `L* Pbar L` on the target space.
pub fn projected_kernel(
    pbar: &MarkovKernel,
    link: &Link,
    mu_bar: &ProbabilityVector,
) -> Result<MarkovKernel> {
    let dual = dual_link(link, mu_bar)?;
    sandwich(&dual, pbar.matrix(), link)
}

fn sandwich(dual: &Link, middle: &Matrix, link: &Link) -> Result<MarkovKernel> {
    let m = dual.matrix().matmul(middle)?.matmul(link.matrix())?;
    MarkovKernel::from_matrix(
        m,
        &Tolerances {
            tol_stochastic: 1e-9,
            ..Tolerances::default()
        },
    )
}

/// `L* Kbar L` for a kernel `Kbar` commuting with `Pbar`.
///
/// `Pbar` must be reversible with respect to `mu_bar` and the pair must pass
/// [`check_hyp_condition`]; the result then commutes with
/// [`projected_kernel`].
pub fn conjugate_commutator(
    pbar: &MarkovKernel,
    link: &Link,
    kbar: &MarkovKernel,
    mu_bar: &ProbabilityVector,
    tol: &Tolerances,
) -> Result<MarkovKernel> {
    if kbar.n() != link.n_bar() {
        return Err(Error::DimensionMismatch {
            expected: link.n_bar(),
            found: kbar.n(),
        });
    }
    if !is_reversible(pbar, mu_bar, tol) {
        return Err(Error::NotReversible(crate::kernel::reversibility_residual(
            pbar, mu_bar,
        )));
    }
    let res = check_hyp_condition(pbar, link, mu_bar)?;
    if res > tol.tol_residual {
        return Err(Error::HypConditionViolated(res));
    }
    let dual = dual_link(link, mu_bar)?;
    sandwich(&dual, kbar.matrix(), link)
}

/// `max |m0bar L L* - m0bar|`: zero iff `m0bar` has the same conditional
/// law as `mu_bar` given the image point.
pub fn lifted_measure_residual(
    m0_bar: &ProbabilityVector,
    link: &Link,
    mu_bar: &ProbabilityVector,
) -> Result<f64> {
    if m0_bar.len() != link.n_bar() {
        return Err(Error::DimensionMismatch {
            expected: link.n_bar(),
            found: m0_bar.len(),
        });
    }
    let dual = dual_link(link, mu_bar)?;
    let image = link.push_forward(m0_bar.weights());
    let back = dual.push_forward(&image);
    Ok(back
        .iter()
        .zip(m0_bar.weights())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
