//! Potentials on `0..=N`, their convexity classes, Gibbs measures and the
//! birth-death Metropolis kernels built from them.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{MarkovKernel, ProbabilityVector, Tolerances};
use crate::matrix::Matrix;

/// Slack on the `2 ln 2` curvature gap.
pub const CURVATURE_SLACK: f64 = 1e-12;

/// Default range for random second differences.
pub const DEFAULT_SLOPE_RANGE: (f64, f64) = (0.0, 3.0);

/// A real function on `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialJson", into = "PotentialJson")]
pub struct Potential {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PotentialJson {
    #[serde(rename = "N")]
    n_max: usize,
    values: Vec<f64>,
}

impl TryFrom<PotentialJson> for Potential {
    type Error = Error;

    fn try_from(raw: PotentialJson) -> Result<Self> {
        if raw.values.len() != raw.n_max + 1 {
            return Err(Error::DimensionMismatch {
                expected: raw.n_max + 1,
                found: raw.values.len(),
            });
        }
        Potential::new(raw.values)
    }
}

impl From<Potential> for PotentialJson {
    fn from(u: Potential) -> Self {
        PotentialJson {
            n_max: u.n_max(),
            values: u.values,
        }
    }
}

impl Potential {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPotential(
                "at least two states are required".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(format!("non-finite value at {i}")));
        }
        Ok(Potential { values })
    }

    pub fn from_fn(n_max: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Potential::new((0..=n_max).map(f).collect())
    }

    pub fn zero(n_max: usize) -> Result<Self> {
        Potential::from_fn(n_max, |_| 0.0)
    }

    /// Right endpoint `N`.
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shifted(&self, c: f64) -> Potential {
        Potential {
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// `x -> U(N - x)`.
    pub fn reflected(&self) -> Potential {
        Potential {
            values: self.values.iter().rev().copied().collect(),
        }
    }

    /// First differences `U(x+1) - U(x)`.
    pub fn slopes(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n_max();
        (0..=n).all(|x| self.values[x] == self.values[n - x])
    }

    /// `U(x) + ln 2 * min(x, N - x)`.
    pub fn folded(&self) -> Potential {
        let n = self.n_max();
        Potential {
            values: (0..=n)
                .map(|x| self.values[x] + LN_2 * x.min(n - x) as f64)
                .collect(),
        }
    }
}

impl Potential {
    /// Non-increasing `U` on `0..=N` extended to `0..=2N+1` by reflection
    /// about `N + 1/2`.
    pub fn mirrored(&self) -> Result<Potential> {
        if self.slopes().iter().any(|d| *d > 0.0) {
            return Err(Error::InvalidPotential(
                "mirroring needs a non-increasing potential".into(),
            ));
        }
        let top = 2 * self.n_max() + 1;
        Potential::from_fn(top, |x| self.values[x.min(top - x)])
    }
}

impl std::ops::Index<usize> for Potential {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.values[x]
    }
}

/// Membership flags for the potential classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialClass {
    /// Convex.
    pub convex: bool,
    /// Second differences at least `2 ln 2`.
    pub strongly_convex: bool,
    /// Strongly convex, monotone, with both boundary slopes at least `2 ln 2`
    /// in absolute value.
    pub strongly_convex_monotone: bool,
    /// Strongly convex and symmetric about `N/2`.
    pub strongly_convex_symmetric: bool,
    /// Symmetric, with [`Potential::folded`] convex.
    pub folded_convex_symmetric: bool,
}

fn nondecreasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - slack)
}

pub fn classify_potential(u: &Potential) -> PotentialClass {
    let d = u.slopes();
    let convex = nondecreasing(&d, 0.0);
    let strongly_convex = convex
        && d.windows(2)
            .all(|w| w[1] - w[0] >= 2.0 * LN_2 - CURVATURE_SLACK);
    let monotone = d.iter().all(|s| *s >= 0.0) || d.iter().all(|s| *s <= 0.0);
    let (first, last) = (d[0].abs(), d[d.len() - 1].abs());
    let strongly_convex_monotone =
        strongly_convex && monotone && first.min(last) >= 2.0 * LN_2 - CURVATURE_SLACK;
    let symmetric = u.is_symmetric();
    let strongly_convex_symmetric = strongly_convex && symmetric;
    let folded_convex_symmetric = symmetric && nondecreasing(&u.folded().slopes(), CURVATURE_SLACK);
    PotentialClass {
        convex,
        strongly_convex,
        strongly_convex_monotone,
        strongly_convex_symmetric,
        folded_convex_symmetric,
    }
}

/// `exp(-U) / Z`.
pub fn gibbs_measure(u: &Potential) -> ProbabilityVector {
    let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    ProbabilityVector::normalized(u.values.iter().map(|v| (min - v).exp()).collect())
        .expect("Gibbs weights are positive")
}

/// The five exploration/acceptance schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Nearest-neighbour exploration with rate 1/2 and square-root acceptance.
    Mu,
    /// As `Mu`, with the right boundary pushed back with rate 1.
    Tilde,
    /// As `Mu`, with both boundaries pushed back with rate 1.
    Hat,
    /// Rates halving away from the boundaries, standard acceptance on the
    /// folded potential.
    Check,
    /// `Hat` exploration with standard Metropolis acceptance.
    Paren,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Mu,
        Variant::Tilde,
        Variant::Hat,
        Variant::Check,
        Variant::Paren,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mu => "mu",
            Variant::Tilde => "tilde",
            Variant::Hat => "hat",
            Variant::Check => "check",
            Variant::Paren => "paren",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Exploration kernel off the diagonal.
fn exploration(variant: Variant, n_max: usize, x: usize, y: usize) -> f64 {
    if x.abs_diff(y) != 1 {
        return 0.0;
    }
    match variant {
        Variant::Mu => 0.5,
        Variant::Tilde => {
            if x == n_max {
                1.0
            } else {
                0.5
            }
        }
        Variant::Hat | Variant::Paren => {
            if x == 0 || x == n_max {
                1.0
            } else {
                0.5
            }
        }
        Variant::Check => 0.5f64.powi(x.min(n_max - x) as i32),
    }
}

fn complete_rows(mut m: Matrix) -> Result<MarkovKernel> {
    for x in 0..m.rows() {
        let off: f64 = (0..m.cols()).filter(|&y| y != x).map(|y| m[(x, y)]).sum();
        m[(x, x)] = 1.0 - off;
    }
    let tol = Tolerances::default();
    MarkovKernel::from_matrix(m, &tol)
}

/// Square-root acceptance normalized by the largest off-diagonal row mass.
fn normalized_kernel(u: &Potential, variant: Variant) -> Result<MarkovKernel> {
    let n = u.n_max() + 1;
    let raw = Matrix::from_fn(n, n, |x, y| {
        let e = exploration(variant, u.n_max(), x, y);
        if e == 0.0 {
            0.0
        } else {
            e * ((u[x] - u[y]) / 2.0).exp()
        }
    });
    let sigma = (0..n)
        .map(|x| raw.row(x).iter().sum::<f64>())
        .fold(0.0, f64::max);
    complete_rows(raw.scale(1.0 / sigma))
}

/// Standard acceptance `exp(-(V(y) - V(x))_+)` without normalization.
fn acceptance_kernel(v: &Potential, variant: Variant) -> Result<MarkovKernel> {
    let n = v.n_max() + 1;
    let raw = Matrix::from_fn(n, n, |x, y| {
        let e = exploration(variant, v.n_max(), x, y);
        if e == 0.0 {
            0.0
        } else {
            e * (-(v[y] - v[x]).max(0.0)).exp()
        }
    });
    complete_rows(raw)
}

/// The classical Metropolis kernel.
pub fn kernel_mu(u: &Potential) -> Result<MarkovKernel> {
    normalized_kernel(u, Variant::Mu)
}

pub fn kernel_variant(u: &Potential, variant: Variant) -> Result<MarkovKernel> {
    match variant {
        Variant::Mu | Variant::Tilde | Variant::Hat => normalized_kernel(u, variant),
        Variant::Paren => acceptance_kernel(u, Variant::Paren),
        Variant::Check => acceptance_kernel(&u.folded(), Variant::Check),
    }
}

/// Reversible probability of a variant kernel: the Gibbs measure for `mu`
/// and `check`, and the Gibbs measure weighted by the reversible measure of
/// the exploration kernel otherwise.
pub fn variant_invariant_measure(u: &Potential, variant: Variant) -> ProbabilityVector {
    let gibbs = gibbs_measure(u);
    let n_max = u.n_max();
    let weight = |x: usize| match variant {
        Variant::Mu | Variant::Check => 1.0,
        Variant::Tilde => {
            if x == n_max {
                0.5
            } else {
                1.0
            }
        }
        Variant::Hat | Variant::Paren => {
            if x == 0 || x == n_max {
                0.5
            } else {
                1.0
            }
        }
    };
    ProbabilityVector::normalized(
        gibbs
            .weights()
            .iter()
            .enumerate()
            .map(|(x, w)| w * weight(x))
            .collect(),
    )
    .expect("weights are positive")
}

/// Monotonicity condition on the left half: `x -> 2^x P(x,x+1)` is
/// non-increasing and `x -> P(x+1,x)` is non-decreasing on `0..=N/2`.
pub fn condition_h(p: &MarkovKernel, tol: &Tolerances) -> Result<bool> {
    if !p.is_birth_death() {
        return Err(Error::NotBirthDeath);
    }
    let n_max = p.n() - 1;
    if n_max == 0 {
        return Ok(true);
    }
    let half = n_max / 2;
    let up: Vec<f64> = (0..=half)
        .map(|x| 2f64.powi(x as i32) * p[(x, x + 1)])
        .collect();
    let down: Vec<f64> = (0..=half).map(|x| p[(x + 1, x)]).collect();
    let slack = tol.tol_residual;
    Ok(up.windows(2).all(|w| w[1] <= w[0] + slack) && nondecreasing(&down, slack))
}

fn uniform_positive(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.gen_range(lo..=hi);
        if v > 0.0 {
            return v;
        }
    }
}

fn integrate(first_slope: f64, curvature: &[f64]) -> Vec<f64> {
    let mut values = vec![0.0];
    let mut slope = first_slope;
    values.push(slope);
    for c in curvature {
        slope += c;
        values.push(values[values.len() - 1] + slope);
    }
    values
}

/// Random convex potential from i.i.d. second differences drawn in
/// `slope_range`. With `asym`, `U(0) = U(1)` and symmetric draws are
/// rejected.
pub fn random_convex_potential(
    seed: u64,
    n_max: usize,
    slope_range: (f64, f64),
    asym: bool,
) -> Result<Potential> {
    validate_request(n_max, slope_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let curvature: Vec<f64> = (1..n_max)
            .map(|_| uniform_positive(&mut rng, slope_range))
            .collect();
        let total: f64 = curvature.iter().sum();
        let first = if asym {
            0.0
        } else {
            -rng.gen_range(0.0..=total)
        };
        let u = Potential::new(integrate(first, &curvature))?;
        if !asym || !u.is_symmetric() {
            return Ok(u);
        }
    }
}

/// Random potential symmetric about `N/2` whose second differences exceed
/// `2 ln 2` by an amount drawn in `slope_range`.
pub fn random_symmetric_strongly_convex(
    seed: u64,
    n_max: usize,
    slope_range: (f64, f64),
) -> Result<Potential> {
    validate_request(n_max, slope_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curvature = vec![0.0; n_max - 1];
    for i in 0..(n_max - 1).div_ceil(2) {
        let c = 2.0 * LN_2 + rng.gen_range(slope_range.0..=slope_range.1);
        curvature[i] = c;
        curvature[n_max - 2 - i] = c;
    }
    let total: f64 = curvature.iter().sum();
    let mut values = integrate(-total / 2.0, &curvature);
    for x in 0..=n_max / 2 {
        values[n_max - x] = values[x];
    }
    Potential::new(values)
}

/// Random monotone potential with second differences and boundary slopes at
/// least `2 ln 2`; decreasing or increasing with equal probability.
pub fn random_monotone_strongly_convex(
    seed: u64,
    n_max: usize,
    slope_range: (f64, f64),
) -> Result<Potential> {
    validate_request(n_max, slope_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curvature: Vec<f64> = (1..n_max)
        .map(|_| 2.0 * LN_2 + rng.gen_range(slope_range.0..=slope_range.1))
        .collect();
    let first = 2.0 * LN_2 + rng.gen_range(slope_range.0..=slope_range.1);
    let u = Potential::new(integrate(first, &curvature))?;
    Ok(if rng.gen_bool(0.5) { u.reflected() } else { u })
}

fn validate_request(n_max: usize, (lo, hi): (f64, f64)) -> Result<()> {
    if n_max < 2 {
        return Err(Error::InvalidPotential("N must be at least 2".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > 0.0 && lo <= hi) {
        return Err(Error::InvalidPotential(format!(
            "invalid slope range ({lo}, {hi}]"
        )));
    }
    Ok(())
}
