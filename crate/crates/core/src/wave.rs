//! The discrete wave equation `L1 k = L2 k` attached to a birth-death kernel,
//! its two solvers and the non-negativity certificates on the triangle
//! `{(x, y) : y <= x <= N - y}`.

use std::fmt::Write as _;
use std::str::FromStr;

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::kernel::{stationary_distribution, MarkovKernel, ProbabilityVector, Tolerances};
use crate::matrix::Matrix;
use crate::spectral::{decompose, is_uniplicit, SpectralDecomposition};

/// Tolerance on `sum row0 * mu = 1` for normalized sources.
const SOURCE_TOL: f64 = 1e-9;

/// A solution `k` of the wave equation on `0..=N` squared.
///
/// `k(x, y) = K(x, y) / mu(y)` for the commuting matrix `K` whose row at 0 is
/// `k(., 0) * mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    kernel: MarkovKernel,
    mu: ProbabilityVector,
    grid: Matrix,
    source_row: Vec<f64>,
}

impl WaveField {
    /// Grid side minus one.
    pub fn n_max(&self) -> usize {
        self.grid.rows() - 1
    }

    pub fn kernel(&self) -> &MarkovKernel {
        &self.kernel
    }

    pub fn mu(&self) -> &ProbabilityVector {
        &self.mu
    }

    pub fn grid(&self) -> &Matrix {
        &self.grid
    }

    pub fn source_row(&self) -> &[f64] {
        &self.source_row
    }

    pub fn k(&self, x: usize, y: usize) -> f64 {
        self.grid[(x, y)]
    }

    pub fn max_abs(&self) -> f64 {
        self.grid.max_abs()
    }

    /// Commuting matrix `K(x, y) = k(x, y) mu(y)`.
    pub fn commuting_matrix(&self) -> Matrix {
        let n = self.grid.rows();
        Matrix::from_fn(n, n, |x, y| self.grid[(x, y)] * self.mu[y])
    }

    /// `max |L1 k - L2 k|` over the whole grid.
    pub fn residual(&self) -> f64 {
        wave_residual(&self.kernel, &self.grid)
    }

    /// `max |k(x, y) - k(y, x)|`.
    pub fn symmetry_residual(&self) -> f64 {
        self.grid.max_abs_diff(&self.grid.transpose())
    }

    /// Minimum over the whole square.
    pub fn min(&self) -> f64 {
        self.grid.min_entry()
    }

    /// Copy with one grid value replaced; the wave equation is not
    /// re-checked.
    pub fn with_entry(&self, x: usize, y: usize, value: f64) -> WaveField {
        let mut out = self.clone();
        out.grid[(x, y)] = value;
        out
    }

    /// CSV with header `x,y,k`, one line per grid point, `y` outermost.
    pub fn to_csv(&self) -> String {
        let n = self.grid.rows();
        let mut out = String::from("x,y,k\n");
        for y in 0..n {
            for x in 0..n {
                writeln!(out, "{x},{y},{:e}", self.grid[(x, y)]).expect("writing to a String");
            }
        }
        out
    }
}

/// Source row for the wave equation.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveSource {
    /// Dirac mass at a state.
    Delta(usize),
    /// The invariant probability; the field is identically 1.
    Invariant,
    /// Explicit weights: a probability when normalized, the literal row
    /// `k(., 0)` otherwise.
    Row(Vec<f64>),
}

impl FromStr for WaveSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "mu" {
            return Ok(WaveSource::Invariant);
        }
        if let Some(i) = s.strip_prefix("delta:") {
            return i
                .trim()
                .parse()
                .map(WaveSource::Delta)
                .map_err(|e| format!("bad delta index `{i}`: {e}"));
        }
        if let Some(r) = s.strip_prefix("row:") {
            return r
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(WaveSource::Row)
                .map_err(|e| format!("bad row `{r}`: {e}"));
        }
        Err(format!(
            "unknown source `{s}` (expected delta:<i>, mu or row:<a,b,...>)"
        ))
    }
}

impl WaveSource {
    /// The row `k(., 0)`. Normalized sources are divided by `mu`.
    pub fn row(&self, mu: &ProbabilityVector, normalized: bool) -> Result<Vec<f64>> {
        let n = mu.len();
        let raw = match self {
            WaveSource::Delta(i) => ProbabilityVector::dirac(n, *i)?.weights().to_vec(),
            WaveSource::Invariant => return Ok(vec![1.0; n]),
            WaveSource::Row(r) => {
                if r.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: r.len(),
                    });
                }
                r.clone()
            }
        };
        if normalized {
            Ok(raw.iter().zip(mu.weights()).map(|(m, w)| m / w).collect())
        } else {
            Ok(raw)
        }
    }
}

fn rate(p: &MarkovKernel, x: usize, y: isize) -> f64 {
    p.rate(x as isize, y)
}

/// `L1 k(x, y)` with the Neumann convention: missing neighbours carry rate 0.
fn l_first(p: &MarkovKernel, k: &Matrix, x: usize, y: usize) -> f64 {
    let n = k.rows();
    let mut s = 0.0;
    if x > 0 {
        s += p[(x, x - 1)] * (k[(x - 1, y)] - k[(x, y)]);
    }
    if x + 1 < n {
        s += p[(x, x + 1)] * (k[(x + 1, y)] - k[(x, y)]);
    }
    s
}

fn l_second(p: &MarkovKernel, k: &Matrix, x: usize, y: usize) -> f64 {
    let n = k.rows();
    let mut s = 0.0;
    if y > 0 {
        s += p[(y, y - 1)] * (k[(x, y - 1)] - k[(x, y)]);
    }
    if y + 1 < n {
        s += p[(y, y + 1)] * (k[(x, y + 1)] - k[(x, y)]);
    }
    s
}

fn wave_residual(p: &MarkovKernel, k: &Matrix) -> f64 {
    let n = k.rows();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            worst = worst.max((l_first(p, k, x, y) - l_second(p, k, x, y)).abs());
        }
    }
    worst
}

fn require_birth_death(p: &MarkovKernel) -> Result<()> {
    if !p.is_birth_death() {
        return Err(Error::NotBirthDeath);
    }
    if !p.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    Ok(())
}

fn check_source(row0: &[f64], mu: &ProbabilityVector) -> Result<()> {
    if row0.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: row0.len(),
        });
    }
    let mass: f64 = row0.iter().zip(mu.weights()).map(|(r, w)| r * w).sum();
    if (mass - 1.0).abs() > SOURCE_TOL {
        return Err(Error::SourceNotNormalized(mass));
    }
    Ok(())
}

/// Marches the grid in `y` from the source row `k(., 0) = row0`, which must
/// satisfy `sum row0 * mu = 1`.
pub fn solve_wave_march(p: &MarkovKernel, row0: &[f64], tol: &Tolerances) -> Result<WaveField> {
    require_birth_death(p)?;
    let mu = stationary_distribution(p)?;
    check_source(row0, &mu)?;
    march(p, mu, row0, tol)
}

/// As [`solve_wave_march`] without the normalization check, so that the
/// row is used literally.
pub fn solve_wave_march_unnormalized(
    p: &MarkovKernel,
    row0: &[f64],
    tol: &Tolerances,
) -> Result<WaveField> {
    require_birth_death(p)?;
    let mu = stationary_distribution(p)?;
    if row0.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: row0.len(),
        });
    }
    march(p, mu, row0, tol)
}

fn march(
    p: &MarkovKernel,
    mu: ProbabilityVector,
    row0: &[f64],
    tol: &Tolerances,
) -> Result<WaveField> {
    let n = p.n();
    if let Some(y) = (0..n - 1).find(|&y| p[(y, y + 1)] == 0.0) {
        return Err(Error::ZeroUpRate(y));
    }
    // Marching divides by the up rates, which can be tiny next to the rates
    // at other sites; carry the grid in double-double so the rounded field
    // still satisfies the equation at working precision.
    let mut kk = vec![vec![TwoFloat::from(0.0); n]; n];
    for x in 0..n {
        kk[x][0] = TwoFloat::from(row0[x]);
    }
    for y in 0..n - 1 {
        for x in 0..n {
            let here = kk[x][y];
            let mut step = TwoFloat::from(0.0);
            if x > 0 {
                step += (kk[x - 1][y] - here) * p[(x, x - 1)];
            }
            if x + 1 < n {
                step += (kk[x + 1][y] - here) * p[(x, x + 1)];
            }
            if y > 0 {
                step -= (kk[x][y - 1] - here) * p[(y, y - 1)];
            }
            kk[x][y + 1] = here + step / p[(y, y + 1)];
        }
    }
    let k = Matrix::from_fn(n, n, |x, y| kk[x][y].hi() + kk[x][y].lo());
    let field = WaveField {
        kernel: p.clone(),
        mu,
        grid: k,
        source_row: row0.to_vec(),
    };
    let res = field.residual();
    if res > tol.tol_residual * field.max_abs().max(1.0) {
        return Err(Error::WaveResidual(res));
    }
    Ok(field)
}

/// Spectral expansion of the field: `k(x, y) = sum_l c_l phi_l(x) phi_l(y)`
/// with `c_l = (sum_z row0(z) mu(z) phi_l(z)) / phi_l(0)`.
pub fn solve_wave_spectral_row(
    p: &MarkovKernel,
    d: &SpectralDecomposition,
    row0: &[f64],
) -> Result<WaveField> {
    let n = d.n();
    if p.n() != n || row0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: row0.len(),
        });
    }
    if !is_uniplicit(d) {
        return Err(Error::NotUniplicit(d.min_gap()));
    }
    if let Some(l) = d.vanishing_index(0) {
        return Err(Error::VanishingEigenvectorAt { x: 0, l });
    }
    let mu = d.mu();
    let coeffs: Vec<f64> = (0..n)
        .map(|l| (0..n).map(|z| row0[z] * mu[z] * d.phi(l, z)).sum::<f64>() / d.phi(l, 0))
        .collect();
    let grid = Matrix::from_fn(n, n, |x, y| {
        (0..n).map(|l| coeffs[l] * d.phi(l, x) * d.phi(l, y)).sum()
    });
    Ok(WaveField {
        kernel: p.clone(),
        mu: mu.clone(),
        grid,
        source_row: row0.to_vec(),
    })
}

/// Spectral solution for the source probability `m0`.
pub fn solve_wave_spectral(
    p: &MarkovKernel,
    d: &SpectralDecomposition,
    m0: &ProbabilityVector,
) -> Result<WaveField> {
    let row0: Vec<f64> = m0
        .weights()
        .iter()
        .zip(d.mu().weights())
        .map(|(m, w)| m / w)
        .collect();
    solve_wave_spectral_row(p, d, &row0)
}

/// Marches when every up-rate exceeds `tol_eig_gap`, and falls back to the
/// spectral expansion otherwise.
pub fn solve_wave(
    p: &MarkovKernel,
    row0: &[f64],
    normalized: bool,
    tol: &Tolerances,
) -> Result<WaveField> {
    require_birth_death(p)?;
    let n = p.n();
    let marchable = (0..n - 1).all(|y| p[(y, y + 1)] > tol.tol_eig_gap);
    if marchable {
        return if normalized {
            solve_wave_march(p, row0, tol)
        } else {
            solve_wave_march_unnormalized(p, row0, tol)
        };
    }
    let mu = stationary_distribution(p)?;
    if normalized {
        check_source(row0, &mu)?;
    }
    let d = decompose(p, &mu, tol)?;
    solve_wave_spectral_row(p, &d, row0)
}

/// `y <= x <= N - y`.
pub fn in_triangle(n_max: usize, x: usize, y: usize) -> bool {
    y <= x && x + y <= n_max
}

/// `y + 1 <= x <= N - y - 1`.
pub fn in_inner_triangle(n_max: usize, x: usize, y: usize) -> bool {
    y < x && x + y < n_max
}

fn triangle_points(n_max: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n_max / 2).flat_map(move |y| (y..=n_max - y).map(move |x| (x, y)))
}

/// Rate hypotheses for non-negativity on the triangle: for `(x, y)` in the
/// triangle with `y >= 1`, `P(y-1, y) >= P(x, x-1) + P(x, x+1)`, and on the
/// inner triangle, `P(y, y-1) <= min(P(x-1, x), P(x+1, x))`.
pub fn check_trtr_condition(p: &MarkovKernel) -> Result<bool> {
    rate_conditions(p, |a, b| a + b)
}

/// As [`check_trtr_condition`] with the maximum of the two outgoing rates in
/// place of their sum.
pub fn check_edges_condition(p: &MarkovKernel) -> Result<bool> {
    rate_conditions(p, f64::max)
}

fn rate_conditions(p: &MarkovKernel, combine: impl Fn(f64, f64) -> f64) -> Result<bool> {
    if !p.is_birth_death() {
        return Err(Error::NotBirthDeath);
    }
    let n_max = p.n() - 1;
    for (x, y) in triangle_points(n_max) {
        let xi = x as isize;
        let yi = y as isize;
        if y >= 1 && rate(p, y - 1, yi) < combine(rate(p, x, xi - 1), rate(p, x, xi + 1)) {
            return Ok(false);
        }
        if in_inner_triangle(n_max, x, y)
            && p.rate(yi, yi - 1) > p.rate(xi - 1, xi).min(p.rate(xi + 1, xi))
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimum of `k` on the triangle with the first minimizer in `(y, x)` order.
pub fn min_on_triangle(field: &WaveField) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 0));
    for (x, y) in triangle_points(field.n_max()) {
        if field.k(x, y) < best.0 {
            best = (field.k(x, y), (x, y));
        }
    }
    best
}

/// First point of the triangle, in `(y, x)` lexicographic order, where `k`
/// drops below `-tol_nonneg`.
pub fn first_negative_on_triangle(field: &WaveField, tol: &Tolerances) -> Option<(usize, usize)> {
    triangle_points(field.n_max()).find(|&(x, y)| field.k(x, y) < -tol.tol_nonneg)
}

/// `max |P(N-x, N-y) - P(x, y)|`.
pub fn reflection_residual(p: &MarkovKernel) -> f64 {
    let n = p.n();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            worst = worst.max((p[(n - 1 - x, n - 1 - y)] - p[(x, y)]).abs());
        }
    }
    worst
}

/// Invariance of `k` under the dihedral symmetries of the square generated by
/// the diagonal and anti-diagonal reflections.
pub fn check_square_symmetries(field: &WaveField, tol: &Tolerances) -> Result<bool> {
    if reflection_residual(&field.kernel) > tol.tol_residual {
        return Err(Error::SourceNotSymmetric);
    }
    let n = field.n_max();
    let slack = tol.tol_residual * field.max_abs().max(1.0);
    for x in 0..=n {
        for y in 0..=n {
            let v = field.k(x, y);
            let images = [field.k(y, x), field.k(n - x, n - y), field.k(n - y, n - x)];
            if images.iter().any(|w| (w - v).abs() > slack) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Minimal edge sums on the triangle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdgeSums {
    /// `min k(x, y) + k(x, y + 1)` over vertical edges inside the triangle.
    pub vertical: f64,
    /// `min mu(x) k(x, y) + mu(x + 1) k(x + 1, y)` over horizontal edges.
    pub horizontal: f64,
}

impl EdgeSums {
    pub fn min(&self) -> f64 {
        self.vertical.min(self.horizontal)
    }
}

pub fn edge_sums(field: &WaveField) -> EdgeSums {
    let n = field.n_max();
    let mut vertical = f64::INFINITY;
    let mut horizontal = f64::INFINITY;
    for (x, y) in triangle_points(n) {
        if in_triangle(n, x, y + 1) {
            vertical = vertical.min(field.k(x, y) + field.k(x, y + 1));
        }
        if x < n && in_triangle(n, x + 1, y) {
            horizontal =
                horizontal.min(field.mu[x] * field.k(x, y) + field.mu[x + 1] * field.k(x + 1, y));
        }
    }
    EdgeSums {
        vertical,
        horizontal,
    }
}

pub fn edge_sums_min(field: &WaveField) -> f64 {
    edge_sums(field).min()
}

/// Field data seen through one of the four symmetries of the square that
/// map solutions to solutions.
struct View<'a> {
    field: &'a WaveField,
    transpose: bool,
    reflect: bool,
}

impl View<'_> {
    fn map(&self, x: usize, y: usize) -> (usize, usize) {
        let n = self.field.n_max();
        let (x, y) = if self.reflect { (n - x, n - y) } else { (x, y) };
        if self.transpose {
            (y, x)
        } else {
            (x, y)
        }
    }

    fn k(&self, (x, y): (usize, usize)) -> f64 {
        let (a, b) = self.map(x, y);
        self.field.k(a, b)
    }

    fn state(&self, x: usize) -> usize {
        if self.reflect {
            self.field.n_max() - x
        } else {
            x
        }
    }

    fn mu(&self, x: usize) -> f64 {
        self.field.mu[self.state(x)]
    }

    fn rate(&self, x: usize, y: usize) -> f64 {
        self.field.kernel[(self.state(x), self.state(y))]
    }

    /// Edge weight: `mu(x) mu(y) L(x, x')` for horizontal steps and
    /// `mu(x) mu(y) L(y, y')` for vertical ones.
    fn omega(&self, (x, y): (usize, usize), (x2, y2): (usize, usize)) -> f64 {
        let w = self.mu(x) * self.mu(y);
        if y == y2 {
            w * self.rate(x, x2)
        } else {
            w * self.rate(y, y2)
        }
    }

    /// Relative defect of the path identity at `z0`, divided by the leading
    /// weight `omega(z0, p-(1))`.
    fn identity_residual(&self, (x0, y0): (usize, usize)) -> f64 {
        let len = 2 * y0;
        let path = |sign: isize| -> Vec<(usize, usize)> {
            let mut pts = vec![(x0, y0)];
            for step in 0..len {
                let (x, y) = pts[step];
                pts.push(if step % 2 == 0 {
                    (x, y - 1)
                } else {
                    ((x as isize + sign) as usize, y)
                });
            }
            pts
        };
        let minus = path(-1);
        let plus = path(1);
        let lead = self.omega(minus[0], minus[1]);
        let lhs = lead * self.k(minus[0]);
        let mut rhs = (lead - self.omega(minus[1], minus[2]) - self.omega(plus[1], plus[2]))
            * self.k(minus[1]);
        for p in [&minus, &plus] {
            rhs += self.omega(p[len - 1], p[len]) * self.k(p[len]);
            for step in 2..len {
                rhs += (self.omega(p[step - 1], p[step]) - self.omega(p[step], p[step + 1]))
                    * self.k(p[step]);
            }
        }
        (lhs - rhs).abs() / lead
    }
}

/// Defect of the path identity at the base point `z0 = (x0, y0)` of the
/// triangle, `y0 >= 1`, in units of `k`.
pub fn boundary_identity_residual(field: &WaveField, z0: (usize, usize)) -> Result<f64> {
    let (x0, y0) = z0;
    if y0 == 0 || !in_triangle(field.n_max(), x0, y0) {
        return Err(Error::InvalidBasePoint(x0, y0));
    }
    let view = View {
        field,
        transpose: false,
        reflect: false,
    };
    Ok(view.identity_residual(z0))
}

/// Largest identity defect over every base point of the triangle in each of
/// the four orientations `k`, `k^T`, `k(N-., N-.)` and its transpose, which
/// together cover the whole square.
pub fn boundary_identity_max(field: &WaveField) -> f64 {
    let n = field.n_max();
    let mut worst = 0.0f64;
    for transpose in [false, true] {
        for reflect in [false, true] {
            let view = View {
                field,
                transpose,
                reflect,
            };
            for (x, y) in triangle_points(n).filter(|&(_, y)| y >= 1) {
                worst = worst.max(view.identity_residual((x, y)));
            }
        }
    }
    worst
}
