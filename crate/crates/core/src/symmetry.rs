//! Permutations preserving a kernel, orbits and quotients by a group of
//! such permutations.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intertwine::{deterministic_link, Link};
use crate::kernel::{stationary_distribution, MarkovKernel, Tolerances};
use crate::matrix::Matrix;
use crate::spectral::{decompose, is_uniplicit};

/// Largest state count for the exhaustive search.
pub const GROUP_SEARCH_LIMIT: usize = 10;

/// A bijection of `0..n`, serialized as its index array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Permutation::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(g: Permutation) -> Self {
        g.map
    }
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &y in &map {
            if y >= n || seen[y] {
                return Err(Error::NotAPermutation);
            }
            seen[y] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    /// `x -> n - 1 - x`.
    pub fn reflection(n: usize) -> Self {
        Permutation {
            map: (0..n).rev().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(x, &y)| x == y)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            map: other.map.iter().map(|&x| self.map[x]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.n()];
        for (x, &y) in self.map.iter().enumerate() {
            inv[y] = x;
        }
        Permutation { map: inv }
    }

    /// Deterministic kernel `T_g(x, .) = delta_{g(x)}`.
    pub fn to_kernel(&self) -> Result<MarkovKernel> {
        let n = self.n();
        MarkovKernel::from_matrix(
            Matrix::from_fn(n, n, |x, y| if self.map[x] == y { 1.0 } else { 0.0 }),
            &Tolerances::default(),
        )
    }
}

/// `max |P(g(x), g(y)) - P(x, y)|`.
pub fn symmetry_defect(p: &MarkovKernel, g: &Permutation) -> Result<f64> {
    if g.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: g.n(),
        });
    }
    let n = p.n();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            worst = worst.max((p[(g.apply(x), g.apply(y))] - p[(x, y)]).abs());
        }
    }
    Ok(worst)
}

/// All permutations preserving `p` within `tol_residual`, sorted.
///
/// Irreducible birth-death kernels only admit the identity and the
/// reflection as graph automorphisms, so only those two are tested; other
/// kernels are searched exhaustively up to [`GROUP_SEARCH_LIMIT`] states.
pub fn symmetry_group(p: &MarkovKernel, tol: &Tolerances) -> Result<Vec<Permutation>> {
    let n = p.n();
    if p.is_birth_death() && p.is_irreducible() {
        let mut group = vec![Permutation::identity(n)];
        let s = Permutation::reflection(n);
        if n > 1 && symmetry_defect(p, &s)? <= tol.tol_residual {
            group.push(s);
        }
        group.sort();
        return Ok(group);
    }
    if n > GROUP_SEARCH_LIMIT {
        return Err(Error::SizeLimitExceeded {
            n,
            limit: GROUP_SEARCH_LIMIT,
        });
    }
    let search = Search::new(p, tol.tol_residual);
    let mut group: Vec<Permutation> = search.candidates[0]
        .par_iter()
        .flat_map_iter(|&first| {
            let mut found = Vec::new();
            let mut map = vec![usize::MAX; n];
            let mut used = vec![false; n];
            if search.consistent(&map, 0, first) {
                map[0] = first;
                used[first] = true;
                search.extend(&mut map, &mut used, 1, &mut found);
            }
            found
        })
        .collect();
    group.sort();
    Ok(group)
}

struct Search<'a> {
    p: &'a MarkovKernel,
    tol: f64,
    candidates: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(p: &'a MarkovKernel, tol: f64) -> Self {
        let n = p.n();
        let m = p.matrix();
        let sig: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
            .map(|x| {
                let mut row: Vec<f64> = (0..n).filter(|&y| y != x).map(|y| m[(x, y)]).collect();
                let mut col: Vec<f64> = (0..n).filter(|&y| y != x).map(|y| m[(y, x)]).collect();
                row.sort_by(f64::total_cmp);
                col.sort_by(f64::total_cmp);
                (m[(x, x)], row, col)
            })
            .collect();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol);
        let candidates = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| {
                        (sig[x].0 - sig[y].0).abs() <= tol
                            && close(&sig[x].1, &sig[y].1)
                            && close(&sig[x].2, &sig[y].2)
                    })
                    .collect()
            })
            .collect();
        Search { p, tol, candidates }
    }

    /// Whether `x -> y` agrees with the assignments `0..x` already made.
    fn consistent(&self, map: &[usize], x: usize, y: usize) -> bool {
        let p = self.p;
        if (p[(y, y)] - p[(x, x)]).abs() > self.tol {
            return false;
        }
        (0..x).all(|a| {
            let ga = map[a];
            (p[(ga, y)] - p[(a, x)]).abs() <= self.tol && (p[(y, ga)] - p[(x, a)]).abs() <= self.tol
        })
    }

    fn extend(&self, map: &mut [usize], used: &mut [bool], x: usize, found: &mut Vec<Permutation>) {
        let n = map.len();
        if x == n {
            found.push(Permutation { map: map.to_vec() });
            return;
        }
        for &y in &self.candidates[x] {
            if used[y] || !self.consistent(map, x, y) {
                continue;
            }
            map[x] = y;
            used[y] = true;
            self.extend(map, used, x + 1, found);
            used[y] = false;
        }
        map[x] = usize::MAX;
    }
}

/// Whether the set is closed under composition and inversion.
pub fn is_closed_group(group: &[Permutation]) -> bool {
    let set: BTreeSet<&Permutation> = group.iter().collect();
    group
        .iter()
        .all(|g| set.contains(&g.inverse()) && group.iter().all(|h| set.contains(&g.compose(h))))
}

/// Closure of `points` under the action of `group`.
pub fn orbit(points: &BTreeSet<usize>, group: &[Permutation]) -> BTreeSet<usize> {
    let mut out = points.clone();
    let mut frontier: Vec<usize> = points.iter().copied().collect();
    while let Some(x) = frontier.pop() {
        for g in group {
            let y = g.apply(x);
            if out.insert(y) {
                frontier.push(y);
            }
        }
    }
    out
}

/// Whether a hypergroup set is a single orbit of the symmetry group.
///
/// Requires a uniplicit kernel. The empty set passes vacuously.
pub fn hset_is_single_orbit(p: &MarkovKernel, hset: &[usize], tol: &Tolerances) -> Result<bool> {
    let mu = stationary_distribution(p)?;
    let d = decompose(p, &mu, tol)?;
    if !is_uniplicit(&d) {
        return Err(Error::NotUniplicit(d.min_gap()));
    }
    let group = symmetry_group(p, tol)?;
    Ok(matches_single_orbit(hset, &group))
}

/// Set-level part of [`hset_is_single_orbit`].
pub fn matches_single_orbit(hset: &[usize], group: &[Permutation]) -> bool {
    let Some(&first) = hset.first() else {
        return true;
    };
    let members: BTreeSet<usize> = hset.iter().copied().collect();
    orbit(&BTreeSet::from([first]), group) == members
}

/// Quotient of `Pbar` by a group of its symmetries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientResult {
    /// Class index of each source state.
    pub projection: Vec<usize>,
    pub kernel: MarkovKernel,
    pub link: Link,
}

/// Lumps `Pbar` along the classes `xbar ~ g(xbar)`.
///
/// Classes are numbered by their smallest member. The lumped row must not
/// depend on the representative.
pub fn quotient(
    pbar: &MarkovKernel,
    group: &[Permutation],
    tol: &Tolerances,
) -> Result<QuotientResult> {
    let n_bar = pbar.n();
    for g in group {
        if symmetry_defect(pbar, g)? > tol.tol_residual {
            return Err(Error::NotASymmetry(g.map.clone()));
        }
    }
    let mut parent: Vec<usize> = (0..n_bar).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for g in group {
        for x in 0..n_bar {
            let (a, b) = (find(&mut parent, x), find(&mut parent, g.apply(x)));
            if a != b {
                // Keep the smaller index as root so roots are class minima.
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n_bar).map(|x| find(&mut parent, x)).collect();
    let mut class_of_root = vec![usize::MAX; n_bar];
    let mut n = 0;
    for x in 0..n_bar {
        if roots[x] == x {
            class_of_root[x] = n;
            n += 1;
        }
    }
    let projection: Vec<usize> = roots.iter().map(|&r| class_of_root[r]).collect();

    let lumped = |xb: usize| -> Vec<f64> {
        let mut row = vec![0.0; n];
        for yb in 0..n_bar {
            row[projection[yb]] += pbar[(xb, yb)];
        }
        row
    };
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut discrepancy = 0.0f64;
    for xb in 0..n_bar {
        let row = lumped(xb);
        match &rows[projection[xb]] {
            None => rows[projection[xb]] = Some(row),
            Some(rep) => {
                for (a, b) in rep.iter().zip(&row) {
                    discrepancy = discrepancy.max((a - b).abs());
                }
            }
        }
    }
    if discrepancy > tol.tol_residual {
        return Err(Error::InconsistentQuotient(discrepancy));
    }
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| r.expect("every class has a member"))
        .collect();
    let kernel = MarkovKernel::from_matrix(Matrix::from_rows(&rows)?, tol)?;
    let link = deterministic_link(&projection, n)?;
    Ok(QuotientResult {
        projection,
        kernel,
        link,
    })
}
