//! End-to-end scenarios shared by the `mcomm` binary and the tests: kernel
//! reports, the seeded counterexample search and the pinned reproduction
//! cases.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commutator::{
    check_hypergroup_with, check_min_weight, hset, hset_with, is_in_commutator, point_kernel,
    HsetMethod, HypergroupCertificate, LP_LIMIT,
};
use crate::error::{Error, Result};
use crate::intertwine::{check_intertwining, conjugate_commutator, projected_kernel};
use crate::kernel::{
    is_reversible, stationary_distribution, MarkovKernel, ProbabilityVector, Tolerances,
};
use crate::matrix::Matrix;
use crate::metropolis::{
    condition_h, gibbs_measure, kernel_mu, kernel_variant, random_convex_potential,
    random_monotone_strongly_convex, random_symmetric_strongly_convex, Potential, Variant,
    DEFAULT_SLOPE_RANGE,
};
use crate::product::{coordinate_average, coordinate_permutations, product_measure};
use crate::spectral::{decompose, is_uniplicit, SpectralDecomposition};
use crate::symmetry::{
    matches_single_orbit, quotient, symmetry_group, Permutation, QuotientResult,
};
use crate::wave::{
    boundary_identity_max, check_edges_condition, edge_sums_min, min_on_triangle, solve_wave_march,
    solve_wave_march_unnormalized, solve_wave_spectral, WaveSource,
};

/// Summary of everything the crate can say about one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub irreducible: bool,
    pub birth_death: bool,
    pub reversible: Option<bool>,
    pub uniplicit: Option<bool>,
    pub mu: Option<Vec<f64>>,
    pub eigenvalues: Option<Vec<f64>>,
    pub hset: Option<Vec<usize>>,
    pub hset_method: Option<HsetMethod>,
    pub symmetry_group_size: Option<usize>,
    /// Whether the hypergroup set is one orbit of the symmetry group.
    pub single_orbit: Option<bool>,
    /// Whether every hypergroup point carries the minimal invariant mass.
    pub min_weight_ok: Option<bool>,
    pub certificates: Vec<HypergroupCertificate>,
    pub condition_h: Option<bool>,
    pub notes: Vec<String>,
}

pub fn analyze(p: &MarkovKernel, tol: &Tolerances) -> Result<AnalysisReport> {
    let mut report = AnalysisReport {
        n: p.n(),
        irreducible: p.is_irreducible(),
        birth_death: p.is_birth_death(),
        reversible: None,
        uniplicit: None,
        mu: None,
        eigenvalues: None,
        hset: None,
        hset_method: None,
        symmetry_group_size: None,
        single_orbit: None,
        min_weight_ok: None,
        certificates: Vec::new(),
        condition_h: None,
        notes: Vec::new(),
    };
    if p.is_birth_death() {
        report.condition_h = Some(condition_h(p, tol)?);
    }
    if !p.is_irreducible() {
        report
            .notes
            .push("kernel is not irreducible; hypergroup set skipped".into());
        return Ok(report);
    }
    let mu = stationary_distribution(p)?;
    let reversible = is_reversible(p, &mu, tol);
    report.reversible = Some(reversible);
    report.mu = Some(mu.weights().to_vec());
    if !reversible {
        report
            .notes
            .push("kernel is not reversible; spectral analysis skipped".into());
        return Ok(report);
    }
    let d = decompose(p, &mu, tol)?;
    let uniplicit = is_uniplicit(&d);
    report.uniplicit = Some(uniplicit);
    report.eigenvalues = Some(d.eigenvalues().to_vec());

    if !uniplicit && p.n() > LP_LIMIT {
        report.notes.push(format!(
            "kernel is not uniplicit and has more than {LP_LIMIT} states; hypergroup set skipped"
        ));
    } else {
        let h = hset_with(p, &d)?;
        if uniplicit {
            for &x0 in &h.members {
                report.certificates.push(check_hypergroup_with(&d, x0)?);
            }
        } else {
            report
                .notes
                .push("hypergroup set certified by linear programming".into());
        }
        let min = mu.min();
        report.min_weight_ok = Some(h.members.iter().all(|&x| mu[x] <= min + tol.tol_residual));
        report.hset_method = Some(h.method);
        report.hset = Some(h.members);
    }

    match symmetry_group(p, tol) {
        Ok(group) => {
            report.symmetry_group_size = Some(group.len());
            if uniplicit {
                if let Some(h) = &report.hset {
                    report.single_orbit = Some(matches_single_orbit(h, &group));
                }
            }
        }
        Err(Error::SizeLimitExceeded { n, limit }) => report.notes.push(format!(
            "symmetry group skipped: {n} states exceed the search limit {limit}"
        )),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Potential family sampled by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Convex potentials.
    Convex,
    /// Symmetric with second differences at least `2 ln 2`.
    Symmetric,
    /// Monotone with second differences and end slopes at least `2 ln 2`.
    Monotone,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Convex => "convex",
            Family::Symmetric => "symmetric",
            Family::Monotone => "monotone",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Family::Convex, Family::Symmetric, Family::Monotone]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family `{s}` (expected convex, symmetric or monotone)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_max: usize,
    pub variant: Variant,
    pub trials: usize,
    pub seed: u64,
    pub family: Family,
    /// Only for the convex family: `U(0) = U(1)` and not symmetric.
    pub asym: bool,
    pub slope_range: (f64, f64),
    pub tol: Tolerances,
}

impl SearchConfig {
    pub fn new(n_max: usize, variant: Variant, trials: usize, seed: u64) -> Self {
        SearchConfig {
            n_max,
            variant,
            trials,
            seed,
            family: Family::Convex,
            asym: false,
            slope_range: DEFAULT_SLOPE_RANGE,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Error,
}

/// Why a base point is not in the hypergroup set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub base_point: usize,
    /// Some eigenfunction vanishes at the base point.
    pub vanishing_index: Option<usize>,
    /// Row `delta_target` at the base point forces a negative entry.
    pub target: Option<usize>,
    pub entry: Option<(usize, usize)>,
    pub value: Option<f64>,
    pub min_triple_sum: Option<f64>,
    pub triple_argmin: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trial: usize,
    pub seed: u64,
    pub n_max: usize,
    pub variant: Variant,
    pub potential: Vec<f64>,
    pub verdict: Verdict,
    pub hset: Vec<usize>,
    pub witnesses: Vec<Witness>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub trials: usize,
    pub holds: usize,
    pub fails: usize,
    pub errors: usize,
    pub failure_rate: f64,
    pub seed: u64,
    pub n_max: usize,
    pub variant: Variant,
    pub family: Family,
    pub asym: bool,
}

/// Per-trial seed: trial `i` reads stream `i` of the master generator.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

fn sample_potential(config: &SearchConfig, seed: u64) -> Result<Potential> {
    match config.family {
        Family::Convex => {
            random_convex_potential(seed, config.n_max, config.slope_range, config.asym)
        }
        Family::Symmetric => {
            random_symmetric_strongly_convex(seed, config.n_max, config.slope_range)
        }
        Family::Monotone => random_monotone_strongly_convex(seed, config.n_max, config.slope_range),
    }
}

/// Witnesses for every base point outside the hypergroup set.
pub fn witnesses(d: &SpectralDecomposition, members: &[usize]) -> Result<Vec<Witness>> {
    let mut out = Vec::new();
    for x0 in (0..d.n()).filter(|x| !members.contains(x)) {
        if let Some(l) = d.vanishing_index(x0) {
            out.push(Witness {
                base_point: x0,
                vanishing_index: Some(l),
                target: None,
                entry: None,
                value: None,
                min_triple_sum: None,
                triple_argmin: None,
            });
            continue;
        }
        let cert = check_hypergroup_with(d, x0)?;
        let worst = cert
            .failing_targets
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let (target, entry, value) = match worst {
            Some((x, _)) => {
                let sol = point_kernel(d, x0, x)?;
                (Some(x), Some(sol.argmin), Some(sol.min_entry))
            }
            None => (None, None, None),
        };
        out.push(Witness {
            base_point: x0,
            vanishing_index: None,
            target,
            entry,
            value,
            min_triple_sum: Some(cert.min_triple_sum),
            triple_argmin: Some(cert.argmin),
        });
    }
    Ok(out)
}

pub fn run_trial(config: &SearchConfig, trial: usize) -> SearchResult {
    let seed = trial_seed(config.seed, trial);
    let mut result = SearchResult {
        trial,
        seed,
        n_max: config.n_max,
        variant: config.variant,
        potential: Vec::new(),
        verdict: Verdict::Error,
        hset: Vec::new(),
        witnesses: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let u = sample_potential(config, seed)?;
        result.potential = u.values().to_vec();
        let p = kernel_variant(&u, config.variant)?;
        let mu = stationary_distribution(&p)?;
        let d = decompose(&p, &mu, &config.tol)?;
        let h = hset_with(&p, &d)?;
        result.witnesses = witnesses(&d, &h.members)?;
        result.verdict = if h.is_empty() {
            Verdict::Fails
        } else {
            Verdict::Holds
        };
        result.hset = h.members;
        Ok(())
    })();
    if let Err(e) = outcome {
        result.verdict = Verdict::Error;
        result.error = Some(e.to_string());
    }
    result
}

/// Runs every trial on the rayon pool; results come back in trial order.
pub fn search(config: &SearchConfig) -> (Vec<SearchResult>, SearchSummary) {
    let results: Vec<SearchResult> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    let count = |v: Verdict| results.iter().filter(|r| r.verdict == v).count();
    let (holds, fails, errors) = (
        count(Verdict::Holds),
        count(Verdict::Fails),
        count(Verdict::Error),
    );
    let summary = SearchSummary {
        trials: config.trials,
        holds,
        fails,
        errors,
        failure_rate: if config.trials == 0 {
            0.0
        } else {
            fails as f64 / config.trials as f64
        },
        seed: config.seed,
        n_max: config.n_max,
        variant: config.variant,
        family: config.family,
        asym: config.asym,
    };
    (results, summary)
}

/// Rebuilds the kernel of a failed trial and re-solves each witness.
pub fn verify_witnesses(result: &SearchResult, tol: &Tolerances) -> Result<bool> {
    let u = Potential::new(result.potential.clone())?;
    let p = kernel_variant(&u, result.variant)?;
    let mu = stationary_distribution(&p)?;
    let d = decompose(&p, &mu, tol)?;
    if result.witnesses.len() + result.hset.len() != p.n() {
        return Ok(false);
    }
    for w in &result.witnesses {
        let ok = match (w.vanishing_index, w.target, w.entry) {
            (Some(l), _, _) => d.phi(l, w.base_point).abs() <= tol.tol_eig_gap,
            (None, Some(x), Some((i, j))) => {
                let sol = point_kernel(&d, w.base_point, x)?;
                sol.kernel[(i, j)] < -tol.tol_nonneg
            }
            _ => false,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Birth-death kernel with every neighbour rate drawn uniformly in
/// `[lo, hi)`; `hi <= 0.5` keeps the diagonal non-negative.
pub fn random_birth_death(seed: u64, n: usize, (lo, hi): (f64, f64)) -> Result<MarkovKernel> {
    if !(0.0 < lo && lo < hi && hi <= 0.5) {
        return Err(Error::InvalidMeasure(format!(
            "rate range [{lo}, {hi}) must lie in (0, 0.5]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; n]; n];
    for x in 0..n {
        if x > 0 {
            rows[x][x - 1] = rng.gen_range(lo..hi);
        }
        if x + 1 < n {
            rows[x][x + 1] = rng.gen_range(lo..hi);
        }
        rows[x][x] = 1.0 - rows[x].iter().sum::<f64>();
    }
    MarkovKernel::from_rows(&rows)
}

/// Best `t` with `P ≈ (1 - t) I + t M` and the remaining defect.
pub fn identity_mixture_fit(p: &Matrix, m: &Matrix) -> Result<(f64, f64)> {
    let n = p.rows();
    if m.rows() != n || p.cols() != n || m.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.rows(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for x in 0..n {
        for y in (0..n).filter(|&y| y != x) {
            num += p[(x, y)] * m[(x, y)];
            den += m[(x, y)] * m[(x, y)];
        }
    }
    let t = if den == 0.0 { 1.0 } else { num / den };
    let fit = Matrix::identity(n).scale(1.0 - t).add(&m.scale(t));
    Ok((t, fit.max_abs_diff(p)))
}

/// Mirror-then-lump construction for a monotone potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesymmetrizationReport {
    pub potential: Vec<f64>,
    /// Whether `U` was reflected to make it non-increasing.
    pub reflected: bool,
    pub mirrored: Vec<f64>,
    pub quotient: QuotientResult,
    pub mixture_weight: f64,
    pub mixture_residual: f64,
    pub intertwining_residual: f64,
    /// Hypergroup test for `M_U` at the lightest end point.
    pub certificate: HypergroupCertificate,
}

pub fn desymmetrize(u: &Potential, tol: &Tolerances) -> Result<DesymmetrizationReport> {
    let reflected = u.slopes().iter().any(|d| *d > 0.0);
    let oriented = if reflected { u.reflected() } else { u.clone() };
    let mirrored = oriented.mirrored()?;
    let pbar = kernel_mu(&mirrored)?;
    let group = symmetry_group(&pbar, tol)?;
    let q = quotient(&pbar, &group, tol)?;
    let target = kernel_mu(&oriented)?;
    let (t, residual) = identity_mixture_fit(q.kernel.matrix(), target.matrix())?;
    let intertwining = check_intertwining(&pbar, &q.link, &q.kernel)?;

    let p = kernel_mu(u)?;
    let mu = gibbs_measure(u);
    let x0 = (0..mu.len())
        .min_by(|&a, &b| mu[a].total_cmp(&mu[b]))
        .expect("non-empty");
    let d = decompose(&p, &stationary_distribution(&p)?, tol)?;
    let certificate = check_hypergroup_with(&d, x0)?;
    Ok(DesymmetrizationReport {
        potential: u.values().to_vec(),
        reflected,
        mirrored: mirrored.values().to_vec(),
        quotient: q,
        mixture_weight: t,
        mixture_residual: residual,
        intertwining_residual: intertwining,
        certificate,
    })
}

/// Random element of the commutant of a coordinate-average product chain,
/// built from tensor products of two-state commuting kernels, powers of the
/// chain and coordinate shuffles.
fn sample_product_commutant(
    two_state: &MarkovKernel,
    pbar: &MarkovKernel,
    shuffles: &[Permutation],
    coords: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MarkovKernel> {
    let mu = stationary_distribution(two_state)?;
    let (lo, hi) = if mu[0] <= mu[1] { (0, 1) } else { (1, 0) };
    // Two-state commutant: b I + (1 - b) mu with b in [-mu_min / mu_max, 1].
    let b_min = -mu[lo] / mu[hi];
    let mut tensor = Matrix::identity(1);
    for _ in 0..coords {
        let b = rng.gen_range(b_min..=1.0);
        let k = Matrix::from_fn(2, 2, |x, y| {
            (if x == y { b } else { 0.0 }) + (1.0 - b) * mu[y]
        });
        tensor = tensor.kron(&k);
    }
    let power = rng.gen_range(0..4);
    let mut chain = Matrix::identity(pbar.n());
    for _ in 0..power {
        chain = chain.matmul(pbar.matrix())?;
    }
    let g = &shuffles[rng.gen_range(0..shuffles.len())];
    let w = rng.gen_range(0.0..=1.0);
    let mixed = tensor
        .scale(w)
        .add(&chain.matmul(g.to_kernel()?.matrix())?.scale(1.0 - w));
    MarkovKernel::from_matrix(
        mixed,
        &Tolerances {
            tol_stochastic: 1e-9,
            ..Tolerances::default()
        },
    )
}

/// Outcome of lumping a coordinate-average product chain by coordinate
/// shuffles and pushing sampled commuting kernels through the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductQuotientReport {
    pub coords: usize,
    pub quotient: QuotientResult,
    pub birth_death: bool,
    pub uniplicit: bool,
    pub hset: Vec<usize>,
    pub intertwining_residual: f64,
    pub projected_residual: f64,
    pub samples: usize,
    /// Sampled kernels whose conjugate commutes with the quotient.
    pub members: usize,
}

pub fn product_quotient(
    two_state: &MarkovKernel,
    coords: usize,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ProductQuotientReport> {
    if two_state.n() != 2 || !two_state.is_irreducible() {
        return Err(Error::InvalidMeasure(
            "product example needs an irreducible two-state kernel".into(),
        ));
    }
    let pbar = coordinate_average(two_state, coords)?;
    let mu_bar = product_measure(&stationary_distribution(two_state)?, coords)?;
    let shuffles = coordinate_permutations(2, coords)?;
    let q = quotient(&pbar, &shuffles, tol)?;
    let p = &q.kernel;
    let intertwining = check_intertwining(&pbar, &q.link, p)?;
    let projected = projected_kernel(&pbar, &q.link, &mu_bar)?;
    let projected_residual = projected.matrix().max_abs_diff(p.matrix());
    let mu = stationary_distribution(p)?;
    let d = decompose(p, &mu, tol)?;
    let uniplicit = is_uniplicit(&d);
    let h = hset_with(p, &d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = 0;
    for _ in 0..samples {
        let kbar = sample_product_commutant(two_state, &pbar, &shuffles, coords, &mut rng)?;
        let k = conjugate_commutator(&pbar, &q.link, &kbar, &mu_bar, tol)?;
        if is_in_commutator(p, &k, tol)? {
            members += 1;
        }
    }
    Ok(ProductQuotientReport {
        coords,
        birth_death: p.is_birth_death(),
        uniplicit,
        hset: h.members,
        intertwining_residual: intertwining,
        projected_residual,
        samples,
        members,
        quotient: q,
    })
}

/// Simple random walk on `Z/nZ`.
pub fn cycle_walk(n: usize) -> Result<MarkovKernel> {
    let m = Matrix::from_fn(n, n, |x, y| {
        let step = if n == 2 { 1.0 } else { 0.5 };
        if (x + 1) % n == y || (y + 1) % n == x {
            step
        } else {
            0.0
        }
    });
    MarkovKernel::from_matrix(m, &Tolerances::default())
}

/// Identifier of a pinned reproduction scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    RemarkFinaleC,
    CyclicHset,
    TwoStateHset,
    Prop3Grid,
    CritereFamily,
    EdgesFamily,
    Semicontinuity,
    Desymetrisation,
    CounterexampleSearch,
    WaveOracles,
    ProductQuotient,
    StructuralInvariants,
}

impl Case {
    pub const ALL: [Case; 12] = [
        Case::RemarkFinaleC,
        Case::CyclicHset,
        Case::TwoStateHset,
        Case::Prop3Grid,
        Case::CritereFamily,
        Case::EdgesFamily,
        Case::Semicontinuity,
        Case::Desymetrisation,
        Case::CounterexampleSearch,
        Case::WaveOracles,
        Case::ProductQuotient,
        Case::StructuralInvariants,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Case::RemarkFinaleC => "remark-finale-c",
            Case::CyclicHset => "cyclic-hset",
            Case::TwoStateHset => "two-state-hset",
            Case::Prop3Grid => "prop3-grid",
            Case::CritereFamily => "critere-family",
            Case::EdgesFamily => "edges-family",
            Case::Semicontinuity => "semicontinuity",
            Case::Desymetrisation => "desymetrisation",
            Case::CounterexampleSearch => "counterexample-search",
            Case::WaveOracles => "wave-oracles",
            Case::ProductQuotient => "product-quotient",
            Case::StructuralInvariants => "structural-invariants",
        }
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Case::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| format!("unknown case `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub passed: bool,
    pub details: Value,
}

pub fn reproduce(case: Case, tol: &Tolerances) -> Result<CaseReport> {
    let (passed, details) = match case {
        Case::RemarkFinaleC => remark_finale_c(tol)?,
        Case::CyclicHset => cyclic_hset(tol)?,
        Case::TwoStateHset => two_state_hset(tol)?,
        Case::Prop3Grid => prop3_grid(tol)?,
        Case::CritereFamily => critere_family(tol)?,
        Case::EdgesFamily => edges_family(tol)?,
        Case::Semicontinuity => semicontinuity(tol)?,
        Case::Desymetrisation => desymetrisation(tol)?,
        Case::CounterexampleSearch => counterexample_search(tol)?,
        Case::WaveOracles => wave_oracles(tol)?,
        Case::ProductQuotient => product_quotient_case(tol)?,
        Case::StructuralInvariants => structural_invariants(tol)?,
    };
    Ok(CaseReport {
        case: case.id().to_string(),
        passed,
        details,
    })
}

fn remark_finale_c(tol: &Tolerances) -> Result<(bool, Value)> {
    let p = kernel_mu(&Potential::zero(2)?)?;
    let field = solve_wave_march_unnormalized(&p, &[0.0, 1.0, 0.0], tol)?;
    let k11 = field.k(1, 1);
    let h = hset(&p, tol)?;
    let passed = (k11 + 1.0).abs() <= 1e-12 && h.is_empty();
    Ok((passed, json!({ "k11": k11, "hset": h.members })))
}

fn cyclic_hset(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut passed = true;
    let mut rows = Vec::new();
    for n in 3..=5 {
        let p = cycle_walk(n)?;
        let mu = stationary_distribution(&p)?;
        let d = decompose(&p, &mu, tol)?;
        let uniplicit = is_uniplicit(&d);
        let h = hset_with(&p, &d)?;
        let ok = !uniplicit
            && h.method == HsetMethod::LinearProgram
            && h.members == (0..n).collect::<Vec<_>>();
        passed &= ok;
        rows.push(json!({ "n": n, "uniplicit": uniplicit, "hset": h.members, "method": h.method }));
    }
    Ok((passed, json!(rows)))
}

fn two_state_hset(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut passed = true;
    let mut rows = Vec::new();
    for (a, b) in [
        (0.3, 0.6),
        (0.5, 0.5),
        (1.0, 1.0),
        (0.2, 0.2),
        (0.9, 0.1),
        (0.05, 0.7),
    ] {
        let p = MarkovKernel::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]])?;
        let mu = stationary_distribution(&p)?;
        let h = hset(&p, tol)?;
        let min = mu.min();
        let expected: Vec<usize> = (0..2)
            .filter(|&x| mu[x] <= min + tol.tol_residual)
            .collect();
        passed &= h.members == expected;
        rows.push(json!({ "a": a, "b": b, "hset": h.members, "expected": expected }));
    }
    Ok((passed, json!(rows)))
}

fn prop3_grid(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut checked = 0;
    let mut bad = Vec::new();
    // Monotone potentials of this class rise at least quadratically, so
    // beyond N = 6 the Gibbs weights span more than double precision.
    for n_max in 2..=6 {
        for seed in 0..4u64 {
            let sym = random_symmetric_strongly_convex(seed, n_max, (0.0, 2.0))?;
            let h = hset(&kernel_mu(&sym)?, tol)?;
            checked += 1;
            if h.members != vec![0, n_max] {
                bad.push(json!({ "potential": sym.values(), "hset": h.members }));
            }
            let mono = random_monotone_strongly_convex(seed, n_max, (0.0, 2.0))?;
            let mu = gibbs_measure(&mono);
            let lightest = if mu[0] < mu[n_max] { 0 } else { n_max };
            let h = hset(&kernel_mu(&mono)?, tol)?;
            checked += 1;
            if h.members != vec![lightest] {
                bad.push(json!({ "potential": mono.values(), "hset": h.members }));
            }
        }
    }
    Ok((
        bad.is_empty(),
        json!({ "checked": checked, "mismatches": bad }),
    ))
}

/// Symmetric birth-death kernels under the monotonicity condition: `M_U` and
/// the boundary-boosted variant for strongly convex symmetric `U`, and the
/// halving variant for symmetric `U` with convex fold.
fn critere_kernels() -> Result<Vec<(String, MarkovKernel)>> {
    let mut out = Vec::new();
    for n_max in 2..=10 {
        let extremal = Potential::from_fn(n_max, |x| {
            let c = x as f64 - n_max as f64 / 2.0;
            std::f64::consts::LN_2 * c * c
        })?;
        out.push((format!("mu N={n_max} extremal"), kernel_mu(&extremal)?));
        for seed in 0..3u64 {
            let u = random_symmetric_strongly_convex(seed, n_max, (0.0, 2.0))?;
            out.push((format!("mu N={n_max} seed={seed}"), kernel_mu(&u)?));
            out.push((
                format!("hat N={n_max} seed={seed}"),
                kernel_variant(&u, Variant::Hat)?,
            ));
            let v = random_symmetric_strongly_convex(seed + 100, n_max, (0.0, 2.0))?;
            let w = Potential::from_fn(n_max, |x| {
                v[x] - std::f64::consts::LN_2 * x.min(n_max - x) as f64
            })?;
            out.push((
                format!("check N={n_max} seed={seed}"),
                kernel_variant(&w, Variant::Check)?,
            ));
        }
    }
    Ok(out)
}

fn critere_family(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut bad = Vec::new();
    let kernels = critere_kernels()?;
    for (label, p) in &kernels {
        let n_max = p.n() - 1;
        let h_ok = condition_h(p, tol)?;
        let mu = stationary_distribution(p)?;
        let d = decompose(p, &mu, tol)?;
        let at0 = check_hypergroup_with(&d, 0)?.holds;
        let at_n = check_hypergroup_with(&d, n_max)?.holds;
        // The triangle and the exact set are only pinned for the plain variant.
        let (tri_ok, h_exact) = if label.starts_with("mu ") {
            (
                triangle_minimum(p, tol)? >= -tol.tol_nonneg,
                hset_with(p, &d)?.members == vec![0, n_max],
            )
        } else {
            (true, true)
        };
        if !(h_ok && at0 && at_n && tri_ok && h_exact) {
            bad.push(json!({
                "kernel": label,
                "condition_h": h_ok,
                "at_0": at0,
                "at_N": at_n,
                "triangle_nonnegative": tri_ok,
                "hset_is_ends": h_exact,
            }));
        }
    }
    Ok((
        bad.is_empty(),
        json!({ "checked": kernels.len(), "failures": bad }),
    ))
}

fn edges_family(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut candidates = critere_kernels()?;
    for seed in 0..200u64 {
        let n = 3 + (seed as usize % 8);
        candidates.push((
            format!("random seed={seed}"),
            random_birth_death(seed, n, (0.05, 0.5))?,
        ));
    }
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    for (label, p) in &candidates {
        if !check_edges_condition(p)? {
            continue;
        }
        checked += 1;
        let mu = stationary_distribution(p)?;
        for y in 0..p.n() {
            let row = WaveSource::Delta(y).row(&mu, true)?;
            let field = solve_wave_march(p, &row, tol)?;
            let m = edge_sums_min(&field);
            worst = worst.min(m);
            if m < -tol.tol_nonneg {
                bad.push(json!({ "kernel": label, "source": y, "edge_min": m }));
            }
        }
    }
    Ok((
        checked > 0 && bad.is_empty(),
        json!({ "checked": checked, "worst_edge_sum": worst, "failures": bad }),
    ))
}

fn semicontinuity(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut passed = true;
    let mut rows = Vec::new();
    for n in 1..=10 {
        let u = Potential::new(vec![1.0 / n as f64, 0.0])?;
        let h = hset(&kernel_mu(&u)?, tol)?;
        passed &= h.members == vec![0];
        rows.push(json!({ "n": n, "hset": h.members }));
    }
    let limit = hset(&kernel_mu(&Potential::zero(1)?)?, tol)?;
    passed &= limit.members == vec![0, 1];
    Ok((passed, json!({ "sequence": rows, "limit": limit.members })))
}

fn desymetrisation(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut rows = Vec::new();
    let mut passed = true;
    for n_max in 2..=6 {
        for seed in 0..4u64 {
            let u = random_monotone_strongly_convex(seed, n_max, (0.0, 2.0))?;
            let r = desymmetrize(&u, tol)?;
            let ok = r.intertwining_residual <= 1e-12
                && r.mixture_residual <= 1e-12
                && r.mixture_weight > 0.0
                && r.mixture_weight <= 1.0 + 1e-12
                && r.certificate.holds;
            passed &= ok;
            rows.push(json!({
                "N": n_max,
                "seed": seed,
                "mixture_weight": r.mixture_weight,
                "mixture_residual": r.mixture_residual,
                "intertwining_residual": r.intertwining_residual,
                "holds": r.certificate.holds,
            }));
        }
    }
    Ok((passed, json!(rows)))
}

fn counterexample_search(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut config = SearchConfig::new(4, Variant::Paren, 500, 2016);
    config.asym = true;
    config.tol = *tol;
    let (results, summary) = search(&config);
    let witness = results
        .iter()
        .filter(|r| r.verdict == Verdict::Fails)
        .find(|r| verify_witnesses(r, tol).unwrap_or(false));
    Ok((
        witness.is_some(),
        json!({ "summary": summary, "first_verified_failure": witness }),
    ))
}

/// Random birth-death corpus used by the solver comparison, with `N`
/// cycling through `2..=12`.
pub fn oracle_corpus(count: usize, seed: u64) -> Result<Vec<MarkovKernel>> {
    (0..count)
        .map(|i| random_birth_death(trial_seed(seed, i), 3 + i % 11, ORACLE_RATES))
        .collect()
}

/// Rate range of [`oracle_corpus`].
pub const ORACLE_RATES: (f64, f64) = (0.25, 0.5);

fn wave_oracles(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut worst_gap = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut weakest = f64::INFINITY;
    for p in oracle_corpus(100, 7)? {
        let mu = stationary_distribution(&p)?;
        let d = decompose(&p, &mu, tol)?;
        for y in 0..p.n() {
            let row = WaveSource::Delta(y).row(&mu, true)?;
            let marched = solve_wave_march(&p, &row, tol)?;
            let spectral = solve_wave_spectral(&p, &d, &ProbabilityVector::dirac(p.n(), y)?)?;
            worst_gap = worst_gap.max(marched.grid().max_abs_diff(spectral.grid()));
            worst_identity = worst_identity.max(boundary_identity_max(&marched));
            for a in 0..p.n() {
                for b in 0..p.n() {
                    let bumped = marched.with_entry(a, b, marched.k(a, b) + 1e-3);
                    weakest = weakest.min(boundary_identity_max(&bumped));
                }
            }
        }
    }
    Ok((
        worst_gap <= 1e-8 && worst_identity <= 1e-9 && weakest > 1e-4,
        json!({
            "max_abs_gap": worst_gap,
            "max_identity_residual": worst_identity,
            "weakest_perturbed_residual": weakest,
        }),
    ))
}

fn product_quotient_case(tol: &Tolerances) -> Result<(bool, Value)> {
    let two = MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.6, 0.4]])?;
    let r = product_quotient(&two, 3, 10, 11, tol)?;
    let passed = r.birth_death
        && r.uniplicit
        && !r.hset.is_empty()
        && r.intertwining_residual <= tol.tol_residual
        && r.members == r.samples;
    Ok((passed, serde_json::to_value(&r).expect("report serializes")))
}

/// Every point of `H(P)` carries the minimal mass and `H(P)` is one orbit of
/// the symmetry group, over the critere kernels, every variant on monotone
/// potentials, random chains, the oracle corpus and the cycles.
fn structural_invariants(tol: &Tolerances) -> Result<(bool, Value)> {
    let mut corpus: Vec<(String, MarkovKernel)> = critere_kernels()?;
    for n_max in 2..=6 {
        for seed in 0..4u64 {
            let u = random_monotone_strongly_convex(seed, n_max, (0.0, 2.0))?;
            for v in Variant::ALL {
                corpus.push((
                    format!("{} N={n_max} seed={seed}", v.name()),
                    kernel_variant(&u, v)?,
                ));
            }
        }
    }
    for seed in 0..60u64 {
        let p = random_birth_death(seed, 2 + seed as usize % 9, (0.05, 0.5))?;
        corpus.push((format!("random seed={seed}"), p));
    }
    for (i, p) in oracle_corpus(100, 7)?.into_iter().enumerate() {
        corpus.push((format!("oracle #{i}"), p));
    }
    for n in 3..=5 {
        corpus.push((format!("cycle {n}"), cycle_walk(n)?));
    }
    let mut bad = Vec::new();
    for (label, p) in &corpus {
        let mu = stationary_distribution(p)?;
        let d = decompose(p, &mu, tol)?;
        let h = hset_with(p, &d)?;
        let min_weight = check_min_weight(&mu, &h, tol);
        let orbit = matches_single_orbit(&h.members, &symmetry_group(p, tol)?);
        if !(min_weight && orbit) {
            bad.push(json!({ "kernel": label, "hset": h.members, "min_weight": min_weight, "orbit": orbit }));
        }
    }
    Ok((
        bad.is_empty(),
        json!({ "checked": corpus.len(), "failures": bad }),
    ))
}

/// Smallest value of `k` on the triangle over all Dirac sources.
pub fn triangle_minimum(p: &MarkovKernel, tol: &Tolerances) -> Result<f64> {
    let mu = stationary_distribution(p)?;
    let mut worst = f64::INFINITY;
    for y in 0..p.n() {
        let row = WaveSource::Delta(y).row(&mu, true)?;
        let field = solve_wave_march(p, &row, tol)?;
        worst = worst.min(min_on_triangle(&field).0);
    }
    Ok(worst)
}
