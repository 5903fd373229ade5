//! One pass/fail line per acceptance criterion; exits non-zero if any fails.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use markov_commutator::commutator::{
    check_hypergroup_with, check_min_weight, hset, hset_with, HsetMethod,
};
use markov_commutator::kernel::stationary_distribution;
use markov_commutator::metropolis::{
    classify_potential, condition_h, gibbs_measure, kernel_mu, kernel_variant,
    random_monotone_strongly_convex, random_symmetric_strongly_convex, Potential, Variant,
};
use markov_commutator::pipeline::{
    cycle_walk, desymmetrize, oracle_corpus, product_quotient, random_birth_death, reproduce,
    search, verify_witnesses, Case, SearchConfig, Verdict,
};
use markov_commutator::spectral::{decompose, is_uniplicit};
use markov_commutator::symmetry::{matches_single_orbit, symmetry_group};
use markov_commutator::wave::{
    boundary_identity_max, min_on_triangle, solve_wave_march, solve_wave_march_unnormalized,
    solve_wave_spectral, WaveSource,
};
use markov_commutator::{MarkovKernel, ProbabilityVector, Result, Tolerances};

type Outcome = Result<(bool, String)>;
type Criterion = (&'static str, fn(&Tolerances) -> Outcome);

fn micro_example(tol: &Tolerances) -> Outcome {
    let p = kernel_mu(&Potential::zero(2)?)?;
    let field = solve_wave_march_unnormalized(&p, &[0.0, 1.0, 0.0], tol)?;
    let k11 = field.k(1, 1);
    let h = hset(&p, tol)?;
    Ok((
        (k11 + 1.0).abs() <= 1e-12 && h.is_empty(),
        format!("k(1,1) = {k11:.15}, hset = {:?}", h.members),
    ))
}

fn symmetric_potentials() -> Result<Vec<Potential>> {
    let mut out = Vec::new();
    for n_max in 2..=10 {
        out.push(Potential::from_fn(n_max, |x| {
            let c = x as f64 - n_max as f64 / 2.0;
            LN_2 * c * c
        })?);
        for seed in 0..5u64 {
            out.push(random_symmetric_strongly_convex(seed, n_max, (0.0, 2.0))?);
        }
    }
    Ok(out)
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        })
        .collect()
}

fn positive_family(tol: &Tolerances) -> Outcome {
    let potentials = symmetric_potentials()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_min = f64::INFINITY;
    let mut bad = Vec::new();
    for u in &potentials {
        let n_max = u.n_max();
        let class = classify_potential(u);
        let p = kernel_mu(u)?;
        let mu = stationary_distribution(&p)?;
        let d = decompose(&p, &mu, tol)?;
        let mut sources: Vec<WaveSource> = (0..p.n()).map(WaveSource::Delta).collect();
        sources.extend(
            random_rows(&mut rng, p.n(), 5)
                .into_iter()
                .map(WaveSource::Row),
        );
        let mut field_min = f64::INFINITY;
        for s in &sources {
            let field = solve_wave_march(&p, &s.row(&mu, true)?, tol)?;
            field_min = field_min.min(min_on_triangle(&field).0);
        }
        worst_min = worst_min.min(field_min);
        let ok = class.strongly_convex_symmetric
            && condition_h(&p, tol)?
            && field_min >= -1e-9
            && check_hypergroup_with(&d, 0)?.holds
            && check_hypergroup_with(&d, n_max)?.holds
            && hset_with(&p, &d)?.members == vec![0, n_max];
        if !ok {
            bad.push(format!("{:?}", u.values()));
        }
    }
    Ok((
        potentials.len() >= 50 && bad.is_empty(),
        format!(
            "{} potentials, triangle min {worst_min:.3e}, failures {bad:?}",
            potentials.len()
        ),
    ))
}

fn monotone_family(tol: &Tolerances) -> Outcome {
    let mut count = 0;
    let (mut worst_intertwining, mut worst_mixture) = (0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for n_max in 2..=6 {
        for seed in 0..5u64 {
            let u = random_monotone_strongly_convex(seed, n_max, (0.0, 2.0))?;
            let r = desymmetrize(&u, tol)?;
            let mu = gibbs_measure(&u);
            let lightest = (0..mu.len())
                .min_by(|&a, &b| mu[a].total_cmp(&mu[b]))
                .expect("non-empty");
            count += 1;
            worst_intertwining = worst_intertwining.max(r.intertwining_residual);
            worst_mixture = worst_mixture.max(r.mixture_residual);
            let ok = classify_potential(&u).strongly_convex_monotone
                && r.intertwining_residual <= 1e-12
                && r.mixture_residual <= 1e-12
                && r.mixture_weight > 0.0
                && r.certificate.base_point == lightest
                && r.certificate.holds;
            if !ok {
                bad.push(format!("N={n_max} seed={seed}"));
            }
        }
    }
    Ok((
        count >= 20 && bad.is_empty(),
        format!(
            "{count} potentials, intertwining {worst_intertwining:.3e}, mixture {worst_mixture:.3e}, failures {bad:?}"
        ),
    ))
}

fn counterexample(tol: &Tolerances) -> Outcome {
    let mut config = SearchConfig::new(4, Variant::Paren, 500, 2016);
    config.asym = true;
    config.tol = *tol;
    let (results, summary) = search(&config);
    let mut verified = 0;
    let mut first = None;
    for r in results.iter().filter(|r| r.verdict == Verdict::Fails) {
        let asym = r.potential[0] == r.potential[1]
            && !Potential::new(r.potential.clone())?.is_symmetric();
        if asym && r.witnesses.len() == r.n_max + 1 && verify_witnesses(r, tol)? {
            verified += 1;
            first.get_or_insert(r.trial);
        }
    }
    Ok((
        verified > 0,
        format!(
            "{} fails of {} trials, {verified} verified, first trial {first:?}",
            summary.fails, summary.trials
        ),
    ))
}

fn oracle_fields(
    tol: &Tolerances,
) -> Result<Vec<(MarkovKernel, f64, Vec<markov_commutator::wave::WaveField>)>> {
    let mut out = Vec::new();
    for p in oracle_corpus(100, 7)? {
        let mu = stationary_distribution(&p)?;
        let d = decompose(&p, &mu, tol)?;
        let mut gap = 0.0f64;
        let mut fields = Vec::new();
        for y in 0..p.n() {
            let marched = solve_wave_march(&p, &WaveSource::Delta(y).row(&mu, true)?, tol)?;
            let spectral = solve_wave_spectral(&p, &d, &ProbabilityVector::dirac(p.n(), y)?)?;
            gap = gap.max(marched.grid().max_abs_diff(spectral.grid()));
            fields.push(marched);
        }
        out.push((p, gap, fields));
    }
    Ok(out)
}

fn oracle_equivalence(tol: &Tolerances) -> Outcome {
    let corpus = oracle_fields(tol)?;
    let gap = corpus.iter().map(|c| c.1).fold(0.0, f64::max);
    let n_max = corpus.iter().map(|c| c.0.n() - 1).max().unwrap_or(0);
    Ok((
        corpus.len() == 100 && n_max <= 12 && gap <= 1e-8,
        format!("{} kernels, N <= {n_max}, max gap {gap:.3e}", corpus.len()),
    ))
}

fn boundary_identity(tol: &Tolerances) -> Outcome {
    let corpus = oracle_fields(tol)?;
    let mut worst = 0.0f64;
    let mut weakest = f64::INFINITY;
    let mut fields = 0;
    for (_, _, group) in &corpus {
        for f in group {
            fields += 1;
            worst = worst.max(boundary_identity_max(f));
            let n = f.n_max() + 1;
            for x in 0..n {
                for y in 0..n {
                    let bumped = f.with_entry(x, y, f.k(x, y) + 1e-3);
                    weakest = weakest.min(boundary_identity_max(&bumped));
                }
            }
        }
    }
    Ok((
        worst <= 1e-9 && weakest > 1e-4,
        format!(
            "{fields} fields, max residual {worst:.3e}, weakest perturbed residual {weakest:.3e}"
        ),
    ))
}

/// Kernels the structural checks run over.
fn structural_corpus() -> Result<Vec<MarkovKernel>> {
    let mut out = Vec::new();
    for u in symmetric_potentials()? {
        out.push(kernel_mu(&u)?);
        out.push(kernel_variant(&u, Variant::Hat)?);
    }
    for n_max in 2..=6 {
        for seed in 0..4u64 {
            let u = random_monotone_strongly_convex(seed, n_max, (0.0, 2.0))?;
            for v in Variant::ALL {
                out.push(kernel_variant(&u, v)?);
            }
        }
    }
    for seed in 0..60u64 {
        out.push(random_birth_death(
            seed,
            2 + seed as usize % 9,
            (0.05, 0.5),
        )?);
    }
    out.extend(oracle_corpus(100, 7)?);
    for n in 3..=5 {
        out.push(cycle_walk(n)?);
    }
    out.push(MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.6, 0.4]])?);
    out.push(kernel_mu(&Potential::zero(2)?)?);
    Ok(out)
}

fn structural(tol: &Tolerances) -> Outcome {
    let corpus = structural_corpus()?;
    let mut bad = Vec::new();
    for (i, p) in corpus.iter().enumerate() {
        let mu = stationary_distribution(p)?;
        let d = decompose(p, &mu, tol)?;
        let h = hset_with(p, &d)?;
        let group = symmetry_group(p, tol)?;
        if !check_min_weight(&mu, &h, tol) {
            bad.push(format!("#{i} min weight"));
        }
        if !matches_single_orbit(&h.members, &group) {
            bad.push(format!("#{i} orbit"));
        }
    }
    let edges = reproduce(Case::EdgesFamily, tol)?;
    if !edges.passed {
        bad.push(format!("edges {}", edges.details));
    }
    Ok((
        bad.is_empty(),
        format!(
            "{} kernels, edge kernels {}, worst edge sum {}, failures {bad:?}",
            corpus.len(),
            edges.details["checked"],
            edges.details["worst_edge_sum"]
        ),
    ))
}

fn cycles(tol: &Tolerances) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 3..=5 {
        let p = cycle_walk(n)?;
        let d = decompose(&p, &stationary_distribution(&p)?, tol)?;
        let uniplicit = is_uniplicit(&d);
        let h = hset_with(&p, &d)?;
        ok &= !uniplicit
            && h.method == HsetMethod::LinearProgram
            && h.members == (0..n).collect::<Vec<_>>();
        parts.push(format!("n={n} uniplicit={uniplicit} hset={:?}", h.members));
    }
    Ok((ok, parts.join(", ")))
}

fn semicontinuity(tol: &Tolerances) -> Outcome {
    let mut ok = true;
    for n in 1..=10 {
        let u = Potential::new(vec![1.0 / n as f64, 0.0])?;
        ok &= hset(&kernel_mu(&u)?, tol)?.members == vec![0];
    }
    let limit = hset(&kernel_mu(&Potential::zero(1)?)?, tol)?;
    ok &= limit.members == vec![0, 1];
    Ok((
        ok,
        format!("hset = {{0}} for n <= 10, limit hset = {:?}", limit.members),
    ))
}

fn product(tol: &Tolerances) -> Outcome {
    let two = MarkovKernel::from_rows(&[vec![0.7, 0.3], vec![0.6, 0.4]])?;
    let r = product_quotient(&two, 3, 10, 11, tol)?;
    let ok = r.birth_death
        && r.uniplicit
        && !r.hset.is_empty()
        && r.intertwining_residual <= tol.tol_residual
        && r.samples == 10
        && r.members == r.samples;
    Ok((
        ok,
        format!(
            "{} lumped states, hset {:?}, intertwining {:.3e}, {}/{} samples commute",
            r.quotient.kernel.n(),
            r.hset,
            r.intertwining_residual,
            r.members,
            r.samples
        ),
    ))
}

fn main() {
    let tol = Tolerances::default();
    let criteria: [Criterion; 10] = [
        ("flat three-state value", micro_example),
        ("symmetric strongly convex family", positive_family),
        ("monotone family via mirroring", monotone_family),
        ("asymmetric paren counterexample", counterexample),
        ("march vs spectral", oracle_equivalence),
        ("boundary path identity", boundary_identity),
        ("structural invariants", structural),
        ("cycles", cycles),
        ("semicontinuity", semicontinuity),
        ("product quotient", product),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match check(&tol) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} [{}] {name}: {detail}",
            i + 1,
            if passed { "PASS" } else { "FAIL" }
        );
        if !passed {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
