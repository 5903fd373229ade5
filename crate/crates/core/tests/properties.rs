use proptest::prelude::*;

use markov_commutator::commutator::{check_min_weight, hset};
use markov_commutator::kernel::{invariance_residual, stationary_distribution};
use markov_commutator::metropolis::{kernel_mu, kernel_variant, Potential, Variant};
use markov_commutator::pipeline::{random_birth_death, search, SearchConfig};
use markov_commutator::spectral::{decompose, reconstruct_matrix};
use markov_commutator::symmetry::{symmetry_defect, Permutation};
use markov_commutator::wave::{boundary_identity_max, solve_wave_march, WaveSource};
use markov_commutator::{Error, MarkovKernel, Tolerances};

fn rows(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n)
        .prop_filter("rows need mass", |rows| {
            rows.iter().all(|r| r.iter().sum::<f64>() > 1e-3)
        })
}

fn potential() -> impl Strategy<Value = Vec<f64>> {
    (2usize..8).prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, n + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_rows_validate(raw in (2usize..7).prop_flat_map(rows)) {
        let normalized: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let p = MarkovKernel::from_rows(&normalized).unwrap();
        for x in 0..p.n() {
            let s: f64 = p.matrix().row(x).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.matrix().row(x).iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn unnormalized_rows_are_rejected(raw in (2usize..7).prop_flat_map(rows), scale in 1.5f64..3.0) {
        let scaled: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| scale * v / s).collect()
            })
            .collect();
        prop_assert!(MarkovKernel::from_rows(&scaled).is_err());
    }

    #[test]
    fn stationary_is_invariant(seed in any::<u64>(), n in 2usize..12) {
        let p = random_birth_death(seed, n, (0.05, 0.5)).unwrap();
        let mu = stationary_distribution(&p).unwrap();
        prop_assert!(invariance_residual(&p, &mu) < 1e-14);
    }

    #[test]
    fn spectral_reconstruction(seed in any::<u64>(), n in 2usize..12) {
        let tol = Tolerances::default();
        let p = random_birth_death(seed, n, (0.05, 0.5)).unwrap();
        let d = decompose(&p, &stationary_distribution(&p).unwrap(), &tol).unwrap();
        prop_assert!(reconstruct_matrix(&d).max_abs_diff(p.matrix()) < 1e-12);
        prop_assert!(d.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn marched_fields_solve_the_equation(seed in any::<u64>(), n in 2usize..10, y in 0usize..10) {
        let tol = Tolerances::default();
        let p = random_birth_death(seed, n, (0.2, 0.5)).unwrap();
        let mu = stationary_distribution(&p).unwrap();
        let field = solve_wave_march(&p, &WaveSource::Delta(y % n).row(&mu, true).unwrap(), &tol).unwrap();
        let scale = field.max_abs().max(1.0);
        prop_assert!(field.residual() <= 1e-10 * scale);
        prop_assert!(field.symmetry_residual() <= 1e-9 * scale);
        prop_assert!(boundary_identity_max(&field) <= 1e-9);
    }

    #[test]
    fn shifting_the_potential_changes_nothing(values in potential(), c in -5.0f64..5.0) {
        let u = Potential::new(values).unwrap();
        for v in Variant::ALL {
            let a = kernel_variant(&u, v).unwrap();
            let b = kernel_variant(&u.shifted(c), v).unwrap();
            prop_assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-12);
        }
    }

    #[test]
    fn reflected_potential_gives_reflected_kernel(values in potential()) {
        let u = Potential::new(values).unwrap();
        let p = kernel_mu(&u).unwrap();
        let q = kernel_mu(&u.reflected()).unwrap();
        let n = p.n();
        let s = Permutation::reflection(n);
        for x in 0..n {
            for y in 0..n {
                prop_assert!((p.matrix()[(x, y)] - q.matrix()[(s.apply(x), s.apply(y))]).abs() < 1e-14);
            }
        }
        if u.is_symmetric() {
            prop_assert!(symmetry_defect(&p, &s).unwrap() < 1e-14);
        }
    }

    #[test]
    fn hset_members_carry_minimal_mass(values in potential()) {
        let tol = Tolerances::default();
        let p = kernel_mu(&Potential::new(values).unwrap()).unwrap();
        match hset(&p, &tol) {
            Ok(h) => prop_assert!(check_min_weight(&stationary_distribution(&p).unwrap(), &h, &tol)),
            Err(Error::SizeLimitExceeded { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn tilted_two_point_potential_has_one_base_point(eps in 1e-3f64..5.0) {
        let tol = Tolerances::default();
        let h = hset(&kernel_mu(&Potential::new(vec![eps, 0.0]).unwrap()).unwrap(), &tol).unwrap();
        prop_assert_eq!(h.members, vec![0]);
    }

    #[test]
    fn permutation_inverse(map in (1usize..8).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())) {
        let g = Permutation::new(map).unwrap();
        prop_assert!(g.compose(&g.inverse()).is_identity());
        prop_assert!(g.inverse().compose(&g).is_identity());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn search_is_reproducible(seed in any::<u64>(), trials in 0usize..12) {
        let config = SearchConfig::new(4, Variant::Paren, trials, seed);
        let (a, sa) = search(&config);
        let (b, sb) = search(&config);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(sa, sb);
        prop_assert!(a.iter().enumerate().all(|(i, r)| r.trial == i));
    }
}
