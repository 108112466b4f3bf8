mod common;

use common::{check_duplicate_heavy, check_lof_fixture, oracle_lof};
use earthstrata::fairness::{disparity, lof_scores, measure_fairness};
use earthstrata::metrics::{ScoreRow, ScoreTable};
use proptest::prelude::*;

fn table(attribute: &str, values: &[f64]) -> ScoreTable {
    ScoreTable {
        rows: values
            .iter()
            .enumerate()
            .map(|(i, &v)| ScoreRow {
                model: "m".into(),
                variable: "T850".into(),
                attribute: attribute.into(),
                stratum: format!("s{i}"),
                lead_time_h: 12,
                rmse: Some(v),
                n_gridpoints: 1,
                n_times: 1,
            })
            .collect(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn population_variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn translation_invariance(v in prop::collection::vec(0.1f64..100.0, 2..40), t in 0.0f64..100.0) {
        let (g, var, _) = disparity(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + t).collect();
        let (g2, var2, _) = disparity(&shifted).unwrap();
        prop_assert!(close(g, g2));
        prop_assert!((var - var2).abs() <= 1e-9 * (1.0 + var) * (1.0 + t));
    }

    #[test]
    fn scale_equivariance(v in prop::collection::vec(0.1f64..100.0, 2..40), c in 0.01f64..100.0) {
        let (g, var, pr) = disparity(&v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let (g2, var2, pr2) = disparity(&scaled).unwrap();
        prop_assert!(close(g2, c * g));
        prop_assert!(close(var2, c * c * var));
        prop_assert!(close(pr2, pr));
    }

    #[test]
    fn permutation_invariance(v in prop::collection::vec(0.1f64..100.0, 2..40).prop_shuffle(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut w = v.clone();
        w.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = disparity(&v).unwrap();
        let b = disparity(&w).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.2, b.2);
        prop_assert!(close(a.1, b.1));
        prop_assert!(close(a.1, population_variance(&v)));
        prop_assert!(a.0 >= 0.0 && a.1 >= 0.0 && a.2 >= 100.0);
    }

    #[test]
    fn filtering_never_widens_the_range(v in prop::collection::vec(0.1f64..10.0, 3..30)) {
        let raw = &measure_fairness(&table("territory", &v), false).rows[0];
        let filtered = &measure_fairness(&table("territory", &v), true).rows[0];
        prop_assert_eq!(filtered.n_strata + filtered.outliers_removed.len(), v.len());
        if let (Some(a), Some(b)) = (raw.gad, filtered.gad) {
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn lof_is_permutation_equivariant(v in prop::collection::vec(0.0f64..10.0, 2..25), k in 1usize..20, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let w: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
        let a = lof_scores(&v, k);
        let b = lof_scores(&w, k);
        for (j, &i) in idx.iter().enumerate() {
            prop_assert!(a.scores[i] == b.scores[j] || close(a.scores[i], b.scores[j]));
        }
    }
}

#[test]
fn lof_matches_definition() {
    for seed in 0..200 {
        check_lof_fixture(seed).unwrap();
    }
}

#[test]
fn duplicate_heavy_sets_are_not_flagged() {
    for seed in 0..200 {
        check_duplicate_heavy(seed).unwrap();
    }
}

#[test]
fn ladder_interior_is_unremarkable() {
    let v: Vec<f64> = (1..=20).map(f64::from).collect();
    let flags = lof_scores(&v, 3);
    let oracle = oracle_lof(&v, 3);
    assert!(flags.flagged.iter().all(|f| !f));
    for i in 3..17 {
        assert!((flags.scores[i] - 1.0).abs() < 0.1, "{i}: {}", flags.scores[i]);
        assert!((flags.scores[i] - oracle[i]).abs() < 1e-12);
    }
}

#[test]
fn planted_strata_disparity() {
    let r = &measure_fairness(&table("income", &[0.5, 1.0, 2.0]), false).rows[0];
    assert_eq!(r.gad, Some(1.5));
    assert!(close(r.variance.unwrap(), population_variance(&[0.5, 1.0, 2.0])));
    assert_eq!(r.percent_ratio, Some(400.0));
}
