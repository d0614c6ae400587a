use nalgebra::{DMatrix, DVector};
use phitest::calibration::{ks_critical_1pct, ks_uniform, naive_compare, SimulationConfig};
use phitest::data::{make_split, synth_gaussian};
use phitest::linalg::select_rows;
use phitest::pipeline::{
    compute_shap, evaluate_methods, jaccard, phi_test, stability, BenchmarkConfig, FeatureTable, Method, Mode,
    PhiTestConfig,
};
use phitest::predictors::{BackboneSpec, FnPredictor, GbtConfig};
use phitest::rng::rng_from_seed;
use phitest::selection::{lasso_fixed_lambda, stepwise_first_k, SelectionOutcome, Selector};
use phitest::shap::{top_m, ShapMatrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn surrogate() -> FnPredictor<impl Fn(&[f64]) -> f64 + Send + Sync> {
    FnPredictor::new(6, |x: &[f64]| 1.2 * x[1] - 0.9 * x[4] + 0.5 * x[0] + 0.3 * (2.0 * x[1]).sin() * x[2])
}

fn run_table(mode: Mode, selector: Selector, seed: u64) -> FeatureTable {
    let ds = synth_gaussian(300, 6, &[0.0; 6], 1.0, 11).unwrap();
    let split = make_split(300, seed, 0.8, mode == Mode::Split).unwrap();
    let cfg = PhiTestConfig { m: 5, k: 3, selector, mode, seed, ..PhiTestConfig::for_features(6) };
    phi_test(&surrogate(), &ds, &split, &cfg, None).unwrap()
}

#[test]
fn residual_mass_accounts_for_every_feature() {
    for (mode, selector) in [(Mode::Split, Selector::Lars), (Mode::Full, Selector::Stepwise)] {
        let t = run_table(mode, selector, 3);
        let total: f64 = t.rows.iter().map(|r| r.shap).sum();
        let sel: f64 = t.selected.iter().map(|&j| t.rows[j].shap).sum();
        assert!((sel + t.residual_shap - total).abs() < 1e-12);
        assert!(t.selected.iter().all(|j| t.screened.contains(j)));
    }
}

#[test]
fn same_seed_gives_byte_identical_output() {
    for (mode, selector) in [(Mode::Split, Selector::Lars), (Mode::Full, Selector::Stepwise)] {
        let a = serde_json::to_string(&run_table(mode, selector, 5)).unwrap();
        let b = serde_json::to_string(&run_table(mode, selector, 5)).unwrap();
        assert_eq!(a, b);
    }
    let ds = synth_gaussian(200, 5, &[1.0, 0.5, 0.0, 0.0, -0.5], 1.0, 2).unwrap();
    let phi = PhiTestConfig { m: 4, k: 2, seed: 9, shap_rows: Some(40), ..PhiTestConfig::for_features(5) };
    let spec = BackboneSpec::Gbt(GbtConfig { n_trees: 20, ..GbtConfig::default() });
    let cfg = BenchmarkConfig { replicates: 2, spvim_boot: 100, stable_boot: 20, ..BenchmarkConfig::new(phi, spec) };
    let methods = [Method::PhiTest, Method::ShapTopK, Method::StableShap];
    let a = serde_json::to_string(&evaluate_methods(&ds, &cfg, &methods).unwrap()).unwrap();
    let b = serde_json::to_string(&evaluate_methods(&ds, &cfg, &methods).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn screening_is_invariant_to_rescaled_scores() {
    let ds = synth_gaussian(300, 6, &[0.0; 6], 1.0, 11).unwrap();
    let f = surrogate();
    let split = make_split(300, 4, 0.8, true).unwrap();
    let cfg = PhiTestConfig { m: 4, k: 2, ..PhiTestConfig::for_features(6) };
    let shap = compute_shap(&f, &select_rows(&ds.x, &split.selection_idx), &cfg).unwrap();
    let base = phi_test(&f, &ds, &split, &cfg, Some(&shap)).unwrap();
    for c in [1e-6, 0.37, 12.0, 4e5] {
        let scaled = ShapMatrix::new(&shap.phi * c, shap.base_value * c, shap.engine);
        let t = phi_test(&f, &ds, &split, &cfg, Some(&scaled)).unwrap();
        assert_eq!(t.screened, base.screened);
        assert_eq!(t.selected, base.selected);
        assert_eq!(t.rows.iter().map(|r| r.inference.clone()).collect::<Vec<_>>(),
                   base.rows.iter().map(|r| r.inference.clone()).collect::<Vec<_>>());
    }
}

#[test]
fn split_sample_null_p_values_are_uniform() {
    let r = naive_compare(&SimulationConfig::null(1000, 77)).unwrap();
    assert_eq!(r.failures, 0);
    let split: Vec<f64> = r.values.iter().map(|t| t.split).collect();
    let d = ks_uniform(&split);
    assert!(d < ks_critical_1pct(split.len()), "KS distance {d}");
}

/// Resolve-and-compare on several designs: selection on a perturbed
/// response reproduces the original event exactly when the perturbed
/// response lies in the original polyhedron.
fn check_polyhedron(select: impl Fn(&DVector<f64>) -> phitest::Result<SelectionOutcome>, y0: &DVector<f64>, draws: usize, seed: u64) -> (usize, usize) {
    let base = select(y0).unwrap();
    let poly = base.polyhedron.clone().unwrap();
    let mut rng = rng_from_seed(seed);
    let mut inside_count = 0;
    let mut counted = 0;
    for d in 0..draws {
        let scale = [0.05, 0.25, 0.8][d % 3];
        let y = DVector::from_fn(y0.len(), |i, _| y0[i] + scale * rng.sample::<f64, _>(StandardNormal));
        let slack = poly.slack(&y);
        if slack.iter().any(|s| s.abs() < 1e-9) {
            continue;
        }
        counted += 1;
        let inside = slack.iter().all(|&s| s >= 0.0);
        let same = select(&y).map(|o| o.selected == base.selected && o.signs == base.signs).unwrap_or(false);
        assert_eq!(inside, same, "draw {d}: membership {inside}, same event {same}");
        inside_count += inside as usize;
    }
    (counted, inside_count)
}

#[test]
fn polyhedra_match_reselection() {
    let mut total = 0;
    for seed in 0..3u64 {
        let ds = synth_gaussian(25, 5, &[0.9, 0.0, -0.7, 0.4, 0.0], 1.0, 300 + seed).unwrap();
        let x: DMatrix<f64> = ds.x.clone();
        let (n, inside) = check_polyhedron(|y| stepwise_first_k(&x, y, 2), &ds.y, 2000, seed);
        assert!(inside > 0 && inside < n);
        total += n;
        let lambda = 0.3 * (x.transpose() * phitest::linalg::center(&ds.y)).amax();
        let (n, inside) = check_polyhedron(|y| lasso_fixed_lambda(&x, y, lambda), &ds.y, 2000, 10 + seed);
        assert!(inside > 0);
        total += n;
    }
    assert!(total >= 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_m_invariant_under_positive_scaling(
        scores in prop::collection::vec(0.0f64..10.0, 2..15),
        c in 1e-3f64..1e3,
        m_frac in 0.0f64..1.0,
    ) {
        let m = 1 + ((scores.len() - 1) as f64 * m_frac) as usize;
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let mut a = top_m(&scores, m).unwrap();
        let mut b = top_m(&scaled, m).unwrap();
        a.sort_unstable();
        b.sort_unstable();
        // Rounding can only matter if it changes a pairwise comparison.
        let same_order = scores.iter().zip(&scaled).all(|(si, ti)| {
            scores.iter().zip(&scaled).all(|(sj, tj)| si.partial_cmp(sj) == ti.partial_cmp(tj))
        });
        prop_assume!(same_order);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn jaccard_and_stability_bounds(
        a in prop::collection::btree_set(0usize..12, 0..8),
        b in prop::collection::btree_set(0usize..12, 0..8),
        c in prop::collection::btree_set(0usize..12, 0..8),
    ) {
        let (a, b, c): (Vec<usize>, Vec<usize>, Vec<usize>) =
            (a.into_iter().collect(), b.into_iter().collect(), c.into_iter().collect());
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        let s = stability(&[a.clone(), b.clone(), c.clone()]).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let direct = (jaccard(&a, &b) + jaccard(&a, &c) + jaccard(&b, &c)) / 3.0;
        prop_assert!((s - direct).abs() < 1e-15);
    }
}
