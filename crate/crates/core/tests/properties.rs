use kherd::evaluation::{fit_rate, koksma_hlawka_check, ErrorTrace, Estimator, RkhsFunction};
use kherd::herding::run_herding;
use kherd::numerics::SeedStream;
use kherd::posterior::{accuracy, pca_whiten, predictive_rmse, sample_covariance, LabeledSet};
use kherd::{Bandwidth, EmpiricalDistribution, GaussianKernel, HerdingConfig, HerdingState, Kernel, Points, Target};
use proptest::prelude::*;

fn points(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
        .prop_map(|rows| Points::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_runs_track_brute_error(pts in points(2, 1..40), sigma in 0.3f64..4.0, t in 1usize..30) {
        let target = Target::Empirical(EmpiricalDistribution::new(pts.clone()).unwrap());
        let run = run_herding(&HerdingConfig::discrete(t, Bandwidth::Fixed(sigma), 0), &target).unwrap();
        prop_assert_eq!(run.errors.len(), run.samples.len());
        prop_assert!(run.errors.iter().all(|&e| e >= 0.0));

        let k = GaussianKernel::new(sigma).unwrap();
        let n = pts.len() as f64;
        let mut c = 0.0;
        for a in pts.rows() { for b in pts.rows() { c += k.eval(a, b); } }
        c /= n * n;
        let mut s1 = 0.0;
        for x in run.samples.rows() { s1 += pts.rows().map(|y| k.eval(x, y)).sum::<f64>() / n; }
        let mut s2 = 0.0;
        for a in run.samples.rows() { for b in run.samples.rows() { s2 += k.eval(a, b); } }
        let tt = t as f64;
        let brute = (c - 2.0 * s1 / tt + s2 / (tt * tt)).max(0.0);
        let got = run.errors[t - 1].powi(2);
        // the brute sum cancels O(1) terms, so its own roundoff is ~1e-15
        prop_assert!((got - brute).abs() <= 1e-9 * brute + 1e-13, "{} vs {}", got, brute);
    }

    #[test]
    fn koksma_hlawka_holds(pts in points(3, 2..30), sigma in 0.5f64..3.0, t in 1usize..15, seed in 0u64..1000) {
        let target = Target::Empirical(EmpiricalDistribution::new(pts).unwrap());
        let k = GaussianKernel::new(sigma).unwrap();
        let mut state = HerdingState::new(k, &target).unwrap();
        for _ in 0..t { state.herd_step_discrete().unwrap(); }
        let f = RkhsFunction::random(&mut SeedStream::new(seed).rng(), &target, k, 5);
        prop_assert!(koksma_hlawka_check(&state, &f).unwrap().holds);
    }

    #[test]
    fn whitening_invariants(seed in 0u64..10_000, d in 1usize..6) {
        let mut rng = SeedStream::new(seed).rng();
        let n = 20 + 10 * d;
        let raw = Points::from_rows(&(0..n).map(|_| (0..d).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect::<Vec<f64>>()).collect::<Vec<_>>()).unwrap();
        let (t, w) = pca_whiten(&raw).unwrap();
        let (m, c) = sample_covariance(&w);
        for i in 0..t.retained() {
            prop_assert!(m[i].abs() <= 1e-8);
            for j in 0..t.retained() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((c[(i, j)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn accuracy_is_a_fraction_and_order_free(x in points(2, 1..30), thetas in points(2, 1..5), flip in any::<u64>()) {
        let y: Vec<u8> = (0..x.len()).map(|i| ((flip >> (i % 64)) & 1) as u8).collect();
        let a = accuracy(&thetas, &LabeledSet::new(x.clone(), y.clone()).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let rev: Vec<usize> = (0..x.len()).rev().collect();
        let yr: Vec<u8> = rev.iter().map(|&i| y[i]).collect();
        let b = accuracy(&thetas, &LabeledSet::new(x.select(&rev), yr).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rmse_is_zero_only_for_matching_predictions(d in points(2, 1..20), test in points(2, 1..10)) {
        prop_assert_eq!(predictive_rmse(&d, &d, &test).unwrap(), 0.0);
    }

    #[test]
    fn power_laws_are_recovered(a in 0.01f64..10.0, b in -2.0f64..-0.1) {
        let mut trace = ErrorTrace::new(Estimator::Herding, "f", "p", 0);
        for t in 1..=40usize {
            trace.push(t * 3, a * ((t * 3) as f64).powf(b));
        }
        let fit = fit_rate(&trace, 1).unwrap();
        prop_assert!((fit.slope - b).abs() < 1e-9);
    }
}
