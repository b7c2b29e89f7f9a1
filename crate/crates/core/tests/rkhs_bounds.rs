use kherd::evaluation::{koksma_hlawka_check, RkhsFunction};
use kherd::herding::run_herding_with_kernel;
use kherd::numerics::SeedStream;
use kherd::targets::{random_mixture, RandomMixtureSpec};
use kherd::{EmpiricalDistribution, GaussianKernel, HerdingConfig, HerdingState, Bandwidth, Target};

fn check_all(state: &HerdingState, target: &Target, seed: u64) {
    let mut rng = SeedStream::new(seed).rng();
    for i in 0..100 {
        let f = RkhsFunction::random(&mut rng, target, *state.kernel(), 1 + i % 10);
        let kh = koksma_hlawka_check(state, &f).unwrap();
        assert!(kh.holds, "function {i}: lhs {} rhs {}", kh.lhs, kh.rhs);
        assert!(kh.lhs <= kh.rhs + 1e-9);
    }
}

#[test]
fn integration_error_bounded_on_a_continuous_run() {
    let gm = random_mixture(&mut SeedStream::new(1).rng(), &RandomMixtureSpec::new(3, 6)).unwrap();
    let target = Target::Mixture(gm);
    let k = GaussianKernel::new(2.0).unwrap();
    let cfg = HerdingConfig::continuous(40, Bandwidth::Fixed(2.0), 1);
    let state = run_herding_with_kernel(k, &cfg, &target, &mut SeedStream::new(2).rng()).unwrap();
    check_all(&state, &target, 3);
}

#[test]
fn integration_error_bounded_on_a_discrete_run() {
    let gm = random_mixture(&mut SeedStream::new(4).rng(), &RandomMixtureSpec::new(2, 4)).unwrap();
    let pts = gm.sample(&mut SeedStream::new(5).rng(), 400);
    let target = Target::Empirical(EmpiricalDistribution::new(pts).unwrap());
    let k = GaussianKernel::new(1.0).unwrap();
    let cfg = HerdingConfig::discrete(25, Bandwidth::Fixed(1.0), 0);
    let state = run_herding_with_kernel(k, &cfg, &target, &mut SeedStream::new(6).rng()).unwrap();
    check_all(&state, &target, 7);
}

#[test]
fn bound_holds_from_the_first_sample() {
    let gm = random_mixture(&mut SeedStream::new(8).rng(), &RandomMixtureSpec::new(2, 3)).unwrap();
    let target = Target::Mixture(gm);
    let k = GaussianKernel::new(4.0).unwrap();
    for t in [1, 2, 5] {
        let cfg = HerdingConfig::continuous(t, Bandwidth::Fixed(4.0), 0);
        let state = run_herding_with_kernel(k, &cfg, &target, &mut SeedStream::new(9).rng()).unwrap();
        check_all(&state, &target, 10 + t as u64);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    let mut rng = SeedStream::new(11).rng();
    for case in 0..100u64 {
        let d = 1 + case as usize % 5;
        let gm = random_mixture(&mut rng, &RandomMixtureSpec::new(d, 1 + case as usize % 7)).unwrap();
        let sigma = 1.0 + (case % 4) as f64;
        let target = Target::Mixture(gm.clone());
        let mut state = HerdingState::new(GaussianKernel::new(sigma).unwrap(), &target).unwrap();
        for p in gm.sample(&mut rng, case as usize % 9).rows() {
            state.push(p).unwrap();
        }
        let x = gm.sample(&mut rng, 1).row(0).to_vec();
        let g = state.objective_gradient(&x).unwrap();
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                (state.objective(&a).unwrap() - state.objective(&b).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
        assert!(diff / scale < 1e-5, "case {case}: rel error {}", diff / scale);
    }
}
