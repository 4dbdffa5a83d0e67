mod common;

use flqr::optimizer::{gradient, minimize_theta, objective, standard_init, GdConfig, QuantileProblem, Theta};
use flqr::rkhs::{build_gram, SobolevKernel};
use flqr::simharness::{generate, ErrorFamily, SimDesign};
use flqr::tuning::rot_bandwidth_gram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fourth-order central differences with a step relative to the coordinate.
fn fd_gradient(f: impl Fn(&Theta) -> f64, theta: &Theta) -> Vec<f64> {
    let x = theta.to_flat();
    let m = theta.d.len();
    let at = |j: usize, shift: f64| {
        let mut v = x.clone();
        v[j] += shift;
        f(&Theta::from_flat(&v, m))
    };
    (0..x.len())
        .map(|j| {
            let eta = 1e-4 * x[j].abs().max(1.0);
            (8.0 * (at(j, eta) - at(j, -eta)) - (at(j, 2.0 * eta) - at(j, -2.0 * eta))) / (12.0 * eta)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

#[test]
fn gradient_matches_central_differences_on_100_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for k in 0..100 {
        let n = rng.random_range(3..=20);
        let sample = common::cosine_sample(n, 51, 12, 1.0, 1000 + k);
        let kern = SobolevKernel::cubic(sample.grid().clone()).unwrap();
        let gram = build_gram(&sample, &kern).unwrap();
        let y = sample.responses();
        let tau = rng.random_range(0.05..0.95);
        let h = 10f64.powf(rng.random_range(-1.5..0.0));
        let lambda = 10f64.powf(rng.random_range(-6.0..0.0));
        let theta = Theta {
            alpha: rng.random_range(-1.0..1.0),
            d: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
            c: (0..n).map(|_| rng.random_range(-20.0..20.0)).collect(),
        };
        let g = gradient(&theta, &gram, y, tau, h, lambda).unwrap();
        let mut analytic = vec![g.alpha];
        analytic.extend(&g.d);
        analytic.extend(&g.c);
        let fd = fd_gradient(|t| objective(t, &gram, y, tau, h, lambda).unwrap(), &theta);
        worst = worst.max(rel_err(&analytic, &fd));
        // the c block is orders of magnitude smaller; hold it to the same bound on its own
        worst_c = worst_c.max(rel_err(&analytic[3..], &fd[3..]));
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
    assert!(worst_c < 1e-6, "worst relative error on the c block {worst_c:e}");
}

#[test]
fn converged_fits_are_stationary_and_improve_on_the_start() {
    for (seed, tau, lambda) in [(1, 0.25, 1e-3), (2, 0.5, 1e-5), (3, 0.75, 1e-1), (4, 0.5, 1e-7)] {
        let sim = generate(&SimDesign::new(100, ErrorFamily::StudentT3, 5.0, seed)).unwrap();
        let kern = SobolevKernel::cubic(sim.sample.grid().clone()).unwrap();
        let gram = build_gram(&sim.sample, &kern).unwrap();
        let y = sim.sample.responses();
        let h = rot_bandwidth_gram(&gram, y, tau).unwrap();
        let problem = QuantileProblem::new(&gram, y, tau, h, lambda).unwrap();
        let init = standard_init(y, 2, tau);
        let config = GdConfig::default();
        let (theta, trace) = minimize_theta(&problem, &init, &config).unwrap();
        if trace.converged() {
            let g = gradient(&theta, &gram, y, tau, h, lambda).unwrap();
            assert!(g.norm() <= config.tol, "seed {seed}: |g| = {:e}", g.norm());
            assert!(trace.final_grad_norm <= config.tol);
        }
        let end = objective(&theta, &gram, y, tau, h, lambda).unwrap();
        assert!(end <= trace.initial_objective(), "seed {seed}: {end} > {}", trace.initial_objective());

        let (theta2, trace2) = minimize_theta(&problem, &init, &config).unwrap();
        assert_eq!(theta, theta2);
        assert_eq!(trace, trace2);
    }
}

#[test]
fn literal_step_rule_also_descends_on_easy_problems() {
    let sample = common::cosine_sample(15, 51, 8, 1.0, 9);
    let kern = SobolevKernel::cubic(sample.grid().clone()).unwrap();
    let gram = build_gram(&sample, &kern).unwrap();
    let y = sample.responses();
    let problem = QuantileProblem::new(&gram, y, 0.5, 1.0, 1e-2).unwrap();
    let init = standard_init(y, 2, 0.5);
    let (theta, trace) = minimize_theta(&problem, &init, &GdConfig::unguarded()).unwrap();
    let end = objective(&theta, &gram, y, 0.5, 1.0, 1e-2).unwrap();
    assert!(end <= trace.initial_objective());
}
