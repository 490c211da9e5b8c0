use netalloc::distributed::{compare_traces, run_distributed, DistributedMethod};
use netalloc::metrics::{grid_solve, kkt_solve, utility};
use netalloc::oracle::{
    dual_gradient, dual_value, oracle_constants, primal_response, regularized_gradient, regularized_value,
    stochastic_gradient,
};
use netalloc::problem::{generate_random_network, make_quadratic_utilities, NetworkProblem, UtilitySpec};
use netalloc::solvers::{build_certificate, solve, solve_ellipsoid, Method, SolverConfig};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn instance(m: usize, n: usize, seed: u64, log: bool) -> NetworkProblem {
    let net = generate_random_network(m, n, seed).unwrap();
    let utilities = if log { UtilitySpec::logarithmic_for(&net) } else { make_quadratic_utilities(n, seed) };
    NetworkProblem::new(net, utilities).unwrap()
}

fn quadratic() -> impl Strategy<Value = NetworkProblem> {
    (1usize..=4, 1usize..=12, any::<u64>()).prop_map(|(m, n, s)| instance(m, n, s, false))
}

fn any_family() -> impl Strategy<Value = NetworkProblem> {
    (1usize..=4, 1usize..=12, any::<u64>(), any::<bool>()).prop_map(|(m, n, s, log)| instance(m, n, s, log))
}

fn with_prices<S: Strategy<Value = NetworkProblem>>(s: S) -> impl Strategy<Value = (NetworkProblem, Vec<f64>)> {
    s.prop_flat_map(|p| {
        let m = p.links();
        (Just(p), prop::collection::vec(0.0..60.0f64, m))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_duality_against_grid(
        (m, n, seed, log) in (1usize..=3, 1usize..=3, any::<u64>(), any::<bool>()),
        lambda in prop::collection::vec(0.0..40.0f64, 3),
    ) {
        let p = instance(m, n, seed, log);
        let (_, best) = grid_solve(&p, 21).unwrap();
        prop_assert!(dual_value(&p, &lambda[..m]) >= best - 1e-9 * best.abs().max(1.0));
    }

    #[test]
    fn gap_equals_complementarity((p, lambda) in with_prices(any_family())) {
        let x = primal_response(&p, &lambda);
        let g = dual_gradient(&p, &lambda);
        let inner: f64 = lambda.iter().zip(&g).map(|(l, d)| l * d).sum();
        let gap = dual_value(&p, &lambda) - utility(&p, &x);
        prop_assert!((gap - inner).abs() <= 1e-9 * (1.0 + inner.abs()));
    }

    #[test]
    fn stochastic_mean_is_the_gradient((p, lambda) in with_prices(any_family())) {
        let n = p.users();
        let full = dual_gradient(&p, &lambda);
        let mut mean = vec![0.0; p.links()];
        for k in 0..n {
            for (acc, g) in mean.iter_mut().zip(stochastic_gradient(&p, &lambda, k).unwrap()) {
                *acc += g / n as f64;
            }
        }
        for (a, b) in mean.iter().zip(&full) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn lipschitz_bound(
        (p, a) in with_prices(quadratic()),
        shift in prop::collection::vec(-30.0..30.0f64, 4),
    ) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| (x + s).max(0.0)).collect();
        let l = oracle_constants(&p).lipschitz.unwrap();
        let dg = norm(&sub(&dual_gradient(&p, &a), &dual_gradient(&p, &b)));
        prop_assert!(dg <= l * norm(&sub(&a, &b)) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn central_differences_match((p, lambda) in with_prices(quadratic())) {
        let h = 1e-5;
        let UtilitySpec::Quadratic { a, .. } = &p.utilities else { unreachable!() };
        let prices = p.routing().prices(&lambda);
        prop_assume!(lambda.iter().all(|&l| l > h));
        prop_assume!(a.iter().zip(&prices).all(|(ak, pk)| (ak - pk).abs() > 10.0 * h * p.links() as f64));
        let g = dual_gradient(&p, &lambda);
        for j in 0..p.links() {
            let mut up = lambda.clone();
            let mut down = lambda.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (dual_value(&p, &up) - dual_value(&p, &down)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
        }
    }

    #[test]
    fn regularized_gradient_matches_value(
        (p, lambda) in with_prices(quadratic()),
        delta in 1e-3..1.0f64,
    ) {
        let g = regularized_gradient(&p, &lambda, delta);
        let plain = dual_gradient(&p, &lambda);
        for j in 0..p.links() {
            prop_assert!((g[j] - plain[j] - delta * lambda[j]).abs() <= 1e-12 * (1.0 + g[j].abs()));
        }
        let extra = regularized_value(&p, &lambda, delta) - dual_value(&p, &lambda);
        prop_assert!((extra - 0.5 * delta * lambda.iter().map(|l| l * l).sum::<f64>()).abs() <= 1e-9 * (1.0 + extra));
    }

    #[test]
    fn responses_are_nonnegative((p, lambda) in with_prices(any_family())) {
        prop_assert!(primal_response(&p, &lambda).iter().all(|&x| x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iterates_stay_in_the_orthant(p in any_family(), seed in any::<u64>()) {
        let cfg = SolverConfig { max_iter: 200, seed, radius: 50.0, record_every: 1, ..Default::default() };
        for method in Method::ALL {
            let quad_only = matches!(method, Method::Fgm | Method::Rgem);
            if quad_only && !p.utilities.is_strongly_concave() {
                continue;
            }
            let r = solve(&p, method, &cfg).unwrap();
            prop_assert!(r.history.iter().all(|h| h.lambda.iter().all(|&l| l >= 0.0)), "{}", method);
            prop_assert!(r.dual.iter().all(|&l| l >= 0.0));
            prop_assert!(r.primal.iter().all(|&x| x >= 0.0));
            prop_assert!(r.history.windows(2).all(|w| w[0].iter < w[1].iter));
        }
    }

    #[test]
    fn reruns_are_bit_identical(p in any_family(), seed in any::<u64>()) {
        let cfg = SolverConfig { max_iter: 150, seed, radius: 20.0, record_every: 7, ..Default::default() };
        for method in Method::ALL {
            if matches!(method, Method::Fgm | Method::Rgem) && !p.utilities.is_strongly_concave() {
                continue;
            }
            let a = solve(&p, method, &cfg).unwrap();
            let b = solve(&p, method, &cfg).unwrap();
            prop_assert!(a.same_trajectory(&b));
            prop_assert_eq!(a.history_csv(false), b.history_csv(false));
        }
    }

    #[test]
    fn fgm_iterates_stay_near_the_optimum(p in quadratic()) {
        let star = kkt_solve(&p).unwrap();
        let lambda_star = &star.multipliers;
        let radius = norm(lambda_star).max(1e-3);
        let cfg = SolverConfig { max_iter: 300, radius, eps: 1e-2, ..Default::default() };
        let r = solve(&p, Method::Fgm, &cfg).unwrap();
        for h in &r.history {
            prop_assert!(norm(&sub(&h.lambda, lambda_star)) <= norm(lambda_star) * (1.0 + 1e-9) + 1e-9);
        }
    }

    #[test]
    fn ellipsoid_keeps_the_optimum(p in quadratic().prop_filter("m > 1", |p| p.links() > 1)) {
        let star = kkt_solve(&p).unwrap();
        let radius = norm(&star.multipliers).max(1e-3);
        let cfg = SolverConfig { max_iter: 200, radius, eps: 1e-3, ..Default::default() };
        let (_, trace) = solve_ellipsoid(&p, &cfg).unwrap();
        let target = nalgebra::DVector::from_column_slice(&star.multipliers);
        for s in &trace.steps {
            let Some(inv) = s.shape.clone().try_inverse() else { break };
            let u = inv * (&target - nalgebra::DVector::from_column_slice(&s.center));
            if !u.iter().all(|v| v.is_finite()) {
                break;
            }
            prop_assert!(u.norm() <= 1.0 + 1e-6);
        }
        if let Ok(xi) = build_certificate(&trace) {
            prop_assert!((xi.total() - 1.0).abs() <= 1e-12);
            prop_assert!(xi.weights.values().all(|&w| w >= 0.0));
            prop_assert!(xi.weights.keys().all(|&t| trace.steps[t].in_domain));
        }
    }

    #[test]
    fn distributed_runs_match(p in quadratic(), seed in any::<u64>()) {
        let cfg = SolverConfig { max_iter: 80, seed, radius: 25.0, ..Default::default() };
        for method in DistributedMethod::ALL {
            let central = solve(&p, method.centralized(), &cfg).unwrap();
            let (dist, _) = run_distributed(method, &p, &cfg).unwrap();
            prop_assert_eq!(compare_traces(&central, &dist).unwrap(), 0.0);
        }
    }
}
