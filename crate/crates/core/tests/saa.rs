use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use riskagg::cones::{conic_hull, FeasibleRegion};
use riskagg::cvar_opt::PortfolioProblem;
use riskagg::distributions::{EllipticalDistribution, Family};
use riskagg::saa::{estimate_gap, ghost_bounds, run_saa, SaaConfig, SaaMode};

#[test]
fn gap_interval_coverage() {
    let (gamma, sigma, m) = (0.3, 0.1, 10);
    let noise = Normal::new(gamma, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let trials = 500;
    let mut covered = 0;
    for _ in 0..trials {
        let nu: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = nu.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let est = estimate_gap(&[g], &nu, 0.95).unwrap()[0];
        // the gap interval is one-sided: [0, raw + halfwidth]
        covered += usize::from(gamma <= est.raw + est.ci_halfwidth);
    }
    assert!(covered as f64 >= 0.85 * trials as f64, "{covered}/{trials}");
}

#[test]
fn ghost_box_coverage() {
    let x_star = [0.3, 0.3, 0.4];
    let (m, alpha, trials) = (10usize, 0.99, 200);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        let sols: Vec<Vec<f64>> =
            (0..m).map(|_| x_star.iter().map(|v| v + noise.sample(&mut rng)).collect()).collect();
        let (l, u) = ghost_bounds(&sols, alpha, &[0.0; 3], &[1.0; 3], None).unwrap();
        for i in 0..3 {
            assert!(l[i] <= u[i]);
            hits[i] += usize::from(l[i] <= x_star[i] && x_star[i] <= u[i]);
        }
    }
    // with a sample standard deviation the interval is a t-interval
    let z = 2.326_347_874_040_841;
    let t = StudentsT::new(0.0, 1.0, (m - 1) as f64).unwrap();
    let expected = 2.0 * t.cdf(z) - 1.0;
    let sd = (expected * (1.0 - expected) / trials as f64).sqrt();
    for h in hits {
        assert!(h as f64 / trials as f64 >= expected - 3.0 * sd, "{h} vs {expected}");
    }
}

fn toy(d: usize) -> (PortfolioProblem, EllipticalDistribution) {
    let p = DMatrix::from_fn(d, d, |i, j| if i == j { 0.05 + 0.01 * i as f64 } else if j > i { 0.01 } else { 0.0 });
    let mu: Vec<f64> = (0..d).map(|i| 0.004 + 0.002 * i as f64).collect();
    let dist = EllipticalDistribution::new(Family::Normal, mu.clone(), p).unwrap();
    let problem = PortfolioProblem::min_cvar(FeasibleRegion::simplex(d, 1.0).unwrap(), mu, 0.95, None).unwrap();
    (problem, dist)
}

fn small_config(mode: SaaMode) -> SaaConfig {
    SaaConfig {
        n0: 60,
        dn: 30,
        replications: 6,
        validation_size: 4000,
        nonrisk_sample: 4000,
        max_iterations: 4,
        mode,
        ..SaaConfig::default()
    }
}

#[test]
fn basic_sampling_stops_after_one_iteration() {
    let (problem, dist) = toy(2);
    let config = SaaConfig { gap_tol: 1.0, ci_tol: 1.0, ..small_config(SaaMode::BasicSampling) };
    let out = run_saa(&problem, &dist, None, &config, 52).unwrap();
    assert_eq!(out.history.len(), 1);
    assert!(out.history[0].best_gap <= 1.0);
    assert!(out.history[0].nonrisk.is_none());
    assert_eq!(out.timings.len(), 1);
}

#[test]
fn aggregation_needs_surrogate() {
    let (problem, dist) = toy(2);
    assert!(run_saa(&problem, &dist, None, &small_config(SaaMode::Aggregation), 1).is_err());
    let bad = SaaConfig { replications: 1, ..SaaConfig::default() };
    assert!(run_saa(&problem, &dist, Some(&dist), &bad, 1).is_err());
}

#[test]
fn ghost_run_invariants() {
    let (problem, dist) = toy(3);
    let config = small_config(SaaMode::AggregationGhost);
    let out = run_saa(&problem, &dist, Some(&dist), &config, 53).unwrap();
    let again = run_saa(&problem, &dist, Some(&dist), &config, 53).unwrap();
    assert_eq!(out.history_jsonl(), again.history_jsonl());
    assert_eq!(out.best, again.best);

    let h = &out.history;
    assert_eq!(h.len(), config.max_iterations);
    for (t, s) in h.iter().enumerate() {
        assert_eq!(s.sample_size, config.n0 + t * config.dn);
        for i in 0..3 {
            assert!(s.lower[i] <= s.upper[i]);
        }
        for r in &s.replications {
            assert!(problem.region.contains(&r.x, 1e-7), "candidate leaves the original region");
            assert_eq!(r.scenarios, s.sample_size);
        }
    }

    // non-risk probability rises as the box tightens, up to sampling noise
    for w in h.windows(2) {
        let (a, b) = (w[0].nonrisk.unwrap(), w[1].nonrisk.unwrap());
        let band = 2.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(b.prob >= a.prob - band, "{} then {}", a.prob, b.prob);
    }

    // conic hulls are nested
    let base = FeasibleRegion::simplex(3, 1.0).unwrap();
    let cones: Vec<_> = h
        .iter()
        .map(|s| conic_hull(&base.with_bounds(&s.lower, &s.upper).unwrap()).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for w in cones.windows(2) {
        for _ in 0..200 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let inner = w[1].project(&v).unwrap();
            assert!(w[0].contains(&inner, 1e-7));
        }
    }

    // screening picks the best out-of-sample CVaR
    for s in &out.scores {
        assert!(out.best_score.validation.cvar <= s.validation.cvar);
    }
}

#[test]
fn cardinality_candidates_respect_limit() {
    let (problem, dist) = toy(5);
    let problem = problem.with_cardinality(2, 1.0).unwrap();
    let config = SaaConfig { max_iterations: 3, ..small_config(SaaMode::AggregationGhost) };
    let out = run_saa(&problem, &dist, Some(&dist), &config, 55).unwrap();
    for s in &out.history {
        for r in &s.replications {
            assert!(r.x.iter().filter(|v| **v > 1e-9).count() <= 2);
            assert!(problem.region.contains(&r.x, 1e-7));
        }
    }
    assert!(out.best.x.iter().filter(|v| **v > 1e-9).count() <= 2);
}
