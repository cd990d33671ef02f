use nalgebra::DMatrix;

use riskagg::cones::{Cone, FeasibleRegion};
use riskagg::cvar_opt::discrete_tail;
use riskagg::distributions::{EllipticalDistribution, Family, Provenance};
use riskagg::risk_region::RiskRegion;
use riskagg::scenario_gen::{aggregation_reduction, aggregation_sampling, expected_effective_sample_size, raw_stream};

fn setup() -> (EllipticalDistribution, RiskRegion) {
    let p = DMatrix::from_row_slice(3, 3, &[0.05, 0.01, 0.0, 0.0, 0.06, 0.015, 0.0, 0.0, 0.07]);
    let dist = EllipticalDistribution::new(Family::Normal, vec![0.006, 0.008, 0.01], p).unwrap();
    let region = RiskRegion::from_region(dist.clone(), &FeasibleRegion::simplex(3, 1.0).unwrap(), 0.95).unwrap();
    (dist, region)
}

#[test]
fn effective_size_follows_negative_binomial_mean() {
    let (dist, region) = setup();
    let q = region.estimate_nonrisk_prob(&dist, 100_000, 40).unwrap();
    let n = 50;
    let sizes: Vec<f64> = (0..200)
        .map(|r| aggregation_sampling(&region, &dist, n, 1000 + r).unwrap().effective_sample_size as f64)
        .collect();
    let m = sizes.iter().sum::<f64>() / 200.0;
    let var = sizes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / 199.0;
    let expect = expected_effective_sample_size(n, q.prob).unwrap();
    // the expectation inherits the error of the estimated q
    let de = n as f64 * q.std_error / (1.0 - q.prob).powi(2);
    let se = (var / 200.0 + de * de).sqrt();
    assert!((m - expect).abs() <= 3.0 * se, "mean {m} expected {expect} se {se}");
}

#[test]
fn aggregated_mean_matches_raw_stream() {
    let (dist, region) = setup();
    for seed in [41, 42, 43] {
        let rep = aggregation_sampling(&region, &dist, 30, seed).unwrap();
        let set = &rep.scenario_set;
        assert_eq!(set.len(), 31);
        assert_eq!(set.provenance, Some(Provenance::Aggregated));
        assert!((set.total_prob() - 1.0).abs() < 1e-12);
        let raw = raw_stream(&dist, seed, rep.effective_sample_size).unwrap();
        for (a, b) in set.mean().iter().zip(raw.mean()) {
            assert!((a - b).abs() < 1e-12);
        }
        // the retained risk points are exactly the risk draws of the stream
        let part = region.classify_batch(&raw, false).unwrap();
        assert_eq!(part.risk.len(), 30);
        for (k, &i) in part.risk.iter().enumerate() {
            assert_eq!(set.point(k), raw.point(i));
        }
        assert_eq!(rep, aggregation_sampling(&region, &dist, 30, seed).unwrap());
    }
}

#[test]
fn reduction_size_is_binomial() {
    let (dist, region) = setup();
    let q = region.estimate_nonrisk_prob(&dist, 100_000, 44).unwrap().prob;
    let n = 5000;
    let set = dist.sample(n, 45).unwrap();
    let red = aggregation_reduction(&region, &set).unwrap();
    let risk = (red.len() - 1) as f64;
    let mean = n as f64 * (1.0 - q);
    let sd = (n as f64 * q * (1.0 - q)).sqrt();
    assert!((risk - mean).abs() <= 3.0 * sd + 1.0, "{risk} vs {mean}");
    let again = aggregation_reduction(&region, &red).unwrap();
    assert_eq!(again.len(), red.len());
}

#[test]
fn reduced_tail_estimates_converge() {
    let (dist, region) = setup();
    let x = [0.5, 0.3, 0.2];
    let exact = dist.loss_stats(&x, 0.95).unwrap().cvar;
    let scale = dist.scale_of(&x);
    for n in [1000usize, 10_000] {
        let rep = aggregation_sampling(&region, &dist, n, 46).unwrap();
        let cvar = discrete_tail(&rep.scenario_set, &x, 0.95).cvar;
        let se = scale / ((rep.effective_sample_size as f64) * 0.05).sqrt();
        assert!((cvar - exact).abs() <= 4.0 * se, "n={n}: {cvar} vs {exact}");
    }
}

#[test]
fn rejects_bad_inputs() {
    let (dist, region) = setup();
    assert!(aggregation_sampling(&region, &dist, 0, 1).is_err());
    assert!(expected_effective_sample_size(10, 1.0).is_err());
    let other = EllipticalDistribution::standard(Family::Normal, 2).unwrap();
    let r2 = RiskRegion::new(other, Cone::orthant(2), 0.95).unwrap();
    assert!(aggregation_sampling(&r2, &dist, 5, 1).is_err());
}
