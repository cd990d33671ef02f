use nalgebra::DMatrix;
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use riskagg::cvar_opt::discrete_cvar;
use riskagg::distributions::{
    fit_from_returns, spherical_cvar, spherical_quantile, EllipticalDistribution, Family, ReturnsTable, ScenarioSet,
};

fn oracle_cdf(family: Family, x: f64) -> f64 {
    match family {
        Family::Normal => Normal::new(0.0, 1.0).unwrap().cdf(x),
        Family::StudentT { nu } => StudentsT::new(0.0, 1.0, nu).unwrap().cdf(x),
    }
}

fn oracle_pdf(family: Family, x: f64) -> f64 {
    match family {
        Family::Normal => Normal::new(0.0, 1.0).unwrap().pdf(x),
        Family::StudentT { nu } => StudentsT::new(0.0, 1.0, nu).unwrap().pdf(x),
    }
}

fn bisect_quantile(family: Family, beta: f64) -> f64 {
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if oracle_cdf(family, mid) < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-13, 50)
}

/// `int_beta^1 F^{-1}(u) du / (1 - beta)` written as `int_q^inf x f(x) dx`,
/// mapped to `[0, 1)` with `x = q + t / (1 - t)`.
fn quadrature_cvar(family: Family, beta: f64) -> f64 {
    let q = bisect_quantile(family, beta);
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = q + t / (1.0 - t);
        x * oracle_pdf(family, x) / ((1.0 - t) * (1.0 - t))
    };
    integrate(&g, 0.0, 1.0) / (1.0 - beta)
}

const FAMILIES: [Family; 2] = [Family::Normal, Family::StudentT { nu: 4.0 }];

#[test]
fn quantiles_match_bisection_oracle() {
    for fam in FAMILIES {
        for beta in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let ours = spherical_quantile(fam, beta).unwrap();
            let oracle = bisect_quantile(fam, beta);
            assert!((ours - oracle).abs() < 1e-6, "{fam:?} {beta}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn cvar_matches_quadrature_oracle() {
    for fam in FAMILIES {
        for beta in [0.9, 0.95, 0.99] {
            let ours = spherical_cvar(fam, beta).unwrap();
            let oracle = quadrature_cvar(fam, beta);
            assert!((ours - oracle).abs() < 1e-6, "{fam:?} {beta}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn tail_function_shape() {
    for fam in FAMILIES {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..100 {
            let beta = k as f64 / 100.0;
            let q = spherical_quantile(fam, beta).unwrap();
            let c = spherical_cvar(fam, beta).unwrap();
            assert!(c >= q);
            assert!(c >= prev);
            prev = c;
        }
    }
    for k in 90..100 {
        let beta = k as f64 / 100.0;
        assert!(spherical_cvar(FAMILIES[1], beta).unwrap() > spherical_cvar(Family::Normal, beta).unwrap());
    }
}

#[test]
fn normal_sample_mean_envelope() {
    let dist = EllipticalDistribution::standard(Family::Normal, 3).unwrap();
    let n = 100_000;
    let set = dist.sample(n, 5).unwrap();
    for m in set.mean() {
        assert!(m.abs() < 4.0 / (n as f64).sqrt());
    }
}

#[test]
fn t_sample_covariance() {
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.8]);
    let dist = EllipticalDistribution::new(Family::StudentT { nu: 4.0 }, vec![0.0; 2], p.clone()).unwrap();
    let set = dist.sample(100_000, 6).unwrap();
    let target = p.transpose() * &p * 2.0;
    let m = set.mean();
    for i in 0..2 {
        for j in 0..2 {
            let c: f64 = set.points().map(|y| (y[i] - m[i]) * (y[j] - m[j])).sum::<f64>() / set.len() as f64;
            assert!((c - target[(i, j)]).abs() <= 0.1 * target[(i, j)].abs(), "{i}{j}: {c} vs {}", target[(i, j)]);
        }
    }
}

#[test]
fn sampled_cvar_matches_closed_form() {
    let p = DMatrix::from_row_slice(2, 2, &[0.05, 0.02, 0.0, 0.04]);
    for fam in FAMILIES {
        let dist = EllipticalDistribution::new(fam, vec![0.01, 0.0], p.clone()).unwrap();
        let set = dist.sample(200_000, 7).unwrap();
        let x = [1.0, 0.0];
        let exact = dist.loss_stats(&x, 0.95).unwrap().cvar;
        let empirical = discrete_cvar(&set, &x, 0.95);
        assert!((empirical - exact).abs() <= 0.02 * exact.abs(), "{fam:?}: {empirical} vs {exact}");
    }
}

#[test]
fn loss_stats_scale_with_portfolio() {
    let p = DMatrix::from_row_slice(2, 2, &[0.05, 0.02, 0.0, 0.04]);
    let dist = EllipticalDistribution::new(Family::Normal, vec![0.01, 0.02], p).unwrap();
    let a = dist.loss_stats(&[0.3, 0.7], 0.95).unwrap();
    let b = dist.loss_stats(&[0.6, 1.4], 0.95).unwrap();
    assert!(((b.var + b.mean_return) - 2.0 * (a.var + a.mean_return)).abs() < 1e-14);
    assert!(((b.cvar + b.mean_return) - 2.0 * (a.cvar + a.mean_return)).abs() < 1e-14);
}

#[test]
fn fit_recovers_normal_parameters() {
    let p0 = DMatrix::from_row_slice(3, 3, &[0.05, 0.01, 0.02, 0.0, 0.04, 0.01, 0.0, 0.0, 0.06]);
    let mu0 = vec![0.01, 0.02, 0.015];
    let truth = EllipticalDistribution::new(Family::Normal, mu0.clone(), p0).unwrap();
    let set = truth.sample(100_000, 8).unwrap();
    let table = ReturnsTable::new(vec!["a".into(), "b".into(), "c".into()], set.points().map(|y| y.to_vec()).collect()).unwrap();
    let fit = fit_from_returns(&table, Family::Normal).unwrap();
    let dmu: f64 = fit.mu().iter().zip(&mu0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let nmu: f64 = mu0.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(dmu <= 0.02 * nmu);
    let dcov = (fit.covariance() - truth.covariance()).norm();
    assert!(dcov <= 0.02 * truth.covariance().norm());
    // t fit keeps the sample covariance
    let fit_t = fit_from_returns(&table, Family::StudentT { nu: 4.0 }).unwrap();
    assert!((fit_t.covariance() - fit.covariance()).norm() < 1e-12);
    // too few rows
    let short = ReturnsTable::new(table.tickers.clone(), table.rows[..4].to_vec()).unwrap();
    assert!(fit_from_returns(&short, Family::Normal).is_err());
}

#[test]
fn scenario_file_round_trip() {
    let dist = EllipticalDistribution::standard(Family::StudentT { nu: 4.0 }, 3).unwrap();
    let set = dist.sample(500, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    set.save(&path).unwrap();
    let back = ScenarioSet::load(&path).unwrap();
    assert_eq!(back.raw_points(), set.raw_points());
    assert_eq!(back.probs(), set.probs());
    assert_eq!(back.seed, Some(9));
    let bytes = std::fs::read(&path).unwrap();
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
