use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskagg::cones::{conic_hull, Cone, FeasibleRegion, LinearRow};

/// Minimum-distance projection by enumerating candidate active sets.
struct Enumerator {
    /// Candidate maps x0 -> point, with a feasibility check on the result.
    maps: Vec<DMatrix<f64>>,
    facets: Option<DMatrix<f64>>,
    generators: Option<(DMatrix<f64>, Vec<DMatrix<f64>>, Vec<Vec<usize>>)>,
}

fn subsets(k: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for mask in 1u32..(1 << k) {
        if (mask.count_ones() as usize) <= max {
            out.push((0..k).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

impl Enumerator {
    fn polyhedral(b: &[Vec<f64>], d: usize) -> Self {
        let bm = DMatrix::from_fn(b.len(), d, |i, j| b[i][j]);
        let mut maps = vec![DMatrix::zeros(d, d)];
        for s in subsets(b.len(), d) {
            let bs = DMatrix::from_fn(s.len(), d, |i, j| b[s[i]][j]);
            if s.is_empty() {
                maps.push(DMatrix::identity(d, d));
                continue;
            }
            let gram_pinv = (&bs * bs.transpose()).pseudo_inverse(1e-12).unwrap();
            maps.push(DMatrix::identity(d, d) - bs.transpose() * gram_pinv * &bs);
        }
        Enumerator { maps, facets: Some(bm), generators: None }
    }

    fn generator(g: &[Vec<f64>], d: usize) -> Self {
        let gm = DMatrix::from_fn(g.len(), d, |i, j| g[i][j]);
        let mut pinvs = Vec::new();
        let mut sets = Vec::new();
        for s in subsets(g.len(), d) {
            if s.is_empty() {
                continue;
            }
            let gs = DMatrix::from_fn(d, s.len(), |i, j| g[s[j]][i]);
            pinvs.push(gs.pseudo_inverse(1e-12).unwrap());
            sets.push(s);
        }
        Enumerator { maps: vec![], facets: None, generators: Some((gm, pinvs, sets)) }
    }

    fn project(&self, x0: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x0);
        let mut best = DVector::zeros(x0.len());
        let mut best_dist = x.norm();
        if let Some(b) = &self.facets {
            for m in &self.maps {
                let p = m * &x;
                if (b * &p).iter().all(|v| *v >= -1e-10) {
                    let dist = (&p - &x).norm();
                    if dist < best_dist {
                        best_dist = dist;
                        best = p;
                    }
                }
            }
        }
        if let Some((gm, pinvs, sets)) = &self.generators {
            for (pinv, s) in pinvs.iter().zip(sets) {
                let lam = pinv * &x;
                if lam.iter().all(|v| *v >= -1e-12) {
                    let mut p = DVector::zeros(x0.len());
                    for (k, &i) in s.iter().enumerate() {
                        p += gm.row(i).transpose() * lam[k].max(0.0);
                    }
                    let dist = (&p - &x).norm();
                    if dist < best_dist {
                        best_dist = dist;
                        best = p;
                    }
                }
            }
        }
        best.iter().copied().collect()
    }
}

fn random_rows(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn polyhedral_projection_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let d = rng.random_range(2..=6);
        let k = rng.random_range(1..=8);
        let b = random_rows(&mut rng, k, d);
        let cone = Cone::from_facets(d, b.clone()).unwrap();
        let oracle = Enumerator::polyhedral(&b, d);
        for _ in 0..30 {
            let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = cone.project_polyhedral(&x0).unwrap();
            let q = oracle.project(&x0);
            assert!(max_diff(&p, &q) < 1e-8, "{p:?} vs {q:?}");
        }
    }
}

#[test]
fn generator_projection_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let d = rng.random_range(2..=6);
        let k = rng.random_range(1..=8);
        let g = random_rows(&mut rng, k, d);
        let cone = Cone::from_generators(d, g.clone()).unwrap();
        let oracle = Enumerator::generator(cone.generators().unwrap(), d);
        for _ in 0..30 {
            let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = cone.project_generators(&x0).unwrap();
            let q = oracle.project(&x0);
            assert!(max_diff(&p, &q) < 1e-8, "{p:?} vs {q:?}");
        }
    }
}

#[test]
fn members_project_to_themselves() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let d = rng.random_range(2..=5);
        let k = rng.random_range(1..=6);
        let g = random_rows(&mut rng, k, d);
        let cone = Cone::from_generators(d, g).unwrap();
        let lam: Vec<f64> = (0..cone.generators().unwrap().len()).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut x = vec![0.0; d];
        for (l, row) in lam.iter().zip(cone.generators().unwrap()) {
            for j in 0..d {
                x[j] += l * row[j];
            }
        }
        assert!(max_diff(&cone.project(&x).unwrap(), &x) < 1e-10);
        for row in cone.generators().unwrap() {
            assert!(cone.contains(row, 1e-9));
        }
    }
}

#[test]
fn both_forms_agree_on_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let d = rng.random_range(2..=5);
        let p = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rng.random_range(-0.4..0.4) });
        let image = Cone::orthant(d).linear_image(&p).unwrap();
        let by_facets = Cone::from_facets(d, image.facets().unwrap().to_vec()).unwrap();
        let by_gens = Cone::from_generators(d, image.generators().unwrap().to_vec()).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let slack = by_facets.facets().unwrap().iter().map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()).fold(f64::INFINITY, f64::min);
            if slack.abs() < 1e-6 {
                continue;
            }
            assert_eq!(by_facets.contains(&x, 1e-9), by_gens.contains(&x, 1e-9));
        }
    }
}

#[test]
fn non_finite_points_are_rejected() {
    let cone = Cone::orthant(2);
    assert!(cone.project(&[f64::NAN, 1.0]).is_err());
    assert!(cone.project(&[1.0]).is_err());
}

fn cone_strategy() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (2usize..=5).prop_flat_map(|d| {
        (Just(d), prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..=7))
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent((d, rows) in cone_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        for cone in [Cone::from_facets(d, rows.clone()).unwrap(), Cone::from_generators(d, rows.clone()).unwrap()] {
            let p = cone.project(&x).unwrap();
            let pp = cone.project(&p).unwrap();
            prop_assert!(max_diff(&p, &pp) < 1e-10);
        }
    }

    #[test]
    fn projection_is_non_expansive((d, rows) in cone_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let cone = Cone::from_generators(d, rows).unwrap();
        let px = cone.project(&x).unwrap();
        let py = cone.project(&y).unwrap();
        let dp: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dp <= dx + 1e-10);
    }

    #[test]
    fn moreau_decomposition((d, rows) in cone_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let cone = Cone::from_facets(d, rows).unwrap();
        let p = cone.project(&x).unwrap();
        let q = cone.polar().project(&x).unwrap();
        for j in 0..d {
            prop_assert!((p[j] + q[j] - x[j]).abs() < 1e-8);
        }
        let inner: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        prop_assert!(inner.abs() < 1e-8);
        prop_assert!(cone.contains(&p, 1e-8));
    }

    #[test]
    fn projection_is_positively_homogeneous((d, rows) in cone_strategy(), x in point(6), t in 0.01f64..50.0) {
        let x = &x[..d];
        let cone = Cone::from_facets(d, rows).unwrap();
        let p = cone.project(x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * t).collect();
        let ps = cone.project(&scaled).unwrap();
        for j in 0..d {
            prop_assert!((ps[j] - t * p[j]).abs() < 1e-8 * (1.0 + t));
        }
    }

    #[test]
    fn conic_hull_matches_region(d in 2usize..=5, quota_slack in 0.05f64..0.6, extra in -0.5f64..0.5, seed in any::<u64>()) {
        let quota = 1.0 / d as f64 + quota_slack;
        let mut rows = Vec::new();
        // one random linear row that the equal-weight portfolio satisfies
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at_center: f64 = coeffs.iter().sum::<f64>() / d as f64;
        rows.push(LinearRow { coeffs, rhs: at_center + extra.abs() });
        let region = FeasibleRegion::new(1.0, rows, vec![0.0; d], vec![quota.min(1.0); d]).unwrap();
        let cone = conic_hull(&region).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = x.iter().sum();
            if cone.contains(&x, 0.0) && s > 0.0 {
                let scaled: Vec<f64> = x.iter().map(|v| v / s).collect();
                prop_assert!(region.contains(&scaled, 1e-9));
            }
            let feasible: Vec<f64> = x.iter().map(|v| v / s).collect();
            if region.contains(&feasible, 0.0) {
                prop_assert!(cone.contains(&feasible, 1e-12));
            }
        }
    }
}

#[test]
fn pinned_weights_project_like_enumeration() {
    // bounds that fix some weights to zero give opposite facet pairs
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let base = FeasibleRegion::simplex(5, 1.0).unwrap();
    let region = base.with_bounds(&[0.2, 0.0, 0.0, 0.05, 0.0], &[0.7, 0.0, 0.0, 0.6, 0.3]).unwrap();
    let hull = conic_hull(&region).unwrap();
    for _ in 0..5 {
        let p = DMatrix::from_fn(5, 5, |i, j| match (i, j) {
            _ if i == j => rng.random_range(0.02..0.08),
            _ if j > i => rng.random_range(-0.02..0.04),
            _ => 0.0,
        });
        let image = hull.linear_image(&p).unwrap();
        let facets = image.facets().unwrap().to_vec();
        let oracle = Enumerator::polyhedral(&facets, 5);
        let projector = image.projector();
        for _ in 0..40 {
            let x0: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = projector.project(&x0).unwrap();
            let want = oracle.project(&x0);
            assert!(max_diff(&got, &want) < 1e-7, "{got:?} vs {want:?}");
        }
    }
}
