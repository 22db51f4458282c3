use featboot_core::SeededRng;
use featboot_sim::{matern_covariance, GaussianFieldSampler, MaternParams};

fn distances() -> impl Iterator<Item = f64> {
    (0..1000).map(|i| i as f64 * 5e-3)
}

#[test]
fn half_order_matches_exponential() {
    for alpha in [0.05, 0.3, 2.0] {
        let p = MaternParams::new(0.5, alpha, 1.7).unwrap();
        for d in distances() {
            let expected = 1.7 * (-d / alpha).exp();
            let got = matern_covariance(d, &p);
            assert!((got - expected).abs() < 1e-10, "d={d} alpha={alpha}: {got} vs {expected}");
        }
    }
}

#[test]
fn three_halves_order_matches_closed_form() {
    for alpha in [0.05, 0.3, 2.0] {
        let p = MaternParams::new(1.5, alpha, 0.8).unwrap();
        let s3 = 3f64.sqrt();
        for d in distances() {
            let expected = 0.8 * (1.0 + s3 * d / alpha) * (-s3 * d / alpha).exp();
            let got = matern_covariance(d, &p);
            assert!((got - expected).abs() < 1e-10, "d={d} alpha={alpha}: {got} vs {expected}");
        }
    }
}

#[test]
fn field_moments_match_covariance() {
    let grid = 12;
    let p = MaternParams::new(1.5, 0.3, 2.0).unwrap();
    let sampler = GaussianFieldSampler::new(grid, &p).unwrap();
    let mut rng = SeededRng::new(17, 0);
    let draws = 1000;
    let (pt, nb) = ((6, 6), (6, 7));
    let (mut s_a, mut s_b, mut s_aa, mut s_bb, mut s_ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let f = sampler.sample(&mut rng);
        let (a, b) = (f[pt], f[nb]);
        s_a += a;
        s_b += b;
        s_aa += a * a;
        s_bb += b * b;
        s_ab += a * b;
    }
    let m = draws as f64;
    let var_a = (s_aa - s_a * s_a / m) / (m - 1.0);
    let var_b = (s_bb - s_b * s_b / m) / (m - 1.0);
    let cov = (s_ab - s_a * s_b / m) / (m - 1.0);
    assert!((var_a / p.sigma2 - 1.0).abs() < 0.10, "variance {var_a}");
    let corr = cov / (var_a * var_b).sqrt();
    let expected = matern_covariance(1.0 / grid as f64, &p) / p.sigma2;
    assert!((corr - expected).abs() < 0.05, "lag-1 correlation {corr} vs {expected}");
}

#[test]
fn field_draws_are_reproducible() {
    let p = MaternParams::new(0.7, 0.2, 1.0).unwrap();
    let sampler = GaussianFieldSampler::new(10, &p).unwrap();
    let a = sampler.sample(&mut SeededRng::new(3, 4));
    let b = sampler.sample(&mut SeededRng::new(3, 4));
    assert_eq!(a, b);
    assert_ne!(a, sampler.sample(&mut SeededRng::new(3, 5)));
}
