use featboot_core::linalg::truncated_svd;
use featboot_core::procrustes::{generalized_procrustes, DEFAULT_MAX_CYCLES, DEFAULT_TOL};
use featboot_core::SeededRng;
use featboot_sim::{generate_lowrank, LowRankConfig, SvdExtractor};

#[test]
fn noiseless_singular_values() {
    let cfg = LowRankConfig { samples: 200, dim: 50, noise_var: 0.0, response_sd: 0.0, ..Default::default() };
    let data = generate_lowrank(&cfg, &mut SeededRng::new(1, 0)).unwrap();
    let svd = truncated_svd(&data.x, 4).unwrap();
    assert!((svd.s[0] - 100.0).abs() < 1e-8 && (svd.s[1] - 100.0).abs() < 1e-8);
    assert!(svd.s[2] < 1e-8 && svd.s[3] < 1e-8);
    let y_true = data.truth() * &data.beta;
    assert!((&data.y - y_true).amax() < 1e-12);
}

#[test]
fn observation_noise_sd_within_ten_percent() {
    let cfg = LowRankConfig { samples: 200, dim: 60, ..Default::default() };
    let data = generate_lowrank(&cfg, &mut SeededRng::new(2, 0)).unwrap();
    let resid = &data.x - data.truth() * data.v.transpose();
    let m = resid.len() as f64;
    let mean = resid.mean();
    let sd = (resid.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!((sd / cfg.noise_var.sqrt() - 1.0).abs() < 0.10, "sd {sd}");
}

/// Two extractor calls differ by a column permutation plus independent
/// noise of variance `σ²` per entry; after alignment the GPA objective
/// (sum of squared distances to the mean) is about `n K̂ σ²`.
#[test]
fn extractor_noise_budget() {
    let cfg = LowRankConfig { samples: 300, dim: 50, extractor_rank: 6, ..Default::default() };
    let data = generate_lowrank(&cfg, &mut SeededRng::new(3, 0)).unwrap();
    let ex = SvdExtractor::new(&data.x, cfg.extractor_rank).unwrap();
    let sd = cfg.extractor_noise_sd;
    let budget = 2.0 * (cfg.samples * cfg.extractor_rank) as f64 * sd * sd;
    let trials = 40;
    let mut within = 0;
    for t in 0..trials {
        let a = ex.extract(sd, &mut SeededRng::new(100 + t, 0));
        let b = ex.extract(sd, &mut SeededRng::new(100 + t, 1));
        let center = |m: &featboot_core::Matrix| featboot_core::linalg::column_center(m).unwrap().0;
        let gpa = generalized_procrustes(&[center(&a), center(&b)], DEFAULT_TOL, DEFAULT_MAX_CYCLES).unwrap();
        if gpa.objective() < budget {
            within += 1;
        }
    }
    assert!(within >= trials - 1, "{within}/{trials} within budget");
}

#[test]
fn extractor_is_stream_deterministic() {
    let cfg = LowRankConfig { samples: 100, dim: 30, extractor_rank: 4, ..Default::default() };
    let data = generate_lowrank(&cfg, &mut SeededRng::new(4, 0)).unwrap();
    let ex = SvdExtractor::new(&data.x, 4).unwrap();
    assert_eq!(ex.extract(0.1, &mut SeededRng::new(9, 2)), ex.extract(0.1, &mut SeededRng::new(9, 2)));
}
