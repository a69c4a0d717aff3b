use obfs_core::lab::*;
use obfs_core::truth::{derive_unambiguous_partition, scenario, DEFAULT_TOL};
use obfs_core::{FeatureSet, HyperparamPolicy, PartitionCode, PartitionPrior};

fn small_sweep(key: &str, grid: Vec<usize>, reps: usize) -> SweepResult {
    let sc = scenario(key).unwrap();
    let policy = HyperparamPolicy::new(sc.model.n_features());
    run_sweep(
        &sc.model,
        &policy,
        &PartitionPrior::Uniform,
        &SweepConfig::new(grid, reps, 5),
    )
    .unwrap()
}

#[test]
fn fan_first_dims() {
    for d in 1..=4 {
        let r = fan_inequality_check(300, d, 100 + d as u64).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.trials, 300);
    }
    assert!(fan_inequality_check(5, 0, 1).is_err());
}

#[test]
fn sweep_points_are_normalized_and_consistent() {
    let r = small_sweep("b", vec![0, 20, 80, 320], 3);
    assert_eq!(r.points.len(), 12);
    assert_eq!(r.seeds, vec![5, 6, 7]);
    assert_eq!(r.good_set, vec![0, 1]);
    for p in &r.points {
        assert!((p.prob_sum - 1.0).abs() < 1e-9, "{}", p.prob_sum);
        assert!(p.prob_good_set >= p.prob_truth - 1e-15);
        for f in 0..3 {
            assert!((p.log_marginals[f].exp() - p.marginals[f]).abs() < 1e-12);
            let c = p.log_complements[f].exp();
            assert!((c + p.marginals[f] - 1.0).abs() < 1e-9);
        }
    }
    // zero data reproduces the uniform prior
    let z = r.path(5)[0];
    assert!((z.prob_truth - 1.0 / 22.0).abs() < 1e-12);
    assert!((z.marginals[0] - 0.5).abs() < 1e-12);
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let r = pool.install(|| small_sweep("e", vec![30, 90, 270], 2));
        let mut out = Vec::new();
        r.write_tidy_csv(&mut out).unwrap();
        out
    };
    let one = csv(1);
    assert_eq!(one, csv(4));
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("seed,n,quantity,value\n"));
}

#[test]
fn classes_follow_the_truth() {
    let sc = scenario("d").unwrap();
    let tp = derive_unambiguous_partition(&sc.model, DEFAULT_TOL);
    let edges = sc.model.correlation_edges(DEFAULT_TOL);
    let class = |lit: &str| {
        let p = lit.parse().unwrap();
        classify_partition(
            PartitionCode::from_partition(&p, 3).unwrap(),
            3,
            &tp,
            &edges,
        )
    };
    assert_eq!(class("G:{2};B:{0,1}"), PartitionClass::Truth);
    // feature 2 labelled bad
    assert_eq!(class(";B:{0,1,2}"), PartitionClass::Exponential);
    // correlated pair split
    assert_eq!(class("G:{2};B:{0}|B:{1}"), PartitionClass::Exponential);
    // a redundant feature joins the good block, splitting its pair
    assert_eq!(class("G:{1,2};B:{0}"), PartitionClass::Exponential);
    assert_eq!(class("G:{0,1,2};"), PartitionClass::Polynomial);
    assert_eq!(class("G:{2}|G:{0,1};"), PartitionClass::Polynomial);
}

#[test]
fn rates_have_the_expected_signs_on_a_clean_fixture() {
    let grid: Vec<usize> = (0..=16)
        .map(|k| (100.0 * 10f64.powf(k as f64 / 4.0)).round() as usize)
        .collect();
    let r = small_sweep("a", grid, 2);
    for rep in fit_rates(&r, FitOptions::default()) {
        assert_eq!(rep.features.len(), 3);
        assert_eq!(rep.feature_signs_ok(), Some(true), "{rep:?}");
        for c in &rep.classes {
            assert_eq!(c.rate.status, FitStatus::Fitted);
            assert!(c.rate.fit.unwrap().slope < 0.0, "{c:?}");
        }
        // the good feature decays exponentially, far faster than the bad ones
        let good = rep.features[0].rate.fit.unwrap().slope;
        assert!(good < 0.0 && rep.features[0].rate.used.len() >= MIN_FIT_POINTS);
    }
}

#[test]
fn short_grids_cannot_be_fitted() {
    let r = small_sweep("a", vec![10, 20, 40], 1);
    let rep = &fit_rates(&r, FitOptions::default())[0];
    assert_eq!(rep.feature_signs_ok(), None);
    assert!(rep
        .features
        .iter()
        .all(|f| f.rate.status == FitStatus::Insufficient));
}

#[test]
fn saturation_censoring_is_optional() {
    let grid: Vec<usize> = vec![500, 1000, 2000, 4000, 8000, 16000, 32000, 64000];
    let r = small_sweep("a", grid, 1);
    let plain = &fit_rates(&r, FitOptions::default())[0];
    let censored = &fit_rates(
        &r,
        FitOptions {
            censor_saturated: true,
        },
    )[0];
    let sat = plain.features[0]
        .saturation_n
        .expect("good feature saturates by 64000");
    assert!(plain.features[0].rate.censored.is_empty());
    assert!(censored.features[0].rate.censored.iter().all(|&n| n >= sat));
    assert!(!censored.features[0].rate.censored.is_empty());
}

#[test]
fn envelope_report_shape() {
    let sc = scenario("d").unwrap();
    let grid = [16, 64, 256, 1024];
    let rep = moment_envelope_check(
        &sc.model,
        &FeatureSet::new([0, 1]),
        &grid,
        2,
        &HyperparamPolicy::new(3),
    )
    .unwrap();
    assert_eq!(rep.series.len(), 8);
    for s in &rep.series {
        assert_eq!(s.values.len(), grid.len());
        for ((v, z), &n) in s.values.iter().zip(&s.normalized).zip(&grid) {
            assert!(v.is_finite() && *v >= 0.0);
            assert!((z * s.envelope.at(n) - v).abs() <= 1e-12 * v.max(1.0));
        }
    }
    // sample means settle well inside a few envelope widths
    assert!(rep.series[0].normalized.iter().all(|&z| z < 5.0));
    assert!(moment_envelope_check(
        &sc.model,
        &FeatureSet::new([0]),
        &[64, 32],
        1,
        &HyperparamPolicy::new(3)
    )
    .is_err());
}
