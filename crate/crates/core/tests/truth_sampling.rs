use obfs_core::stats::compute_stats;
use obfs_core::truth::{
    builtin_scenarios, derive_independent_unambiguous_set, derive_unambiguous_partition, scenario,
    GroundTruthModel, DEFAULT_TOL,
};
use obfs_core::{FeatureSet, SamplingScheme, Scope};

#[test]
fn builtin_fixtures_derive_their_partitions() {
    for sc in builtin_scenarios() {
        let tp = derive_unambiguous_partition(&sc.model, DEFAULT_TOL);
        assert_eq!(tp.partition, sc.expected, "fixture {}", sc.key);
        assert_eq!(tp.good_set, sc.expected.good_union());
    }
    let d = scenario("correlated-bad-pair").unwrap();
    assert_eq!(d.key, 'd');
    assert_eq!(
        derive_independent_unambiguous_set(&d.model, DEFAULT_TOL),
        FeatureSet::new([2])
    );
    let b = scenario("b").unwrap();
    // feature 1 alone has equal marginals; only the joint view makes it good
    assert_eq!(
        derive_independent_unambiguous_set(&b.model, DEFAULT_TOL),
        FeatureSet::new([0])
    );
}

#[test]
fn prefixes_are_consistent() {
    let sc = scenario("e").unwrap();
    let big = sc.model.sample(5000, 17, SamplingScheme::Random);
    let small = sc.model.sample(100, 17, SamplingScheme::Random);
    assert_eq!(small, big.prefix(100));
    assert_ne!(sc.model.sample(100, 18, SamplingScheme::Random), small);
}

#[test]
fn separate_sampling_fixes_class_counts() {
    let sc = scenario("a").unwrap();
    let s = sc.model.sample(101, 2, SamplingScheme::Separate(0.3));
    assert_eq!(s.n_class(0), 30);
    assert_eq!(s.n_class(1), 71);
}

#[test]
fn sample_moments_approach_the_model() {
    let sc = scenario("c").unwrap();
    let n = 100_000;
    let s = sc.model.sample(n, 8, SamplingScheme::Random);
    let rho = s.n_class(0) as f64 / n as f64;
    // |ρ - 0.5| is about 0.0016 at one standard error
    assert!((rho - 0.5).abs() < 0.01);
    let st = compute_stats(&s, &FeatureSet::range(3)).unwrap();
    for (y, scope) in [(0u8, Scope::Class0), (1, Scope::Class1)] {
        let g = st.group(scope);
        let mean_err = (g.mean.as_ref().unwrap() - sc.model.mean(y)).amax();
        let cov_err = (g.cov.as_ref().unwrap() - sc.model.cov(y)).amax();
        assert!(
            mean_err < 0.03 && cov_err < 0.06,
            "class {y}: {mean_err} {cov_err}"
        );
    }
}

#[test]
fn scenario_files_round_trip() {
    for sc in builtin_scenarios() {
        let text = toml::to_string(&sc.model.to_spec()).unwrap();
        let back = GroundTruthModel::from_toml_str(&text).unwrap();
        assert_eq!(back, sc.model);
    }
    let src = r#"
features = 2
[class0]
mean = [1, 0]
diagonal = [1, 1]
off_diagonal = [[0, 1, 0.5]]
[class1]
mean = [0, 0]
covariance = [[1.0, 0.5], [0.5, 1.0]]
"#;
    let m = GroundTruthModel::from_toml_str(src).unwrap();
    assert_eq!(
        derive_unambiguous_partition(&m, DEFAULT_TOL)
            .partition
            .to_string(),
        "G:{0,1};"
    );
    let bad = src.replace("0.5]]\n[class1]", "1.5]]\n[class1]");
    assert!(GroundTruthModel::from_toml_str(&bad).is_err());
    assert!(GroundTruthModel::from_toml_str(
        &src.replace("features = 2", "features = 2\ncolour = 1")
    )
    .is_err());
}

#[test]
fn tolerance_controls_near_null_features() {
    let src = r#"
features = 2
[class0]
mean = [1e-9, 1]
diagonal = [1, 1]
[class1]
mean = [0, 0]
diagonal = [1, 1]
"#;
    let m = GroundTruthModel::from_toml_str(src).unwrap();
    assert_eq!(
        derive_unambiguous_partition(&m, 1e-12).good_set,
        FeatureSet::new([0, 1])
    );
    assert_eq!(
        derive_unambiguous_partition(&m, 1e-6).good_set,
        FeatureSet::new([1])
    );
}
