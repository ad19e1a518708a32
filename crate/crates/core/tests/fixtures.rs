use std::fs;
use std::path::{Path, PathBuf};

use lptraffic::data::{convert_long, load_dataset, save_dataset, SplitScheme};
use lptraffic::harness::{run_experiment_on, ExperimentConfig, VariantChoice};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn toy2_loads() {
    let ds = load_dataset(&fixture("toy2")).unwrap();
    assert_eq!(ds.node_count(), 2);
    assert_eq!(ds.steps(), 48);
    assert_eq!(ds.channels(), ["speed"]);
    assert_eq!(ds.value(0, 0, 0), 60.0);
    assert_eq!(ds.value(1, 0, 1), 63.66);
    assert_eq!(ds.graph().edge_count(), 1);
}

#[test]
fn toy2_round_trip_is_bit_identical() {
    let src = fixture("toy2");
    let ds = load_dataset(&src).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    for file in ["meta.json", "adjacency.csv", "speed.csv"] {
        let a = fs::read(src.join(file)).unwrap();
        let b = fs::read(dir.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs after round trip");
    }
    assert_eq!(load_dataset(dir.path()).unwrap(), ds);
}

#[test]
fn toy2_knn_smoke() {
    let ds = load_dataset(&fixture("toy2")).unwrap();
    let r = run_experiment_on(&ExperimentConfig::new(VariantChoice::Knn), &ds).unwrap();
    assert!(r.mse.is_finite());
    assert_eq!(r.per_node.len(), 2);
}

#[test]
fn toy2_models_smoke() {
    let ds = load_dataset(&fixture("toy2")).unwrap();
    for variant in [VariantChoice::Local, VariantChoice::Todense] {
        let cfg = ExperimentConfig {
            hidden: 8,
            ..ExperimentConfig::new(variant)
        };
        let r = run_experiment_on(&cfg, &ds).unwrap();
        assert!(r.mse.is_finite(), "{variant:?}");
    }
}

fn lust() -> lptraffic::data::SeriesDataset {
    let dir = fixture("lust_small");
    convert_long(&dir.join("traffic_long.csv"), &dir.join("adjacency.csv"), 0.0, false, 5).unwrap()
}

#[test]
fn lust_long_format_converts_and_imputes() {
    let ds = lust();
    assert_eq!(ds.node_count(), 3);
    assert_eq!(ds.steps(), 72);
    assert_eq!(ds.channels(), ["density", "speed"]);
    // j1 - j2 - j3 path
    assert_eq!(ds.graph().edge_count(), 2);
    let (j2, j3) = (1, 2);
    let speed = ds.channel_index("speed").unwrap();
    let density = ds.channel_index("density").unwrap();
    // (t=10, j2) row is absent: forward-filled from t=9
    assert_eq!(ds.value(j2, density, 10), ds.value(j2, density, 9));
    assert_eq!(ds.value(j2, speed, 10), ds.value(j2, speed, 9));
    // empty speed cell at (t=30, j3)
    assert_eq!(ds.value(j3, speed, 30), ds.value(j3, speed, 29));
    assert_eq!(ds.value(j3, density, 30), 21.8);
}

#[test]
fn lust_kfold_two_channels() {
    let ds = lust();
    let cfg = ExperimentConfig {
        hidden: 4,
        epochs: Some(2),
        window: 6,
        bins: 5,
        split: SplitScheme::Kfold { k: 3 },
        ..ExperimentConfig::new(VariantChoice::Todense)
    };
    let r = run_experiment_on(&cfg, &ds).unwrap();
    assert_eq!(r.metric_channel, "speed");
    assert_eq!(r.folds.len(), 3);
    let mean = r.folds.iter().map(|f| f.mse).sum::<f64>() / 3.0;
    assert!((r.mse - mean).abs() < 1e-12);
    let density = ExperimentConfig {
        metric_channel: Some("density".into()),
        ..cfg
    };
    assert_eq!(run_experiment_on(&density, &ds).unwrap().metric_channel, "density");
}
