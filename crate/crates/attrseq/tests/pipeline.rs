//! Library-level workflow tests: the public API driven the way a consumer
//! would drive it, from synthetic data through files, training, baselines,
//! and scoring.

use attrseq::baselines::{run_method, BaselineValues, Method};
use attrseq::data::{
    generate_synthetic, load_jsonl, load_sidecar, save_jsonl, save_sidecar, Label, LoadOptions,
    Sidecar, StartMode, SyntheticConfig,
};
use attrseq::evaluation::{
    detect_outliers, run_sweep, write_sweep_csv, DistanceMetric, ScoreVariant, SweepConfig,
};
use attrseq::training::{load_model, save_model, train, TrainingConfig};

fn small_benchmark(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        inliers: 150,
        outlier_fraction: 0.04,
        regimes: 3,
        vocab_size: 4,
        informative_attrs: 2,
        nuisance_attrs: 1,
        nuisance_levels: 0,
        attr_noise: 0.02,
        transition_noise: 0.01,
        start_mode: StartMode::Shared,
        min_len: 8,
        max_len: 8,
        seed,
    }
}

fn quick_training(seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        hidden_dim: 8,
        epochs: 4,
        pretrain_epochs: 4,
        batch_size: 1,
        ..TrainingConfig::default()
    }
}

#[test]
fn end_to_end_detection_beats_chance() {
    let ds = generate_synthetic(&small_benchmark(3)).unwrap();
    let model = train(&ds, &quick_training(3)).unwrap();
    let embeddings = model.embed_dataset(&ds).unwrap();
    let labels = ds.labels().unwrap();
    let report = detect_outliers(
        &embeddings,
        &labels,
        5,
        DistanceMetric::Euclidean,
        ScoreVariant::KthDistance,
    )
    .unwrap();
    assert_eq!(report.scores.len(), ds.instances.len());
    assert!(report.auc > 0.7, "embedding should separate crossed outliers, auc {}", report.auc);
}

#[test]
fn file_persistence_does_not_perturb_training() {
    let ds = generate_synthetic(&small_benchmark(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.jsonl");
    let sidecar_path = dir.path().join("sidecar.json");
    save_jsonl(&ds, &data_path).unwrap();
    save_sidecar(
        &Sidecar { schema: ds.schema.clone(), vocabulary: ds.vocabulary.clone() },
        &sidecar_path,
    )
    .unwrap();

    let sidecar = load_sidecar(&sidecar_path).unwrap();
    let options = LoadOptions { sidecar: Some(sidecar), ..LoadOptions::default() };
    let reloaded = load_jsonl(&data_path, &options).unwrap();

    assert_eq!(reloaded.instances.len(), ds.instances.len());
    for (a, b) in ds.instances.iter().zip(&reloaded.instances) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.items, b.items);
        assert_eq!(a.label, b.label);
        assert_eq!(a.attributes.data(), b.attributes.data());
    }

    // Training on the reloaded copy reproduces the in-memory run bit for bit.
    let cfg = TrainingConfig { epochs: 1, pretrain_epochs: 1, ..quick_training(5) };
    let from_memory = train(&ds, &cfg).unwrap().embed_dataset(&ds).unwrap();
    let from_disk = train(&reloaded, &cfg).unwrap().embed_dataset(&reloaded).unwrap();
    for (x, y) in from_memory.iter().zip(&from_disk) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn every_method_covers_the_whole_dataset() {
    let ds = generate_synthetic(&small_benchmark(7)).unwrap();
    let cfg = TrainingConfig { epochs: 1, pretrain_epochs: 1, ..quick_training(7) };
    for method in [
        Method::Nas,
        Method::Len,
        Method::Mcc,
        Method::Seq,
        Method::Atr,
        Method::Eml,
        Method::Csa,
    ] {
        let out = run_method(method, &ds, &cfg).unwrap();
        assert_eq!(out.len(), ds.instances.len(), "{method:?}");
        match (&out.values, method) {
            (BaselineValues::Scores(scores), Method::Mcc | Method::Eml) => {
                assert!(scores.iter().all(|s| s.is_finite()), "{method:?}");
            }
            (BaselineValues::Embeddings(embeddings), _) => {
                let expected = match method {
                    // Raw attribute rows keep the input width; the fused
                    // concatenation doubles the embedding width.
                    Method::Len => ds.attribute_width(),
                    Method::Csa => 2 * cfg.hidden_dim,
                    _ => cfg.hidden_dim,
                };
                for e in embeddings {
                    assert_eq!(e.dim(), expected, "{method:?}");
                    assert!(e.data().iter().all(|v| v.is_finite()), "{method:?}");
                }
            }
            (values, _) => panic!("{method:?} produced unexpected output kind {values:?}"),
        }
    }
}

#[test]
fn sweep_fills_its_grid_and_reruns_identically() {
    let ds = generate_synthetic(&small_benchmark(9)).unwrap();
    let sweep = SweepConfig {
        methods: vec![Method::Nas, Method::Mcc],
        neighbor_grid: vec![3, 5],
        dim_grid: vec![4],
        epoch_grid: vec![1, 2],
        base: TrainingConfig { seed: 9, batch_size: 4, ..TrainingConfig::default() },
    };
    let first = run_sweep(&ds, &sweep).unwrap();
    assert_eq!(first.cells.len(), 2 * 2 * 1 * 2);
    for cell in &first.cells {
        assert!((0.0..=1.0).contains(&cell.auc), "{cell:?}");
        assert!(cell.wall_seconds >= 0.0);
    }

    let second = run_sweep(&ds, &sweep).unwrap();
    for (a, b) in first.cells.iter().zip(&second.cells) {
        assert_eq!(a.method, b.method);
        assert_eq!((a.k, a.d, a.epochs), (b.k, b.d, b.epochs));
        assert_eq!(a.auc, b.auc, "sweep must be reproducible per cell");
    }

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    write_sweep_csv(&first, &csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + first.cells.len());
    assert!(text.starts_with("method,"));
}

#[test]
fn model_files_round_trip_and_reject_corruption() {
    let ds = generate_synthetic(&small_benchmark(11)).unwrap();
    let cfg = TrainingConfig { epochs: 2, pretrain_epochs: 1, ..quick_training(11) };
    let model = train(&ds, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();

    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.loss_history.len(), model.loss_history.len());
    let before = model.embed_dataset(&ds).unwrap();
    let after = loaded.embed_dataset(&ds).unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert_eq!(x.data(), y.data());
    }

    // A model written by some future incompatible format must be refused.
    let text = std::fs::read_to_string(&path).unwrap();
    let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 999", 1);
    assert_ne!(text, bumped, "version tag should be present and patchable");
    let bad_version = dir.path().join("future.json");
    std::fs::write(&bad_version, bumped).unwrap();
    assert!(load_model(&bad_version).is_err());

    // Truncated files are corrupt, not quietly partial.
    let truncated = dir.path().join("cut.json");
    std::fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert!(load_model(&truncated).is_err());

    // The terse inlier/outlier labels survive the dataset wire format too.
    assert!(ds.instances.iter().any(|i| i.label == Some(Label::Outlier)));
}
