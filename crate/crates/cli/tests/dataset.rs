use std::fs;

use lfcs::{export_dataset, ingest_dataset, load_lightfield, CliError, Dataset, NamedField};
use lfcs_core::{gen_scene, LightField, RayShape, SceneSpec};

fn quantized_field(h: usize, w: usize, nv: usize, seed: u64) -> LightField {
    let shape = RayShape::new(h, w, nv).unwrap();
    let lf = gen_scene(&SceneSpec::random(shape, 2, 1.0, 4.0, seed), seed)
        .unwrap()
        .light_field;
    // Exactly representable in 8 bits.
    LightField::from_vec(
        shape,
        lf.as_slice()
            .iter()
            .map(|v| (v * 255.0).round() / 255.0)
            .collect(),
    )
    .unwrap()
}

fn named(name: &str, field: LightField) -> NamedField {
    NamedField {
        name: name.into(),
        field,
    }
}

fn sample(nv: usize) -> Dataset {
    Dataset {
        train: vec![
            named("a", quantized_field(10, 12, nv, 1)),
            named("b", quantized_field(10, 12, nv, 2)),
        ],
        test: vec![named("c", quantized_field(10, 12, nv, 3))],
    }
}

#[test]
fn two_by_two_views_ingest_as_a_five_dimensional_field() {
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&sample(2), dir.path()).unwrap();
    let data = ingest_dataset(dir.path()).unwrap();
    assert_eq!(data.train.len(), 2);
    assert_eq!(data.test.len(), 1);
    for nf in data.train.iter().chain(&data.test) {
        assert_eq!(nf.field.shape().dims(), [10, 12, 2, 2, 3]);
    }
    assert_eq!(data.test[0].name, "c");
}

#[test]
fn export_then_ingest_is_lossless_for_8bit_data() {
    let dir = tempfile::tempdir().unwrap();
    let original = sample(3);
    export_dataset(&original, dir.path()).unwrap();
    let back = ingest_dataset(dir.path()).unwrap();
    for (a, b) in original
        .train
        .iter()
        .chain(&original.test)
        .zip(back.train.iter().chain(&back.test))
    {
        assert_eq!(a.name, b.name);
        assert_eq!(a.field, b.field);
    }
    let single = load_lightfield(dir.path().join("a")).unwrap();
    assert_eq!(single, original.train[0].field);
}

#[test]
fn missing_view_file_is_reported_by_view() {
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&sample(2), dir.path()).unwrap();
    let victim = fs::read_dir(dir.path().join("b"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_str()
                .unwrap()
                .starts_with("view_1_0")
        })
        .expect("view (1, 0) was exported");
    fs::remove_file(&victim).unwrap();
    match ingest_dataset(dir.path()) {
        Err(CliError::Dataset { path, message }) => {
            assert!(path.ends_with("b"), "{path:?}");
            assert!(message.contains("(1, 0)"), "{message}");
            assert!(message.contains("'b'"), "{message}");
        }
        other => panic!("expected a dataset error, got {other:?}"),
    }
}

#[test]
fn inconsistent_view_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = sample(2);
    data.test[0].field = quantized_field(10, 12, 3, 4);
    export_dataset(&data, dir.path()).unwrap();
    match ingest_dataset(dir.path()) {
        Err(CliError::Dataset { message, .. }) => assert!(message.contains("3x3"), "{message}"),
        other => panic!("expected a dataset error, got {other:?}"),
    }
}

#[test]
fn malformed_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        ingest_dataset(dir.path()),
        Err(CliError::Dataset { .. })
    ));
    fs::write(dir.path().join("manifest.json"), "{\"train\": 3}").unwrap();
    assert!(matches!(
        ingest_dataset(dir.path()),
        Err(CliError::Dataset { .. })
    ));
    fs::write(
        dir.path().join("manifest.json"),
        "{\"train\": [], \"test\": []}",
    )
    .unwrap();
    assert!(matches!(
        ingest_dataset(dir.path()),
        Err(CliError::Dataset { .. })
    ));
}
