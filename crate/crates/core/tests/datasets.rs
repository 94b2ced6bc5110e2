use std::fs;
use std::path::Path;

use gal_core::*;
use serde_json::Value;

fn small_set(seed: u64) -> Dataset {
    build_mixed_set(&MixedSetConfig::new(MapKind::ALL.to_vec(), 16, 5, seed)).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![(
        "manifest.json".to_string(),
        fs::read(dir.join("manifest.json")).unwrap(),
    )];
    let mut maps: Vec<_> = fs::read_dir(dir.join("maps"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    maps.sort();
    for m in maps {
        out.push((
            m.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&m).unwrap(),
        ));
    }
    out
}

fn edit_manifest(dir: &Path, edit: impl FnOnce(&mut Value)) {
    let path = dir.join("manifest.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
}

fn saved(seed: u64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&small_set(seed), dir.path()).unwrap();
    dir
}

#[test]
fn save_is_byte_identical_and_load_restores_everything() {
    let (a, b) = (saved(4), saved(4));
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    assert_eq!(load_dataset(a.path()).unwrap(), small_set(4));
    assert_ne!(tree_bytes(a.path()), tree_bytes(saved(5).path()));

    // load then save again reproduces the same files
    let c = tempfile::tempdir().unwrap();
    save_dataset(&load_dataset(a.path()).unwrap(), c.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(c.path()));
}

#[test]
fn splits_and_kinds_partition_the_set() {
    let d = small_set(6);
    let total: usize = [Split::Train, Split::Val, Split::Test]
        .iter()
        .map(|&s| d.split(s).len())
        .sum();
    assert_eq!(total, d.len());
    let by_kind: usize = MapKind::ALL.iter().map(|k| d.of_kind(k.name()).len()).sum();
    assert_eq!(by_kind, d.len());
}

#[test]
fn corrupt_manifests_are_rejected() {
    let dir = saved(7);
    edit_manifest(dir.path(), |v| v["count"] = Value::from(3));
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::MalformedManifest(_))
    ));

    let dir = saved(7);
    fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::MalformedManifest(_))
    ));

    let dir = saved(7);
    edit_manifest(dir.path(), |v| {
        v["instances"][0]["checksum"] = Value::from("00")
    });
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::ChecksumMismatch(_))
    ));

    let dir = saved(7);
    let len = |v: &Value| v["instances"][2]["optimal_length"].as_u64().unwrap();
    edit_manifest(dir.path(), |v| {
        let l = len(v);
        v["instances"][2]["optimal_length"] = Value::from(l + 1);
    });
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::InvalidInstance { .. })
    ));

    let dir = saved(7);
    let first = dir.path().join("maps/00000.pgm");
    fs::rename(&first, dir.path().join("maps/moved.pgm")).unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::MissingMapFile(_))
    ));

    let dir = saved(7);
    fs::remove_file(dir.path().join("maps/00001.pgm")).unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DatasetError::MalformedManifest(_))
    ));

    assert!(matches!(
        load_dataset(dir.path().join("nowhere")),
        Err(DatasetError::MalformedManifest(_))
    ));
}
