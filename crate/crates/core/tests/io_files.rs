use std::fs;

use vitmerge::io::{
    load_manifest, load_tensor, load_weights, write_manifest, write_tensor, write_weights, Manifest, Record, Tensor,
};
use vitmerge::vit::{random_image, random_weights};
use vitmerge::{Error, VitConfig, VitModel};

fn tiny() -> VitConfig {
    "vit:img=8,patch=4,dim=8,depth=2,heads=2,mlp=2,classes=3,eps=0.000001"
        .parse()
        .unwrap()
}

#[test]
fn weights_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.vpkw");
    let store = random_weights(&tiny(), 1);
    write_weights(&path, &store).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, store);

    let image = random_image(&tiny(), 2);
    let a = VitModel::from_store(&store).unwrap().forward(&image, None).unwrap().0;
    let b = VitModel::from_store(&back).unwrap().forward(&image, None).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn tensor_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.vpkt");
    let t = random_image(&tiny(), 3);
    write_tensor(&path, &t).unwrap();
    assert_eq!(load_tensor(&path).unwrap(), t);
}

#[test]
fn missing_file_names_the_path() {
    let err = load_weights("/nonexistent/model.vpkw").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/model.vpkw"));
}

#[test]
fn truncated_weight_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.vpkw");
    write_weights(&path, &random_weights(&tiny(), 4)).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_weights(&path), Err(Error::Format(_))));
}

#[test]
fn manifest_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("inputs")).unwrap();
    let t = Tensor::new(vec![3, 8, 8], vec![0.25; 192]).unwrap();
    write_tensor(dir.path().join("inputs/a.vpkt"), &t).unwrap();
    let manifest = Manifest {
        records: vec![Record {
            tensor_path: "inputs/a.vpkt".into(),
            label: 2,
            reference_top1: Some(1),
            reference_logits_path: None,
        }],
    };
    let mpath = dir.path().join("manifest.json");
    write_manifest(&mpath, &manifest).unwrap();
    let loaded = load_manifest(&mpath, 3).unwrap();
    assert_eq!(loaded.records[0].tensor_path, dir.path().join("inputs/a.vpkt"));
    assert_eq!(load_tensor(&loaded.records[0].tensor_path).unwrap(), t);
    assert!(load_manifest(&mpath, 2).is_err());
}

#[test]
fn malformed_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mpath = dir.path().join("m.json");
    fs::write(&mpath, r#"{"records": [{"label": 1}]}"#).unwrap();
    assert!(matches!(load_manifest(&mpath, 10), Err(Error::Manifest { .. })));
}
