//! Fixture files under `tests/fixtures`, well-formed and malformed.

use std::path::{Path, PathBuf};

use occlubench::dataio::{
    decode_saliency, encode_saliency, load_cifar10, load_idx, read_masks, read_prediction_log, read_saliency,
    read_subset, write_masks, write_prediction_log, write_saliency, Normalization,
};
use occlubench::{Error, Split};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn format_message(e: Error) -> String {
    match e {
        Error::Format { message, .. } => message,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn cifar_two_records() {
    let ds = load_cifar10(&[fixture("cifar_two.bin")], Split::Train, &Normalization::identity(3)).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.labels(), &[7, 3]);
    let first = &ds.images()[0];
    assert_eq!(first.get(0, 0, 1), 1.0 / 255.0);
    assert_eq!(first.get(1, 0, 0), 0.0); // byte 1024 % 256
    assert_eq!(first.get(2, 31, 31), 255.0 / 255.0);
}

#[test]
fn cifar_normalisation_extremes() {
    let norm = Normalization { mean: vec![0.5, 0.5, 0.5], std: vec![0.25, 0.5, 0.125] };
    let ds = load_cifar10(&[fixture("cifar_two.bin")], Split::Test, &norm).unwrap();
    let img = &ds.images()[1];
    // (255/255 - 0.5) / 0.25 and (0 - 0.5) / 0.5
    assert_eq!(img.get(0, 5, 5), 2.0);
    assert_eq!(img.get(1, 5, 5), -1.0);
    assert_eq!(img.get(2, 0, 0), ((128.0f32 / 255.0) - 0.5) / 0.125);
}

#[test]
fn cifar_malformed() {
    let id = Normalization::identity(3);
    let e = load_cifar10(&[fixture("cifar_truncated.bin")], Split::Train, &id).unwrap_err();
    assert!(format_message(e).contains("3073"));
    let e = load_cifar10(&[fixture("cifar_bad_label.bin")], Split::Train, &id).unwrap_err();
    assert!(format_message(e).contains("label byte 10"));
}

#[test]
fn idx_three_images() {
    let ds = load_idx(&fixture("idx_images.idx"), &fixture("idx_labels.idx"), 10, Split::Train, &Normalization::identity(1))
        .unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.labels(), &[4, 0, 9]);
    for (n, img) in ds.images().iter().enumerate() {
        for (r, c) in [(0, 0), (3, 17), (27, 27)] {
            let byte = ((r * 28 + c) * 3 + n) % 256;
            assert_eq!(img.data()[r * 28 + c], byte as f32 / 255.0);
        }
    }
}

#[test]
fn idx_malformed() {
    let id = Normalization::identity(1);
    let e = load_idx(&fixture("idx_images_bad_magic.idx"), &fixture("idx_labels.idx"), 10, Split::Train, &id).unwrap_err();
    assert!(format_message(e).contains("bad image magic"));
    let e = load_idx(&fixture("idx_images.idx"), &fixture("idx_labels_short.idx"), 10, Split::Train, &id).unwrap_err();
    assert!(format_message(e).contains("count mismatch"));
}

#[test]
fn prediction_log_round_trip() {
    let log = read_prediction_log(&fixture("log_ok.jsonl")).unwrap();
    assert_eq!(log.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.jsonl");
    write_prediction_log(&out, &log).unwrap();
    assert_eq!(read_prediction_log(&out).unwrap(), log);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("log_ok.jsonl")).unwrap());
}

#[test]
fn prediction_log_malformed() {
    match read_prediction_log(&fixture("log_duplicate.jsonl")) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("duplicate"));
        }
        other => panic!("{other:?}"),
    }
    match read_prediction_log(&fixture("log_missing_field.jsonl")) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 2);
            assert!(message.contains("predicted_label"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn saliency_round_trip_is_bit_exact() {
    let bytes = std::fs::read(fixture("saliency_ok.obsm")).unwrap();
    let maps = read_saliency(&fixture("saliency_ok.obsm")).unwrap();
    assert_eq!(maps.len(), 2);
    assert_eq!(maps[1].values()[15], 31.0 * 0.25);
    assert_eq!(encode_saliency(&maps).unwrap(), bytes);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.obsm");
    write_saliency(&out, &maps).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
}

#[test]
fn saliency_malformed() {
    for (name, needle) in [
        ("saliency_short.obsm", "127"),
        ("saliency_nan.obsm", "finite"),
        ("saliency_negative.obsm", "negative"),
        ("saliency_bad_magic.obsm", "magic"),
    ] {
        let e = read_saliency(&fixture(name)).unwrap_err();
        let msg = format_message(e);
        assert!(msg.contains(needle), "{name}: {msg}");
    }
    // 2 maps of 4x4 need exactly 128 body bytes
    let mut bytes = std::fs::read(fixture("saliency_ok.obsm")).unwrap();
    bytes.push(0);
    assert!(decode_saliency(&bytes, Path::new("long")).is_err());
}

#[test]
fn masks_round_trip() {
    let masks = read_masks(&fixture("masks_ok.obmk")).unwrap();
    assert_eq!(masks.len(), 2);
    assert_eq!(masks[0].covered_count(), 3);
    assert!(masks[1].is_covered(1, 2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.obmk");
    write_masks(&out, &masks).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("masks_ok.obmk")).unwrap());
    assert!(format_message(read_masks(&fixture("masks_bad_cell.obmk")).unwrap_err()).contains("not 0 or 1"));
}

#[test]
fn subset_files() {
    let s = read_subset(&fixture("subset_ok.idx")).unwrap();
    assert_eq!(s.split(), Split::Test);
    assert_eq!(s.indices(), &[1, 4, 7]);
    assert!(matches!(read_subset(&fixture("subset_no_header.idx")), Err(Error::Parse { line: 1, .. })));
}
