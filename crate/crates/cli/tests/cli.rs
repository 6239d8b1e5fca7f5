use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occlubench::dataio::{
    gen_synthetic, read_masks, write_cifar10, write_prediction_log, write_saliency, Normalization, SyntheticSpec,
};
use occlubench::{PredictionLog, PredictionRecord, SaliencyMap, Split};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_occlubench"));
    c.env_remove("OCCLUBENCH_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = r#"{
    "name": "tiny",
    "dataset": {"kind": "synthetic", "spec": {"num_classes": 3, "per_class": 8, "size": 8}},
    "architecture": {"conv_channels": [4]},
    "train": {"epochs": 2, "batch_size": 8, "lr_schedule": [{"from_epoch": 0, "lr": 0.02}]},
    "eval": {"fractions": [0.0, 0.3], "seeds": [0, 1]}
}"#;

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    ok(dir.path(), &["train", "--config", "tiny.json", "--out", "tiny.obnn"]);
    let p = dir.path().to_path_buf();
    (dir, p)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn train_writes_checkpoint_and_epoch_csv() {
    let (_dir, p) = setup();
    assert!(p.join("tiny.obnn").exists());
    let csv = std::fs::read_to_string(p.join("tiny.epochs.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,lr,loss,train_accuracy"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn same_seed_same_checkpoint() {
    let (_dir, p) = setup();
    ok(&p, &["train", "--config", "tiny.json", "--out", "again.obnn"]);
    assert_eq!(std::fs::read(p.join("tiny.obnn")).unwrap(), std::fs::read(p.join("again.obnn")).unwrap());
    ok(&p, &["train", "--config", "tiny.json", "--out", "other.obnn", "--seed", "5"]);
    assert_ne!(std::fs::read(p.join("tiny.obnn")).unwrap(), std::fs::read(p.join("other.obnn")).unwrap());
}

#[test]
fn rm3_without_bank_is_rejected_with_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY.replace(r#""epochs": 2"#, r#""epochs": 0, "momentum": 1.5"#);
    std::fs::write(dir.path().join("bad.json"), cfg).unwrap();
    let out = run(dir.path(), &["train", "--config", "bad.json", "--mode", "rm3"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("mask_bank"), "{err}");
    assert!(err.contains("epochs"), "{err}");
    assert!(err.contains("momentum"), "{err}");
}

#[test]
fn iocclusion_at_zero_is_one() {
    let (_dir, p) = setup();
    ok(&p, &["eval", "--config", "tiny.json", "--checkpoint", "tiny.obnn", "--fractions", "0", "--out", "i.csv"]);
    let rows = csv_rows(&p.join("i.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "iocclusion");
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 1.0);
    assert!(p.join("i.svg").exists());
}

#[test]
fn cutocclusion_is_reported_in_percent() {
    let (_dir, p) = setup();
    ok(&p, &["eval", "--config", "tiny.json", "--checkpoint", "tiny.obnn", "--metric", "cutocclusion", "--out", "c.csv"]);
    for row in csv_rows(&p.join("c.csv")) {
        let v: f64 = row[3].parse().unwrap();
        assert!((0.0..=100.0).contains(&v));
        assert_eq!(row[5], "2");
    }
}

fn record(split: Split, index: usize, true_label: usize, predicted_label: usize) -> PredictionRecord {
    PredictionRecord { split, index, true_label, predicted_label }
}

fn write_logs(dir: &Path) {
    // train all correct, test half wrong
    let clean: Vec<_> = (0..12)
        .map(|i| match i < 6 {
            true => record(Split::Train, i, i % 3, i % 3),
            false => record(Split::Test, i - 6, i % 3, if i % 2 == 0 { (i + 1) % 3 } else { i % 3 }),
        })
        .collect();
    let worse: Vec<_> = clean
        .iter()
        .map(|r| PredictionRecord { predicted_label: if r.index % 2 == 0 { (r.true_label + 1) % 3 } else { r.predicted_label }, ..*r })
        .collect();
    write_prediction_log(&dir.join("clean.jsonl"), &PredictionLog::new(clean.clone()).unwrap()).unwrap();
    write_prediction_log(&dir.join("same.jsonl"), &PredictionLog::new(clean).unwrap()).unwrap();
    write_prediction_log(&dir.join("worse.jsonl"), &PredictionLog::new(worse).unwrap()).unwrap();
}

#[test]
fn identical_logs_give_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    write_logs(dir.path());
    std::fs::write(
        dir.path().join("m.json"),
        r#"{"model": "ext", "num_classes": 3, "clean": "clean.jsonl",
            "runs": [{"fraction": 0.3, "seed": 0, "log": "same.jsonl"}]}"#,
    )
    .unwrap();
    ok(dir.path(), &["eval", "--logs", "m.json", "--metric", "misclass-delta", "--fractions", "0.3", "--seeds", "0", "--out", "d.csv"]);
    let rows = csv_rows(&dir.path().join("d.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn external_iocclusion_needs_saliency() {
    let dir = tempfile::tempdir().unwrap();
    write_logs(dir.path());
    let manifest = r#"{"clean": "clean.jsonl", "runs": [{"fraction": 0.3, "seed": 0, "log": "worse.jsonl"}]}"#;
    std::fs::write(dir.path().join("m.json"), manifest).unwrap();
    let out = run(dir.path(), &["eval", "--logs", "m.json", "--fractions", "0.3", "--seeds", "0", "--out", "i.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("saliency"), "{}", stderr(&out));

    let maps = vec![SaliencyMap::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap(); 6];
    write_saliency(&dir.path().join("tr.obsm"), &maps).unwrap();
    write_saliency(&dir.path().join("te.obsm"), &maps).unwrap();
    let with_maps = manifest.replace("\"runs\"", r#""saliency": {"train": "tr.obsm", "test": "te.obsm"}, "runs""#);
    std::fs::write(dir.path().join("m.json"), with_maps).unwrap();
    ok(dir.path(), &["eval", "--logs", "m.json", "--fractions", "0.3", "--seeds", "0", "--out", "i.csv"]);
    assert_eq!(csv_rows(&dir.path().join("i.csv")).len(), 1);
}

#[test]
fn subset_flag_matches_prefiltered_logs() {
    let dir = tempfile::tempdir().unwrap();
    write_logs(dir.path());
    std::fs::write(dir.path().join("tail.idx"), "split=test\n3\n4\n5\n").unwrap();
    let keep = |name: &str| {
        let log = occlubench::dataio::read_prediction_log(&dir.path().join(name)).unwrap();
        let kept: Vec<_> = log.records().iter().filter(|r| r.split == Split::Train || r.index >= 3).copied().collect();
        write_prediction_log(&dir.path().join(format!("f_{name}")), &PredictionLog::new(kept).unwrap()).unwrap();
    };
    keep("clean.jsonl");
    keep("worse.jsonl");
    let manifest = |clean: &str, run: &str| {
        format!(r#"{{"model": "ext", "clean": "{clean}", "runs": [{{"fraction": 0.5, "seed": 0, "log": "{run}"}}]}}"#)
    };
    std::fs::write(dir.path().join("full.json"), manifest("clean.jsonl", "worse.jsonl")).unwrap();
    std::fs::write(dir.path().join("pre.json"), manifest("f_clean.jsonl", "f_worse.jsonl")).unwrap();
    let common = ["--metric", "cutocclusion", "--fractions", "0.5", "--seeds", "0"];
    let mut a = vec!["eval", "--logs", "full.json", "--subset", "tail.idx", "--out", "a.csv"];
    a.extend(common);
    let mut b = vec!["eval", "--logs", "pre.json", "--out", "b.csv"];
    b.extend(common);
    ok(dir.path(), &a);
    ok(dir.path(), &b);
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
}

/// Full and pre-filtered test splits written as CIFAR-10 files.
#[test]
fn subset_flag_matches_prefiltered_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let spec = SyntheticSpec { num_classes: 3, per_class: 6, size: 32, ..Default::default() };
    let id = Normalization::identity(3);
    let train = gen_synthetic(&spec, Split::Train).unwrap();
    let test = gen_synthetic(&SyntheticSpec { seed: 1, ..spec }, Split::Test).unwrap();
    write_cifar10(&p.join("train.bin"), &train, &id).unwrap();
    write_cifar10(&p.join("test.bin"), &test, &id).unwrap();
    let kept = occlubench::SubsetIndex::new(Split::Test, (9..18).collect()).unwrap();
    write_cifar10(&p.join("tail.bin"), &test.subset(&kept).unwrap(), &id).unwrap();
    std::fs::write(p.join("tail.idx"), format!("split=test\n{}\n", (9..18).map(|i| i.to_string()).collect::<Vec<_>>().join("\n")))
        .unwrap();
    let cfg = |test_file: &str| {
        format!(
            r#"{{"dataset": {{"kind": "cifar10", "train": ["train.bin"], "test": ["{test_file}"]}},
                "architecture": {{"conv_channels": [4]}},
                "train": {{"epochs": 1, "batch_size": 9, "lr_schedule": [{{"from_epoch": 0, "lr": 0.02}}]}}}}"#
        )
    };
    std::fs::write(p.join("full.json"), cfg("test.bin")).unwrap();
    std::fs::write(p.join("tail.json"), cfg("tail.bin")).unwrap();
    ok(p, &["train", "--config", "full.json", "--out", "m.obnn"]);
    let common = ["--checkpoint", "m.obnn", "--metric", "misclass-delta", "--fractions", "0.2,0.6", "--seeds", "0"];
    let mut a = vec!["eval", "--config", "full.json", "--subset", "tail.idx", "--out", "a.csv"];
    a.extend(common);
    let mut b = vec!["eval", "--config", "tail.json", "--out", "b.csv"];
    b.extend(common);
    ok(p, &a);
    ok(p, &b);
    assert_eq!(std::fs::read(p.join("a.csv")).unwrap(), std::fs::read(p.join("b.csv")).unwrap());
}

#[test]
fn sample_grid_is_seeded_and_lambda_one_keeps_image1() {
    let (_dir, p) = setup();
    ok(&p, &["gen-samples", "--config", "tiny.json", "--columns", "3", "--seed", "4", "--out", "a.png"]);
    ok(&p, &["gen-samples", "--config", "tiny.json", "--columns", "3", "--seed", "4", "--out", "b.png"]);
    assert_eq!(std::fs::read(p.join("a.png")).unwrap(), std::fs::read(p.join("b.png")).unwrap());
    let side = std::fs::read_to_string(p.join("a.csv")).unwrap();
    for line in side.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - (1.0 - v[2])).abs() < 1e-12, "{line}");
    }

    ok(&p, &["gen-samples", "--config", "tiny.json", "--columns", "2", "--lambda", "1", "--out", "one.png"]);
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(p.join("one.png")).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    let (w, tile, gap) = (info.width as usize, 8usize, 2usize);
    let px = |row: usize, y: usize, x: usize| {
        let at = ((gap + row * (tile + gap) + y) * w + gap + x) * 3;
        [buf[at], buf[at + 1], buf[at + 2]]
    };
    for y in 0..tile {
        for x in 0..tile {
            assert_eq!(px(2, y, x), px(0, y, x));
        }
    }
}

#[test]
fn masks_round_trip_through_validate() {
    let (_dir, p) = setup();
    ok(&p, &["gen-masks", "--policy", "rect", "--fraction", "0.25", "--count", "4", "--out", "r.obmk"]);
    let masks = read_masks(&p.join("r.obmk")).unwrap();
    assert_eq!(masks.len(), 4);
    assert!(masks.iter().all(|m| m.covered_count() == 256));
    ok(&p, &["gen-masks", "--policy", "fourier", "--fraction", "0.3", "--config", "tiny.json", "--out", "f.obmk"]);
    assert_eq!(read_masks(&p.join("f.obmk")).unwrap().len(), 24);
    let out = ok(&p, &["validate", "r.obmk", "f.obmk", "tiny.obnn", "tiny.json"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("ok ")).count(), 4);
}

#[test]
fn occluded_dataset_is_written_for_external_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY.replace(r#""size": 8"#, r#""size": 32"#);
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    ok(
        dir.path(),
        &["gen-masks", "--policy", "rect", "--fraction", "0.5", "--config", "c.json", "--occluded-out", "occ.bin", "--out", "m.obmk"],
    );
    let out = ok(dir.path(), &["validate", "occ.bin"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("24 record(s)"));
}

#[test]
fn validate_reports_every_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.jsonl"), "{\"split\":\"train\"}\n").unwrap();
    std::fs::write(dir.path().join("b.obsm"), b"OBSM\x01").unwrap();
    let out = run(dir.path(), &["validate", "a.jsonl", "b.obsm"]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("FAILED")).count(), 2, "{stdout}");
}

#[test]
fn bad_thread_count_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().current_dir(dir.path()).env("OCCLUBENCH_THREADS", "0").args(["validate", "x.json"]).output().unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("OCCLUBENCH_THREADS"));
}
