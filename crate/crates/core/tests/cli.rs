use std::path::Path;
use std::process::{Command, Output};

use zfrac::imagio::{manifest_to_csv, write_pgm, ManifestEntry, Split};
use zfrac::simlab::write_actm;
use zfrac::synth::{defect_texture, planted_layers, random_matrix};
use zfrac::{FeatureTable, GrayImage};

fn zfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zfrac")).args(args).env_remove("ZFRAC_CACHE").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_dataset(dir: &Path, count: usize) -> std::path::PathBuf {
    let mut entries = Vec::new();
    for i in 0..count {
        let name = format!("t{i}.pgm");
        write_pgm(&defect_texture(64, i % 2 == 1, i as u64), dir.join(&name)).unwrap();
        let split = if i < count - 4 { Split::Train } else { Split::Test };
        entries.push(ManifestEntry { path: name.into(), label: (i % 2) as u32, split });
    }
    let m = dir.join("manifest.csv");
    std::fs::write(&m, manifest_to_csv(&entries)).unwrap();
    m
}

#[test]
fn fd_of_filled_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("white.pgm");
    write_pgm(&GrayImage::filled(64, 64, 255).unwrap(), &img).unwrap();
    let series = dir.path().join("series.csv");
    let o = zfrac(&["fd", p(&img), "--threshold", "fixed:0", "--series", p(&series)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fd 2.000000"), "{}", stdout(&o));
    assert!(std::fs::read_to_string(series).unwrap().starts_with("r,n\n1,4096\n"));
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(zfrac(&["fd", "/nonexistent/x.pgm"]).status.code(), Some(2));
    assert_eq!(zfrac(&["fd", "x.pgm", "--threshold", "median"]).status.code(), Some(2));
    assert_eq!(zfrac(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(zfrac(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "path,label,split\n").unwrap();
    let o = zfrac(&["bench", "--manifest", p(&empty)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zfrac_writes_tables_and_uses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(dir.path(), 8);
    let out = dir.path().join("out");
    let cache = dir.path().join("cache");
    let args = ["zfrac", "--manifest", p(&m), "--schedule", "4,8", "--out", p(&out), "--cache", p(&cache), "--csv"];
    let first = zfrac(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("cache hits 0 misses 8"));
    let train = FeatureTable::read(out.join("train.zft")).unwrap();
    assert_eq!((train.rows, train.cols), (4, 16 * 16 + 8 * 8));
    assert!(out.join("test.csv").exists() && out.join("zfrac.config.json").exists());

    let second = zfrac(&args);
    assert!(stdout(&second).contains("cache hits 8 misses 0"));
    let digest = |o: &Output| stdout(o).lines().find(|l| l.starts_with("digest")).unwrap().to_string();
    assert_eq!(digest(&first), digest(&second));

    let env_cache = dir.path().join("env-cache");
    let o = Command::new(env!("CARGO_BIN_EXE_zfrac")).args(args).env("ZFRAC_CACHE", &env_cache).output().unwrap();
    assert!(stdout(&o).contains("misses 8"));
    assert!(std::fs::read_dir(env_cache).unwrap().count() == 8);
}

#[test]
fn similarity_finds_planted_layer() {
    let dir = tempfile::tempdir().unwrap();
    let z = random_matrix(60, 4, 1);
    let values: Vec<f32> = z.transpose().iter().map(|&v| v as f32).collect();
    let features = dir.path().join("z.zft");
    FeatureTable::new(vec![2], 4, values, vec![0; 60]).unwrap().write(&features).unwrap();
    let dump = dir.path().join("dump");
    for layer in planted_layers(&z, 4, 2, 0.01, 1) {
        write_actm(&layer, dump.join(format!("{}.actm", layer.layer_name()))).unwrap();
    }
    let report = dir.path().join("sim.csv");
    let o = zfrac(&[
        "similarity", "--features", p(&features), "--activations", p(&dump), "--metric", "cka-linear", "--metric", "cca",
        "--metric", "spearman", "--out", p(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cka-linear argmax layer2"));
    assert!(stdout(&o).contains("cca argmax layer2"));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("layer,metric,score\n"));
    assert!(csv.contains("# config"));

    write_actm(&zfrac::ActivationMatrix::new("short", random_matrix(10, 3, 2)).unwrap(), dump.join("z_short.actm")).unwrap();
    let o = zfrac(&["similarity", "--features", p(&features), "--activations", p(&dump), "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("short"));
}

#[test]
fn train_eval_agree_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(dir.path(), 24);
    let out = dir.path().join("feat");
    assert!(zfrac(&["zfrac", "--manifest", p(&m), "--schedule", "4,8,16", "--out", p(&out)]).status.success());

    let model = dir.path().join("model.json");
    let o = zfrac(&["train", "--features", p(&out.join("train.zft")), "--out", p(&model), "--hidden", "16,8", "--val-fraction", "0.2", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again = dir.path().join("model2.json");
    zfrac(&["train", "--features", p(&out.join("train.zft")), "--out", p(&again), "--hidden", "16,8", "--val-fraction", "0.2", "--seed", "4"]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let (report, preds) = (dir.path().join("eval.csv"), dir.path().join("preds.csv"));
    let o = zfrac(&["eval", "--model", p(&model), "--features", p(&out.join("test.zft")), "--out", p(&report), "--predictions", p(&preds)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&report).unwrap().starts_with("metric,value\naccuracy,"));
    let o = zfrac(&["agree", p(&preds), p(&preds)]);
    assert_eq!(stdout(&o).trim(), "100");

    let flipped = dir.path().join("flipped.csv");
    let text: String = std::fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{},{}\n", i - 1, 1 - l.split(',').nth(1).unwrap().parse::<u8>().unwrap()) })
        .collect();
    std::fs::write(&flipped, text).unwrap();
    assert_eq!(stdout(&zfrac(&["agree", p(&preds), p(&flipped)])).trim(), "0");

    let bench = dir.path().join("bench.csv");
    let o = zfrac(&[
        "bench", "--manifest", p(&m), "--schedule", "4,8", "--workers", "1,2", "--hidden", "8", "--val-fraction", "0.2",
        "--out", p(&bench),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&bench).unwrap();
    let digests: Vec<&str> = text.lines().filter(|l| l.starts_with("extract,")).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(digests.len(), 2);
    assert_eq!(digests[0], digests[1]);
    assert!(text.starts_with("# config"));
}
