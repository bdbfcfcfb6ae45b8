//! The `obfusc` binary: exit codes, thin-adapter outputs and determinism.

use std::path::Path;
use std::process::{Command, Output};

use obfusc::io::{idx_paths, load_dataset, write_dataset, write_weights};
use obfusc::table::fmt_f64;
use obfusc_core::dataset::synth_blobs;
use obfusc_core::metrics::fnorm;
use obfusc_core::nn::{init_model, ModelArch};
use obfusc_core::obfuscation::{obfuscate, ObfuscationSpec};
use obfusc_core::RngStream;

fn obfusc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obfusc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn pool(dir: &Path) -> obfusc_core::Dataset {
    let d = synth_blobs(10, 12, 9, 0.1, &mut RngStream::derive(2, "blobs")).unwrap();
    write_dataset(&d, &dir.join("pool")).unwrap();
    d
}

#[test]
fn fnorm_of_a_checkpoint_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let arch = ModelArch::preset("desk-mlp", obfusc_core::SampleShape::flat(5), 10).unwrap();
    let a = init_model(&arch, 1);
    let b = init_model(&arch, 2);
    write_weights(&a, &dir.path().join("a.ckpt")).unwrap();
    write_weights(&b, &dir.path().join("b.ckpt")).unwrap();
    let o = obfusc(&["fnorm", "a.ckpt", "a.ckpt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0\n");
    let o = obfusc(&["fnorm", "a.ckpt", "b.ckpt"], dir.path());
    assert_eq!(stdout(&o), format!("{}\n", fmt_f64(fnorm(&a, &b).unwrap())));
}

#[test]
fn obfuscate_with_zero_sigma_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = pool(dir.path());
    let o = obfusc(
        &[
            "obfuscate",
            "--sigma",
            "0",
            "--r",
            "1",
            "--seed",
            "7",
            "pool",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (a, b) = (
        idx_paths(&dir.path().join("pool")),
        idx_paths(&dir.path().join("out")),
    );
    assert_eq!(std::fs::read(a.0).unwrap(), std::fs::read(b.0).unwrap());
    assert_eq!(std::fs::read(a.1).unwrap(), std::fs::read(b.1).unwrap());
    assert_eq!(
        load_dataset(&dir.path().join("out"), 10).unwrap(),
        d.with_name(dir.path().join("out").display().to_string())
    );
}

#[test]
fn obfuscate_matches_the_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let d = pool(dir.path());
    let o = obfusc(
        &[
            "obfuscate",
            "--sigma",
            "0.3",
            "--seed",
            "5",
            "pool",
            "noisy",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let want = obfuscate(&d, &ObfuscationSpec::new(0.3, 5)).unwrap();
    assert_eq!(
        load_dataset(&dir.path().join("noisy"), 10)
            .unwrap()
            .features(),
        want.features()
    );
}

#[test]
fn missing_seed_is_a_validation_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    pool(dir.path());
    let o = obfusc(&["obfuscate", "--sigma", "0.3", "pool", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
    let o = obfusc(
        &["obfuscate", "--sigma", "-1", "--seed", "1", "pool", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = obfusc(
        &[
            "sample", "--x", "0", "--z", "0.5", "--seed", "1", "pool", "out",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!idx_paths(&dir.path().join("out")).0.exists());
}

#[test]
fn pipeline_errors_exit_two_with_the_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = obfusc(&["fnorm", "nope.ckpt", "nope.ckpt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IoError"));
    std::fs::write(dir.path().join("pool-images.idx"), [0, 0, 8, 1, 0, 0, 0, 0]).unwrap();
    std::fs::write(dir.path().join("pool-labels.idx"), [0, 0, 8, 1, 0, 0, 0, 0]).unwrap();
    let o = obfusc(
        &["obfuscate", "--sigma", "0", "--seed", "1", "pool", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("WrongMagic"), "{}", stderr(&o));
}

#[test]
fn help_on_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        vec!["--help"],
        vec!["split", "--help"],
        vec!["sample", "--help"],
        vec!["obfuscate", "--help"],
        vec!["train", "--help"],
        vec!["eval", "--help"],
        vec!["fnorm", "--help"],
        vec!["pol", "prove", "--help"],
        vec!["pol", "verify", "--help"],
        vec!["pol", "spoof", "--help"],
        vec!["attack", "average", "--help"],
        vec!["exp", "run", "--help"],
    ] {
        let o = obfusc(&sub, dir.path());
        assert_eq!(o.status.code(), Some(0), "{sub:?}");
        assert!(stdout(&o).contains("Usage"), "{sub:?}");
    }
}

#[test]
fn sample_train_eval_and_pol_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    pool(dir.path());
    let run = |args: &[&str]| {
        let o = obfusc(args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    run(&["split", "--seed", "1", "pool", "tr", "te"]);
    let s = run(&[
        "sample",
        "--x",
        "0.5",
        "--z",
        "0.5",
        "--seed",
        "3",
        "--labels",
        "0,1,2,3,4",
        "tr",
        "anchor",
    ]);
    assert!(s.ends_with("labels 0,1,2,3,4\n"), "{s}");
    run(&[
        "sample",
        "--x",
        "0.5",
        "--y",
        "0.4",
        "--z",
        "0.5",
        "--seed",
        "3",
        "--counterpart-of",
        "0,1,2,3,4",
        "tr",
        "other",
    ]);
    let common = [
        "--preset", "desk-mlp", "--epochs", "2", "--lr", "0.001", "--batch", "8", "--seed", "4",
    ];
    let mut train_args = vec!["train"];
    train_args.extend(common);
    train_args.extend(["--eval", "te", "anchor", "w.ckpt"]);
    let acc = run(&train_args);
    let e = run(&["eval", "--preset", "desk-mlp", "w.ckpt", "te"]);
    assert_eq!(acc, e);
    let mut prove_args = vec!["pol", "prove"];
    prove_args.extend(common);
    prove_args.extend(["--interval", "2", "anchor", "t.pol"]);
    run(&prove_args);
    let v = run(&["pol", "verify", "t.pol", "anchor"]);
    assert!(v.ends_with("verdict accept max 0\n"), "{v}");
    let v = run(&["pol", "verify", "--segments", "0,1", "t.pol", "anchor"]);
    assert_eq!(v.lines().count(), 3);
    let o = obfusc(&["pol", "verify", "t.pol", "other"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CommitmentMismatch"));
    let v = run(&["pol", "spoof", "--threshold", "1e-6", "t.pol", "other"]);
    assert!(v.contains("verdict reject"), "{v}");
    run(&["obfuscate", "--sigma", "1", "--seed", "1", "anchor", "d1"]);
    run(&["obfuscate", "--sigma", "1", "--seed", "2", "anchor", "d2"]);
    let mse: f64 = run(&["attack", "average", "--out", "est", "anchor", "d1", "d2"])
        .trim()
        .parse()
        .unwrap();
    assert!(mse > 0.3 && mse < 0.7, "{mse}");
    assert!(idx_paths(&dir.path().join("est")).0.exists());
}

#[test]
fn exp_run_twice_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    pool(dir.path());
    let o = obfusc(&["exp", "preset", "exp1", "exp1.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let mut c = obfusc::harness::ExperimentConfig::from_json(
        &std::fs::read_to_string(dir.path().join("exp1.json")).unwrap(),
    )
    .unwrap();
    c.data = obfusc::harness::DataSource::Stem {
        path: "pool".into(),
    };
    c.max_train = None;
    c.max_test = None;
    c.epochs = 1;
    c.batch_size = 16;
    c.sigmas = vec![0.0, 0.5];
    c.seeds = vec![1, 2];
    std::fs::write(dir.path().join("desk.json"), c.to_json()).unwrap();
    let o = obfusc(&["exp", "run", "--out", "a.csv", "desk.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = obfusc(&["exp", "run", "--out", "b.csv", "desk.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 3 * 2 * 2);
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );
    let o = obfusc(&["exp", "preset", "exp9", "x.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
