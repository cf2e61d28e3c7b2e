use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gfdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfdetect"))
        .args(args)
        .output()
        .expect("spawn gfdetect")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn quick_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("quick.cfg");
    fs::write(
        &path,
        format!(
            "# tiny run\nsize = 300\nsnr = 3\nnn_epochs = 2\nrf_trees = 3\nout = {}\n{extra}",
            dir.join("runs").display()
        ),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn gen_train_eval_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "detector = corr,nn,rf\n");
    for step in ["gen", "train", "eval"] {
        let out = gfdetect(&[step, "--config", &cfg]);
        assert!(out.status.success(), "{step}: {}", stderr(&out));
    }
    let cell = dir.path().join("runs/awgn_3db_binary");
    let header = fs::read_to_string(cell.join("train.csv")).unwrap();
    assert!(header.starts_with(
        "f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,f14,f15,f16,label,window_id,offset\n"
    ));
    assert!(fs::read_to_string(cell.join("roc-corr.csv"))
        .unwrap()
        .starts_with("threshold,pd,pfa\n"));
    let report = fs::read_to_string(cell.join("report-nn.json")).unwrap();
    assert!(report.contains("\"accuracy\"") && report.contains("\"confusion\""));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub).display().to_string();
        let out = gfdetect(&[
            "gen",
            "--scenario",
            "interference",
            "--snr",
            "0",
            "--size",
            "200",
            "--seed-train",
            "5",
            "--seed-test",
            "6",
            "--out",
            &out_dir,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["train.csv", "test.csv", "train.meta.json"] {
        let a = fs::read(dir.path().join("a/interference_0db_binary").join(f)).unwrap();
        let b = fs::read(dir.path().join("b/interference_0db_binary").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn negative_snr_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let out = gfdetect(&["gen", "--snr", "-2", "--size", "50", "--out", &out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("awgn_-2db_binary/test.csv").exists());
}

#[test]
fn rejects_zero_size_and_equal_seeds() {
    let out = gfdetect(&["gen", "--size", "0", "--out", "/nonexistent"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("size"), "{}", stderr(&out));

    let out = gfdetect(&[
        "gen",
        "--seed-train",
        "4",
        "--seed-test",
        "4",
        "--out",
        "/nonexistent",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("seeds must differ"));
}

#[test]
fn unknown_repro_id_lists_valid_ids() {
    let out = gfdetect(&["repro", "fig7"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    for id in ["fig3", "table2", "fig4", "table3"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "learning = fast\n");
    let out = gfdetect(&["gen", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("unknown key `learning`"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn scheme_mismatch_is_a_named_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "detector = rf\n");
    for step in ["gen", "train"] {
        assert!(gfdetect(&[step, "--config", &cfg, "--scheme", "awgn6"])
            .status
            .success());
    }
    assert!(gfdetect(&["gen", "--config", &cfg]).status.success());
    let runs = dir.path().join("runs");
    fs::copy(
        runs.join("awgn_3db_awgn6/rf.json"),
        runs.join("awgn_3db_binary/rf.json"),
    )
    .unwrap();
    let out = gfdetect(&["eval", "--config", &cfg]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("awgn6") && err.contains("binary"), "{err}");
}

#[test]
fn eval_without_models_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "detector = nn\n");
    assert!(gfdetect(&["gen", "--config", &cfg]).status.success());
    let out = gfdetect(&["eval", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run `train` first"));
}
