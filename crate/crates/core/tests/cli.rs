mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{write, TINY_INI};

fn synthact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthact"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&synthact(&["--help"])), 0);
    assert_eq!(code(&synthact(&[])), 1);
    assert_eq!(code(&synthact(&["frobnicate"])), 1);
    assert_eq!(
        code(&synthact(&[
            "train",
            "--dataset",
            "d",
            "--split",
            "x",
            "--network",
            "net2",
            "--out",
            "o"
        ])),
        1
    );
    let o = synthact(&[
        "train",
        "--dataset",
        "d",
        "--split",
        "1",
        "--network",
        "net9",
        "--out",
        "o",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("net9"));
}

#[test]
fn config_errors_report_line_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    write(&cfg, "[generation]\nvideos_per_class = 3\ncolour = red\n");
    let o = synthact(&["gen", "--config", p(&cfg), "--out", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    write(&cfg, "[generation]\nwidth = wide\n");
    let o = synthact(&["gen", "--config", p(&cfg), "--out", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = synthact(&["flow", "--dataset", p(&dir.path().join("nowhere"))]);
    assert_eq!(code(&o), 2);
    let o = synthact(&[
        "eval",
        "--ckpt",
        p(&dir.path().join("x.ckpt")),
        "--dataset",
        p(dir.path()),
        "--split",
        "1",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.ini");
    write(&cfg, TINY_INI);
    let data = dir.path().join("data");
    let o = synthact(&["gen", "--config", p(&cfg), "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("36 videos, 3 classes"));

    // refuses to overwrite a populated directory
    assert_ne!(code(&synthact(&["gen", "--config", p(&cfg), "--out", p(&data)])), 0);

    let train_cfg = dir.path().join("train.ini");
    write(&train_cfg, "[train]\nepochs = 5\n");
    let ckpt = dir.path().join("net2.ckpt");
    let o = synthact(&[
        "train",
        "--dataset",
        p(&data),
        "--split",
        "2",
        "--network",
        "net2",
        "--out",
        p(&ckpt),
        "--config",
        p(&train_cfg),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(&fs::read(&ckpt).unwrap()[..4], b"TSNC");
    for stream in ["real_flow", "real_rgb", "real_syn_flow"] {
        let loss = fs::read_to_string(dir.path().join(format!("net2.{stream}.loss.csv"))).unwrap();
        let lines: Vec<&str> = loss.lines().collect();
        assert_eq!(lines[0], "epoch,loss");
        assert_eq!(lines.len(), 6);
    }

    let out = dir.path().join("eval");
    let o = synthact(&[
        "eval",
        "--ckpt",
        p(&ckpt),
        "--dataset",
        p(&data),
        "--split",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("accuracy "));
    let csv = fs::read_to_string(out.join("per_class.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "class,accuracy,test_videos");
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 3));

    let o = synthact(&[
        "train",
        "--dataset",
        p(&data),
        "--split",
        "1",
        "--network",
        "net1",
        "--out",
        p(&ckpt),
    ]);
    assert_eq!(code(&o), 1);

    // corrupt checkpoint is a data error
    fs::write(&ckpt, b"TSNC\x01").unwrap();
    assert_eq!(
        code(&synthact(&[
            "eval",
            "--ckpt",
            p(&ckpt),
            "--dataset",
            p(&data),
            "--split",
            "2"
        ])),
        2
    );

    write(&train_cfg, "[train]\nepochs = 3\nlearning_rate = 1e307\n");
    let o = synthact(&[
        "train",
        "--dataset",
        p(&data),
        "--split",
        "1",
        "--network",
        "net3",
        "--out",
        p(&ckpt),
        "--config",
        p(&train_cfg),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
