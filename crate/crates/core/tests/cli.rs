use std::fs;
use std::path::Path;

use transnet::cli::{run_with, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["transnet"];
    full.extend_from_slice(args);
    let code = run_with(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn dump(preset: &str) -> String {
    let (code, text) = run(&["dump-arch", "--preset", preset, "--input", "3x64x64"]);
    assert_eq!(code, EXIT_OK, "{text}");
    text
}

/// Parameter column of every node row, and the trailing total.
fn param_columns(table: &str) -> (Vec<usize>, usize) {
    let mut rows = Vec::new();
    let mut total = None;
    for line in table.lines() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.as_slice() {
            ["total", n] => {
                total = Some(n.parse().unwrap());
                break;
            }
            [_, _, _, n] => {
                if let Ok(n) = n.parse() {
                    rows.push(n);
                }
            }
            _ => {}
        }
    }
    (rows, total.expect("total row"))
}

#[test]
fn dump_arch_shows_three_branches() {
    let text = dump("zfnet_mini+transition");
    for k in [3, 5, 7] {
        let row = format!("transition.k{k}.conv");
        let line = text
            .lines()
            .find(|l| l.starts_with(&row))
            .unwrap_or_else(|| panic!("{text}"));
        assert!(line.contains(&format!("conv{k}x{k}/s2")), "{line}");
    }
    assert!(text.contains("first FC input 96"), "{text}");
}

#[test]
fn dump_arch_totals() {
    let (rows, total) = param_columns(&dump("alexnet_mini+transition"));
    assert_eq!(rows.iter().sum::<usize>(), total);
    let (_, baseline) = param_columns(&dump("alexnet_mini+baseline"));
    let (_, dropout) = param_columns(&dump("alexnet_mini+dropout"));
    assert_eq!(baseline, dropout);
    assert_eq!(run(&["dump-arch", "--preset", "vgg16"]).0, EXIT_CONFIG);
}

#[test]
fn nogap_widens_first_fc() {
    let gap = dump("alexnet_mini+transition");
    let nogap = dump("alexnet_mini+transition_nogap");
    // 64 -> 32 -> 16 -> 8 through the pools, 4x4 after the stride-2 branches.
    assert!(gap.contains("first FC input 48"), "{gap}");
    assert!(
        nogap.contains(&format!("first FC input {}", 48 * 16)),
        "{nogap}"
    );
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn train_writes_fold_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, log) = run(&[
        "train",
        "--preset",
        "alexnet_mini",
        "--variant",
        "transition",
        "--synth",
        "n=20,size=32",
        "--k",
        "2",
        "--epochs",
        "5",
        "--lr",
        "0.01",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{log}");
    for fold in 0..2 {
        assert_eq!(csv_rows(&out.join(format!("fold{fold}_history.csv"))), 5);
        assert!(out.join(format!("fold{fold}_roc.csv")).is_file());
        assert!(out
            .join(format!("fold{fold}_checkpoint/index.txt"))
            .is_file());
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("fold,accuracy,auc\n0,"));
    assert!(summary.lines().last().unwrap().starts_with("mean,"));
    let history = fs::read_to_string(out.join("fold0_history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
}

#[test]
fn config_file_and_manifest_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (code, _) = run(&[
        "synth",
        "--n",
        "12",
        "--size",
        "16",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "# desk settings\npreset = zfnet_mini+transition\ndata = {}\nk = 3\nepochs = 9\nlr = 0.01\n",
            data.join("manifest.csv").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let (code, log) = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{log}");
    assert!(log.contains("12 samples of (1,1,16,16)"), "{log}");
    assert_eq!(csv_rows(&out.join("summary.csv")), 4);
    // The flag overrides the file's 9 epochs.
    assert_eq!(csv_rows(&out.join("fold2_history.csv")), 2);
}

#[test]
fn config_and_data_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(
        run(&[
            "train",
            "--synth",
            "n=20",
            "--out",
            out,
            "--momentum",
            "1.5"
        ])
        .0,
        EXIT_CONFIG
    );
    assert_eq!(
        run(&["train", "--data", "/nonexistent/m.csv", "--out", out]).0,
        EXIT_CONFIG
    );
    assert_eq!(
        run(&["train", "--synth", "n=20", "--out", out, "--k", "50"]).0,
        EXIT_CONFIG
    );
    assert_eq!(
        run(&[
            "train",
            "--synth",
            "n=20",
            "--variant",
            "bogus",
            "--out",
            out
        ])
        .0,
        EXIT_CONFIG
    );
    assert_eq!(
        run(&["compare", "--synth", "n=20", "--out", out, "--grouped"]).0,
        EXIT_CONFIG
    );
}

#[test]
fn gradcheck_exit_codes() {
    let (code, text) = run(&["gradcheck"]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.lines().filter(|l| l.contains(" layer ")).count() >= 9);
    let (code, text) = run(&["gradcheck", "--corrupt", "conv2d"]);
    assert_eq!(code, EXIT_VERIFY);
    assert!(
        text.lines().any(|l| l.starts_with("FAIL layer conv2d")),
        "{text}"
    );
}
