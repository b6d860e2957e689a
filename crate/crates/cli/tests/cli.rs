//! End-to-end runs of the binary: train/eval/diagnose/compose/verify with
//! real files in a temp directory, checking outputs and exit codes.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use krauskge_core::data::{split_triples, synth_relation, SynthKind};

fn krauskge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_krauskge"))
}

/// Two-relation fixture: one near-bijective relation and one block N-N
/// relation, written as TSV splits plus a config file.
fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let mut triples = synth_relation(SynthKind::Permutation { n: 14 }, "maps_to", "a_", 11).unwrap();
    triples.extend(
        synth_relation(
            SynthKind::HighRank {
                blocks: 3,
                heads_per_block: 2,
                tails_per_block: 3,
            },
            "member_of",
            "b_",
            12,
        )
        .unwrap(),
    );
    let (train, valid, test) = split_triples(triples, 0.12, 0.12, 13);
    let write = |name: &str, rows: &[(String, String, String)]| {
        let body: String = rows
            .iter()
            .map(|(h, r, t)| format!("{h}\t{r}\t{t}\n"))
            .collect();
        std::fs::write(dir.join(name), body).unwrap();
    };
    write("train.txt", &train);
    write("valid.txt", &valid);
    write("test.txt", &test);

    let config = "\
# smoke fixture
data.train=train.txt
data.valid=valid.txt
data.test=test.txt
model.d=6
model.kappa=2
model.k0=2
model.geometry=euclidean
train.gamma=0.5
train.alpha=1.0
train.lr=0.01
train.batch=32
train.negatives=4
train.epochs=12
train.patience=12
train.seed=3
diag.energy=0.99
";
    let cfg_path = dir.join("smoke.cfg");
    std::fs::write(&cfg_path, config).unwrap();
    cfg_path
}

#[test]
fn train_eval_diagnose_compose_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path());
    let ckpt = dir.path().join("model.ckpt");
    let log = dir.path().join("train.jsonl");

    let start = Instant::now();
    let out = krauskge()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ckpt)
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(start.elapsed().as_secs() < 60, "training smoke exceeded 60 s");
    assert!(ckpt.exists());

    // Log is JSON lines with the required fields.
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().count(), 12);
    for line in log_text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "epoch",
            "train_loss",
            "val_mrr",
            "grad_norm",
            "max_completeness_residual",
        ] {
            assert!(v.get(key).is_some(), "log record missing {key}");
        }
        assert!(v["max_completeness_residual"].as_f64().unwrap() <= 1e-9);
    }

    // Same seed twice: byte-identical checkpoints.
    let ckpt2 = dir.path().join("model2.ckpt");
    let out = krauskge()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ckpt2)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&ckpt).unwrap(),
        std::fs::read(&ckpt2).unwrap(),
        "checkpoints are not byte-identical across identical runs"
    );

    // Eval: filtered and raw, hits columns monotone, raw MRR <= filtered.
    let parse_all_row = |stdout: &str| -> Vec<f64> {
        let line = stdout
            .lines()
            .find(|l| l.starts_with("all"))
            .expect("no 'all' row");
        line.split_whitespace()
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let json_path = dir.path().join("metrics.jsonl");
    let out = krauskge()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--split", "test", "--stratify", "--json"])
        .arg(&json_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let filtered = parse_all_row(&stdout);
    let (h1, h3, h10) = (filtered[2], filtered[3], filtered[4]);
    assert!(h1 <= h3 && h3 <= h10, "hits not monotone: {stdout}");
    // One structured record per bucket; "all" plus at least one pattern.
    let json_text = std::fs::read_to_string(&json_path).unwrap();
    let buckets: Vec<serde_json::Value> = json_text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(buckets.len() >= 2);
    assert_eq!(buckets[0]["bucket"], "all");
    // The table rounds to 4 decimals; the JSON record carries full precision.
    assert!((buckets[0]["mrr"].as_f64().unwrap() - filtered[1]).abs() < 5e-5);

    let out = krauskge()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--split", "test", "--raw"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let raw = parse_all_row(&String::from_utf8(out.stdout).unwrap());
    assert!(
        raw[1] <= filtered[1] + 1e-12,
        "raw MRR {} exceeds filtered {}",
        raw[1],
        filtered[1]
    );

    // Diagnose: TSV parses, kappa_eff bounded by configured kappa.
    let tsv_path = dir.path().join("diag.tsv");
    let out = krauskge()
        .args(["diagnose", "--checkpoint"])
        .arg(&ckpt)
        .arg("--out")
        .arg(&tsv_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "diagnose failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let tsv = std::fs::read_to_string(&tsv_path).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "relation\tF\tkappa_eff\tm_rank\tbound\tbound_satisfied"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 6);
        let kappa_eff: usize = fields[2].parse().unwrap();
        assert!(kappa_eff <= 2, "kappa_eff {kappa_eff} exceeds configured kappa");
        rows += 1;
    }
    assert_eq!(rows, 2);
    // Deterministic given the checkpoint.
    let out2 = krauskge()
        .args(["diagnose", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    let out3 = krauskge()
        .args(["diagnose", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(out2.stdout, out3.stdout);

    // Compose: two relations -> kappa^2, residual tiny.
    let out = krauskge()
        .args(["compose", "--checkpoint"])
        .arg(&ckpt)
        .args(["--relations", "maps_to,member_of"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kappa_total       4"), "{stdout}");
    let residual: f64 = stdout
        .lines()
        .find(|l| l.starts_with("completeness"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-8);

    // Overflow chain: kappa = 2 per hop, 13 hops -> 8192 > 4096, exit 3.
    let chain = vec!["maps_to"; 13].join(",");
    let out = krauskge()
        .args(["compose", "--checkpoint"])
        .arg(&ckpt)
        .args(["--relations", &chain])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "overflow should exit 3");
}

#[test]
fn relative_config_paths_survive_into_the_checkpoint() {
    // Invoke with a relative --config from inside the fixture directory;
    // the checkpoint echo must still be loadable from anywhere.
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = krauskge()
        .current_dir(dir.path())
        .args(["train", "--config", "smoke.cfg", "--out", "rel.ckpt"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Evaluate from a different working directory.
    let out = krauskge()
        .current_dir(std::env::temp_dir())
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("rel.ckpt"))
        .args(["--split", "valid"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_file_in_config_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "data.train=nope.txt\ndata.valid=nope.txt\ndata.test=nope.txt\n\
         model.d=4\nmodel.kappa=1\nmodel.k0=2\nmodel.geometry=euclidean\n\
         train.gamma=0.5\ntrain.alpha=1.0\ntrain.lr=0.01\ntrain.batch=8\n\
         train.negatives=2\ntrain.epochs=1\ntrain.patience=1\ntrain.seed=1\n",
    )
    .unwrap();
    let out = krauskge()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--out", "x.ckpt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("nope.txt"), "stderr lacks the path: {stderr}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    std::fs::write(&cfg, "model.dee=4\n").unwrap();
    let out = krauskge()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--out", "x.ckpt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_and_fault_injection_fails() {
    let start = Instant::now();
    let out = krauskge().args(["verify", "--seed", "7"]).output().unwrap();
    assert!(
        out.status.success(),
        "verify failed: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(start.elapsed().as_secs() < 120);

    let out = krauskge()
        .args(["verify", "--seed", "7", "--inject-fault"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "fault injection must exit 1");
}

#[test]
fn recover_reports_and_rejects() {
    for model in ["rescal", "distmult", "rotate", "golde"] {
        let out = krauskge()
            .args(["recover", "--model", model])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "recover {model} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8(out.stdout).unwrap();
        let dev: f64 = stdout
            .lines()
            .find(|l| l.starts_with("max score deviation"))
            .and_then(|l| l.split_whitespace().last())
            .unwrap()
            .parse()
            .unwrap();
        assert!(dev <= 1e-10);
    }
    let out = krauskge()
        .args(["recover", "--model", "transe"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = krauskge()
        .args(["recover", "--model", "conve"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
