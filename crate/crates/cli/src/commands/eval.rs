use std::io::Write;
use std::path::{Path, PathBuf};

use krauskge_core::{metrics, Evaluator, MetricsReport, RankKind, Split};

use crate::commands::load_model;
use crate::errors::{CliError, CliResult};

fn print_row(label: &str, m: &MetricsReport) {
    println!(
        "{label:<10} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        m.count, m.mrr, m.hits1, m.hits3, m.hits10
    );
}

fn record(label: &str, m: &MetricsReport) -> serde_json::Value {
    serde_json::json!({
        "bucket": label,
        "count": m.count,
        "mrr": m.mrr,
        "hits1": m.hits1,
        "hits3": m.hits3,
        "hits10": m.hits10,
    })
}

pub fn run(
    checkpoint: &Path,
    split: &str,
    stratify: bool,
    raw: bool,
    json: Option<&PathBuf>,
) -> CliResult<()> {
    let split = match split {
        "train" => Split::Train,
        "valid" => Split::Valid,
        "test" => Split::Test,
        other => return Err(CliError::Input(format!("unknown split '{other}'"))),
    };
    let kind = if raw { RankKind::Raw } else { RankKind::Filtered };
    let model = load_model(checkpoint)?;
    println!(
        "checkpoint: {} epochs run, best validation MRR {:.4} at epoch {}",
        model.checkpoint.epochs_run, model.checkpoint.best_val_mrr, model.checkpoint.best_epoch
    );
    let evaluator = Evaluator::new(&model.params, &model.store)?;

    let mut records = Vec::new();
    println!(
        "{:<10} {:>7} {:>8} {:>8} {:>8} {:>8}",
        "bucket", "count", "mrr", "h@1", "h@3", "h@10"
    );
    if stratify {
        let report = evaluator.stratified_eval(split, kind)?;
        print_row("all", &report);
        records.push(record("all", &report));
        if let Some(per_pattern) = &report.per_pattern {
            for (pattern, m) in per_pattern {
                let label = pattern.to_string();
                print_row(&label, m);
                records.push(record(&label, m));
            }
        }
    } else {
        let ranks = evaluator.evaluate_split(split)?;
        let report = metrics(&ranks, kind)?;
        print_row("all", &report);
        records.push(record("all", &report));
    }
    if let Some(path) = json {
        let mut f = std::fs::File::create(path)?;
        for r in &records {
            writeln!(f, "{r}")?;
        }
        println!("records written to {}", path.display());
    }
    Ok(())
}
