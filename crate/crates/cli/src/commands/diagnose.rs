use std::io::Write;
use std::path::{Path, PathBuf};

use krauskge_core::eval::DiagnosticRow;
use krauskge_core::{Error, Evaluator};

use crate::commands::load_model;
use crate::errors::CliResult;

fn render_table(rows: &[DiagnosticRow], store: &krauskge_core::TripleStore) -> String {
    let mut table = String::from("relation\tF\tkappa_eff\tm_rank\tbound\tbound_satisfied\n");
    for row in rows {
        table.push_str(&format!(
            "{}\t{:.3}\t{}\t{}\t{}\t{}\n",
            store.relations.name(row.relation),
            row.fanout,
            row.kappa_eff,
            row.m_rank,
            row.bound,
            row.bound_satisfied
        ));
    }
    table
}

pub fn run(checkpoint: &Path, out: Option<&PathBuf>) -> CliResult<()> {
    let model = load_model(checkpoint)?;
    let evaluator = Evaluator::new(&model.params, &model.store)?;
    let rows = evaluator.diagnostic_rows(model.config.diag_energy)?;

    let table = render_table(&rows, &model.store);
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(table.as_bytes())?;
            println!("per-relation table written to {}", path.display());
        }
        None => print!("{table}"),
    }

    let satisfied = rows.iter().filter(|r| r.bound_satisfied).count();
    println!("bound satisfied for {}/{} relations", satisfied, rows.len());

    match evaluator.kappa_fanout_correlation(model.config.diag_energy) {
        Ok(report) if report.degenerate => {
            println!("spearman rho: undefined (a column is constant)");
        }
        Ok(report) => println!("spearman rho(F, kappa_eff) = {:.4}", report.rho),
        Err(Error::TooFewRelations(n)) => {
            println!("spearman rho: skipped ({n} relations, need 3)");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
