use std::path::Path;

use krauskge_core::{choi_matrix, compose_path, effective_rank, Error, DEFAULT_KAPPA_CAP};

use crate::commands::{load_model, resolve_relation};
use crate::errors::{CliError, CliResult};

pub fn run(checkpoint: &Path, relations: &str) -> CliResult<()> {
    let model = load_model(checkpoint)?;
    let tokens: Vec<&str> = relations
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(CliError::Input("no relations given".into()));
    }
    let ids: CliResult<Vec<u32>> = tokens
        .iter()
        .map(|t| resolve_relation(&model.store, t))
        .collect();
    let channels: Result<Vec<_>, _> = ids?.iter().map(|&r| model.params.channel_for(r)).collect();
    let channels = channels?;

    let composed = match compose_path(&channels, DEFAULT_KAPPA_CAP) {
        Ok(c) => c,
        Err(Error::KappaOverflow { kappa, cap }) => {
            return Err(CliError::Advisory(format!(
                "composed Kraus rank {kappa} exceeds the cap {cap}; truncate the path or raise the cap"
            )));
        }
        Err(e) => return Err(e.into()),
    };

    println!("path length       {}", tokens.len());
    println!("kappa_total       {}", composed.kappa());
    println!(
        "completeness      {:.3e}",
        composed.completeness_residual()
    );
    if composed.geometry().is_euclidean() {
        let choi = choi_matrix(&composed)?;
        let keff = effective_rank(&choi, model.config.diag_energy)?;
        println!("kappa_eff         {keff}");
    } else {
        println!("kappa_eff         n/a (non-Euclidean geometry)");
    }
    Ok(())
}
