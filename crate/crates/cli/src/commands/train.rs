use std::io::Write;
use std::path::{Path, PathBuf};

use krauskge_core::{train, TripleStore};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_config_file, CliConfig};
use crate::errors::{CliError, CliResult};

/// Render a normalized config (absolute paths, fixed key order) for the
/// checkpoint echo, so the checkpoint is loadable from any directory.
fn render_config(cfg: &CliConfig, geometry_spec: &str) -> String {
    format!(
        "data.train={}\ndata.valid={}\ndata.test={}\n\
         model.d={}\nmodel.kappa={}\nmodel.k0={}\nmodel.geometry={}\n\
         train.gamma={}\ntrain.alpha={}\ntrain.lr={}\ntrain.batch={}\n\
         train.negatives={}\ntrain.epochs={}\ntrain.patience={}\ntrain.seed={}\n\
         diag.energy={}\n",
        cfg.train_path.display(),
        cfg.valid_path.display(),
        cfg.test_path.display(),
        cfg.d,
        cfg.kappa,
        cfg.k0,
        geometry_spec,
        cfg.gamma,
        cfg.alpha,
        cfg.lr,
        cfg.batch,
        cfg.negatives,
        cfg.epochs,
        cfg.patience,
        cfg.seed,
        cfg.diag_energy,
    )
}

/// Reconstruct the geometry spec string with an absolutized weight-file
/// path (parsing already checked it exists).
fn geometry_spec_from_raw(cfg: &CliConfig, config_dir: &Path) -> String {
    for line in cfg.raw_text.lines() {
        let line = line.trim();
        if let Some(value) = line.strip_prefix("model.geometry=") {
            let value = value.trim();
            if let Some(w_file) = value.strip_prefix("elliptic:") {
                let joined = config_dir.join(w_file);
                let resolved = joined.canonicalize().unwrap_or(joined);
                return format!("elliptic:{}", resolved.display());
            }
            return value.to_string();
        }
    }
    "euclidean".to_string()
}

pub fn run(config_path: &Path, out: &Path, log: Option<&PathBuf>) -> CliResult<()> {
    let cfg = parse_config_file(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let store = TripleStore::load(&cfg.train_path, &cfg.valid_path, &cfg.test_path)?;
    let dup = store.duplicate_warnings;
    if dup.iter().any(|&c| c > 0) {
        eprintln!(
            "warning: dropped duplicate triples (train {}, valid {}, test {})",
            dup[0], dup[1], dup[2]
        );
    }
    println!(
        "loaded {} entities, {} relations, {}/{}/{} triples",
        store.n_entities(),
        store.n_relations(),
        store.triples(krauskge_core::Split::Train).len(),
        store.triples(krauskge_core::Split::Valid).len(),
        store.triples(krauskge_core::Split::Test).len()
    );

    let outcome = train(&store, cfg.to_train_config())?;

    if let Some(log_path) = log {
        let mut f = std::fs::File::create(log_path)?;
        for record in &outcome.history {
            let line = serde_json::to_string(record)
                .map_err(|e| CliError::Input(format!("cannot serialize log record: {e}")))?;
            writeln!(f, "{line}")?;
        }
    }

    let geometry_spec = geometry_spec_from_raw(&cfg, config_dir);
    let echo = render_config(&cfg, &geometry_spec);
    let checkpoint = Checkpoint::from_outcome(&echo, &outcome);
    checkpoint.save(out)?;

    println!(
        "trained {} epochs; best validation MRR {:.4} at epoch {}; checkpoint written to {}",
        outcome.history.len(),
        outcome.best_val_mrr,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}
