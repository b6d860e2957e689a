pub mod compose;
pub mod diagnose;
pub mod eval;
pub mod recover;
pub mod train;
pub mod verify;

use std::path::Path;

use krauskge_core::train::ModelParams;
use krauskge_core::TripleStore;

use crate::checkpoint::Checkpoint;
use crate::config::{parse_config_str, CliConfig};
use crate::errors::{CliError, CliResult};

/// Everything a post-training command needs.
pub struct LoadedModel {
    pub config: CliConfig,
    pub store: TripleStore,
    pub params: ModelParams,
    pub checkpoint: Checkpoint,
}

/// Load a checkpoint, reparse its config echo (paths were absolutized at
/// training time), reload the dataset and rebuild the parameters.
pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let checkpoint = Checkpoint::load(path)?;
    let config = parse_config_str(&checkpoint.config_echo, Path::new("/"))?;
    if config.geometry != checkpoint.geometry {
        return Err(CliError::Input(
            "checkpoint geometry disagrees with its config echo".into(),
        ));
    }
    let store = TripleStore::load(&config.train_path, &config.valid_path, &config.test_path)?;
    if store.n_entities() != checkpoint.entities.len()
        || store.n_relations() != checkpoint.relations.len()
    {
        return Err(CliError::Input(format!(
            "dataset has {} entities / {} relations but checkpoint stores {} / {}",
            store.n_entities(),
            store.n_relations(),
            checkpoint.entities.len(),
            checkpoint.relations.len()
        )));
    }
    let params = checkpoint.to_model_params(config.to_train_config())?;
    Ok(LoadedModel {
        config,
        store,
        params,
        checkpoint,
    })
}

/// Resolve a relation given either its vocabulary name or a numeric id.
pub fn resolve_relation(store: &TripleStore, token: &str) -> CliResult<u32> {
    if let Some(id) = store.relations.id(token) {
        return Ok(id);
    }
    if let Ok(id) = token.parse::<u32>() {
        if (id as usize) < store.n_relations() {
            return Ok(id);
        }
    }
    Err(CliError::Input(format!("unknown relation '{token}'")))
}
