//! Flat key=value configuration files.
//!
//! Keys: data.train, data.valid, data.test, model.d, model.kappa,
//! model.k0, model.geometry, train.gamma, train.alpha, train.lr,
//! train.batch, train.negatives, train.epochs, train.patience, train.seed,
//! diag.energy (optional, default 0.99).
//!
//! Geometry values: `euclidean`, `hyperbolic`, `elliptic:<w-file>` (one
//! positive weight per line, d entries), or `product:<blocks>` where
//! blocks are `+`-joined items `e<N>` / `h<N>` summing to d.
//!
//! Unknown keys are rejected, and all referenced paths must exist at parse
//! time.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use krauskge_core::train::TrainConfig;
use krauskge_core::{Geometry, GeometryBlock};

use crate::errors::{CliError, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "data.train",
    "data.valid",
    "data.test",
    "model.d",
    "model.kappa",
    "model.k0",
    "model.geometry",
    "train.gamma",
    "train.alpha",
    "train.lr",
    "train.batch",
    "train.negatives",
    "train.epochs",
    "train.patience",
    "train.seed",
    "diag.energy",
];

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub train_path: PathBuf,
    pub valid_path: PathBuf,
    pub test_path: PathBuf,
    pub d: usize,
    pub kappa: usize,
    pub k0: usize,
    pub geometry: Geometry,
    pub gamma: f64,
    pub alpha: f64,
    pub lr: f64,
    pub batch: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub diag_energy: f64,
    /// Verbatim config text, echoed into checkpoints.
    pub raw_text: String,
}

impl CliConfig {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            d: self.d,
            kappa: self.kappa,
            k0: self.k0,
            gamma: self.gamma,
            alpha: self.alpha,
            lr: self.lr,
            batch_size: self.batch,
            negatives_per_positive: self.negatives,
            max_epochs: self.epochs,
            patience: self.patience,
            geometry: self.geometry.clone(),
            seed: self.seed,
            adam_betas: (0.9, 0.999),
            grad_check_interval: 0,
        }
    }
}

pub fn parse_config_file(path: &Path) -> CliResult<CliConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parse config text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> CliResult<CliConfig> {
    let mut map: HashMap<String, String> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Input(format!(
                "config line {}: expected key=value, got '{raw}'",
                i + 1
            )));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Input(format!(
                "config line {}: unknown key '{key}'",
                i + 1
            )));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Input(format!(
                "config line {}: duplicate key '{key}'",
                i + 1
            )));
        }
    }

    let get = |key: &str| -> CliResult<&String> {
        map.get(key)
            .ok_or_else(|| CliError::Input(format!("config is missing required key '{key}'")))
    };
    let parse_usize = |key: &str| -> CliResult<usize> {
        get(key)?
            .parse()
            .map_err(|_| CliError::Input(format!("config key '{key}' must be a non-negative integer")))
    };
    let parse_f64 = |key: &str| -> CliResult<f64> {
        get(key)?
            .parse()
            .map_err(|_| CliError::Input(format!("config key '{key}' must be a number")))
    };
    let resolve_path = |key: &str| -> CliResult<PathBuf> {
        let raw = get(key)?;
        let p = base.join(raw);
        if !p.exists() {
            return Err(CliError::Input(format!(
                "config key '{key}': path {} does not exist",
                p.display()
            )));
        }
        // Absolutize so the checkpoint's config echo stays loadable from
        // any working directory.
        p.canonicalize().map_err(|e| {
            CliError::Input(format!("config key '{key}': cannot resolve {}: {e}", p.display()))
        })
    };

    let d: usize = parse_usize("model.d")?;
    let geometry = parse_geometry(get("model.geometry")?, d, base)?;

    Ok(CliConfig {
        train_path: resolve_path("data.train")?,
        valid_path: resolve_path("data.valid")?,
        test_path: resolve_path("data.test")?,
        d,
        kappa: parse_usize("model.kappa")?,
        k0: parse_usize("model.k0")?,
        geometry,
        gamma: parse_f64("train.gamma")?,
        alpha: parse_f64("train.alpha")?,
        lr: parse_f64("train.lr")?,
        batch: parse_usize("train.batch")?,
        negatives: parse_usize("train.negatives")?,
        epochs: parse_usize("train.epochs")?,
        patience: parse_usize("train.patience")?,
        seed: parse_usize("train.seed")? as u64,
        diag_energy: match map.get("diag.energy") {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Input("diag.energy must be a number".into()))?,
            None => 0.99,
        },
        raw_text: text.to_string(),
    })
}

fn parse_geometry(spec: &str, d: usize, base: &Path) -> CliResult<Geometry> {
    if spec == "euclidean" {
        return Ok(Geometry::euclidean(d));
    }
    if spec == "hyperbolic" {
        return Ok(Geometry::hyperbolic(d));
    }
    if let Some(w_file) = spec.strip_prefix("elliptic:") {
        let p = base.join(w_file);
        let text = std::fs::read_to_string(&p).map_err(|e| {
            CliError::Input(format!("cannot read weight file {}: {e}", p.display()))
        })?;
        let w: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse).collect();
        let w = w.map_err(|_| CliError::Input(format!("bad weight in {}", p.display())))?;
        if w.len() != d {
            return Err(CliError::Input(format!(
                "weight file {} has {} entries, model.d = {d}",
                p.display(),
                w.len()
            )));
        }
        return Geometry::elliptic(w).map_err(|e| CliError::Input(e.to_string()));
    }
    if let Some(blocks) = spec.strip_prefix("product:") {
        let mut parsed = Vec::new();
        for item in blocks.split('+') {
            let (kind, dim) = item.split_at(1);
            let dim: usize = dim
                .parse()
                .map_err(|_| CliError::Input(format!("bad product block '{item}'")))?;
            match kind {
                "e" => parsed.push(GeometryBlock::Euclidean(dim)),
                "h" => parsed.push(GeometryBlock::Hyperbolic(dim)),
                _ => {
                    return Err(CliError::Input(format!(
                        "product block '{item}' must start with e or h"
                    )))
                }
            }
        }
        let g = Geometry::product(parsed).map_err(|e| CliError::Input(e.to_string()))?;
        if g.dim() != d {
            return Err(CliError::Input(format!(
                "product blocks sum to {}, model.d = {d}",
                g.dim()
            )));
        }
        return Ok(g);
    }
    Err(CliError::Input(format!(
        "unknown geometry '{spec}' (expected euclidean | elliptic:<w-file> | hyperbolic | product:<blocks>)"
    )))
}
