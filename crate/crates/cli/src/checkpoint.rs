//! Binary checkpoint format.
//!
//! Layout (all integers u64 little-endian, all floats f64 little-endian):
//!
//! ```text
//! magic "KRAUSKGE1"
//! d, kappa, k0
//! geometry: u8 tag (0 euclidean, 1 elliptic, 2 hyperbolic, 3 product)
//!   euclidean/hyperbolic: dim
//!   elliptic: dim, then dim weights
//!   product: n_blocks, then per block u8 tag + dim (+ weights if elliptic)
//! n_entities, n_relations, seed
//! per entity: id, k_e, then d*k_e factor entries (row-major)
//! per relation: id, n_free, then free skew entries (row-major lower)
//! footer: config echo (len + UTF-8), epochs_run, best_epoch, best_val_mrr
//! ```
//!
//! The round trip is bitwise exact: floats are stored by bit pattern.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use krauskge_core::train::{ModelParams, TrainConfig, TrainOutcome};
use krauskge_core::{EntityParam, Geometry, GeometryBlock, SkewParam};

use crate::errors::{CliError, CliResult};

const MAGIC: &[u8; 9] = b"KRAUSKGE1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub d: usize,
    pub kappa: usize,
    pub k0: usize,
    pub geometry: Geometry,
    pub seed: u64,
    pub entities: Vec<(u32, DMatrix<f64>)>,
    pub relations: Vec<(u32, Vec<f64>)>,
    pub config_echo: String,
    pub epochs_run: u64,
    pub best_epoch: u64,
    pub best_val_mrr: f64,
}

impl Checkpoint {
    pub fn from_outcome(config_echo: &str, outcome: &TrainOutcome) -> Self {
        let cfg = &outcome.params.config;
        Checkpoint {
            d: cfg.d,
            kappa: cfg.kappa,
            k0: cfg.k0,
            geometry: cfg.geometry.clone(),
            seed: cfg.seed,
            entities: outcome
                .params
                .entities
                .iter()
                .map(|e| (e.entity_id, e.factor().clone()))
                .collect(),
            relations: outcome
                .params
                .relations
                .iter()
                .enumerate()
                .map(|(i, r)| (i as u32, r.free().to_vec()))
                .collect(),
            config_echo: config_echo.to_string(),
            epochs_run: outcome.history.len() as u64,
            best_epoch: outcome.best_epoch as u64,
            best_val_mrr: outcome.best_val_mrr,
        }
    }

    /// Rebuild model parameters; entity/relation ids must be dense.
    pub fn to_model_params(&self, config: TrainConfig) -> CliResult<ModelParams> {
        let mut entities = Vec::with_capacity(self.entities.len());
        for (i, (id, factor)) in self.entities.iter().enumerate() {
            if *id as usize != i {
                return Err(CliError::Input(format!(
                    "checkpoint entity ids not dense at index {i}"
                )));
            }
            entities.push(EntityParam::new(*id, factor.clone()));
        }
        let mut relations = Vec::with_capacity(self.relations.len());
        let n = self.kappa * self.d;
        for (i, (id, free)) in self.relations.iter().enumerate() {
            if *id as usize != i {
                return Err(CliError::Input(format!(
                    "checkpoint relation ids not dense at index {i}"
                )));
            }
            relations.push(
                SkewParam::from_free(n, free.clone())
                    .map_err(|e| CliError::Input(e.to_string()))?,
            );
        }
        Ok(ModelParams {
            entities,
            relations,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        write_u64(&mut w, self.d as u64)?;
        write_u64(&mut w, self.kappa as u64)?;
        write_u64(&mut w, self.k0 as u64)?;
        write_geometry(&mut w, &self.geometry)?;
        write_u64(&mut w, self.entities.len() as u64)?;
        write_u64(&mut w, self.relations.len() as u64)?;
        write_u64(&mut w, self.seed)?;
        for (id, factor) in &self.entities {
            write_u64(&mut w, *id as u64)?;
            write_u64(&mut w, factor.ncols() as u64)?;
            if factor.nrows() != self.d {
                return Err(CliError::Input(format!(
                    "entity {id} factor has {} rows, expected {}",
                    factor.nrows(),
                    self.d
                )));
            }
            for i in 0..factor.nrows() {
                for j in 0..factor.ncols() {
                    write_f64(&mut w, factor[(i, j)])?;
                }
            }
        }
        for (id, free) in &self.relations {
            write_u64(&mut w, *id as u64)?;
            write_u64(&mut w, free.len() as u64)?;
            for v in free {
                write_f64(&mut w, *v)?;
            }
        }
        let echo = self.config_echo.as_bytes();
        write_u64(&mut w, echo.len() as u64)?;
        w.write_all(echo)?;
        write_u64(&mut w, self.epochs_run)?;
        write_u64(&mut w, self.best_epoch)?;
        write_f64(&mut w, self.best_val_mrr)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Input(format!("cannot open checkpoint {}: {e}", path.display())))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CliError::Input(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let d = read_u64(&mut r)? as usize;
        let kappa = read_u64(&mut r)? as usize;
        let k0 = read_u64(&mut r)? as usize;
        let geometry = read_geometry(&mut r)?;
        let n_entities = read_u64(&mut r)? as usize;
        let n_relations = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        if geometry.dim() != d {
            return Err(CliError::Input(
                "checkpoint geometry dimension disagrees with header".into(),
            ));
        }
        let mut entities = Vec::with_capacity(n_entities);
        for _ in 0..n_entities {
            let id = read_u64(&mut r)? as u32;
            let k = read_u64(&mut r)? as usize;
            if !(1..=d).contains(&k) {
                return Err(CliError::Input(format!("entity {id} has invalid rank {k}")));
            }
            let mut factor = DMatrix::zeros(d, k);
            for i in 0..d {
                for j in 0..k {
                    factor[(i, j)] = read_f64(&mut r)?;
                }
            }
            entities.push((id, factor));
        }
        let n_free = kappa * d * (kappa * d - 1) / 2;
        let mut relations = Vec::with_capacity(n_relations);
        for _ in 0..n_relations {
            let id = read_u64(&mut r)? as u32;
            let len = read_u64(&mut r)? as usize;
            if len != n_free {
                return Err(CliError::Input(format!(
                    "relation {id} has {len} skew entries, expected {n_free}"
                )));
            }
            let mut free = Vec::with_capacity(len);
            for _ in 0..len {
                free.push(read_f64(&mut r)?);
            }
            relations.push((id, free));
        }
        let echo_len = read_u64(&mut r)? as usize;
        let mut echo = vec![0u8; echo_len];
        r.read_exact(&mut echo)?;
        let config_echo = String::from_utf8(echo)
            .map_err(|_| CliError::Input("checkpoint config echo is not UTF-8".into()))?;
        let epochs_run = read_u64(&mut r)?;
        let best_epoch = read_u64(&mut r)?;
        let best_val_mrr = read_f64(&mut r)?;
        Ok(Checkpoint {
            d,
            kappa,
            k0,
            geometry,
            seed,
            entities,
            relations,
            config_echo,
            epochs_run,
            best_epoch,
            best_val_mrr,
        })
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

const TAG_EUCLIDEAN: u8 = 0;
const TAG_ELLIPTIC: u8 = 1;
const TAG_HYPERBOLIC: u8 = 2;
const TAG_PRODUCT: u8 = 3;

fn write_geometry(w: &mut impl Write, g: &Geometry) -> std::io::Result<()> {
    match g {
        Geometry::Euclidean { dim } => {
            w.write_all(&[TAG_EUCLIDEAN])?;
            write_u64(w, *dim as u64)
        }
        Geometry::Hyperbolic { dim } => {
            w.write_all(&[TAG_HYPERBOLIC])?;
            write_u64(w, *dim as u64)
        }
        Geometry::Elliptic { w: weights } => {
            w.write_all(&[TAG_ELLIPTIC])?;
            write_u64(w, weights.len() as u64)?;
            for v in weights {
                write_f64(w, *v)?;
            }
            Ok(())
        }
        Geometry::Product { blocks } => {
            w.write_all(&[TAG_PRODUCT])?;
            write_u64(w, blocks.len() as u64)?;
            for b in blocks {
                match b {
                    GeometryBlock::Euclidean(dim) => {
                        w.write_all(&[TAG_EUCLIDEAN])?;
                        write_u64(w, *dim as u64)?;
                    }
                    GeometryBlock::Hyperbolic(dim) => {
                        w.write_all(&[TAG_HYPERBOLIC])?;
                        write_u64(w, *dim as u64)?;
                    }
                    GeometryBlock::Elliptic(weights) => {
                        w.write_all(&[TAG_ELLIPTIC])?;
                        write_u64(w, weights.len() as u64)?;
                        for v in weights {
                            write_f64(w, *v)?;
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

fn read_geometry(r: &mut impl Read) -> CliResult<Geometry> {
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let bad = |m: &str| CliError::Input(format!("checkpoint geometry: {m}"));
    match tag[0] {
        TAG_EUCLIDEAN => Ok(Geometry::euclidean(read_u64(r)? as usize)),
        TAG_HYPERBOLIC => Ok(Geometry::hyperbolic(read_u64(r)? as usize)),
        TAG_ELLIPTIC => {
            let n = read_u64(r)? as usize;
            let mut w = Vec::with_capacity(n);
            for _ in 0..n {
                w.push(read_f64(r)?);
            }
            Geometry::elliptic(w).map_err(|e| bad(&e.to_string()))
        }
        TAG_PRODUCT => {
            let n = read_u64(r)? as usize;
            let mut blocks = Vec::with_capacity(n);
            for _ in 0..n {
                let mut btag = [0u8; 1];
                r.read_exact(&mut btag)?;
                match btag[0] {
                    TAG_EUCLIDEAN => blocks.push(GeometryBlock::Euclidean(read_u64(r)? as usize)),
                    TAG_HYPERBOLIC => blocks.push(GeometryBlock::Hyperbolic(read_u64(r)? as usize)),
                    TAG_ELLIPTIC => {
                        let k = read_u64(r)? as usize;
                        let mut w = Vec::with_capacity(k);
                        for _ in 0..k {
                            w.push(read_f64(r)?);
                        }
                        blocks.push(GeometryBlock::Elliptic(w));
                    }
                    other => return Err(bad(&format!("unknown block tag {other}"))),
                }
            }
            Geometry::product(blocks).map_err(|e| bad(&e.to_string()))
        }
        other => Err(bad(&format!("unknown tag {other}"))),
    }
}
