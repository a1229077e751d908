//! Text model files.
//!
//! The first line is the version header; the rest is TOML. Rust prints
//! floats in their shortest round-trip form and parses them exactly, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, DataStats, Model, TrainConfig};
use crate::dsrf::FrequencyGrid;
use crate::error::{check_dim, Error, Result};
use crate::solvers::Dictionary;

pub const MODEL_HEADER: &str = "tdefumi-model v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    omegas_rad_s: Vec<f64>,
    feature_len: usize,
    target_atoms: usize,
    nontarget_atoms: usize,
    /// `L` rows of `K` entries.
    dictionary: Vec<Vec<f64>>,
    w: Vec<f64>,
    psi: f64,
    stats: StatsFile,
    log: Vec<f64>,
    config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    mu0: Vec<f64>,
    n_target: usize,
    n_background: usize,
}

pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let d = &model.dictionary;
    let rows = (0..d.dim())
        .map(|l| (0..d.len()).map(|k| d.atom(k)[l]).collect())
        .collect();
    let file = ModelFile {
        omegas_rad_s: model.grid.omegas().to_vec(),
        feature_len: d.dim(),
        target_atoms: d.target_count(),
        nontarget_atoms: d.nontarget_count(),
        dictionary: rows,
        w: model.classifier.w.clone(),
        psi: model.classifier.psi,
        stats: StatsFile {
            mu0: model.stats.mu0.clone(),
            n_target: model.stats.n_target,
            n_background: model.stats.n_background,
        },
        log: model.log.clone(),
        config: model.config.clone(),
    };
    let body = toml::to_string(&file).map_err(|e| Error::format(0, e.to_string()))?;
    writeln!(out, "{MODEL_HEADER}")?;
    out.write_all(body.as_bytes())?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<Model> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (header, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if header.trim_end() != MODEL_HEADER {
        return Err(Error::format(
            1,
            format!("expected header `{MODEL_HEADER}`"),
        ));
    }
    let file: ModelFile = toml::from_str(body).map_err(|e| {
        let line = e
            .span()
            .map(|s| body[..s.start].matches('\n').count() + 2)
            .unwrap_or(0);
        Error::format(line, e.message().to_string())
    })?;
    let grid = FrequencyGrid::new(file.omegas_rad_s)?;
    check_dim(grid.feature_len(), file.feature_len)?;
    check_dim(file.feature_len, file.dictionary.len())?;
    let k = file.target_atoms + file.nontarget_atoms;
    let mut data = vec![0.0; file.feature_len * k];
    for (l, row) in file.dictionary.iter().enumerate() {
        check_dim(k, row.len())?;
        for (j, &v) in row.iter().enumerate() {
            data[j * file.feature_len + l] = v;
        }
    }
    let dictionary = Dictionary::from_raw(file.feature_len, file.target_atoms, data)?;
    check_dim(k, file.w.len())?;
    check_dim(file.feature_len, file.stats.mu0.len())?;
    file.config.validate()?;
    Ok(Model {
        grid,
        dictionary,
        classifier: Classifier {
            w: file.w,
            psi: file.psi,
        },
        config: file.config,
        stats: DataStats {
            mu0: file.stats.mu0,
            n_target: file.stats.n_target,
            n_background: file.stats.n_background,
        },
        log: file.log,
    })
}

/// Write the model file, creating parent directories as needed.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_file(path, |buf| write_model(model, buf))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(crate::io::open(path)?)
}
