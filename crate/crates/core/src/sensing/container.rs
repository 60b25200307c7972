//! Flat little-endian container for ensembles, datasets and matrix lists.
//!
//! ```text
//! ensemble:  "LRSENSE1" | m:u64 | n:u64 | kind:u64 | seed:u64 | n*m*m f64 (row-major)
//! dataset:   <ensemble> | "LRDATA01" | sigma_xi:f64 | noise_kind:u64
//!            | A0: m*m f64 | noise: n f64 | responses: n f64
//! ```
//!
//! A plain list of matrices (estimates, minimax families) is an ensemble of
//! kind `custom` (code 2).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EnsembleKind, EnsembleSpec, MeasurementEnsemble, NoiseKind, TraceRegressionDataset};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"LRSENSE1";
pub const DATASET_MAGIC: &[u8; 8] = b"LRDATA01";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn get_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn write_ensemble_to(w: &mut impl Write, e: &MeasurementEnsemble) -> Result<()> {
    w.write_all(ENSEMBLE_MAGIC)?;
    let spec = e.spec();
    put_u64(w, e.m() as u64)?;
    put_u64(w, e.n() as u64)?;
    put_u64(w, spec.kind.code())?;
    put_u64(w, spec.seed)?;
    for x in e.matrices() {
        put_f64s(w, x.as_slice())?;
    }
    Ok(())
}

fn read_ensemble_from(r: &mut impl Read) -> Result<MeasurementEnsemble> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(format_err("missing LRSENSE1 header"));
    }
    let m = get_u64(r)? as usize;
    let n = get_u64(r)? as usize;
    let code = get_u64(r)?;
    let kind = EnsembleKind::from_code(code)
        .ok_or_else(|| format_err(format!("unknown ensemble kind {code}")))?;
    let seed = get_u64(r)?;
    if m == 0 {
        return Err(format_err("zero matrix side"));
    }
    let mut matrices = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let data = get_f64s(r, m * m)?;
        matrices.push(DenseMatrix::new(m, m, data)?);
    }
    Ok(MeasurementEnsemble::from_parts(
        EnsembleSpec { kind, m, n, seed },
        matrices,
    ))
}

pub fn write_ensemble(path: &Path, e: &MeasurementEnsemble) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ensemble_to(&mut w, e)?;
    w.flush()?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<MeasurementEnsemble> {
    read_ensemble_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_dataset(path: &Path, d: &TraceRegressionDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ensemble_to(&mut w, &d.ensemble)?;
    w.write_all(DATASET_MAGIC)?;
    put_f64s(&mut w, &[d.sigma_xi])?;
    put_u64(&mut w, d.noise_kind.code())?;
    put_f64s(&mut w, d.a0.as_slice())?;
    put_f64s(&mut w, &d.noise)?;
    put_f64s(&mut w, &d.responses)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<TraceRegressionDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let ensemble = read_ensemble_from(&mut r)?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("file holds an ensemble but no dataset section"))?;
    if &magic != DATASET_MAGIC {
        return Err(format_err("missing LRDATA01 section"));
    }
    let (m, n) = (ensemble.m(), ensemble.n());
    let sigma_xi = get_f64s(&mut r, 1)?[0];
    let code = get_u64(&mut r)?;
    let noise_kind = NoiseKind::from_code(code)
        .ok_or_else(|| format_err(format!("unknown noise kind {code}")))?;
    let a0 = DenseMatrix::new(m, m, get_f64s(&mut r, m * m)?)?;
    let noise = get_f64s(&mut r, n)?;
    let responses = get_f64s(&mut r, n)?;
    if !(sigma_xi >= 0.0) || noise.iter().chain(&responses).any(|v| !v.is_finite()) {
        return Err(format_err("non-finite or negative dataset fields"));
    }
    Ok(TraceRegressionDataset {
        ensemble,
        a0,
        sigma_xi,
        noise,
        responses,
        noise_kind,
    })
}

/// Stores a list of equally sized square matrices as a custom ensemble.
pub fn write_matrices(path: &Path, matrices: &[DenseMatrix], seed: u64) -> Result<()> {
    let m = matrices
        .first()
        .map(DenseMatrix::rows)
        .ok_or_else(|| format_err("cannot store an empty matrix list"))?;
    let mut e = MeasurementEnsemble::from_matrices(m, matrices.to_vec())?;
    e.spec.seed = seed;
    write_ensemble(path, &e)
}

pub fn read_matrices(path: &Path) -> Result<Vec<DenseMatrix>> {
    Ok(read_ensemble(path)?.matrices)
}
