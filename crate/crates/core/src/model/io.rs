//! Dataset ingestion: CSV (header optional) and a small binary format.
//!
//! Binary layout, little endian: magic `IFDS`, `u32` version (1), `u64` T,
//! `u64` p, then T*p `f64` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IFDS";
const VERSION: u32 = 1;

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push(values),
            // a non-numeric first line is a header
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Format(format!("line {}: {e}", line + 1)));
            }
        }
    }
    let p = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::Format(format!(
            "row {} has {} fields, expected {p}",
            t + 1,
            r.len()
        )));
    }
    let t = rows.len();
    Dataset::new(DMatrix::from_fn(t, p, |r, c| rows[r][c]))
}

pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let header: Vec<String> = (1..=data.p()).map(|i| format!("y{i}")).collect();
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for row in data.y().row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_binary(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(data.t() as u64).to_le_bytes())?;
    w.write_all(&(data.p() as u64).to_le_bytes())?;
    for row in data.y().row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_binary(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a binary dataset (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let t = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let p = u64::from_le_bytes(b8) as usize;
    let mut values = Vec::with_capacity(t * p);
    for _ in 0..t * p {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut b8)? != 0 {
        return Err(Error::Format("trailing bytes after dataset payload".into()));
    }
    Dataset::new(DMatrix::from_row_slice(t, p, &values))
}

/// Reads a dataset, choosing the format from the file's magic bytes.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == MAGIC {
        read_dataset_binary(path)
    } else {
        read_dataset_csv(path)
    }
}
