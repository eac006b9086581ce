//! JSONL tables, raw little-endian vector files and file checksums.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl StorageError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        StorageError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        StorageError::Format { path: path.to_path_buf(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, StorageError>;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StorageError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| StorageError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| StorageError::format(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| StorageError::io(path, e))?;
    }
    w.flush().map_err(|e| StorageError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| StorageError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| StorageError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| StorageError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows as row-major little-endian `f32`.
pub fn write_vectors<'a>(path: &Path, rows: impl IntoIterator<Item = &'a [f32]>) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        for v in row {
            w.write_all(&v.to_le_bytes()).map_err(|e| StorageError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| StorageError::io(path, e))
}

/// Reads `rows` vectors; the dimension is inferred from the file size.
pub fn read_vectors(path: &Path, rows: usize) -> Result<Vec<Vec<f32>>> {
    let bytes = read_bytes(path)?;
    if rows == 0 {
        return if bytes.is_empty() {
            Ok(Vec::new())
        } else {
            Err(StorageError::format(path, "vector file not empty for zero rows"))
        };
    }
    if bytes.len() % (4 * rows) != 0 {
        return Err(StorageError::format(
            path,
            format!("{} bytes is not a multiple of {rows} rows of f32", bytes.len()),
        ));
    }
    let dim = bytes.len() / 4 / rows;
    Ok(bytes
        .chunks_exact(4 * dim)
        .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        .collect())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut f = File::open(path).map_err(|e| StorageError::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| StorageError::io(path, e))?;
    Ok(buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let rows = vec![vec![1.0f32, -2.5, 3.0], vec![0.0, 0.5, 1e-7]];
        write_vectors(&p, rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 24);
        assert_eq!(read_vectors(&p, 2).unwrap(), rows);
        assert!(read_vectors(&p, 4).is_err());
    }

    #[test]
    fn little_endian_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        write_vectors(&p, [[1.0f32].as_slice()]).unwrap();
        assert_eq!(read_bytes(&p).unwrap(), vec![0x00, 0x00, 0x80, 0x3f]);
    }
}
