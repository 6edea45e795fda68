//! Binary weight checkpoints with a JSON metadata sidecar.
//!
//! Layout (little endian): magic `XPSW`, `u32` format version, `u32` rows,
//! `u32` cols, `u32` feature version, `u16` tag length, tag bytes, then
//! `rows * cols` `f64` weights in row-major order.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PolicyParams;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"XPSW";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a weight checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env_tag: String,
    pub feature_version: u32,
    pub params: PolicyParams<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: u32,
    env: String,
    feature_version: u32,
    rows: usize,
    cols: usize,
    l2_norm: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    params: &PolicyParams<S>,
    env_tag: &str,
    feature_version: u32,
) -> Result<(), CheckpointError> {
    let (rows, cols) = params.shape();
    let tag = env_tag.as_bytes();
    let mut buf = Vec::with_capacity(22 + tag.len() + 8 * rows * cols);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    buf.extend_from_slice(&feature_version.to_le_bytes());
    buf.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    buf.extend_from_slice(tag);
    for w in params.as_slice() {
        buf.extend_from_slice(&w.as_f64().to_le_bytes());
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CheckpointError::Io { path, source }
    };
    fs::write(path, &buf).map_err(io_err(path))?;
    let sidecar = Sidecar {
        format: FORMAT_VERSION,
        env: env_tag.to_string(),
        feature_version,
        rows,
        cols,
        l2_norm: params.norm().as_f64(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
    fs::write(&side, json + "\n").map_err(io_err(&side))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: &str| CheckpointError::Format(msg.to_string());
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8], CheckpointError> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let rows = u32_at(take(4)?) as usize;
    let cols = u32_at(take(4)?) as usize;
    let feature_version = u32_at(take(4)?);
    let tag_len = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes")) as usize;
    let env_tag = String::from_utf8(take(tag_len)?.to_vec()).map_err(|_| bad("tag not utf-8"))?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("shape overflow"))?;
    let body = take(count.checked_mul(8).ok_or_else(|| bad("shape overflow"))?)?;
    let weights = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        env_tag,
        feature_version,
        params: PolicyParams::from_vec(rows, cols, weights),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.bin");
        let params = PolicyParams::from_vec(2, 3, vec![0.5, -1.25, 3.0, 1e-9, 0.0, -7.5]);
        save_checkpoint(&path, &params, "gridnav", 1).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.env_tag, "gridnav");
        assert_eq!(ck.feature_version, 1);
        assert_eq!(ck.params, params);
        let side: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("prior.bin.json")).unwrap())
                .unwrap();
        assert_eq!(side["rows"], 2);
        assert_eq!(side["cols"], 3);
        assert_eq!(side["env"], "gridnav");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"XPSW\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(_))
        ));
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(_))
        ));
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing.bin")),
            Err(CheckpointError::Io { .. })
        ));
    }
}
