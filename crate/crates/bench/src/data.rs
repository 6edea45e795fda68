//! Instance datasets as JSON lines.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use expose_core::env::gridnav::{self, GridGenParams, GridRecord};
use expose_core::env::hamcycle::{self, GraphRecord};
use expose_core::env::{GraphInstance, GridInstance};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Gridnav,
    Hamcycle,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Gridnav => "gridnav",
            EnvKind::Hamcycle => "hamcycle",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gridnav" => Ok(EnvKind::Gridnav),
            "hamcycle" => Ok(EnvKind::Hamcycle),
            other => Err(format!("unknown environment {other:?}")),
        }
    }
}

/// SplitMix64 of `(master, index)`: per-item seeds that do not depend on how
/// work is scheduled.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn generate_grids(
    params: &GridGenParams,
    count: usize,
    seed: u64,
) -> Result<Vec<GridInstance>> {
    (0..count)
        .map(|i| {
            gridnav::generate_instance(params, derive_seed(seed, i as u64))
                .with_context(|| format!("generating grid {i}"))
        })
        .collect()
}

pub fn generate_graphs(
    n: usize,
    sparsity: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<GraphInstance>> {
    (0..count)
        .map(|i| {
            hamcycle::generate_graph(n, sparsity, derive_seed(seed, i as u64))
                .with_context(|| format!("generating graph {i}"))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))?;
        items.push(item);
    }
    Ok(items)
}

pub fn save_grids(path: &Path, grids: &[GridInstance]) -> Result<()> {
    write_jsonl(path, grids.iter().map(GridInstance::to_record))
}

pub fn load_grids(path: &Path) -> Result<Vec<GridInstance>> {
    read_jsonl::<GridRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| GridInstance::from_record(r).with_context(|| format!("grid {i}")))
        .collect()
}

pub fn save_graphs(path: &Path, graphs: &[GraphInstance]) -> Result<()> {
    write_jsonl(path, graphs.iter().map(GraphInstance::to_record))
}

pub fn load_graphs(path: &Path) -> Result<Vec<GraphInstance>> {
    read_jsonl::<GraphRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| GraphInstance::from_record(r).with_context(|| format!("graph {i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_spread_and_stable() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 1));
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
    }

    #[test]
    fn datasets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grids = generate_grids(&GridGenParams::new(8, 8, 0.2, 5, 3), 4, 1).unwrap();
        let path = dir.path().join("g.jsonl");
        save_grids(&path, &grids).unwrap();
        let back = load_grids(&path).unwrap();
        assert_eq!(
            back.iter().map(GridInstance::to_record).collect::<Vec<_>>(),
            grids
                .iter()
                .map(GridInstance::to_record)
                .collect::<Vec<_>>()
        );
        let graphs = generate_graphs(10, 0.3, 3, 1).unwrap();
        let path = dir.path().join("h.jsonl");
        save_graphs(&path, &graphs).unwrap();
        assert_eq!(load_graphs(&path).unwrap().len(), 3);
    }

    #[test]
    fn bad_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"n\": 3}\nnot json\n").unwrap();
        let err = load_graphs(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":1:"));
    }
}
