//! Text snapshots of datasets and client partitions.
//!
//! Snapshots let a generated dataset or partition be reloaded bit-exactly
//! in a later process, e.g. to compare runs against a frozen data split.
//! The format is line-oriented UTF-8:
//!
//! ```text
//! grouped-dataset v1
//! num_groups <A>
//! num_classes <C>
//! num_features <d>
//! num_samples <n>
//! <group> <target> <feature_0> ... <feature_{d-1}>
//! ...
//! ```
//!
//! A partition snapshot uses the magic line `client-partition v1`, adds a
//! `num_clients <K>` header line, and prefixes every sample line with its
//! client id. Floating-point values are written in Rust's shortest
//! round-trip notation, so parsing restores the exact bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{ClientShard, GroupedDataset, GroupedSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DATASET_MAGIC: &str = "grouped-dataset v1";
const PARTITION_MAGIC: &str = "client-partition v1";

fn display_path(path: &Path) -> String {
    path.display().to_string()
}

fn parse_scalar<S: Scalar>(token: &str) -> Result<S> {
    token
        .parse::<f64>()
        .map(S::c)
        .map_err(|_| Error::Parse(format!("invalid numeric token {token:?}")))
}

fn parse_count(token: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("invalid integer token {token:?}")))
}

/// Reads one line and checks its `key <value>` shape.
fn header_value(lines: &mut impl Iterator<Item = std::io::Result<String>>, key: &str) -> Result<usize> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("missing header line {key:?}")))?
        .map_err(|e| Error::Parse(format!("unreadable header line {key:?}: {e}")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => parse_count(v),
        _ => Err(Error::Parse(format!(
            "expected header {key:?}, found {line:?}"
        ))),
    }
}

fn write_sample<S: Scalar, W: Write>(
    out: &mut W,
    prefix: Option<usize>,
    sample: &GroupedSample<S>,
) -> std::io::Result<()> {
    if let Some(client) = prefix {
        write!(out, "{client} ")?;
    }
    write!(out, "{} {}", sample.group, sample.target)?;
    for v in &sample.features {
        write!(out, " {v:?}")?;
    }
    writeln!(out)
}

/// Writes a dataset snapshot.
pub fn save_dataset<S: Scalar>(path: &Path, dataset: &GroupedDataset<S>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(display_path(path), e))?;
    let mut out = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        writeln!(out, "{DATASET_MAGIC}")?;
        writeln!(out, "num_groups {}", dataset.num_groups())?;
        writeln!(out, "num_classes {}", dataset.num_classes())?;
        writeln!(out, "num_features {}", dataset.num_features())?;
        writeln!(out, "num_samples {}", dataset.len())?;
        for i in 0..dataset.len() {
            write_sample(&mut out, None, &dataset.sample(i))?;
        }
        out.flush()
    })();
    body.map_err(|e| Error::io(display_path(path), e))
}

/// Parses a sample line: optional client prefix, group, target, features.
fn parse_sample<S: Scalar>(
    line: &str,
    with_client: bool,
    num_features: usize,
) -> Result<(usize, GroupedSample<S>)> {
    let mut parts = line.split_whitespace();
    let client = if with_client {
        parse_count(parts.next().ok_or_else(|| {
            Error::Parse(format!("sample line missing client id: {line:?}"))
        })?)?
    } else {
        0
    };
    let group = parse_count(
        parts
            .next()
            .ok_or_else(|| Error::Parse(format!("sample line missing group: {line:?}")))?,
    )?;
    let target = parse_count(
        parts
            .next()
            .ok_or_else(|| Error::Parse(format!("sample line missing target: {line:?}")))?,
    )?;
    let mut features = Vec::with_capacity(num_features);
    for token in parts {
        features.push(parse_scalar::<S>(token)?);
    }
    if features.len() != num_features {
        return Err(Error::Parse(format!(
            "sample line has {} features, expected {num_features}: {line:?}",
            features.len()
        )));
    }
    Ok((
        client,
        GroupedSample {
            features,
            target,
            group,
        },
    ))
}

/// Reads a dataset snapshot written by [`save_dataset`].
pub fn load_dataset<S: Scalar>(path: &Path) -> Result<GroupedDataset<S>> {
    let file = File::open(path).map_err(|e| Error::io(display_path(path), e))?;
    let mut lines = BufReader::new(file).lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot file".into()))?
        .map_err(|e| Error::io(display_path(path), e))?;
    if magic != DATASET_MAGIC {
        return Err(Error::Parse(format!(
            "expected {DATASET_MAGIC:?}, found {magic:?}"
        )));
    }
    let num_groups = header_value(&mut lines, "num_groups")?;
    let num_classes = header_value(&mut lines, "num_classes")?;
    let num_features = header_value(&mut lines, "num_features")?;
    let num_samples = header_value(&mut lines, "num_samples")?;
    let mut samples = Vec::with_capacity(num_samples);
    for line in lines {
        let line = line.map_err(|e| Error::io(display_path(path), e))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_sample::<S>(&line, false, num_features)?.1);
    }
    if samples.len() != num_samples {
        return Err(Error::Parse(format!(
            "snapshot announces {num_samples} samples but contains {}",
            samples.len()
        )));
    }
    GroupedDataset::from_samples(&samples, num_groups, num_classes)
}

/// Writes a partition snapshot (shards must be in ascending client order).
pub fn save_partition<S: Scalar>(path: &Path, shards: &[ClientShard<S>]) -> Result<()> {
    if shards.is_empty() {
        return Err(Error::invalid("cannot save an empty partition"));
    }
    let total: usize = shards.iter().map(|s| s.num_samples()).sum();
    let first = shards[0].data();
    let file = File::create(path).map_err(|e| Error::io(display_path(path), e))?;
    let mut out = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        writeln!(out, "{PARTITION_MAGIC}")?;
        writeln!(out, "num_groups {}", first.num_groups())?;
        writeln!(out, "num_classes {}", first.num_classes())?;
        writeln!(out, "num_features {}", first.num_features())?;
        writeln!(out, "num_clients {}", shards.len())?;
        writeln!(out, "num_samples {total}")?;
        for shard in shards {
            let d = shard.data();
            for i in 0..d.len() {
                write_sample(&mut out, Some(shard.client_id()), &d.sample(i))?;
            }
        }
        out.flush()
    })();
    body.map_err(|e| Error::io(display_path(path), e))
}

/// Reads a partition snapshot written by [`save_partition`].
pub fn load_partition<S: Scalar>(path: &Path) -> Result<Vec<ClientShard<S>>> {
    let file = File::open(path).map_err(|e| Error::io(display_path(path), e))?;
    let mut lines = BufReader::new(file).lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot file".into()))?
        .map_err(|e| Error::io(display_path(path), e))?;
    if magic != PARTITION_MAGIC {
        return Err(Error::Parse(format!(
            "expected {PARTITION_MAGIC:?}, found {magic:?}"
        )));
    }
    let num_groups = header_value(&mut lines, "num_groups")?;
    let num_classes = header_value(&mut lines, "num_classes")?;
    let num_features = header_value(&mut lines, "num_features")?;
    let num_clients = header_value(&mut lines, "num_clients")?;
    let num_samples = header_value(&mut lines, "num_samples")?;
    let mut per_client: Vec<Vec<GroupedSample<S>>> = vec![Vec::new(); num_clients];
    let mut seen = 0usize;
    for line in lines {
        let line = line.map_err(|e| Error::io(display_path(path), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (client, sample) = parse_sample::<S>(&line, true, num_features)?;
        if client >= num_clients {
            return Err(Error::Parse(format!(
                "client id {client} out of range for {num_clients} clients"
            )));
        }
        per_client[client].push(sample);
        seen += 1;
    }
    if seen != num_samples {
        return Err(Error::Parse(format!(
            "snapshot announces {num_samples} samples but contains {seen}"
        )));
    }
    let mut shards = Vec::with_capacity(num_clients);
    for (client_id, samples) in per_client.into_iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::Parse(format!(
                "client {client_id} has no samples in the snapshot"
            )));
        }
        shards.push(ClientShard::new(
            client_id,
            GroupedDataset::from_samples(&samples, num_groups, num_classes)?,
        ));
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, partition, PartitionPlan, Setting, SyntheticSpec};

    fn spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            low_rates: vec![0.3, 0.1],
            high_rates: vec![0.6, 0.9],
            n_samples: n,
            seed,
        }
    }

    #[test]
    fn dataset_snapshot_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        let ds = generate_synthetic::<f64>(&spec(300, 21)).unwrap();
        save_dataset(&path, &ds).unwrap();
        let reloaded = load_dataset::<f64>(&path).unwrap();
        assert_eq!(ds, reloaded);
    }

    #[test]
    fn dataset_snapshot_round_trips_in_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data32.txt");
        let ds = generate_synthetic::<f32>(&spec(200, 33)).unwrap();
        save_dataset(&path, &ds).unwrap();
        let reloaded = load_dataset::<f32>(&path).unwrap();
        assert_eq!(ds, reloaded);
    }

    #[test]
    fn partition_snapshot_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shards.txt");
        let ds = generate_synthetic::<f64>(&spec(500, 2)).unwrap();
        let shards = partition(&ds, &PartitionPlan::new(Setting::Esg, 5, 77)).unwrap();
        save_partition(&path, &shards).unwrap();
        let reloaded = load_partition::<f64>(&path).unwrap();
        assert_eq!(shards, reloaded);
    }

    #[test]
    fn snapshot_rejects_wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "something else\n").unwrap();
        assert!(load_dataset::<f64>(&path).is_err());

        let ds_path = dir.path().join("data.txt");
        let ds = generate_synthetic::<f64>(&spec(50, 21)).unwrap();
        save_dataset(&ds_path, &ds).unwrap();
        let text = std::fs::read_to_string(&ds_path).unwrap();
        let truncated: Vec<&str> = text.lines().take(20).collect();
        std::fs::write(&path, truncated.join("\n")).unwrap();
        assert!(load_dataset::<f64>(&path).is_err());
    }

    #[test]
    fn missing_file_reports_io_error() {
        let err = load_dataset::<f64>(Path::new("/nonexistent/snapshot.txt")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
