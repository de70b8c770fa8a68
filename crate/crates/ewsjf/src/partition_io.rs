//! Partition files: `{"queues": [{"id", "min_len", "max_len"}, ...]}`.

use std::path::Path;

use ewsjf_core::partitioner::{QueueId, QueuePartition, QueueSpec};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueueRecord {
    id: u32,
    min_len: u32,
    max_len: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    queues: Vec<QueueRecord>,
}

/// Parses a partition document. Queues must be ordered and disjoint; each
/// queue's mean length is taken as its interval centre.
pub fn parse_partition(json: &str) -> std::result::Result<QueuePartition, String> {
    let file: PartitionFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let queues = file
        .queues
        .into_iter()
        .map(|q| {
            if q.min_len >= q.max_len {
                return Err(format!("queue {}: min_len must be below max_len", q.id));
            }
            Ok(QueueSpec::with_bounds(QueueId(q.id), q.min_len, q.max_len))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    QueuePartition::new(queues).map_err(|e| e.to_string())
}

pub fn partition_json(partition: &QueuePartition) -> String {
    let file = PartitionFile {
        queues: partition
            .queues()
            .iter()
            .map(|q| QueueRecord { id: q.id.0, min_len: q.min_len, max_len: q.max_len })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("plain integers serialize");
    s.push('\n');
    s
}

pub fn load_partition(path: &Path) -> Result<QueuePartition> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse_partition(&text).map_err(|message| Error::Line { path: path.to_path_buf(), line: 1, message })
}

pub fn save_partition(partition: &QueuePartition, path: &Path) -> Result<()> {
    std::fs::write(path, partition_json(partition)).map_err(io_at(path))
}
