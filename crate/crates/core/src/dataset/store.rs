//! Directory store: `schema.json`, `events.bin` + `events.index.json`,
//! `labels.csv`, `embeddings.csv`.
//!
//! `events.bin` holds one little-endian block per column (timestamps first,
//! then schema fields in order), each block concatenating all sequences in
//! dataset order. The index records per-sequence lengths and block offsets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    export_embeddings, import_embeddings, import_labels, write_labels_csv, Column, Dataset,
    EventSchema, EventSequence, FieldKind,
};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SeqEntry {
    id: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F64,
    U32,
}

#[derive(Debug, Serialize, Deserialize)]
struct Block {
    name: String,
    dtype: Dtype,
    offset: usize,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventIndex {
    version: u32,
    sequences: Vec<SeqEntry>,
    blocks: Vec<Block>,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_store(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = dataset.schema();
    write(&dir.join("schema.json"), &serde_json::to_vec_pretty(schema)?)?;

    let total: usize = dataset.sequences().iter().map(EventSequence::len).sum();
    let mut bytes = Vec::new();
    let mut blocks = Vec::new();
    blocks.push(Block {
        name: schema.timestamp_field.clone(),
        dtype: Dtype::F64,
        offset: 0,
        count: total,
    });
    for s in dataset.sequences() {
        s.timestamps.iter().for_each(|t| bytes.extend(t.to_le_bytes()));
    }
    for (fi, spec) in schema.fields.iter().enumerate() {
        let offset = bytes.len();
        let dtype = match spec.kind {
            FieldKind::Categorical => Dtype::U32,
            FieldKind::Numeric => Dtype::F64,
        };
        for s in dataset.sequences() {
            match &s.columns[fi] {
                Column::Categorical(v) => v.iter().for_each(|c| bytes.extend(c.to_le_bytes())),
                Column::Numeric(v) => v.iter().for_each(|x| bytes.extend(x.to_le_bytes())),
            }
        }
        blocks.push(Block {
            name: spec.name.clone(),
            dtype,
            offset,
            count: total,
        });
    }
    let index = EventIndex {
        version: 1,
        sequences: dataset
            .sequences()
            .iter()
            .map(|s| SeqEntry {
                id: s.sequence_id.clone(),
                len: s.len(),
            })
            .collect(),
        blocks,
    };
    write(&dir.join("events.bin"), &bytes)?;
    write(&dir.join("events.index.json"), &serde_json::to_vec_pretty(&index)?)?;
    if !dataset.labels().is_empty() {
        write_labels_csv(dataset, &dir.join("labels.csv"))?;
    }
    if let Some(m) = dataset.embeddings() {
        let ids: Vec<&str> = dataset.ids().collect();
        export_embeddings(&ids, m, &dir.join("embeddings.csv"))?;
    }
    Ok(())
}

fn read_block<T>(bytes: &[u8], block: &Block, width: usize, f: impl Fn(&[u8]) -> T) -> Result<Vec<T>> {
    let end = block.offset + block.count * width;
    let slice = bytes
        .get(block.offset..end)
        .ok_or_else(|| Error::Data(format!("events.bin truncated in block `{}`", block.name)))?;
    Ok(slice.chunks_exact(width).map(f).collect())
}

pub fn load_store(dir: &Path) -> Result<Dataset> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let schema: EventSchema = serde_json::from_slice(&read("schema.json")?)?;
    let index: EventIndex = serde_json::from_slice(&read("events.index.json")?)?;
    let bytes = read("events.bin")?;
    if index.blocks.len() != schema.fields.len() + 1 {
        return Err(Error::Data("events index does not match the schema".into()));
    }
    let f64s = |b: &Block| {
        if b.dtype != Dtype::F64 {
            return Err(Error::Data(format!("block `{}` should be f64", b.name)));
        }
        read_block(&bytes, b, 8, |c| f64::from_le_bytes(c.try_into().unwrap()))
    };
    let ts = f64s(&index.blocks[0])?;
    let mut cols = Vec::new();
    for (spec, b) in schema.fields.iter().zip(&index.blocks[1..]) {
        if b.name != spec.name {
            return Err(Error::Data(format!("block `{}` out of order", b.name)));
        }
        cols.push(match spec.kind {
            FieldKind::Numeric => Column::Numeric(f64s(b)?),
            FieldKind::Categorical => {
                if b.dtype != Dtype::U32 {
                    return Err(Error::Data(format!("block `{}` should be u32", b.name)));
                }
                Column::Categorical(read_block(&bytes, b, 4, |c| {
                    u32::from_le_bytes(c.try_into().unwrap())
                })?)
            }
        });
    }
    let mut sequences = Vec::with_capacity(index.sequences.len());
    let mut start = 0;
    for entry in index.sequences {
        let end = start + entry.len;
        if end > ts.len() {
            return Err(Error::Data("events index lengths exceed the data".into()));
        }
        sequences.push(EventSequence {
            sequence_id: entry.id,
            timestamps: ts[start..end].to_vec(),
            columns: cols
                .iter()
                .map(|c| match c {
                    Column::Categorical(v) => Column::Categorical(v[start..end].to_vec()),
                    Column::Numeric(v) => Column::Numeric(v[start..end].to_vec()),
                })
                .collect(),
        });
        start = end;
    }
    let mut ds = Dataset::new(schema, sequences)?;
    let labels = dir.join("labels.csv");
    if labels.exists() {
        ds = import_labels(ds, &labels)?;
    }
    let emb = dir.join("embeddings.csv");
    if emb.exists() {
        ds = import_embeddings(ds, &emb)?.0;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::*;
    use crate::dataset::{EmbeddingMatrix, Target, TargetKind, MISSING_CATEGORY};
    use ndarray::Array2;

    #[test]
    fn store_round_trip() {
        let ds = Dataset::new(
            schema(),
            vec![
                sequence("b", &[0.0, 86400.0], &[0, MISSING_CATEGORY], &[1.5, f64::NAN]),
                sequence("a", &[], &[], &[]),
                sequence("c", &[-3.0], &[2], &[0.1]),
            ],
        )
        .unwrap()
        .with_target("y", Target::new(TargetKind::Binary, vec![0.0, 1.0, 1.0]).unwrap())
        .unwrap()
        .with_embeddings(
            EmbeddingMatrix::new(Array2::from_shape_vec((3, 2), vec![0.1, 0.2, 0.3, 0.4, 0.5, 1e-17]).unwrap())
                .unwrap(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_store(&ds, dir.path()).unwrap();
        let back = load_store(dir.path()).unwrap();
        assert_eq!(back, ds);
    }
}
