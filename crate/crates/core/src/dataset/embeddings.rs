use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, EmbeddingMatrix};
use crate::{Error, Result};

/// Outcome of an embedding import.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportReport {
    /// Ids present in the file but not in the dataset (dropped).
    pub dropped_ids: Vec<String>,
}

/// Reads an `id,e0..e{d-1}` CSV into `(ids, rows)` in file order.
pub fn read_embeddings_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let data_err = |m: String| Error::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(data_err("header must be `id,e0,...`".into()));
    }
    for (j, h) in header.iter().skip(1).enumerate() {
        if h != format!("e{j}") {
            return Err(data_err(format!("expected column `e{j}`, found `{h}`")));
        }
    }
    let d = header.len() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        if rec.len() != d + 1 {
            return Err(data_err(format!("row {} has {} cells", i + 2, rec.len())));
        }
        let mut row = Vec::with_capacity(d);
        for cell in rec.iter().skip(1) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| data_err(format!("row {}: non-numeric cell `{cell}`", i + 2)))?;
            if !v.is_finite() {
                return Err(data_err(format!("row {}: non-finite cell `{cell}`", i + 2)));
            }
            row.push(v);
        }
        ids.push(rec[0].to_string());
        rows.push(row);
    }
    Ok((ids, rows))
}

/// Attaches embeddings from CSV, reordering rows to dataset order.
pub fn import_embeddings(dataset: Dataset, path: &Path) -> Result<(Dataset, ImportReport)> {
    let (ids, rows) = read_embeddings_csv(path)?;
    let d = rows.first().map(Vec::len).unwrap_or(0);
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if by_id.insert(id.as_str(), i).is_some() {
            return Err(Error::Data(format!("duplicate embedding id `{id}`")));
        }
    }
    let mut flat = Vec::with_capacity(dataset.len() * d);
    for id in dataset.ids() {
        let i = by_id
            .remove(id)
            .ok_or_else(|| Error::Data(format!("missing embedding for id `{id}`")))?;
        flat.extend_from_slice(&rows[i]);
    }
    let mut dropped_ids: Vec<String> = by_id.into_keys().map(str::to_string).collect();
    dropped_ids.sort();
    if !dropped_ids.is_empty() {
        log::warn!(
            "dropped {} embedding rows with ids not in the dataset",
            dropped_ids.len()
        );
    }
    let matrix = Array2::from_shape_vec((dataset.len(), d), flat)
        .map_err(|e| Error::Data(e.to_string()))?;
    let ds = dataset.with_embeddings(EmbeddingMatrix::new(matrix)?)?;
    Ok((ds, ImportReport { dropped_ids }))
}

/// Writes `id,e0..` with shortest round-trip float formatting.
pub fn export_embeddings(ids: &[&str], matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["id".to_string()];
    header.extend((0..matrix.dim()).map(|j| format!("e{j}")));
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (id, row) in ids.iter().zip(matrix.rows().rows()) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::*;
    use proptest::prelude::*;

    fn two_seq() -> Dataset {
        Dataset::new(
            schema(),
            vec![
                sequence("a", &[0.0], &[0], &[1.0]),
                sequence("b", &[0.0], &[0], &[1.0]),
            ],
        )
        .unwrap()
    }

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let p = dir.path().join("emb.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn rows_aligned_to_dataset_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "id,e0,e1,e2\nb,4,5,6\na,1,2,3\nzz,0,0,0\n");
        let (ds, rep) = import_embeddings(two_seq(), &p).unwrap();
        let m = ds.embeddings().unwrap();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.rows().row(0).to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.rows().row(1).to_vec(), vec![4.0, 5.0, 6.0]);
        assert_eq!(rep.dropped_ids, vec!["zz".to_string()]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "id,e0\na,1\na,2\nb,3\n");
        let e = import_embeddings(two_seq(), &p).unwrap_err();
        assert!(e.to_string().contains("duplicate embedding id"), "{e}");
    }

    #[test]
    fn infinite_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "id,e0\na,inf\nb,3\n");
        assert!(import_embeddings(two_seq(), &p).is_err());
    }

    #[test]
    fn missing_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "id,e0\na,1\n");
        assert!(import_embeddings(two_seq(), &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn export_import_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 4)) {
            let dir = tempfile::tempdir().unwrap();
            let m = EmbeddingMatrix::new(Array2::from_shape_vec((2, 2), vals).unwrap()).unwrap();
            let p = dir.path().join("out.csv");
            export_embeddings(&["a", "b"], &m, &p).unwrap();
            let (ds, _) = import_embeddings(two_seq(), &p).unwrap();
            let back = ds.embeddings().unwrap();
            for (x, y) in m.rows().iter().zip(back.rows().iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
