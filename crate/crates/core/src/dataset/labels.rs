use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{Dataset, Target, TargetKind};
use crate::{Error, Result};

fn infer_kind(values: &[f64]) -> TargetKind {
    if values.iter().all(|&v| v == 0.0 || v == 1.0) {
        return TargetKind::Binary;
    }
    let integral = values.iter().all(|&v| v >= 0.0 && v.fract() == 0.0);
    let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    if integral && distinct.len() <= 20 {
        TargetKind::Multiclass
    } else {
        TargetKind::Regression
    }
}

/// Reads `id,target1,...` labels. A header cell may carry an explicit kind as
/// `name:binary|multiclass|regression`; otherwise the kind is inferred.
pub fn import_labels(mut dataset: Dataset, path: &Path) -> Result<Dataset> {
    let data_err = |m: String| Error::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(data_err("header must be `id,target1,...`".into()));
    }
    let targets: Vec<(String, Option<TargetKind>)> = header
        .iter()
        .skip(1)
        .map(|h| match h.split_once(':') {
            Some((name, kind)) => Ok((name.to_string(), Some(kind.parse()?))),
            None => Ok((h.to_string(), None)),
        })
        .collect::<Result<_>>()?;
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| data_err(format!("row {}: non-numeric label `{c}`", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != targets.len() {
            return Err(data_err(format!("row {} has the wrong cell count", i + 2)));
        }
        if rows.insert(rec[0].to_string(), vals).is_some() {
            return Err(data_err(format!("duplicate label id `{}`", &rec[0])));
        }
    }
    let mut columns = vec![Vec::with_capacity(dataset.len()); targets.len()];
    for id in dataset.ids() {
        let vals = rows
            .remove(id)
            .ok_or_else(|| data_err(format!("missing labels for id `{id}`")))?;
        for (col, v) in columns.iter_mut().zip(vals) {
            col.push(v);
        }
    }
    if !rows.is_empty() {
        log::warn!("dropped {} label rows with unknown ids", rows.len());
    }
    for ((name, kind), values) in targets.into_iter().zip(columns) {
        let kind = kind.unwrap_or_else(|| infer_kind(&values));
        dataset = dataset.with_target(&name, Target::new(kind, values)?)?;
    }
    Ok(dataset)
}

/// Writes every target with an explicit kind suffix in the header.
pub fn write_labels_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["id".to_string()];
    header.extend(dataset.labels().iter().map(|(n, t)| format!("{n}:{}", t.kind)));
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (i, id) in dataset.ids().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(dataset.labels().values().map(|t| format!("{:?}", t.values[i])));
        w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::*;

    #[test]
    fn kinds_inferred_and_explicit() {
        let ds = Dataset::new(
            schema(),
            vec![
                sequence("a", &[0.0], &[0], &[1.0]),
                sequence("b", &[0.0], &[0], &[1.0]),
                sequence("c", &[0.0], &[0], &[1.0]),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        std::fs::write(&p, "id,churn,age,spend,grp:regression\nc,1,2,1.5,1\na,0,0,2.5,0\nb,1,1,3,1\n").unwrap();
        let ds = import_labels(ds, &p).unwrap();
        assert_eq!(ds.target("churn").unwrap().kind, TargetKind::Binary);
        assert_eq!(ds.target("churn").unwrap().values, vec![0.0, 1.0, 1.0]);
        assert_eq!(ds.target("age").unwrap().kind, TargetKind::Multiclass);
        assert_eq!(ds.target("spend").unwrap().kind, TargetKind::Regression);
        assert_eq!(ds.target("grp").unwrap().kind, TargetKind::Regression);

        let out = dir.path().join("out.csv");
        write_labels_csv(&ds, &out).unwrap();
        let stripped = Dataset::new(ds.schema().clone(), ds.sequences().to_vec()).unwrap();
        let again = import_labels(stripped, &out).unwrap();
        assert_eq!(again.labels(), ds.labels());
    }
}
