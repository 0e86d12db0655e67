use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{Column, Dataset, EventSchema, EventSequence, FieldKind, MISSING_CATEGORY};
use crate::{Error, Result};

enum Cell {
    Cat(u32),
    Num(f64),
}

struct RawEvent {
    ts: f64,
    cells: Vec<Cell>,
}

/// Reads a JSON-lines event file and a JSON schema into a [`Dataset`].
pub fn ingest_events(events_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema_text =
        std::fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let schema: EventSchema = serde_json::from_str(&schema_text)
        .map_err(|e| Error::Config(format!("{}: {e}", schema_path.display())))?;
    schema.validate()?;
    let file = File::open(events_path).map_err(|e| Error::io(events_path, e))?;
    read_events(BufReader::new(file), schema, events_path)
}

/// Groups events by sequence id, sorts each group by timestamp (stable, so
/// ties keep input order) and appends unseen categories to the vocabulary in
/// first-seen order.
pub fn read_events(reader: impl BufRead, mut schema: EventSchema, origin: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Ingest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lookups: Vec<BTreeMap<String, u32>> = schema
        .fields
        .iter()
        .map(|f| {
            schema
                .vocabulary(&f.name)
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), i as u32))
                .collect()
        })
        .collect();
    let mut groups: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Map<String, Value> = serde_json::from_str(&line)
            .map_err(|e| err(lineno, format!("malformed record: {e}")))?;
        for key in record.keys() {
            if *key != schema.id_field
                && *key != schema.timestamp_field
                && schema.field(key).is_none()
            {
                return Err(err(lineno, format!("unknown field `{key}`")));
            }
        }
        let id = match record.get(&schema.id_field) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(err(lineno, format!("missing `{}`", schema.id_field))),
        };
        let ts = match record.get(&schema.timestamp_field) {
            Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
            Some(Value::String(s)) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| err(lineno, format!("timestamp `{s}` is not a number")))?,
            _ => return Err(err(lineno, format!("missing `{}`", schema.timestamp_field))),
        };
        if !ts.is_finite() {
            return Err(err(lineno, format!("non-finite timestamp {ts}")));
        }
        let mut cells = Vec::with_capacity(schema.fields.len());
        for (fi, spec) in schema.fields.iter().enumerate() {
            let v = record.get(&spec.name).unwrap_or(&Value::Null);
            let cell = match spec.kind {
                FieldKind::Categorical => {
                    let key = match v {
                        Value::Null => None,
                        Value::String(s) => Some(s.clone()),
                        Value::Number(n) => Some(n.to_string()),
                        Value::Bool(b) => Some(b.to_string()),
                        _ => {
                            return Err(err(
                                lineno,
                                format!("field `{}` must be a scalar", spec.name),
                            ))
                        }
                    };
                    match key {
                        None => Cell::Cat(MISSING_CATEGORY),
                        Some(key) => {
                            let lookup = &mut lookups[fi];
                            let next = lookup.len() as u32;
                            let id = *lookup.entry(key.clone()).or_insert_with(|| {
                                schema
                                    .vocabularies
                                    .entry(spec.name.clone())
                                    .or_default()
                                    .push(key);
                                next
                            });
                            Cell::Cat(id)
                        }
                    }
                }
                FieldKind::Numeric => match v {
                    Value::Null => Cell::Num(f64::NAN),
                    Value::Number(n) => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
                    _ => {
                        return Err(err(
                            lineno,
                            format!("field `{}` must be numeric", spec.name),
                        ))
                    }
                },
            };
            cells.push(cell);
        }
        groups.entry(id).or_default().push(RawEvent { ts, cells });
    }

    let sequences = groups
        .into_iter()
        .map(|(id, mut events)| {
            events.sort_by(|a, b| a.ts.total_cmp(&b.ts));
            let mut columns: Vec<Column> = schema
                .fields
                .iter()
                .map(|f| match f.kind {
                    FieldKind::Categorical => Column::Categorical(Vec::with_capacity(events.len())),
                    FieldKind::Numeric => Column::Numeric(Vec::with_capacity(events.len())),
                })
                .collect();
            let mut timestamps = Vec::with_capacity(events.len());
            for ev in events {
                timestamps.push(ev.ts);
                for (col, cell) in columns.iter_mut().zip(ev.cells) {
                    match (col, cell) {
                        (Column::Categorical(v), Cell::Cat(c)) => v.push(c),
                        (Column::Numeric(v), Cell::Num(x)) => v.push(x),
                        _ => unreachable!("cell kinds follow the schema"),
                    }
                }
            }
            EventSequence {
                sequence_id: id,
                timestamps,
                columns,
            }
        })
        .collect();
    Dataset::new(schema, sequences)
}

/// Serializes the dataset's events back to JSON lines (missing values omitted).
pub fn write_events_jsonl(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let schema = dataset.schema();
    let io = |e| Error::io("<events>", e);
    for seq in dataset.sequences() {
        for i in 0..seq.len() {
            let mut rec = Map::new();
            rec.insert(schema.id_field.clone(), Value::String(seq.sequence_id.clone()));
            rec.insert(schema.timestamp_field.clone(), Value::from(seq.timestamps[i]));
            for (spec, col) in schema.fields.iter().zip(&seq.columns) {
                match col {
                    Column::Categorical(v) if v[i] != MISSING_CATEGORY => {
                        let label = schema.vocabulary(&spec.name)[v[i] as usize].clone();
                        rec.insert(spec.name.clone(), Value::String(label));
                    }
                    Column::Numeric(v) if !v[i].is_nan() => {
                        rec.insert(spec.name.clone(), Value::from(v[i]));
                    }
                    _ => {}
                }
            }
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FieldSpec;

    fn schema() -> EventSchema {
        EventSchema::new(
            "ts",
            vec![FieldSpec::categorical("mcc"), FieldSpec::numeric("amount")],
        )
        .unwrap()
    }

    fn read(text: &str) -> Result<Dataset> {
        read_events(text.as_bytes(), schema(), Path::new("events.jsonl"))
    }

    #[test]
    fn groups_and_sorts_by_id() {
        let ds = read(
            r#"{"id":"b","ts":1,"mcc":"x","amount":1}
{"id":"a","ts":2,"mcc":"y","amount":2}
{"id":"a","ts":1,"mcc":"x","amount":3}
"#,
        )
        .unwrap();
        let lens: Vec<_> = ds.sequences().iter().map(|s| (s.sequence_id.as_str(), s.len())).collect();
        assert_eq!(lens, vec![("a", 2), ("b", 1)]);
        assert_eq!(ds.sequences()[0].timestamps, vec![1.0, 2.0]);
        assert_eq!(ds.schema().vocabulary("mcc"), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn nan_timestamp_names_line() {
        let e = read(
            r#"{"id":"a","ts":1}
{"id":"a","ts":"NaN"}
"#,
        )
        .unwrap_err();
        match e {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let ds = read(
            r#"{"id":"a","ts":10,"amount":5}
{"id":"a","ts":10,"amount":7}
"#,
        )
        .unwrap();
        assert_eq!(ds.sequences()[0].numeric(1).unwrap(), &[5.0, 7.0]);
    }

    #[test]
    fn unknown_field_rejected() {
        let e = read(r#"{"id":"a","ts":1,"mccc":"x"}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field `mccc`"), "{e}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = read("{\"id\":\"a\",\"ts\":1}\n{oops\n").unwrap_err();
        assert!(e.to_string().contains(":2:"), "{e}");
    }

    #[test]
    fn missing_values_become_sentinels() {
        let ds = read(r#"{"id":"a","ts":1}"#).unwrap();
        let s = &ds.sequences()[0];
        assert_eq!(s.categorical(0).unwrap(), &[MISSING_CATEGORY]);
        assert!(s.numeric(1).unwrap()[0].is_nan());
    }

    #[test]
    fn ingest_is_idempotent() {
        let ds = read(
            r#"{"id":"b","ts":3.5,"mcc":"x","amount":1.25}
{"id":"a","ts":2,"mcc":"y"}
{"id":"a","ts":2,"amount":0.1}
{"id":"c","ts":-4,"mcc":7}
"#,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_events_jsonl(&ds, &mut buf).unwrap();
        let again = read_events(&buf[..], ds.schema().clone(), Path::new("re")).unwrap();
        assert_eq!(ds, again);
    }
}
