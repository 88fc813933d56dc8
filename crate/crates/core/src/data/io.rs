//! JSON Lines files. Each file may start with a header object carrying a
//! `schema` field; every other line is one record.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Episode, InterventionSet};
use crate::error::{Error, Result};

pub const EPISODES_SCHEMA: &str = "h2ncm-episodes/1";
pub const INTERVENTIONS_SCHEMA: &str = "h2ncm-interventions/1";
pub const DATA_SCHEMA: &str = "h2ncm-data/1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    input_names: Vec<String>,
}

fn read_lines(path: &Path, schema: &str) -> Result<(Option<Header>, Vec<(usize, serde_json::Value)>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if let Some(s) = v.get("schema") {
            if s != schema {
                return Err(Error::Schema(format!("{}: expected schema {schema}, found {s}", path.display())));
            }
            header = Some(serde_json::from_value(v).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?);
            continue;
        }
        records.push((lineno, v));
    }
    Ok((header, records))
}

fn write_lines<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut put = |s: String| writeln!(w, "{s}").map_err(|e| Error::io(path, e));
    put(serde_json::to_string(header)?)?;
    for r in records {
        put(serde_json::to_string(r)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episodes(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (header, records) = read_lines(path, EPISODES_SCHEMA)?;
    let mut episodes = Vec::with_capacity(records.len());
    for (line, v) in records {
        let e: Episode = serde_json::from_value(v).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        e.validate().map_err(|err| Error::Parse { line, msg: err.to_string() })?;
        episodes.push(e);
    }
    let n = episodes.first().map_or(0, Episode::n_inputs);
    let input_names = match header {
        Some(h) if !h.input_names.is_empty() => h.input_names,
        _ => (1..=n).map(|k| format!("x{k}")).collect(),
    };
    if let Some(e) = episodes.iter().find(|e| e.n_inputs() != input_names.len()) {
        return Err(Error::Schema(format!("episode {} does not match {} input names", e.id, input_names.len())));
    }
    Ok(Dataset { input_names, episodes })
}

pub fn write_episodes(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let header = Header { schema: EPISODES_SCHEMA.into(), input_names: data.input_names.clone() };
    write_lines(path.as_ref(), &header, &data.episodes)
}

pub fn read_interventions(path: impl AsRef<Path>) -> Result<Vec<InterventionSet>> {
    let (_, records) = read_lines(path.as_ref(), INTERVENTIONS_SCHEMA)?;
    records
        .into_iter()
        .map(|(line, v)| serde_json::from_value(v).map_err(|e| Error::Parse { line, msg: e.to_string() }))
        .collect()
}

pub fn write_interventions(path: impl AsRef<Path>, sets: &[InterventionSet]) -> Result<()> {
    let header = Header { schema: INTERVENTIONS_SCHEMA.into(), input_names: Vec::new() };
    write_lines(path.as_ref(), &header, sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub input_names: Vec<String>,
    pub counts: [usize; 3],
    #[serde(default)]
    pub source: serde_json::Value,
}

/// A directory holding `{train,val,test}.episodes.jsonl`, the matching
/// `.interventions.jsonl` files and `manifest.json`.
#[derive(Debug, Clone)]
pub struct DataDir {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub train_sets: Vec<InterventionSet>,
    pub val_sets: Vec<InterventionSet>,
    pub test_sets: Vec<InterventionSet>,
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{split}.episodes.jsonl")), dir.join(format!("{split}.interventions.jsonl")))
}

impl DataDir {
    pub fn write(&self, dir: impl AsRef<Path>, source: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, (d, s)) in SPLITS.iter().zip(self.splits()) {
            let (ep, iv) = split_paths(dir, name);
            write_episodes(ep, d)?;
            write_interventions(iv, s)?;
        }
        let m = Manifest {
            schema: DATA_SCHEMA.into(),
            input_names: self.train.input_names.clone(),
            counts: [self.train.len(), self.val.len(), self.test.len()],
            source,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut parts = Vec::new();
        for name in SPLITS {
            let (ep, iv) = split_paths(dir, name);
            let d = read_episodes(&ep)?;
            let s = read_interventions(&iv)?;
            let ids: std::collections::HashSet<&str> = d.episodes.iter().map(|e| e.id.as_str()).collect();
            if let Some(bad) = s.iter().find(|s| !ids.contains(s.episode_id.as_str())) {
                return Err(Error::Schema(format!("{}: unknown episode id '{}'", iv.display(), bad.episode_id)));
            }
            parts.push((d, s));
        }
        let mut it = parts.into_iter();
        let (train, train_sets) = it.next().unwrap();
        let (val, val_sets) = it.next().unwrap();
        let (test, test_sets) = it.next().unwrap();
        Ok(Self { train, val, test, train_sets, val_sets, test_sets })
    }

    fn splits(&self) -> [(&Dataset, &Vec<InterventionSet>); 3] {
        [(&self.train, &self.train_sets), (&self.val, &self.val_sets), (&self.test, &self.test_sets)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticConfig, SyntheticData};

    #[test]
    fn round_trip_is_exact() {
        let d = gen_synthetic(&SyntheticConfig { n_train: 5, n_val: 2, n_test: 2, ..Default::default() }).unwrap();
        let ds = SyntheticData::dataset(&d.train);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        write_episodes(&p, &ds).unwrap();
        assert_eq!(read_episodes(&p).unwrap(), ds);
        let q = dir.path().join("i.jsonl");
        write_interventions(&q, &d.train_sets).unwrap();
        assert_eq!(read_interventions(&q).unwrap(), d.train_sets);
    }

    #[test]
    fn missing_field_reports_line_and_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let good = r#"{"id":"a","dt_minutes":5,"context":[[1,2]],"y0":1,"future_x":[[2]],"targets":[1]}"#;
        let bad = r#"{"id":"b","dt_minutes":5,"context":[[1,2]],"y0":1,"future_x":[[2]]}"#;
        fs::write(&p, format!("{good}\n{bad}\n")).unwrap();
        match read_episodes(&p) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("targets"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, "").unwrap();
        assert!(read_episodes(&p).unwrap().is_empty());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, "{\"schema\":\"other/9\"}\n").unwrap();
        assert!(matches!(read_episodes(&p), Err(Error::Schema(_))));
    }
}
