//! Append-only JSONL journals: a header line followed by one record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Values;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: String,
    pub format_version: u32,
    pub config_hash: String,
    pub arm: String,
    /// What the journal holds: `optimization`, `evaluation` or `landscape`.
    pub contents: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization_seed: Option<usize>,
}

impl Header {
    pub fn new(config_hash: &str, arm: &str, contents: &str, optimization_seed: Option<usize>) -> Self {
        Header {
            kind: "header".into(),
            format_version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            arm: arm.into(),
            contents: contents.into(),
            optimization_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// One fitness evaluation of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub seq: u64,
    pub ticket: u64,
    pub config_id: String,
    /// Optimizer-space unit vector.
    pub unit: Vec<f64>,
    /// Every parameter the training used, frozen ones included.
    pub values: Values,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Option<f64>>,
    pub fitness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
    pub status: Status,
}

impl EvalRecord {
    /// Internal consistency: status, seed count and fitness = mean of per-seed values.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.per_seed.len() != self.seeds.len() {
            return Err("per_seed and seeds differ in length".into());
        }
        let all: Option<Vec<f64>> = self.per_seed.iter().copied().collect();
        match (&all, self.fitness, self.status) {
            (Some(vals), Some(f), Status::Ok) => {
                let m = crate::metrics::mean(vals);
                if (m - f).abs() > 1e-9 * m.abs().max(1.0) {
                    return Err(format!("fitness {f} is not the mean of per-seed values ({m})"));
                }
            }
            (None, None, Status::Failed) => {}
            _ => return Err("status, fitness and per-seed values disagree".into()),
        }
        Ok(())
    }
}

/// One evaluation training of an incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncumbentEvalRecord {
    pub seq: u64,
    pub optimization_seed: usize,
    pub evaluation_index: usize,
    pub seed: u64,
    pub config_id: String,
    pub values: Values,
    pub task_score: Option<f64>,
    pub default_shaped_return: Option<f64>,
    pub status: Status,
}

/// One training of a landscape sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeRecord {
    pub seq: u64,
    pub index_a: usize,
    pub index_b: usize,
    pub values: Values,
    pub seed: u64,
    pub task_score: Option<f64>,
    pub status: Status,
}

pub struct JournalWriter {
    file: File,
}

impl JournalWriter {
    /// Creates (truncating) a journal and writes its header.
    pub fn create(path: &Path, header: &Header) -> Result<Self> {
        let mut w = JournalWriter { file: File::create(path)? };
        w.append(header)?;
        Ok(w)
    }

    /// Opens an existing journal for appending, cutting it to `valid_len` bytes.
    pub fn reopen(path: &Path, valid_len: u64) -> Result<Self> {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(valid_len)?;
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.flush()?;
        Ok(JournalWriter { file })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<()> {
        let mut line = serde_json::to_vec(item)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Parsed journal contents.
#[derive(Debug, Clone)]
pub struct Journal<T> {
    pub path: PathBuf,
    pub header: Header,
    pub records: Vec<T>,
    /// Length in bytes of the complete lines; an unterminated trailing line
    /// (an interrupted write) is not counted.
    pub valid_len: u64,
}

/// Reads a journal. Any complete line that fails to parse is an integrity
/// error naming its (1-based) line number; an unterminated final line is
/// dropped.
pub fn read_journal<T: DeserializeOwned>(path: &Path) -> Result<Journal<T>> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let integrity = |line: usize, message: String| Error::Integrity {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    let mut valid_len = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            break;
        }
        let text = buf.trim_end();
        if header.is_none() {
            let h: Header = serde_json::from_str(text).map_err(|e| integrity(line_no, format!("bad header: {e}")))?;
            if h.kind != "header" || h.format_version != FORMAT_VERSION {
                return Err(integrity(line_no, "unsupported header".into()));
            }
            header = Some(h);
        } else {
            let r: T = serde_json::from_str(text).map_err(|e| integrity(line_no, e.to_string()))?;
            records.push(r);
        }
        valid_len += n as u64;
    }
    let header = header.ok_or_else(|| integrity(1, "missing header".into()))?;
    Ok(Journal {
        path: path.to_path_buf(),
        header,
        records,
        valid_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: u64) -> EvalRecord {
        EvalRecord {
            seq,
            ticket: seq,
            config_id: "00".into(),
            unit: vec![0.5],
            values: Values::new(),
            budget: 10,
            seeds: vec![1, 2],
            per_seed: vec![Some(1.0), Some(3.0)],
            fitness: Some(2.0),
            duration_secs: None,
            status: Status::Ok,
        }
    }

    #[test]
    fn round_trip_and_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let mut w = JournalWriter::create(&p, &Header::new("abc", "combined", "optimization", Some(0))).unwrap();
        w.append(&record(0)).unwrap();
        w.append(&record(1)).unwrap();
        drop(w);
        let full_len = std::fs::metadata(&p).unwrap().len();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&p)
            .unwrap()
            .write_all(b"{\"seq\":2,")
            .unwrap();
        let j: Journal<EvalRecord> = read_journal(&p).unwrap();
        assert_eq!(j.records, vec![record(0), record(1)]);
        assert_eq!(j.valid_len, full_len);
        assert_eq!(j.header.optimization_seed, Some(0));
        let mut w = JournalWriter::reopen(&p, j.valid_len).unwrap();
        w.append(&record(2)).unwrap();
        let j: Journal<EvalRecord> = read_journal(&p).unwrap();
        assert_eq!(j.records.len(), 3);
    }

    #[test]
    fn corrupt_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let mut w = JournalWriter::create(&p, &Header::new("abc", "combined", "optimization", None)).unwrap();
        w.append(&record(0)).unwrap();
        drop(w);
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("not json\n");
        std::fs::write(&p, text).unwrap();
        match read_journal::<EvalRecord>(&p) {
            Err(Error::Integrity { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn record_check() {
        assert!(record(0).check().is_ok());
        let mut r = record(0);
        r.fitness = Some(2.5);
        assert!(r.check().is_err());
        let mut r = record(0);
        r.per_seed[1] = None;
        assert!(r.check().is_err());
        r.fitness = None;
        r.status = Status::Failed;
        assert!(r.check().is_ok());
    }
}
