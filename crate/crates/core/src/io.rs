//! CSV and JSON file formats shared by the library and the command-line tool.
//!
//! I/Q files carry an `I,Q` header and one sample per row in time order.
//! Floats are written with Rust's shortest round-trip formatting so a
//! write/read cycle is bit-exact.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{DatasetSplit, IqSample, IqSequence, SignalPair};

pub const TRAIN_INPUT: &str = "train_input.csv";
pub const TRAIN_OUTPUT: &str = "train_output.csv";
pub const VAL_INPUT: &str = "val_input.csv";
pub const VAL_OUTPUT: &str = "val_output.csv";
pub const TEST_INPUT: &str = "test_input.csv";
pub const TEST_OUTPUT: &str = "test_output.csv";
pub const REFERENCE: &str = "reference.csv";
pub const META: &str = "meta.json";

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IqRow {
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "Q")]
    q: f64,
}

pub fn write_iq_csv(path: &Path, samples: &[IqSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::with_capacity(samples.len() * 40 + 4);
    body.push_str("I,Q\n");
    for s in samples {
        body.push_str(&format!("{},{}\n", s.i, s.q));
    }
    w.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_iq_csv(path: &Path, sample_rate_hz: f64) -> Result<IqSequence> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "I" || &headers[1] != "Q" {
        return Err(Error::invalid(format!(
            "{}: expected header `I,Q`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<IqRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        out.push(IqSample::new(row.i, row.q));
    }
    IqSequence::new(out, sample_rate_hz)
}

/// Write any serializable value as pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Generic header + rows CSV writer used for tables and plot exports.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Paths of the six partition files inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_split(&self, split: &DatasetSplit) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for (pair, i, o) in [
            (&split.train, TRAIN_INPUT, TRAIN_OUTPUT),
            (&split.validation, VAL_INPUT, VAL_OUTPUT),
            (&split.test, TEST_INPUT, TEST_OUTPUT),
        ] {
            write_iq_csv(&self.file(i), pair.input.samples())?;
            write_iq_csv(&self.file(o), pair.output.samples())?;
        }
        Ok(())
    }

    pub fn read_split(&self, sample_rate_hz: f64) -> Result<DatasetSplit> {
        let pair = |i: &str, o: &str| -> Result<SignalPair> {
            SignalPair::new(
                read_iq_csv(&self.file(i), sample_rate_hz)?,
                read_iq_csv(&self.file(o), sample_rate_hz)?,
            )
        };
        Ok(DatasetSplit {
            train: pair(TRAIN_INPUT, TRAIN_OUTPUT)?,
            validation: pair(VAL_INPUT, VAL_OUTPUT)?,
            test: pair(TEST_INPUT, TEST_OUTPUT)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn iq_csv_round_trip_is_bit_exact(v in prop::collection::vec((-1e6f64..1e6, -1e-3f64..1e-3), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.csv");
            let samples: Vec<_> = v.iter().map(|&(i, q)| IqSample::new(i, q)).collect();
            write_iq_csv(&path, &samples).unwrap();
            let back = read_iq_csv(&path, 1.0).unwrap();
            prop_assert_eq!(back.samples(), &samples[..]);
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "re,im\n1,2\n").unwrap();
        assert!(read_iq_csv(&path, 1.0).is_err());
    }
}
