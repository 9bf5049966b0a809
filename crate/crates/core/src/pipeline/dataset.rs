//! Generated PA datasets: stimulus, PA response, split and reference grid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, DatasetPaths};
use crate::signal::{split_dataset, DatasetSplit, IqSample, SignalPair, DEFAULT_SPLIT};
use crate::waveform::{generate_ofdm, synth_pa_forward, OfdmConfig, OfdmReference, SynthPaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub split_lengths: [usize; 3],
    pub waveform: OfdmConfig,
    pub synth_pa: SynthPaConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: DatasetSplit,
    /// Constellation grid of the whole generated sequence (offset 0).
    pub reference: OfdmReference,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Generate `n_samples` of OFDM stimulus, pass it through the synthetic
    /// PA and split it 60/20/20. The symbol count is derived from
    /// `n_samples`; `waveform.num_symbols` is ignored.
    pub fn generate(waveform: &OfdmConfig, pa: &SynthPaConfig, n_samples: usize) -> Result<Self> {
        pa.validate()?;
        let mut ofdm = waveform.clone();
        ofdm.validate()?;
        ofdm.num_symbols = ofdm.symbols_for(n_samples);
        let (x, reference) = generate_ofdm(&ofdm)?;
        let x = x.slice(0, n_samples)?;
        let y = synth_pa_forward(pa, &x)?;
        let split = split_dataset(&x, &y, DEFAULT_SPLIT)?;
        let meta = DatasetMeta {
            sample_rate_hz: ofdm.sample_rate_hz,
            n_samples,
            split_lengths: [split.train.len(), split.validation.len(), split.test.len()],
            waveform: ofdm,
            synth_pa: pa.clone(),
        };
        Ok(Self {
            split,
            reference,
            meta,
        })
    }

    pub fn pair(&self, part: Partition) -> &SignalPair {
        match part {
            Partition::Train => &self.split.train,
            Partition::Validation => &self.split.validation,
            Partition::Test => &self.split.test,
        }
    }

    /// Reference restricted to the OFDM symbols lying entirely inside a
    /// partition, with offsets relative to that partition.
    pub fn reference_for(&self, part: Partition) -> Result<OfdmReference> {
        let (train, val, test) = self.split.offsets();
        let start = match part {
            Partition::Train => train,
            Partition::Validation => val,
            Partition::Test => test,
        };
        self.reference
            .window(start, self.pair(part).len())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "{part:?} partition is shorter than one OFDM symbol ({} samples)",
                    self.meta.waveform.symbol_len()
                ))
            })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let paths = DatasetPaths::new(dir);
        paths.write_split(&self.split)?;
        let rows: Vec<Vec<String>> = self
            .reference
            .rows()
            .map(|(s, c, k, p)| {
                vec![
                    s.to_string(),
                    c.to_string(),
                    k.to_string(),
                    p.i.to_string(),
                    p.q.to_string(),
                ]
            })
            .collect();
        io::write_table(
            &paths.file(io::REFERENCE),
            &["symbol", "channel", "subcarrier", "I", "Q"],
            &rows,
        )?;
        io::write_json(&paths.file(io::META), &self.meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let paths = DatasetPaths::new(dir);
        let meta: DatasetMeta = io::read_json(&paths.file(io::META))?;
        let split = paths.read_split(meta.sample_rate_hz)?;
        let got = [split.train.len(), split.validation.len(), split.test.len()];
        if got != meta.split_lengths {
            return Err(Error::invalid(format!(
                "partition lengths {got:?} disagree with meta.json {:?}",
                meta.split_lengths
            )));
        }
        let reference = read_reference(&paths.file(io::REFERENCE), &meta.waveform)?;
        Ok(Self {
            split,
            reference,
            meta,
        })
    }
}

#[derive(Deserialize)]
struct RefRow {
    symbol: usize,
    channel: usize,
    subcarrier: usize,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "Q")]
    q: f64,
}

fn read_reference(path: &Path, cfg: &OfdmConfig) -> Result<OfdmReference> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_slice());
    let mut rows = Vec::new();
    for r in rdr.deserialize::<RefRow>() {
        let r = r.map_err(csv_err)?;
        rows.push((r.symbol, r.channel, r.subcarrier, IqSample::new(r.i, r.q)));
    }
    OfdmReference::from_rows(cfg.clone(), &rows)
}
