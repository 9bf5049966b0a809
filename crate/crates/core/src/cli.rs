//! Run configuration files and the commands behind the `dpd-forge` binary.
//!
//! Every command returns the JSON object the binary prints on stdout and
//! writes its artifacts under an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::{self, write_iq_csv, write_json, write_table};
use crate::metrics::{self, MetricReport};
use crate::models::{Checkpoint, Family, ModelConfig};
use crate::pipeline::{
    resolve_target_gain, simulate, sweep_budgets, train_dpd_with, train_pa_with, write_sweep_table,
    Dataset, EpochRecord, MetricsConfig, Partition, Phase, TrainConfig, TrainHistory,
};
use crate::waveform::{demodulate, OfdmConfig, SynthPaConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const GOLD_PA_FILE: &str = "gold_pa.json";
pub const GOLD_DPD_FILE: &str = "gold_dpd.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDISTORTED_FILE: &str = "predistorted.csv";
pub const SWEEP_FILE: &str = "sweep_table.csv";
pub const PSD_FILE: &str = "psd.csv";
pub const CONSTELLATION_FILE: &str = "constellation.csv";
pub const CURVES_FILE: &str = "learning_curves.csv";

/// Samples generated by `datagen` unless configured otherwise.
pub const DEFAULT_N_SAMPLES: usize = 38_400;

/// The `waveform` section: OFDM settings plus the dataset length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub struct WaveformSection {
    pub n_samples: usize,
    pub ofdm: OfdmConfig,
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_N_SAMPLES,
            ofdm: OfdmConfig::default(),
        }
    }
}

impl TryFrom<Value> for WaveformSection {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        let Value::Object(mut map) = v else {
            return Err("waveform must be an object".into());
        };
        let n_samples = match map.remove("n_samples") {
            None => DEFAULT_N_SAMPLES,
            Some(n) => serde_json::from_value(n).map_err(|e| format!("waveform.n_samples: {e}"))?,
        };
        let ofdm =
            serde_json::from_value(Value::Object(map)).map_err(|e| format!("waveform: {e}"))?;
        Ok(Self { n_samples, ofdm })
    }
}

impl From<WaveformSection> for Value {
    fn from(w: WaveformSection) -> Value {
        let mut v = serde_json::to_value(&w.ofdm).expect("OFDM config serializes");
        if let Value::Object(map) = &mut v {
            map.insert("n_samples".into(), w.n_samples.into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub pa: ModelConfig,
    pub dpd: ModelConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            pa: ModelConfig::dgru(9),
            dpd: ModelConfig::dgru(9),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub pa_ckpt: Option<PathBuf>,
    pub dpd_ckpt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file. Missing sections take their defaults,
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub waveform: WaveformSection,
    pub synth_pa: SynthPaConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waveform.n_samples == 0 {
            return Err(Error::Config("waveform.n_samples must be positive".into()));
        }
        self.waveform.ofdm.validate()?;
        self.synth_pa.validate()?;
        self.model.pa.validate()?;
        self.model.dpd.validate()?;
        self.train.validate()?;
        self.metrics
            .channel_plan
            .validate(self.waveform.ofdm.sample_rate_hz)
    }

    /// Seed both the stimulus draw and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.waveform.ofdm.seed = seed;
        self.train.seed = seed;
    }

    fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory (--out or paths.out)".into()))
    }

    fn data_dir(&self) -> Result<&Path> {
        self.paths
            .data
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset directory (--data or paths.data)".into()))
    }

    fn pa_ckpt(&self) -> Result<&Path> {
        self.paths
            .pa_ckpt
            .as_deref()
            .ok_or_else(|| Error::Config("no PA checkpoint (--pa-ckpt or paths.pa_ckpt)".into()))
    }
}

/// Comma-separated, strictly ascending positive integers.
pub fn parse_budgets(list: &str) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    for tok in list.split(',') {
        let b: usize = tok
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("budget {tok:?} is not a positive integer")))?;
        if b == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if out.last().is_some_and(|&prev| b <= prev) {
            return Err(Error::Config(format!(
                "budgets must be ascending, got {list}"
            )));
        }
        out.push(b);
    }
    Ok(out)
}

pub fn parse_families(list: &str) -> Result<Vec<Family>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).map_err(Error::artifact(format!("dataset {}", dir.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(Error::artifact(format!("checkpoint {}", path.display())))
}

fn progress(tag: &'static str) -> impl FnMut(&EpochRecord) {
    move |r| match (r.val_acpr_l_dbc, r.val_acpr_r_dbc, r.val_evm_db) {
        (Some(l), Some(rr), Some(e)) => eprintln!(
            "[{tag}] epoch {:>4} loss {:.4e} acpr {l:.2}/{rr:.2} dBc evm {e:.2} dB lr {:.1e}",
            r.epoch, r.train_loss, r.lr
        ),
        _ => eprintln!(
            "[{tag}] epoch {:>4} loss {:.4e} val nmse {:.2} dB lr {:.1e}",
            r.epoch, r.train_loss, r.val_nmse_db, r.lr
        ),
    }
}

/// Generate a synthetic dataset into `paths.out`.
pub fn datagen(cfg: &RunConfig) -> Result<Value> {
    let out = cfg.out_dir()?;
    let data = Dataset::generate(&cfg.waveform.ofdm, &cfg.synth_pa, cfg.waveform.n_samples)?;
    create_dir(out)?;
    data.save(out)?;
    eprintln!(
        "[datagen] {} samples, split {:?}, written to {}",
        data.meta.n_samples,
        data.meta.split_lengths,
        out.display()
    );
    Ok(json!({
        "out": out,
        "n_samples": data.meta.n_samples,
        "split_lengths": data.meta.split_lengths,
        "sample_rate_hz": data.meta.sample_rate_hz,
    }))
}

/// Train the PA behavioral model `model.pa` on `paths.data`.
pub fn train_pa(cfg: &RunConfig) -> Result<Value> {
    let out = cfg.out_dir()?;
    let data = load_dataset(cfg.data_dir()?)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    let (gold, history) =
        train_pa_with(&data.split, &cfg.model.pa, &cfg.train, &mut progress("pa"))?;
    history.write_csv(&out.join(HISTORY_FILE))?;
    let ckpt = out.join(GOLD_PA_FILE);
    gold.save(&ckpt)?;
    let info = gold.gold.as_ref().expect("training records a gold metric");
    Ok(json!({
        "phase": "pa",
        "family": gold.model.family().as_str(),
        "params": gold.model.count_params(),
        "epoch": info.epoch,
        "val_nmse_db": info.value,
        "checkpoint": ckpt,
    }))
}

fn write_report(out: &Path, report: &MetricReport) -> Result<Value> {
    write_json(&out.join(REPORT_FILE), report)?;
    Ok(serde_json::to_value(report)?)
}

/// Train `model.dpd` through the frozen PA checkpoint, then score the gold
/// DPD on the test partition.
pub fn train_dpd(cfg: &RunConfig) -> Result<Value> {
    let out = cfg.out_dir()?;
    let data = load_dataset(cfg.data_dir()?)?;
    let pa = load_checkpoint(cfg.pa_ckpt()?)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    let (gold, history) = train_dpd_with(
        &data,
        &pa,
        &cfg.model.dpd,
        &cfg.train,
        &cfg.metrics,
        &mut progress("dpd"),
    )?;
    history.write_csv(&out.join(HISTORY_FILE))?;
    let ckpt = out.join(GOLD_DPD_FILE);
    gold.save(&ckpt)?;

    let gain = resolve_target_gain(cfg.train.target_gain, &data.split)?;
    let test = data.pair(Partition::Test);
    let reference = data.reference_for(Partition::Test)?;
    let sim = simulate(
        Some(&gold.model),
        &pa.model,
        &test.input,
        &reference,
        &cfg.metrics,
        gain,
    )?;
    write_iq_csv(&out.join(PREDISTORTED_FILE), sim.predistorted.samples())?;
    write_report(out, &sim.report)?;

    let best = history.best().expect("at least one epoch");
    Ok(json!({
        "phase": "dpd",
        "family": gold.model.family().as_str(),
        "params": gold.model.count_params(),
        "epoch": best.epoch,
        "val_mean_acpr_dbc": best.mean_acpr_dbc(),
        "val_acpr_l_dbc": best.val_acpr_l_dbc,
        "val_acpr_r_dbc": best.val_acpr_r_dbc,
        "val_evm_db": best.val_evm_db,
        "checkpoint": ckpt,
    }))
}

/// SIM figures on the test partition, with or without the DPD checkpoint.
/// The returned object equals the written `report.json`.
pub fn eval(cfg: &RunConfig, no_dpd: bool) -> Result<Value> {
    let out = cfg.out_dir()?;
    let data = load_dataset(cfg.data_dir()?)?;
    let pa = load_checkpoint(cfg.pa_ckpt()?)?;
    let dpd = if no_dpd {
        None
    } else {
        let path = cfg.paths.dpd_ckpt.as_deref().ok_or_else(|| {
            Error::Config("no DPD checkpoint (--dpd-ckpt, paths.dpd_ckpt or --no-dpd)".into())
        })?;
        Some(load_checkpoint(path)?)
    };
    create_dir(out)?;
    let mut resolved = cfg.clone();
    if no_dpd {
        resolved.paths.dpd_ckpt = None;
    }
    write_json(&out.join(CONFIG_FILE), &resolved)?;
    let gain = resolve_target_gain(cfg.train.target_gain, &data.split)?;
    let test = data.pair(Partition::Test);
    let reference = data.reference_for(Partition::Test)?;
    let sim = simulate(
        dpd.as_ref().map(|c| &c.model),
        &pa.model,
        &test.input,
        &reference,
        &cfg.metrics,
        gain,
    )?;
    if dpd.is_some() {
        write_iq_csv(&out.join(PREDISTORTED_FILE), sim.predistorted.samples())?;
    }
    eprintln!(
        "[eval] acpr {:.2}/{:.2} dBc evm {:.2} dB",
        sim.report.acpr_left_dbc, sim.report.acpr_right_dbc, sim.report.evm_db
    );
    write_report(out, &sim.report)
}

/// Train one DPD per (family, budget) against a shared PA model. Without
/// `paths.pa_ckpt` the PA is trained first from `model.pa`.
pub fn sweep(
    cfg: &RunConfig,
    families: &[Family],
    budgets: &[usize],
    jobs: usize,
) -> Result<Value> {
    let out = cfg.out_dir()?;
    let data = load_dataset(cfg.data_dir()?)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    let pa = match cfg.paths.pa_ckpt.as_deref() {
        Some(p) => load_checkpoint(p)?,
        None => {
            let (gold, history) =
                train_pa_with(&data.split, &cfg.model.pa, &cfg.train, &mut progress("pa"))?;
            history.write_csv(&out.join(HISTORY_FILE))?;
            gold.save(&out.join(GOLD_PA_FILE))?;
            gold
        }
    };
    let cells = out.join("cells");
    create_dir(&cells)?;
    let rows = sweep_budgets(
        families,
        budgets,
        &data,
        &pa,
        &cfg.train,
        &cfg.metrics,
        jobs,
        Some(&cells),
    );
    let table = out.join(SWEEP_FILE);
    write_sweep_table(&table, &rows)?;
    let failed: Vec<Value> = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| {
                eprintln!("[sweep] {} @ {} failed: {e}", r.family, r.budget);
                json!({"family": r.family.as_str(), "budget": r.budget, "error": e})
            })
        })
        .collect();
    Ok(json!({
        "rows": rows.len(),
        "failed": failed,
        "table": table,
    }))
}

/// Plot data for a DPD run directory: spectra with and without DPD,
/// the demodulated test constellation and the learning curves.
pub fn export_plots(run_dir: &Path) -> Result<Value> {
    let cfg_path = run_dir.join(CONFIG_FILE);
    let cfg: RunConfig = io::read_json(&cfg_path).map_err(Error::artifact(format!(
        "run config {}",
        cfg_path.display()
    )))?;
    let data = load_dataset(cfg.data_dir().map_err(Error::artifact("dataset path"))?)?;
    let pa = load_checkpoint(
        cfg.pa_ckpt()
            .map_err(Error::artifact("PA checkpoint path"))?,
    )?;
    let dpd_path = match run_dir.join(GOLD_DPD_FILE) {
        p if p.is_file() => p,
        _ => cfg.paths.dpd_ckpt.clone().ok_or_else(|| {
            Error::artifact("DPD checkpoint")(Error::Config("run has no DPD checkpoint".into()))
        })?,
    };
    let dpd = load_checkpoint(&dpd_path)?;
    let history_path = run_dir.join(HISTORY_FILE);
    let history = TrainHistory::read_csv(&history_path, Phase::Dpd).map_err(Error::artifact(
        format!("history {}", history_path.display()),
    ))?;

    let gain = resolve_target_gain(cfg.train.target_gain, &data.split)?;
    let test = data.pair(Partition::Test);
    let reference = data.reference_for(Partition::Test)?;
    let without = simulate(None, &pa.model, &test.input, &reference, &cfg.metrics, gain)?;
    let with = simulate(
        Some(&dpd.model),
        &pa.model,
        &test.input,
        &reference,
        &cfg.metrics,
        gain,
    )?;

    let psd_cfg = cfg.metrics.psd.fitted_to(test.input.len());
    let a = metrics::psd(&without.output, &psd_cfg)?;
    let b = metrics::psd(&with.output, &psd_cfg)?;
    let psd_rows: Vec<Vec<String>> = a
        .freqs_hz
        .iter()
        .zip(a.power_density.iter().zip(&b.power_density))
        .map(|(f, (pa, pb))| {
            vec![
                f.to_string(),
                metrics::to_db(*pa).to_string(),
                metrics::to_db(*pb).to_string(),
            ]
        })
        .collect();
    write_table(
        &run_dir.join(PSD_FILE),
        &["freq_hz", "power_db_no_dpd", "power_db_dpd"],
        &psd_rows,
    )?;

    let points = demodulate(with.output.scaled(1.0 / gain)?.samples(), &reference)?;
    let sc = reference.config.subcarriers_per_channel;
    let k = reference.points_per_symbol();
    let const_rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            vec![
                p.i.to_string(),
                p.q.to_string(),
                ((idx % k) / sc).to_string(),
            ]
        })
        .collect();
    write_table(
        &run_dir.join(CONSTELLATION_FILE),
        &["I", "Q", "channel"],
        &const_rows,
    )?;

    history.write_csv(&run_dir.join(CURVES_FILE))?;
    Ok(json!({
        "psd": run_dir.join(PSD_FILE),
        "psd_rows": psd_rows.len(),
        "constellation": run_dir.join(CONSTELLATION_FILE),
        "constellation_rows": const_rows.len(),
        "learning_curves": run_dir.join(CURVES_FILE),
        "epochs": history.records.len(),
    }))
}
