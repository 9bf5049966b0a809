//! The three-step flow: fit a PA behavioral model on measured data, train a
//! DPD through the frozen PA model, and evaluate the cascade.

mod dataset;
mod sweep;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    mse_loss, AdamW, AdamWConfig, Graph, PlateauConfig, PlateauScheduler, Tape, Tensor,
};
use crate::error::{Error, Result};
use crate::metrics::{self, ChannelPlan, MetricReport, PsdConfig};
use crate::models::{gmp_fit, Checkpoint, GoldInfo, Model, ModelConfig, DEFAULT_RIDGE};
use crate::signal::{frame_count, DatasetSplit, IqSample, IqSequence};
use crate::waveform::OfdmReference;

pub use dataset::{Dataset, DatasetMeta, Partition};
pub use sweep::{sweep_budgets, write_sweep_table, SweepRow, SWEEP_HEADER};

/// A loss above this multiple of the first batch's loss counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

pub const PA_GOLD_METRIC: &str = "val_nmse_db";
pub const DPD_GOLD_METRIC: &str = "val_mean_acpr_dbc";

/// Linear gain the PA-plus-DPD cascade is trained towards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGain {
    /// Mean `|y|/|x|` over the training partition.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub frame_len: usize,
    pub stride: usize,
    pub initial_lr: f64,
    pub weight_decay: f64,
    pub scheduler: PlateauConfig,
    pub seed: u64,
    pub target_gain: TargetGain,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            frame_len: 50,
            stride: 1,
            initial_lr: 1e-3,
            weight_decay: AdamWConfig::default().weight_decay,
            scheduler: PlateauConfig::default(),
            seed: 0,
            target_gain: TargetGain::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.frame_len == 0 || self.stride == 0 {
            return Err(Error::Config(
                "epochs, batch_size, frame_len and stride must be positive".into(),
            ));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if self.stride > self.frame_len {
            return Err(Error::Config("stride cannot exceed frame_len".into()));
        }
        if let TargetGain::Fixed(g) = self.target_gain {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config("fixed target gain must be positive".into()));
            }
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.initial_lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Spectral settings used for every SIM-ACPR figure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub channel_plan: ChannelPlan,
    pub psd: PsdConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pa,
    Dpd,
}

/// One line of `history.csv`. ACPR and EVM are only recorded while training
/// a DPD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nmse_db: f64,
    pub val_acpr_l_dbc: Option<f64>,
    pub val_acpr_r_dbc: Option<f64>,
    pub val_evm_db: Option<f64>,
    pub lr: f64,
}

impl EpochRecord {
    pub fn mean_acpr_dbc(&self) -> Option<f64> {
        Some(0.5 * (self.val_acpr_l_dbc? + self.val_acpr_r_dbc?))
    }

    /// The value the phase's gold rule minimizes.
    pub fn selection_metric(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Pa => self.val_nmse_db,
            Phase::Dpd => self.mean_acpr_dbc().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub phase: Phase,
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Epoch (1-based) with the smallest selection metric; ties go to the
    /// earliest epoch.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| {
                let v = r.selection_metric(self.phase);
                match best {
                    Some(b) if !(v < b.selection_metric(self.phase)) => Some(b),
                    _ if v.is_nan() => best,
                    _ => Some(r),
                }
            })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, phase: Phase) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
        Ok(Self { phase, records })
    }
}

fn iq_tensor(rows: impl Iterator<Item = IqSample>, b: usize) -> Tensor {
    let mut data = Vec::with_capacity(2 * b);
    for s in rows {
        data.push(s.i);
        data.push(s.q);
    }
    Tensor::from_vec(b, 2, data)
}

/// Per-step `B×2` tensors for the frames starting at `starts`.
fn step_tensors(
    samples: &[IqSample],
    starts: &[usize],
    frame_len: usize,
    gain: f64,
) -> Vec<Tensor> {
    (0..frame_len)
        .map(|t| {
            iq_tensor(
                starts.iter().map(|&s| samples[s + t].scale(gain)),
                starts.len(),
            )
        })
        .collect()
}

/// One optimizer step on a mini-batch. With `frozen_pa` the loss is taken
/// at the PA model's output, so gradients flow back through it into `model`.
fn train_batch(
    model: &mut Model,
    frozen_pa: Option<&Model>,
    inputs: Vec<Tensor>,
    targets: &[Tensor],
    opt: &mut AdamW,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let xs: Vec<_> = inputs.into_iter().map(|t| tape.constant(t)).collect();
    let mut outs = model.forward(&mut tape, &vars, &xs)?;
    if let Some(pa) = frozen_pa {
        let pv = pa.bind(&mut tape);
        outs = pa.forward(&mut tape, &pv, &outs)?;
    }
    let loss = mse_loss(&mut tape, &outs, targets)?;
    let value = tape.value(&loss).data[0];
    if !value.is_finite() {
        return Ok(value);
    }
    tape.backward(loss)?;
    model.params.load_grads(&tape, &vars)?;
    opt.step(&mut model.params)?;
    Ok(value)
}

/// Shuffled mini-batch BPTT over framed data for every epoch, calling
/// `validate` after each one. Returns the gold model and the history.
fn fit_frames(
    model: &mut Model,
    frozen_pa: Option<&Model>,
    input: &[IqSample],
    target: &[IqSample],
    target_gain: f64,
    t: &TrainConfig,
    phase: Phase,
    mut validate: impl FnMut(&Model) -> Result<(f64, Option<metrics::Acpr>, Option<f64>)>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, EpochRecord, TrainHistory)> {
    let frames = frame_count(input.len(), t.frame_len, t.stride);
    if frames == 0 {
        return Err(Error::invalid(format!(
            "training partition ({} samples) is shorter than one frame ({})",
            input.len(),
            t.frame_len
        )));
    }
    let mut starts: Vec<usize> = (0..frames).map(|k| k * t.stride).collect();
    let mut opt = AdamW::new(t.adamw(), &model.params);
    let mut sched = PlateauScheduler::new(t.scheduler);
    let mut history = TrainHistory {
        phase,
        records: Vec::with_capacity(t.epochs),
    };
    let mut gold: Option<(Model, EpochRecord)> = None;
    let mut initial_loss: Option<f64> = None;

    for epoch in 1..=t.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        rng.set_stream(epoch as u64);
        starts.shuffle(&mut rng);
        let lr = opt.lr();
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in starts.chunks(t.batch_size) {
            let xs = step_tensors(input, batch, t.frame_len, 1.0);
            let ys = step_tensors(target, batch, t.frame_len, target_gain);
            let loss = train_batch(model, frozen_pa, xs, &ys, &mut opt)?;
            let first = *initial_loss.get_or_insert(loss);
            if !loss.is_finite() || loss > DIVERGENCE_FACTOR * first.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged { epoch, loss });
            }
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let (val_nmse_linear, acpr, evm) = validate(model)?;
        let record = EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_nmse_db: metrics::to_db(val_nmse_linear),
            val_acpr_l_dbc: acpr.map(|a| a.left_dbc),
            val_acpr_r_dbc: acpr.map(|a| a.right_dbc),
            val_evm_db: evm,
            lr,
        };
        if !record.val_nmse_db.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: val_nmse_linear,
            });
        }
        progress(&record);
        let metric = record.selection_metric(phase);
        let improved = match &gold {
            None => true,
            Some((_, best)) => metric < best.selection_metric(phase),
        };
        if improved {
            gold = Some((model.clone(), record.clone()));
        }
        let next = sched.observe(val_nmse_linear, lr);
        opt.set_lr(next);
        history.records.push(record);
    }
    let (m, r) = gold.expect("at least one epoch ran");
    Ok((m, r, history))
}

/// Train a PA behavioral model on `split.train`, selecting the epoch with
/// the lowest NMSE on the whole validation sequence. GMP models are fitted
/// once by least squares instead.
pub fn train_pa(
    split: &DatasetSplit,
    config: &ModelConfig,
    t: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    train_pa_with(split, config, t, &mut |_| {})
}

pub fn train_pa_with(
    split: &DatasetSplit,
    config: &ModelConfig,
    t: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    t.validate()?;
    config.validate()?;
    let (train, val) = (&split.train, &split.validation);
    let val_nmse =
        |m: &Model| -> Result<f64> { Ok(metrics::nmse(&m.run(&val.input)?, &val.output)?.linear) };

    if let ModelConfig::Gmp(g) = config {
        let model = gmp_fit(&train.input, &train.output, g, DEFAULT_RIDGE)?;
        let train_loss = metrics::nmse(&model.run(&train.input)?, &train.output)?.linear
            * train.output.mean_power();
        let linear = val_nmse(&model)?;
        let record = EpochRecord {
            epoch: 1,
            train_loss,
            val_nmse_db: metrics::to_db(linear),
            val_acpr_l_dbc: None,
            val_acpr_r_dbc: None,
            val_evm_db: None,
            lr: 0.0,
        };
        progress(&record);
        let mut ck = Checkpoint::new(model, t.seed);
        ck.gold = Some(GoldInfo {
            metric: PA_GOLD_METRIC.into(),
            value: record.val_nmse_db,
            epoch: 1,
        });
        return Ok((
            ck,
            TrainHistory {
                phase: Phase::Pa,
                records: vec![record],
            },
        ));
    }

    let mut model = Model::init(config.clone(), t.seed)?;
    let (gold, best, history) = fit_frames(
        &mut model,
        None,
        train.input.samples(),
        train.output.samples(),
        1.0,
        t,
        Phase::Pa,
        |m| Ok((val_nmse(m)?, None, None)),
        progress,
    )?;
    let mut ck = Checkpoint::new(gold, t.seed);
    ck.gold = Some(GoldInfo {
        metric: PA_GOLD_METRIC.into(),
        value: best.val_nmse_db,
        epoch: best.epoch,
    });
    Ok((ck, history))
}

/// Gain the cascade is trained towards for this dataset.
pub fn resolve_target_gain(mode: TargetGain, split: &DatasetSplit) -> Result<f64> {
    match mode {
        TargetGain::Auto => metrics::target_gain(&split.train.input, &split.train.output),
        TargetGain::Fixed(g) => Ok(g),
    }
}

/// Train a DPD through the frozen PA model so that `pa(dpd(x)) ≈ G·x`.
/// After every epoch the validation input is run through DPD then PA and
/// the epoch with the lowest mean of left and right SIM-ACPR is kept.
pub fn train_dpd(
    data: &Dataset,
    pa: &Checkpoint,
    config: &ModelConfig,
    t: &TrainConfig,
    m: &MetricsConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    train_dpd_with(data, pa, config, t, m, &mut |_| {})
}

pub fn train_dpd_with(
    data: &Dataset,
    pa: &Checkpoint,
    config: &ModelConfig,
    t: &TrainConfig,
    m: &MetricsConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    t.validate()?;
    config.validate()?;
    let pa_bytes = pa.to_json()?;
    let mut pa_model = pa.model.clone();
    pa_model.params.set_frozen(true);

    let gain = resolve_target_gain(t.target_gain, &data.split)?;
    let val = &data.split.validation;
    let val_ref = data.reference_for(Partition::Validation)?;
    let train = &data.split.train;

    let mut dpd = Model::init(config.clone(), t.seed.wrapping_add(1))?;
    let (gold, best, history) = fit_frames(
        &mut dpd,
        Some(&pa_model),
        train.input.samples(),
        train.input.samples(),
        gain,
        t,
        Phase::Dpd,
        |d| {
            let sim = simulate(Some(d), &pa_model, &val.input, &val_ref, m, gain)?;
            let r = sim.report;
            Ok((
                crate::metrics::nmse(&sim.output, &val.input.scaled(gain)?)?.linear,
                Some(metrics::Acpr {
                    left_dbc: r.acpr_left_dbc,
                    right_dbc: r.acpr_right_dbc,
                }),
                Some(r.evm_db),
            ))
        },
        progress,
    )?;

    let after = Checkpoint {
        model: pa_model,
        seed: pa.seed,
        gold: pa.gold.clone(),
    };
    if after.to_json()? != pa_bytes {
        return Err(Error::Graph(
            "frozen PA parameters changed during DPD training".into(),
        ));
    }
    let mut ck = Checkpoint::new(gold, t.seed);
    ck.gold = Some(GoldInfo {
        metric: DPD_GOLD_METRIC.into(),
        value: best.mean_acpr_dbc().expect("DPD epochs record ACPR"),
        epoch: best.epoch,
    });
    Ok((ck, history))
}

/// Sequences and figures from one pass of `x` through DPD and PA model.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub predistorted: IqSequence,
    pub output: IqSequence,
    pub report: MetricReport,
}

/// Run `x` through the optional DPD and then the PA model over the whole
/// sequence with zero initial state, and score the result.
pub fn simulate(
    dpd: Option<&Model>,
    pa: &Model,
    x: &IqSequence,
    reference: &OfdmReference,
    m: &MetricsConfig,
    gain: f64,
) -> Result<Simulation> {
    let u = match dpd {
        Some(d) => d.run(x)?,
        None => x.clone(),
    };
    let y = pa.run(&u)?;
    let psd_cfg = m.psd.fitted_to(y.len());
    let acpr = metrics::acpr(&y, &m.channel_plan, &psd_cfg)?;
    let report = MetricReport {
        nmse_db: metrics::nmse(&y, &x.scaled(gain)?)?.db,
        acpr_left_dbc: acpr.left_dbc,
        acpr_right_dbc: acpr.right_dbc,
        evm_db: metrics::evm(&y, reference, gain)?,
        papr_db: metrics::papr(&u)?,
        gain,
    };
    Ok(Simulation {
        predistorted: u,
        output: y,
        report,
    })
}

/// SIM figures of merit for `pa(dpd(x))`, or of `pa(x)` without a DPD.
pub fn sim_eval(
    dpd: Option<&Checkpoint>,
    pa: &Checkpoint,
    x: &IqSequence,
    reference: &OfdmReference,
    m: &MetricsConfig,
    gain: f64,
) -> Result<MetricReport> {
    Ok(simulate(dpd.map(|c| &c.model), &pa.model, x, reference, m, gain)?.report)
}

/// DPD output over a whole sequence, starting from zero state.
pub fn predistort(dpd: &Checkpoint, x: &IqSequence) -> Result<IqSequence> {
    dpd.model.run(x)
}
