//! Full flow on the synthetic PA: generate data, fit a DGRU PA model, train
//! a DGRU DPD through it and compare SIM figures with and without DPD.
//!
//! `cargo run --release --example end_to_end -- [n_samples] [epochs]`

use std::time::Instant;

use dpd_forge::models::{search_config_for_budget, Family, ModelConfig, BUDGET_TOLERANCE};
use dpd_forge::pipeline::{
    resolve_target_gain, sim_eval, train_dpd_with, train_pa_with, Dataset, MetricsConfig,
    Partition, TrainConfig,
};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(38_400);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-3);

    let waveform = OfdmConfig::default();
    let data = Dataset::generate(&waveform, &SynthPaConfig::default_dpa(), n)?;
    let t = TrainConfig {
        epochs,
        initial_lr: lr,
        ..TrainConfig::default()
    };
    let m = MetricsConfig::default();
    let cfg: ModelConfig = search_config_for_budget(Family::Dgru, 486, BUDGET_TOLERANCE)?;
    eprintln!("model {:?}, {} params", cfg, cfg.count_params());

    let clock = Instant::now();
    let (pa, _) = train_pa_with(&data.split, &cfg, &t, &mut |r| {
        eprintln!(
            "pa  epoch {:3} loss {:.3e} val nmse {:.2} dB",
            r.epoch, r.train_loss, r.val_nmse_db
        )
    })?;
    eprintln!("PA done in {:.1?}", clock.elapsed());
    let (dpd, _) = train_dpd_with(&data, &pa, &cfg, &t, &m, &mut |r| {
        eprintln!(
            "dpd epoch {:3} loss {:.3e} acpr {:.2}/{:.2} evm {:.2} lr {:.1e}",
            r.epoch,
            r.train_loss,
            r.val_acpr_l_dbc.unwrap_or(f64::NAN),
            r.val_acpr_r_dbc.unwrap_or(f64::NAN),
            r.val_evm_db.unwrap_or(f64::NAN),
            r.lr
        )
    })?;
    eprintln!("total {:.1?}", clock.elapsed());

    let gain = resolve_target_gain(t.target_gain, &data.split)?;
    let test = data.pair(Partition::Test);
    let reference = data.reference_for(Partition::Test)?;
    let before = sim_eval(None, &pa, &test.input, &reference, &m, gain)?;
    let after = sim_eval(Some(&dpd), &pa, &test.input, &reference, &m, gain)?;
    println!(
        "{:<8} {:>9} {:>9} {:>9} {:>8}",
        "", "ACPR L", "ACPR R", "EVM", "PAPR"
    );
    for (name, r) in [("no DPD", before), ("DPD", after)] {
        println!(
            "{name:<8} {:>9.2} {:>9.2} {:>9.2} {:>8.2}",
            r.acpr_left_dbc, r.acpr_right_dbc, r.evm_db, r.papr_db
        );
    }
    Ok(())
}
