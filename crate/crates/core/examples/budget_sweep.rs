//! One DPD per family and parameter budget against a shared PA model, as a
//! SIM-ACPR / SIM-EVM table.
//!
//! GMP regressors grow with |x|^6 at OFDM peaks, so a GMP DPD trained by
//! gradient through the PA model usually diverges at the default learning
//! rate; pass a smaller one to sweep it alone.
//!
//! `cargo run --release --example budget_sweep -- [epochs] [lr] [families]`
//! e.g. `-- 5 1e-4 gmp`

use dpd_forge::models::{search_config_for_budget, Family, BUDGET_TOLERANCE};
use dpd_forge::pipeline::{sweep_budgets, train_pa, Dataset, MetricsConfig, TrainConfig};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-3);
    let families: Vec<Family> = match args.next() {
        Some(list) => list.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => Family::ALL.to_vec(),
    };
    let data = Dataset::generate(
        &OfdmConfig::default(),
        &SynthPaConfig::default_dpa(),
        38_400,
    )?;
    let t = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let pa_cfg = search_config_for_budget(Family::Dgru, 486, BUDGET_TOLERANCE)?;
    let (pa, _) = train_pa(&data.split, &pa_cfg, &t)?;
    let t = TrainConfig {
        initial_lr: lr,
        ..t
    };
    eprintln!("PA model trained, gold {:?}", pa.gold);

    let rows = sweep_budgets(
        &families,
        &[150, 200, 400],
        &data,
        &pa,
        &t,
        &MetricsConfig::default(),
        1,
        None,
    );
    println!(
        "{:<5} {:>6} {:>6} {:>9} {:>9} {:>8}",
        "model", "budget", "params", "ACPR L", "ACPR R", "EVM"
    );
    for r in rows {
        match &r.error {
            None => println!(
                "{:<5} {:>6} {:>6} {:>9.2} {:>9.2} {:>8.2}",
                r.family.to_string(),
                r.budget,
                r.params,
                r.acpr_left_dbc,
                r.acpr_right_dbc,
                r.evm_db
            ),
            Some(e) => println!("{:<5} {:>6}  failed: {e}", r.family.to_string(), r.budget),
        }
    }
    Ok(())
}
