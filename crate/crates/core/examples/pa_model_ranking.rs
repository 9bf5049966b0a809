//! Fit DGRU, GRU, LSTM and GMP PA behavioral models at the same parameter
//! budget and rank them by test NMSE.
//!
//! `cargo run --release --example pa_model_ranking -- [n_samples] [epochs] [budget]`

use std::time::Instant;

use dpd_forge::metrics::nmse;
use dpd_forge::models::{search_config_for_budget, Family, BUDGET_TOLERANCE};
use dpd_forge::pipeline::{train_pa_with, Dataset, Partition, TrainConfig};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(38_400);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let budget: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let families: Vec<Family> = match args.next() {
        Some(list) => list.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => Family::ALL.to_vec(),
    };

    let waveform = OfdmConfig::default();
    let data = Dataset::generate(&waveform, &SynthPaConfig::default_dpa(), n)?;
    let t = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let test = data.pair(Partition::Test);
    let mut rows = Vec::new();
    for family in families {
        let cfg = search_config_for_budget(family, budget, BUDGET_TOLERANCE)?;
        let clock = Instant::now();
        let (ck, _) = train_pa_with(&data.split, &cfg, &t, &mut |r| {
            eprintln!(
                "{family} epoch {:3} val nmse {:.2} dB",
                r.epoch, r.val_nmse_db
            )
        })?;
        let score = nmse(&ck.model.run(&test.input)?, &test.output)?.db;
        rows.push((family, cfg.count_params(), score, clock.elapsed()));
    }
    rows.sort_by(|a, b| a.2.total_cmp(&b.2));
    println!(
        "{:<6} {:>7} {:>14} {:>10}",
        "family", "params", "test NMSE dB", "time"
    );
    for (f, p, s, d) in rows {
        println!("{:<6} {:>7} {:>14.2} {:>10.1?}", f.to_string(), p, s, d);
    }
    Ok(())
}
