//! Train a small PA model, save it as JSON, load it back and confirm the
//! reloaded model produces bit-identical output.
//!
//! `cargo run --release --example checkpoint_io -- [path]`

use dpd_forge::models::{Checkpoint, ModelConfig};
use dpd_forge::pipeline::{train_pa, Dataset, Partition, TrainConfig};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "gold_pa.json".into());
    let data = Dataset::generate(
        &OfdmConfig::default(),
        &SynthPaConfig::default_dpa(),
        10_000,
    )?;
    let t = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (ck, history) = train_pa(&data.split, &ModelConfig::dgru(6), &t)?;
    for r in &history.records {
        println!("epoch {} val nmse {:.2} dB", r.epoch, r.val_nmse_db);
    }
    ck.save(path.as_ref())?;
    let back = Checkpoint::load(path.as_ref())?;
    let x = &data.pair(Partition::Test).input;
    let same = ck.model.run(x)? == back.model.run(x)?;
    println!("gold {:?}", back.gold);
    println!("saved {path}; reloaded output identical: {same}");
    Ok(())
}
