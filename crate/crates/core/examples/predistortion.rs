//! Train a DPD through a linear PA model, where the best DPD is the
//! identity, then through the fitted synthetic PA, and look at what the DPD
//! does to the waveform.
//!
//! `cargo run --release --example predistortion -- [epochs]`

use dpd_forge::autodiff::Tensor;
use dpd_forge::metrics::{nmse, papr};
use dpd_forge::models::{Checkpoint, GmpConfig, Model, ModelConfig};
use dpd_forge::pipeline::{
    predistort, train_dpd, train_pa, Dataset, MetricsConfig, Partition, TrainConfig,
};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(20);
    let ofdm = OfdmConfig {
        subcarriers_per_channel: 8,
        ..OfdmConfig::default()
    };
    let t = TrainConfig {
        epochs,
        batch_size: 16,
        initial_lr: 1e-2,
        ..TrainConfig::default()
    };
    let m = MetricsConfig::default();

    let data = Dataset::generate(&ofdm, &SynthPaConfig::linear(2.0), 7200)?;
    let mut gain = Model::zeros(ModelConfig::Gmp(GmpConfig::product(0, &[1], &[0])))?;
    gain.params.iter_mut().next().expect("coef_re").value = Tensor::row_vector(vec![2.0]);
    let (dpd, _) = train_dpd(
        &data,
        &Checkpoint::new(gain, 0),
        &ModelConfig::dgru(4),
        &t,
        &m,
    )?;
    let x = &data.pair(Partition::Test).input;
    let u = predistort(&dpd, x)?;
    println!("linear PA: dpd(x) vs x {:.2} dB", nmse(&u, x)?.db);

    let data = Dataset::generate(&ofdm, &SynthPaConfig::default_dpa(), 7200)?;
    let (pa, _) = train_pa(&data.split, &ModelConfig::dgru(6), &t)?;
    let (dpd, _) = train_dpd(&data, &pa, &ModelConfig::dgru(6), &t, &m)?;
    let x = &data.pair(Partition::Test).input;
    let u = predistort(&dpd, x)?;
    println!(
        "synthetic PA: dpd(x) vs x {:.2} dB, PAPR {:.2} -> {:.2} dB",
        nmse(&u, x)?.db,
        papr(x)?,
        papr(&u)?
    );
    println!("{:>10} {:>10}   {:>10} {:>10}", "x I", "x Q", "u I", "u Q");
    for (a, b) in x.samples().iter().zip(u.samples()).take(8) {
        println!("{:>10.4} {:>10.4}   {:>10.4} {:>10.4}", a.i, a.q, b.i, b.q);
    }
    Ok(())
}
