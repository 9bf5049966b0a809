//! Generate the default OFDM stimulus, pass it through the synthetic PA and
//! write the 60/20/20 split to a directory.
//!
//! `cargo run --release --example generate_dataset -- [out_dir] [n_samples]`

use std::path::PathBuf;

use dpd_forge::metrics::papr;
use dpd_forge::pipeline::{Dataset, Partition};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "dataset".into()));
    let n: usize = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(38_400);

    let ofdm = OfdmConfig::default();
    println!(
        "{} channels x {} subcarriers, {}-QAM, fft {} + cp {}, fs {} MHz",
        ofdm.num_channels,
        ofdm.subcarriers_per_channel,
        ofdm.qam_order,
        ofdm.fft_len(),
        ofdm.cyclic_prefix(),
        ofdm.sample_rate_hz / 1e6
    );
    let pa = SynthPaConfig::default_dpa();
    let data = Dataset::generate(&ofdm, &pa, n)?;
    for part in [Partition::Train, Partition::Validation, Partition::Test] {
        let p = data.pair(part);
        println!(
            "{:<10} {:>6} samples  PAPR in {:.2} dB  out {:.2} dB",
            format!("{part:?}"),
            p.len(),
            papr(&p.input)?,
            papr(&p.output)?
        );
    }
    data.save(&out)?;
    println!("written to {}", out.display());
    Ok(())
}
