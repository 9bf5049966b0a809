//! Welch PSD, ACPR, EVM and PAPR of the clean stimulus against the synthetic
//! PA output, plus the effect of each PA impairment on its own.
//!
//! `cargo run --release --example spectrum_metrics`

use dpd_forge::metrics::{acpr, evm, nmse, papr, psd, target_gain, ChannelPlan, PsdConfig};
use dpd_forge::waveform::{generate_ofdm, synth_pa_forward, OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let (x, reference) = generate_ofdm(&OfdmConfig {
        num_symbols: 14,
        ..OfdmConfig::default()
    })?;
    let plan = ChannelPlan::default();
    let cfg = PsdConfig::default();

    let full = SynthPaConfig::default_dpa();
    let cases = [
        ("stimulus", None),
        (
            "memory polynomial",
            Some(SynthPaConfig {
                saturation_level: None,
                iq_imbalance: None,
                ..full.clone()
            }),
        ),
        (
            "+ saturation",
            Some(SynthPaConfig {
                iq_imbalance: None,
                ..full.clone()
            }),
        ),
        ("+ I/Q imbalance", Some(full.clone())),
    ];
    println!(
        "{:<18} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "", "ACPR L", "ACPR R", "EVM", "PAPR", "NMSE"
    );
    for (name, pa) in cases {
        let y = match &pa {
            Some(p) => synth_pa_forward(p, &x)?,
            None => x.clone(),
        };
        let g = target_gain(&x, &y)?;
        let a = acpr(&y, &plan, &cfg)?;
        println!(
            "{name:<18} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>9.2}",
            a.left_dbc,
            a.right_dbc,
            evm(&y, &reference, g)?,
            papr(&y)?,
            nmse(&y, &x.scaled(g)?)?.db
        );
    }

    let y = synth_pa_forward(&full, &x)?;
    let est = psd(&y, &cfg)?;
    println!(
        "\nPA output PSD, every 64th bin (RBW {:.0} kHz)",
        est.resolution_bw_hz / 1e3
    );
    for (f, p) in est.freqs_hz.iter().zip(&est.power_density).step_by(64) {
        let db = 10.0 * (p * est.resolution_bw_hz).log10();
        println!(
            "{:>8.1} MHz {:>8.1} dB {}",
            f / 1e6,
            db,
            "#".repeat(((db + 100.0).max(0.0) / 2.0) as usize)
        );
    }
    Ok(())
}
