//! Least-squares GMP fit of the synthetic PA at growing memory depth,
//! scored on the held-out test partition.
//!
//! `cargo run --release --example gmp_identification -- [n_samples]`

use dpd_forge::metrics::nmse;
use dpd_forge::models::{gmp_fit, GmpConfig, DEFAULT_RIDGE};
use dpd_forge::pipeline::{Dataset, Partition};
use dpd_forge::waveform::{OfdmConfig, SynthPaConfig};

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(38_400);
    let clean = SynthPaConfig {
        iq_imbalance: None,
        ..SynthPaConfig::default_dpa()
    };
    for (name, pa) in [
        ("without I/Q imbalance", clean),
        ("default PA", SynthPaConfig::default_dpa()),
    ] {
        let data = Dataset::generate(&OfdmConfig::default(), &pa, n)?;
        let (train, test) = (data.pair(Partition::Train), data.pair(Partition::Test));
        println!("{name}");
        for depth in [0, 2, 4, 8] {
            let cfg = GmpConfig::product(depth, &[1, 3, 5, 7], &[-1, 0, 1]);
            let model = gmp_fit(&train.input, &train.output, &cfg, DEFAULT_RIDGE)?;
            let score = nmse(&model.run(&test.input)?, &test.output)?.db;
            println!(
                "  depth {depth:>2}  {:>4} params  test NMSE {score:>7.2} dB",
                model.count_params()
            );
        }
    }
    Ok(())
}
