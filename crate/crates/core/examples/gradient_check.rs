//! Compare BPTT gradients of every recurrent family against central finite
//! differences on a random frame batch.
//!
//! `cargo run --release --example gradient_check -- [hidden] [steps]`

use dpd_forge::autodiff::{check_gradients, mse_loss, GradCheckOptions, Graph, Tape, Tensor};
use dpd_forge::models::{Model, ModelConfig, RecurrentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn steps(b: usize, t: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    (0..t)
        .map(|_| Tensor::from_vec(b, 2, (0..2 * b).map(|_| rng.gen_range(-0.8..0.8)).collect()))
        .collect()
}

fn loss_and_grad(model: &Model, xs: &[Tensor], ys: &[Tensor], want_grad: bool) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let inputs: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let outs = model
        .forward(&mut tape, &vars, &inputs)
        .expect("shapes match");
    let loss = mse_loss(&mut tape, &outs, ys).expect("shapes match");
    let value = tape.value(&loss).data[0];
    if !want_grad {
        return (value, Vec::new());
    }
    tape.backward(loss).expect("scalar loss");
    let mut p = model.params.clone();
    p.load_grads(&tape, &vars)
        .expect("one gradient per parameter");
    (value, p.flat_grads().expect("all gradients present"))
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let h: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(6);
    let t: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (xs, ys) = (steps(4, t, &mut rng), steps(4, t, &mut rng));

    let rc = RecurrentConfig::new(h);
    for cfg in [
        ModelConfig::Gru(rc),
        ModelConfig::Lstm(rc),
        ModelConfig::Dgru(rc),
    ] {
        let model = Model::init(cfg, 1)?;
        let with = |p: &dpd_forge::autodiff::ParameterSet| Model {
            config: model.config.clone(),
            params: p.clone(),
        };
        let report = check_gradients(
            &model.params,
            |p| Ok(loss_and_grad(&with(p), &xs, &ys, false).0),
            |p| Ok(loss_and_grad(&with(p), &xs, &ys, true).1),
            GradCheckOptions {
                step: 1e-5,
                tolerance: 1e-4,
                samples: Some(100),
                seed: 0,
            },
        )?;
        println!(
            "{:<5} {:>4} params  checked {:>3}  worst rel err {:.2e}  {}",
            model.family().to_string(),
            model.count_params(),
            report.checked,
            report.max_rel_error,
            if report.passed { "ok" } else { "MISMATCH" }
        );
    }
    Ok(())
}
