#![allow(dead_code)]

use dpd_forge::autodiff::{
    check_gradients, mse_loss, GradCheckOptions, GradCheckReport, Graph, ParameterSet, Tape, Tensor,
};
use dpd_forge::models::Model;
use dpd_forge::signal::{IqSample, IqSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_seq(n: usize, scale: f64, seed: u64) -> IqSequence {
    let mut r = rng(seed);
    let s = (0..n)
        .map(|_| {
            IqSample::new(
                scale * r.gen_range(-1.0..1.0),
                scale * r.gen_range(-1.0..1.0),
            )
        })
        .collect();
    IqSequence::new(s, 800e6).unwrap()
}

/// `t` tensors of shape `b×2` with entries in `[-scale, scale)`.
pub fn random_steps(b: usize, t: usize, scale: f64, seed: u64) -> Vec<Tensor> {
    let mut r = rng(seed);
    (0..t)
        .map(|_| {
            Tensor::from_vec(
                b,
                2,
                (0..2 * b).map(|_| scale * r.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect()
}

fn with_params(model: &Model, p: &ParameterSet) -> Model {
    Model {
        config: model.config.clone(),
        params: p.clone(),
    }
}

pub fn frame_loss(model: &Model, xs: &[Tensor], ys: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let inputs: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let outs = model.forward(&mut tape, &vars, &inputs).unwrap();
    let loss = mse_loss(&mut tape, &outs, ys).unwrap();
    tape.value(&loss).data[0]
}

pub fn frame_grads(model: &Model, xs: &[Tensor], ys: &[Tensor]) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let inputs: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let outs = model.forward(&mut tape, &vars, &inputs).unwrap();
    let loss = mse_loss(&mut tape, &outs, ys).unwrap();
    tape.backward(loss).unwrap();
    let mut params = model.params.clone();
    params.load_grads(&tape, &vars).unwrap();
    params.flat_grads().unwrap()
}

/// Finite-difference check of BPTT gradients of the frame MSE loss.
pub fn check_model(
    model: &Model,
    b: usize,
    t: usize,
    opts: GradCheckOptions,
    seed: u64,
) -> GradCheckReport {
    let xs = random_steps(b, t, 0.8, seed);
    let ys = random_steps(b, t, 0.8, seed + 1000);
    check_gradients(
        &model.params,
        |p| Ok(frame_loss(&with_params(model, p), &xs, &ys)),
        |p| Ok(frame_grads(&with_params(model, p), &xs, &ys)),
        opts,
    )
    .unwrap()
}

/// A random band-limited test signal for the ACPR oracle: exact-bin complex
/// tones filling the main channel and both adjacent measurement bands at
/// random relative levels. Returns the signal and the oracle's left/right
/// ACPR in dB, computed from the tones' DFT coefficients (Parseval on exact
/// bins) over the default channel plan.
pub fn band_limited_case(seed: u64) -> (IqSequence, f64, f64) {
    const N: usize = 16384;
    const FS: f64 = 800e6;
    let mut r = rng(seed);
    let df = FS / N as f64;
    let left_level = 10f64.powf(r.gen_range(-45.0..-15.0) / 10.0);
    let right_level = 10f64.powf(r.gen_range(-45.0..-15.0) / 10.0);
    // stay a few MHz inside every band so Welch leakage cannot cross edges
    let regions = [
        (-95e6, 95e6, 1.0),
        (-285e6, -115e6, left_level),
        (115e6, 285e6, right_level),
    ];
    let mut tones: Vec<(i64, f64, f64)> = Vec::new();
    for &(lo, hi, level) in &regions {
        let (k_lo, k_hi) = ((lo / df).ceil() as i64, (hi / df).floor() as i64);
        for _ in 0..120 {
            let k = r.gen_range(k_lo..=k_hi);
            let amp = level.sqrt() * r.gen_range(0.2..1.0);
            let phase = r.gen_range(0.0..2.0 * std::f64::consts::PI);
            tones.push((k, amp, phase));
        }
    }
    // repeated bins add coherently; recompute the oracle from merged coefficients
    let mut coef = std::collections::BTreeMap::<i64, (f64, f64)>::new();
    for &(k, a, ph) in &tones {
        let e = coef.entry(k).or_insert((0.0, 0.0));
        e.0 += a * ph.cos();
        e.1 += a * ph.sin();
    }
    let mut band = [0.0f64; 3];
    for (&k, &(re, im)) in &coef {
        let f = k as f64 * df;
        let b = if f.abs() < 100e6 {
            0
        } else if f < 0.0 {
            1
        } else {
            2
        };
        band[b] += re * re + im * im;
    }
    let samples = (0..N)
        .map(|n| {
            let (mut i, mut q) = (0.0, 0.0);
            for (&k, &(re, im)) in &coef {
                let ph = 2.0 * std::f64::consts::PI * (k as f64) * (n as f64) / N as f64;
                let (s, c) = ph.sin_cos();
                i += re * c - im * s;
                q += re * s + im * c;
            }
            IqSample::new(i, q)
        })
        .collect();
    let x = IqSequence::new(samples, FS).unwrap();
    (
        x,
        10.0 * (band[1] / band[0]).log10(),
        10.0 * (band[2] / band[0]).log10(),
    )
}
