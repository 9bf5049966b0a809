mod common;

use common::{check_model, frame_grads, random_steps};
use dpd_forge::autodiff::{
    check_gradients, mse_loss, AdamW, AdamWConfig, Eager, GradCheckOptions, Graph, ParameterSet,
    PlateauConfig, PlateauScheduler, Tape, Tensor,
};
use dpd_forge::models::{Model, ModelConfig, RecurrentConfig};
use proptest::prelude::*;

fn single(w: f64) -> ParameterSet {
    let mut p = ParameterSet::new();
    p.push("w", Tensor::scalar(w));
    p
}

#[test]
fn square_gradient() {
    let mut t = Tape::new();
    let w = t.parameter(&Tensor::scalar(3.0));
    let y = t.mul(&w, &w);
    t.backward(y).unwrap();
    assert_eq!(t.grad(w).unwrap().data, vec![6.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let w = t.parameter(&Tensor::scalar(2.0));
    let c = t.constant(Tensor::scalar(5.0));
    let y = t.mul(&w, &c);
    t.backward(y).unwrap();
    assert_eq!(t.grad(w).unwrap().data, vec![5.0]);
    assert!(t.grad(c).is_none());
}

#[test]
fn mse_gradient_is_two_times_error() {
    // B = 1, T = 1: loss = ΔI² + ΔQ², so ∂/∂p = 2(p − t)
    let mut t = Tape::new();
    let p = t.parameter(&Tensor::from_vec(1, 2, vec![0.5, -1.0]));
    let target = Tensor::from_vec(1, 2, vec![0.25, 1.0]);
    let loss = mse_loss(&mut t, &[p], &[target]).unwrap();
    assert!((t.value(&loss).data[0] - (0.0625 + 4.0)).abs() <= 1e-15);
    t.backward(loss).unwrap();
    assert_eq!(t.grad(p).unwrap().data, vec![0.5, -4.0]);
}

#[test]
fn mse_examples() {
    let mut g = Eager;
    let zero = g.constant(Tensor::zeros(1, 2));
    let unit = Tensor::from_vec(1, 2, vec![1.0, 0.0]);
    assert_eq!(
        mse_loss(&mut g, std::slice::from_ref(&zero), &[Tensor::zeros(1, 2)])
            .unwrap()
            .data,
        vec![0.0]
    );
    assert_eq!(mse_loss(&mut g, &[zero], &[unit]).unwrap().data, vec![1.0]);

    // B = 2, T = 2 by hand: squared errors 1, 4 | 0, 9 | 2, 0 | 0, 0 → 16 / 4
    let outs = vec![
        g.constant(Tensor::from_vec(2, 2, vec![1.0, 2.0, 0.0, 3.0])),
        g.constant(Tensor::from_vec(2, 2, vec![1.0, 1.0, 0.0, 0.0])),
    ];
    let targets = vec![
        Tensor::from_vec(2, 2, vec![0.0, 0.0, 0.0, 0.0]),
        Tensor::from_vec(2, 2, vec![0.0, 2.0, 0.0, 0.0]),
    ];
    assert_eq!(mse_loss(&mut g, &outs, &targets).unwrap().data, vec![4.0]);
}

#[test]
fn mse_rejects_mismatches() {
    let mut g = Eager;
    let a = g.constant(Tensor::zeros(2, 2));
    assert!(mse_loss(&mut g, std::slice::from_ref(&a), &[Tensor::zeros(1, 2)]).is_err());
    assert!(mse_loss(&mut g, &[a], &[]).is_err());
}

#[test]
fn adamw_first_step() {
    let mut p = single(1.0);
    let mut opt = AdamW::new(AdamWConfig::default(), &p);
    p.iter_mut().next().unwrap().grad = Some(Tensor::scalar(1.0));
    opt.step(&mut p).unwrap();
    let w = p.value(0).data[0];
    let expected = (1.0 - 1e-5) - 1e-3 / (1.0 + 1e-8);
    assert!((w - expected).abs() <= 1e-12, "{w}");
    assert!((w - 0.99899).abs() <= 1e-5);
}

#[test]
fn adamw_zero_gradient_without_decay_is_a_no_op() {
    let mut p = single(0.7);
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(cfg, &p);
    for _ in 0..5 {
        p.iter_mut().next().unwrap().grad = Some(Tensor::scalar(0.0));
        opt.step(&mut p).unwrap();
    }
    assert_eq!(p.value(0).data[0], 0.7);
}

#[test]
fn adamw_decay_alone() {
    let (w0, lr, wd) = (2.0, 1e-2, 0.1);
    let mut p = single(w0);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        },
        &p,
    );
    p.iter_mut().next().unwrap().grad = Some(Tensor::scalar(0.0));
    opt.step(&mut p).unwrap();
    assert!((w0 - p.value(0).data[0] - lr * wd * w0).abs() <= 1e-15);
}

#[test]
fn adamw_leaves_frozen_parameters_alone() {
    let mut p = single(1.5);
    p.push("v", Tensor::scalar(-2.0));
    p.iter_mut().next().unwrap().frozen = true;
    let mut opt = AdamW::new(AdamWConfig::default(), &p);
    for param in p.iter_mut() {
        param.grad = Some(Tensor::scalar(3.0));
    }
    opt.step(&mut p).unwrap();
    assert_eq!(p.value(0).data[0].to_bits(), 1.5f64.to_bits());
    assert_ne!(p.value(1).data[0], -2.0);
}

#[test]
fn adamw_requires_gradients() {
    let mut p = single(1.0);
    let mut opt = AdamW::new(AdamWConfig::default(), &p);
    assert!(opt.step(&mut p).is_err());
}

#[test]
fn scheduler_example() {
    let mut s = PlateauScheduler::new(PlateauConfig {
        factor: 0.5,
        patience: 2,
        min_lr: 1e-6,
    });
    let mut lr = 1e-3;
    lr = s.observe(1.0, lr);
    lr = s.observe(1.0, lr);
    lr = s.observe(1.0, lr);
    assert_eq!(lr, 1e-3);
    lr = s.observe(1.0, lr);
    assert_eq!(lr, 5e-4);
}

#[test]
fn scheduler_improvement_resets_patience() {
    let mut s = PlateauScheduler::new(PlateauConfig {
        factor: 0.5,
        patience: 1,
        min_lr: 1e-6,
    });
    let mut lr = 1.0;
    for m in [5.0, 6.0, 4.0, 4.5, 3.0] {
        lr = s.observe(m, lr);
    }
    assert_eq!(lr, 1.0);
}

#[test]
fn scheduler_floor() {
    let mut s = PlateauScheduler::new(PlateauConfig {
        factor: 0.1,
        patience: 0,
        min_lr: 1e-6,
    });
    let mut lr = 1e-5;
    for _ in 0..5 {
        lr = s.observe(1.0, lr);
    }
    assert_eq!(lr, 1e-6);
}

#[test]
fn linear_layer_gradients_are_exact() {
    let mut p = ParameterSet::new();
    p.push(
        "w",
        Tensor::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]),
    );
    p.push("b", Tensor::row_vector(vec![0.05, -0.05]));
    let x = Tensor::from_vec(4, 3, (0..12).map(|k| (k as f64 * 0.37).sin()).collect());
    let y = Tensor::from_vec(4, 2, (0..8).map(|k| (k as f64 * 0.61).cos()).collect());
    let loss = |p: &ParameterSet| {
        let mut g = Eager;
        let xv = g.constant(x.clone());
        let w = g.parameter(p.value(0));
        let b = g.parameter(p.value(1));
        let o = g.linear(&xv, &w, Some(&b));
        Ok(mse_loss(&mut g, &[o], std::slice::from_ref(&y))?.data[0])
    };
    let grad = |p: &ParameterSet| {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let w = t.parameter(p.value(0));
        let b = t.parameter(p.value(1));
        let o = t.linear(&xv, &w, Some(&b));
        let l = mse_loss(&mut t, &[o], std::slice::from_ref(&y))?;
        t.backward(l)?;
        let mut q = p.clone();
        q.load_grads(&t, &[w, b])?;
        q.flat_grads()
    };
    let opts = GradCheckOptions {
        step: 1e-5,
        tolerance: 1e-10,
        samples: None,
        seed: 0,
    };
    let report = check_gradients(&p, loss, grad, opts).unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.checked, 8);
}

#[test]
fn corrupted_gradient_is_caught() {
    let p = single(3.0);
    let report = check_gradients(
        &p,
        |p| Ok(p.value(0).data[0].powi(2)),
        |p| Ok(vec![2.0 * p.value(0).data[0] * 1.01]),
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error > 5e-3);
}

fn recurrent_opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-5,
        tolerance: 1e-4,
        samples: Some(60),
        seed,
    }
}

fn check_family(make: impl Fn(RecurrentConfig) -> ModelConfig) {
    for h in 2..=8 {
        for bias in [true, false] {
            let cfg = make(RecurrentConfig {
                hidden_size: h,
                recurrent_bias: bias,
            });
            let model = Model::init(cfg, h as u64).unwrap();
            let t = 3 + h % 8;
            let report = check_model(&model, 3, t, recurrent_opts(h as u64), 40 + h as u64);
            assert!(report.passed, "h={h} bias={bias}: {report:?}");
            assert!(report.checked >= 50.min(model.count_params()));
        }
    }
}

#[test]
fn gru_bptt_gradients() {
    check_family(ModelConfig::Gru);
}

#[test]
fn lstm_bptt_gradients() {
    check_family(ModelConfig::Lstm);
}

#[test]
fn dgru_bptt_gradients() {
    check_family(ModelConfig::Dgru);
}

#[test]
fn long_frame_gradients() {
    let model = Model::init(ModelConfig::dgru(6), 9).unwrap();
    let report = check_model(&model, 2, 10, recurrent_opts(3), 77);
    assert!(report.passed, "{report:?}");
}

#[test]
fn frozen_parameters_have_zero_gradient() {
    let mut model = Model::init(ModelConfig::dgru(4), 1).unwrap();
    model.params.set_frozen(true);
    let xs = random_steps(2, 4, 0.5, 1);
    let ys = random_steps(2, 4, 0.5, 2);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let inputs: Vec<_> = xs.iter().map(|x| t.constant(x.clone())).collect();
    let outs = model.forward(&mut t, &vars, &inputs).unwrap();
    let loss = mse_loss(&mut t, &outs, &ys).unwrap();
    t.backward(loss).unwrap();
    assert!(vars.iter().all(|v| t.grad(*v).is_none()));
}

#[test]
fn sum_of_independent_subgraphs() {
    // ∂/∂a (a² + 3b) = 2a and ∂/∂b = 3, with no cross terms
    let mut t = Tape::new();
    let a = t.parameter(&Tensor::scalar(1.5));
    let b = t.parameter(&Tensor::scalar(-2.0));
    let sq = t.mul(&a, &a);
    let tb = t.scale(&b, 3.0);
    let s = t.sum(&[sq, tb]);
    t.backward(s).unwrap();
    assert_eq!(t.grad(a).unwrap().data, vec![3.0]);
    assert_eq!(t.grad(b).unwrap().data, vec![3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eager_and_tape_agree(seed in 0u64..1000, h in 1usize..8, family in 0usize..3) {
        let rc = RecurrentConfig::new(h);
        let cfg = [ModelConfig::Dgru(rc), ModelConfig::Gru(rc), ModelConfig::Lstm(rc)][family].clone();
        let model = Model::init(cfg, seed).unwrap();
        let xs = random_steps(3, 6, 1.0, seed);

        let mut t = Tape::new();
        let tv = model.bind(&mut t);
        let ti: Vec<_> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let tape_out: Vec<Tensor> = model.forward(&mut t, &tv, &ti).unwrap().iter().map(|o| t.value(o).clone()).collect();

        let mut e = Eager;
        let ev = model.bind(&mut e);
        let ei: Vec<_> = xs.iter().map(|x| e.constant(x.clone())).collect();
        let eager_out: Vec<Tensor> = model.forward(&mut e, &ev, &ei).unwrap().iter().map(|o| (**o).clone()).collect();
        prop_assert_eq!(tape_out, eager_out);
    }

    #[test]
    fn gradients_are_deterministic(seed in 0u64..1000) {
        let model = Model::init(ModelConfig::dgru(3), seed).unwrap();
        let xs = random_steps(2, 5, 1.0, seed);
        let ys = random_steps(2, 5, 1.0, seed + 1);
        let a = frame_grads(&model, &xs, &ys);
        let b = frame_grads(&model, &xs, &ys);
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
