//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Number of coordinates to probe; `None` probes all of them.
    pub samples: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-5,
            samples: Some(64),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

/// Compare `grad_fn` against `(f(w+h) − f(w−h)) / 2h` on a subset of
/// coordinates. Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn check_gradients(
    params: &ParameterSet,
    loss_fn: impl Fn(&ParameterSet) -> Result<f64>,
    grad_fn: impl Fn(&ParameterSet) -> Result<Vec<f64>>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let n = params.count();
    if n == 0 {
        return Err(Error::invalid("no parameters to check"));
    }
    let analytic = grad_fn(params)?;
    if analytic.len() != n {
        return Err(Error::LengthMismatch {
            left: analytic.len(),
            right: n,
        });
    }
    let idx: Vec<usize> = match opts.samples {
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut v = sample(&mut rng, n, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    };
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for &i in &idx {
        let mut w = base.clone();
        w[i] = base[i] + opts.step;
        probe.set_flat(&w)?;
        let plus = loss_fn(&probe)?;
        w[i] = base[i] - opts.step;
        probe.set_flat(&w)?;
        let minus = loss_fn(&probe)?;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > worst.0 || !rel.is_finite() {
            worst = (if rel.is_finite() { rel } else { f64::INFINITY }, i);
        }
    }
    Ok(GradCheckReport {
        checked: idx.len(),
        max_rel_error: worst.0,
        worst_index: worst.1,
        passed: worst.0 <= opts.tolerance,
    })
}
