//! Generalized memory polynomial: `y[n] = Σ c · x[n−m] · |x[n−m−l]|^{p−1}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::signal::IqSequence;

/// One basis function: signal lag `m`, envelope cross lag `l`, odd order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmpTerm {
    pub lag: usize,
    pub cross_lag: i64,
    pub order: usize,
}

impl GmpTerm {
    pub fn new(lag: usize, cross_lag: i64, order: usize) -> Self {
        Self {
            lag,
            cross_lag,
            order,
        }
    }

    pub fn signal_delay(&self) -> i64 {
        self.lag as i64
    }

    pub fn envelope_delay(&self) -> i64 {
        self.lag as i64 + self.cross_lag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmpConfig {
    pub terms: Vec<GmpTerm>,
}

impl GmpConfig {
    /// Every combination of lag `0..=memory_depth`, order and cross lag,
    /// lag-major.
    pub fn product(memory_depth: usize, orders: &[usize], cross_lags: &[i64]) -> Self {
        let mut terms = Vec::new();
        for m in 0..=memory_depth {
            for &p in orders {
                for &l in cross_lags {
                    terms.push(GmpTerm::new(m, l, p));
                }
            }
        }
        Self { terms }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("GMP needs at least one term".into()));
        }
        for t in &self.terms {
            if t.order == 0 || t.order % 2 == 0 {
                return Err(Error::Config(format!(
                    "GMP orders must be odd and positive, got {}",
                    t.order
                )));
            }
        }
        Ok(())
    }

    /// Smallest and largest sample delay any term reads.
    pub fn delay_range(&self) -> (i64, i64) {
        self.terms.iter().fold((i64::MAX, i64::MIN), |(lo, hi), t| {
            let a = t.signal_delay().min(t.envelope_delay());
            let b = t.signal_delay().max(t.envelope_delay());
            (lo.min(a), hi.max(b))
        })
    }
}

fn sample_at(x: &IqSequence, k: i64) -> Complex64 {
    if k < 0 || k as usize >= x.len() {
        return Complex64::new(0.0, 0.0);
    }
    let s = x.samples()[k as usize];
    Complex64::new(s.i, s.q)
}

/// Basis vector at time `n`; samples outside the sequence read as zero.
pub fn gmp_design_row(x: &IqSequence, n: usize, cfg: &GmpConfig) -> Result<Vec<Complex64>> {
    if n >= x.len() {
        return Err(Error::invalid(format!(
            "index {n} outside sequence of length {}",
            x.len()
        )));
    }
    let n = n as i64;
    Ok(cfg
        .terms
        .iter()
        .map(|t| {
            let s = sample_at(x, n - t.signal_delay());
            let e = sample_at(x, n - t.envelope_delay());
            s * e.norm_sqr().powf(0.5 * (t.order - 1) as f64)
        })
        .collect())
}

/// Default ridge weight, relative to the largest squared column norm.
pub const DEFAULT_RIDGE: f64 = 1e-9;

/// Least-squares GMP identification. `ridge` is relative to the design
/// matrix's largest squared column norm; with `ridge == 0` a rank-deficient
/// design is an error.
pub fn gmp_fit(x: &IqSequence, y: &IqSequence, cfg: &GmpConfig, ridge: f64) -> Result<Model> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (n, k) = (x.len(), cfg.terms.len());
    if n < k {
        return Err(Error::RankDeficient { rank: n, cols: k });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge must be finite and non-negative"));
    }
    let mut a = DMatrix::<Complex64>::zeros(n, k);
    for r in 0..n {
        for (c, v) in gmp_design_row(x, r, cfg)?.into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let b = DVector::from_iterator(n, y.samples().iter().map(|s| Complex64::new(s.i, s.q)));
    let max_col = (0..k)
        .map(|c| a.column(c).iter().map(|v| v.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    let lambda = ridge * max_col;

    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = s_max * (n.max(k) as f64) * f64::EPSILON;
    if lambda == 0.0 {
        let rank = s.iter().filter(|&&v| v > cutoff).count();
        if rank < k {
            return Err(Error::RankDeficient { rank, cols: k });
        }
    }
    let uty = u.adjoint() * &b;
    let mut scaled = DVector::<Complex64>::zeros(s.len());
    for i in 0..s.len() {
        let si = s[i];
        let w = if lambda == 0.0 {
            1.0 / si
        } else {
            si / (si * si + lambda)
        };
        scaled[i] = uty[i] * w;
    }
    let coef = v_t.adjoint() * scaled;

    let mut model = Model::zeros(ModelConfig::Gmp(cfg.clone()))?;
    {
        let mut it = model.params.iter_mut();
        let re = it.next().expect("coef_re");
        re.value = Tensor::row_vector(coef.iter().map(|c| c.re).collect());
        let im = it.next().expect("coef_im");
        im.value = Tensor::row_vector(coef.iter().map(|c| c.im).collect());
    }
    Ok(model)
}

pub(super) fn forward<G: Graph>(
    g: &mut G,
    vars: &[G::Var],
    inputs: &[G::Var],
    cfg: &GmpConfig,
) -> Vec<G::Var> {
    let terms = Arc::new(cfg.terms.clone());
    let (dmin, dmax) = cfg.delay_range();
    let rows = g.value(&inputs[0]).rows;
    let (c_re, c_im) = (&vars[0], &vars[1]);
    let neg_im = g.scale(c_im, -1.0);
    // Re(c·b) = c_re·b_re − c_im·b_im, Im(c·b) = c_im·b_re + c_re·b_im
    let w_re = g.concat(&[c_re.clone(), neg_im]);
    let w_im = g.concat(&[c_im.clone(), c_re.clone()]);
    let len = inputs.len() as i64;
    let mut outs = Vec::with_capacity(inputs.len());
    for t in 0..len {
        let taps: Vec<Option<G::Var>> = (dmin..=dmax)
            .map(|d| {
                let k = t - d;
                (0..len).contains(&k).then(|| inputs[k as usize].clone())
            })
            .collect();
        let basis = g.gmp_basis(&taps, dmin, &terms, rows);
        let yr = g.linear(&basis, &w_re, None);
        let yi = g.linear(&basis, &w_im, None);
        outs.push(g.concat(&[yr, yi]));
    }
    outs
}
