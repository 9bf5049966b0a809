//! Sequence models mapping an I/Q stream to an I/Q stream: DGRU, GRU, LSTM
//! and the generalized memory polynomial.

mod budget;
mod checkpoint;
mod gmp;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Eager, Graph, ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::signal::{IqSample, IqSequence};

pub use budget::{search_config_for_budget, BUDGET_TOLERANCE};
pub use checkpoint::{Checkpoint, GoldInfo, CHECKPOINT_FORMAT_VERSION};
pub use gmp::{gmp_design_row, gmp_fit, GmpConfig, GmpTerm, DEFAULT_RIDGE};

/// Width of the extracted feature vector `[i, q, |x|, |x|³, sinθ, cosθ]`.
pub const FEATURE_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub i: f64,
    pub q: f64,
    pub amp: f64,
    pub amp3: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
}

pub fn fex(i: f64, q: f64) -> FeatureVector {
    let f = crate::autodiff::tensor::kernels::features(&Tensor::from_vec(1, 2, vec![i, q]));
    FeatureVector {
        i: f.data[0],
        q: f.data[1],
        amp: f.data[2],
        amp3: f.data[3],
        sin_theta: f.data[4],
        cos_theta: f.data[5],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dgru,
    Gru,
    Lstm,
    Gmp,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Dgru, Family::Gru, Family::Lstm, Family::Gmp];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Dgru => "dgru",
            Family::Gru => "gru",
            Family::Lstm => "lstm",
            Family::Gmp => "gmp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dgru" => Ok(Family::Dgru),
            "gru" => Ok(Family::Gru),
            "lstm" => Ok(Family::Lstm),
            "gmp" => Ok(Family::Gmp),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrentConfig {
    pub hidden_size: usize,
    /// Separate recurrent bias vector next to the input bias.
    #[serde(default = "default_true")]
    pub recurrent_bias: bool,
}

impl RecurrentConfig {
    pub fn new(hidden_size: usize) -> Self {
        Self {
            hidden_size,
            recurrent_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    Dgru(RecurrentConfig),
    Gru(RecurrentConfig),
    Lstm(RecurrentConfig),
    Gmp(GmpConfig),
}

impl ModelConfig {
    pub fn dgru(hidden_size: usize) -> Self {
        ModelConfig::Dgru(RecurrentConfig::new(hidden_size))
    }

    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Dgru(_) => Family::Dgru,
            ModelConfig::Gru(_) => Family::Gru,
            ModelConfig::Lstm(_) => Family::Lstm,
            ModelConfig::Gmp(_) => Family::Gmp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Dgru(c) | ModelConfig::Gru(c) | ModelConfig::Lstm(c) => {
                if c.hidden_size == 0 {
                    return Err(Error::Config("hidden_size must be at least 1".into()));
                }
                Ok(())
            }
            ModelConfig::Gmp(g) => g.validate(),
        }
    }

    /// Parameter names and shapes in checkpoint order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let rnn = |gates: usize, inp: usize, c: &RecurrentConfig, out_in: usize| {
            let h = c.hidden_size;
            let mut v = vec![
                ("rnn.weight_ih".to_string(), gates * h, inp),
                ("rnn.weight_hh".to_string(), gates * h, h),
                ("rnn.bias_ih".to_string(), 1, gates * h),
            ];
            if c.recurrent_bias {
                v.push(("rnn.bias_hh".to_string(), 1, gates * h));
            }
            v.push(("out.weight".to_string(), 2, out_in));
            v.push(("out.bias".to_string(), 1, 2));
            v
        };
        match self {
            ModelConfig::Dgru(c) => rnn(3, FEATURE_DIM, c, c.hidden_size + FEATURE_DIM),
            ModelConfig::Gru(c) => rnn(3, 2, c, c.hidden_size),
            ModelConfig::Lstm(c) => rnn(4, 2, c, c.hidden_size),
            ModelConfig::Gmp(g) => vec![
                ("coef_re".to_string(), 1, g.terms.len()),
                ("coef_im".to_string(), 1, g.terms.len()),
            ],
        }
    }

    pub fn count_params(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// A model configuration together with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterSet::new();
        for (name, r, c) in config.layout() {
            params.push(name, Tensor::zeros(r, c));
        }
        Ok(Self { config, params })
    }

    /// Seeded initialization. Recurrent layers draw from `U(-1/√h, 1/√h)`,
    /// the output layer from `U(-1/√fan_in, 1/√fan_in)`; the LSTM input-side
    /// forget bias starts at 1. GMP starts as the identity map.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &m.config {
            ModelConfig::Gmp(g) => {
                let linear = g
                    .terms
                    .iter()
                    .position(|t| t.order == 1 && t.lag == 0 && t.cross_lag == 0);
                if let Some(j) = linear {
                    m.params.iter_mut().next().expect("coef_re").value.data[j] = 1.0;
                }
            }
            ModelConfig::Dgru(c) | ModelConfig::Gru(c) | ModelConfig::Lstm(c) => {
                let h = c.hidden_size;
                let is_lstm = matches!(m.config, ModelConfig::Lstm(_));
                let out_fan_in = m.params.get("out.weight").expect("out.weight").value.cols;
                for p in m.params.iter_mut() {
                    let fan_in = if p.name.starts_with("out.") {
                        out_fan_in
                    } else {
                        h
                    };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for v in &mut p.value.data {
                        *v = rng.gen_range(-bound..bound);
                    }
                    if is_lstm && p.name == "rnn.bias_ih" {
                        p.value.data[h..2 * h].fill(1.0);
                    }
                    if is_lstm && p.name == "rnn.bias_hh" {
                        p.value.data[h..2 * h].fill(0.0);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn family(&self) -> Family {
        self.config.family()
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Register every parameter with a graph, in layout order. Frozen
    /// parameters enter as constants and receive no gradient.
    pub fn bind<G: Graph>(&self, g: &mut G) -> Vec<G::Var> {
        self.params
            .iter()
            .map(|p| {
                if p.frozen {
                    g.constant(p.value.clone())
                } else {
                    g.parameter(&p.value)
                }
            })
            .collect()
    }

    /// Run the model over a batch of sequences given step by step: `inputs[t]`
    /// is a `B×2` tensor. Hidden state starts at zero.
    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        vars: &[G::Var],
        inputs: &[G::Var],
    ) -> Result<Vec<G::Var>> {
        if vars.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                left: vars.len(),
                right: self.params.len(),
            });
        }
        let Some(first) = inputs.first() else {
            return Err(Error::invalid("empty input sequence"));
        };
        let rows = g.value(first).rows;
        for x in inputs {
            if g.value(x).shape() != (rows, 2) {
                return Err(Error::Shape(format!(
                    "expected {rows}×2 input, got {:?}",
                    g.value(x).shape()
                )));
            }
        }
        match &self.config {
            ModelConfig::Dgru(c) => Ok(gru_forward(g, vars, inputs, c, true)),
            ModelConfig::Gru(c) => Ok(gru_forward(g, vars, inputs, c, false)),
            ModelConfig::Lstm(c) => Ok(lstm_forward(g, vars, inputs, c)),
            ModelConfig::Gmp(cfg) => Ok(gmp::forward(g, vars, inputs, cfg)),
        }
    }

    /// Evaluate over a whole sequence with zero initial state.
    pub fn run(&self, x: &IqSequence) -> Result<IqSequence> {
        let mut g = Eager;
        let vars = self.bind(&mut g);
        let inputs: Vec<Rc<Tensor>> = x
            .samples()
            .iter()
            .map(|s| Rc::new(Tensor::from_vec(1, 2, vec![s.i, s.q])))
            .collect();
        let outs = self.forward(&mut g, &vars, &inputs)?;
        let samples = outs
            .iter()
            .map(|o| IqSample::new(o.data[0], o.data[1]))
            .collect();
        IqSequence::new(samples, x.sample_rate_hz())
    }
}

struct RnnVars<'a, V> {
    w_ih: &'a V,
    w_hh: &'a V,
    b_ih: &'a V,
    b_hh: Option<&'a V>,
    w_out: &'a V,
    b_out: &'a V,
}

fn split_vars<'a, V>(vars: &'a [V], c: &RecurrentConfig) -> RnnVars<'a, V> {
    let (b_hh, rest) = if c.recurrent_bias {
        (Some(&vars[3]), &vars[4..])
    } else {
        (None, &vars[3..])
    };
    RnnVars {
        w_ih: &vars[0],
        w_hh: &vars[1],
        b_ih: &vars[2],
        b_hh,
        w_out: &rest[0],
        b_out: &rest[1],
    }
}

/// One GRU update:
/// `r, z = σ(W x + b_i + U h + b_h)`, `n = tanh(W_n x + b_in + r⊙(U_n h + b_hn))`,
/// `h' = (1 − z)⊙n + z⊙h`. Gate blocks are ordered r, z, n.
pub fn gru_step<G: Graph>(
    g: &mut G,
    x: &G::Var,
    h_prev: &G::Var,
    w_ih: &G::Var,
    w_hh: &G::Var,
    b_ih: &G::Var,
    b_hh: Option<&G::Var>,
) -> G::Var {
    let h = g.value(h_prev).cols;
    let gi = g.linear(x, w_ih, Some(b_ih));
    let gh = g.linear(h_prev, w_hh, b_hh);
    let gi_rz = g.slice_cols(&gi, 0, 2 * h);
    let gh_rz = g.slice_cols(&gh, 0, 2 * h);
    let pre = g.add(&gi_rz, &gh_rz);
    let rz = g.sigmoid(&pre);
    let r = g.slice_cols(&rz, 0, h);
    let z = g.slice_cols(&rz, h, 2 * h);
    let gi_n = g.slice_cols(&gi, 2 * h, 3 * h);
    let gh_n = g.slice_cols(&gh, 2 * h, 3 * h);
    let gated = g.mul(&r, &gh_n);
    let pre_n = g.add(&gi_n, &gated);
    let n = g.tanh(&pre_n);
    // (1 − z)⊙n + z⊙h = n + z⊙(h − n)
    let diff = g.sub(h_prev, &n);
    let zd = g.mul(&z, &diff);
    g.add(&n, &zd)
}

/// One LSTM update with gate blocks ordered i, f, g, o.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step<G: Graph>(
    g: &mut G,
    x: &G::Var,
    h_prev: &G::Var,
    c_prev: &G::Var,
    w_ih: &G::Var,
    w_hh: &G::Var,
    b_ih: &G::Var,
    b_hh: Option<&G::Var>,
) -> (G::Var, G::Var) {
    let h = g.value(h_prev).cols;
    let gi = g.linear(x, w_ih, Some(b_ih));
    let gh = g.linear(h_prev, w_hh, b_hh);
    let pre = g.add(&gi, &gh);
    let pre_if = g.slice_cols(&pre, 0, 2 * h);
    let if_ = g.sigmoid(&pre_if);
    let i = g.slice_cols(&if_, 0, h);
    let f = g.slice_cols(&if_, h, 2 * h);
    let pre_g = g.slice_cols(&pre, 2 * h, 3 * h);
    let cand = g.tanh(&pre_g);
    let pre_o = g.slice_cols(&pre, 3 * h, 4 * h);
    let o = g.sigmoid(&pre_o);
    let keep = g.mul(&f, c_prev);
    let write = g.mul(&i, &cand);
    let c = g.add(&keep, &write);
    let tc = g.tanh(&c);
    let h_new = g.mul(&o, &tc);
    (h_new, c)
}

fn gru_forward<G: Graph>(
    g: &mut G,
    vars: &[G::Var],
    inputs: &[G::Var],
    c: &RecurrentConfig,
    dense_skip: bool,
) -> Vec<G::Var> {
    let v = split_vars(vars, c);
    let rows = g.value(&inputs[0]).rows;
    let mut h = g.constant(Tensor::zeros(rows, c.hidden_size));
    let mut outs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let feat = if dense_skip { g.features(x) } else { x.clone() };
        h = gru_step(g, &feat, &h, v.w_ih, v.w_hh, v.b_ih, v.b_hh);
        let head = if dense_skip {
            g.concat(&[h.clone(), feat])
        } else {
            h.clone()
        };
        outs.push(g.linear(&head, v.w_out, Some(v.b_out)));
    }
    outs
}

fn lstm_forward<G: Graph>(
    g: &mut G,
    vars: &[G::Var],
    inputs: &[G::Var],
    c: &RecurrentConfig,
) -> Vec<G::Var> {
    let v = split_vars(vars, c);
    let rows = g.value(&inputs[0]).rows;
    let mut h = g.constant(Tensor::zeros(rows, c.hidden_size));
    let mut cell = g.constant(Tensor::zeros(rows, c.hidden_size));
    let mut outs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (hn, cn) = lstm_step(g, x, &h, &cell, v.w_ih, v.w_hh, v.b_ih, v.b_hh);
        h = hn;
        cell = cn;
        outs.push(g.linear(&h, v.w_out, Some(v.b_out)));
    }
    outs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fex_examples() {
        let f = fex(3.0, 4.0);
        assert_eq!(
            (f.amp, f.amp3, f.sin_theta, f.cos_theta),
            (5.0, 125.0, 0.8, 0.6)
        );
        let f = fex(1.0, 0.0);
        assert_eq!(
            (f.amp, f.amp3, f.sin_theta, f.cos_theta),
            (1.0, 1.0, 0.0, 1.0)
        );
        let f = fex(0.0, 0.0);
        assert_eq!(
            (f.amp, f.amp3, f.sin_theta, f.cos_theta),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn param_counts_follow_shapes() {
        for h in 1..12 {
            let dgru = ModelConfig::dgru(h).count_params();
            assert_eq!(dgru, 3 * (6 * h + h * h + 2 * h) + 2 * (h + 6) + 2);
            let gru = ModelConfig::Gru(RecurrentConfig::new(h)).count_params();
            assert_eq!(gru, 3 * h * h + 14 * h + 2);
            let lstm = ModelConfig::Lstm(RecurrentConfig::new(h)).count_params();
            assert_eq!(lstm, 4 * h * h + 18 * h + 2);
        }
    }

    #[test]
    fn family_round_trips_through_text() {
        for f in Family::ALL {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("vdlstm".parse::<Family>().is_err());
    }
}
