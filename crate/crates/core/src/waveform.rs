//! Multi-channel OFDM stimulus generation and a synthetic nonlinear PA with
//! memory standing in for the device under test.
//!
//! The OFDM generator tiles `num_channels` channels of `subcarriers_per_channel`
//! subcarriers contiguously around DC. Every symbol is extended with a cyclic
//! prefix and shaped with a raised-cosine overlap-add taper that lives entirely
//! inside the prefix, so the FFT window of each symbol is untouched and the
//! reference constellation is recovered exactly from a linear channel.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{IqSample, IqSequence};

/// OFDM signal plan. Defaults follow a 10 × 20 MHz, 64-subcarrier, 64-QAM
/// plan sampled at 800 MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub num_channels: usize,
    pub channel_bw_hz: f64,
    pub subcarriers_per_channel: usize,
    pub qam_order: usize,
    pub sample_rate_hz: f64,
    pub num_symbols: usize,
    /// Cyclic prefix in samples; `None` means one eighth of the FFT length.
    pub cyclic_prefix_len: Option<usize>,
    /// Raised-cosine overlap length in samples; `None` means the full prefix.
    pub taper_len: Option<usize>,
    pub seed: u64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            num_channels: 10,
            channel_bw_hz: 20e6,
            subcarriers_per_channel: 64,
            qam_order: 64,
            sample_rate_hz: 800e6,
            num_symbols: 15,
            cyclic_prefix_len: None,
            taper_len: None,
            seed: 0,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.qam_side();
        if self.qam_order < 4 || m * m != self.qam_order || !self.qam_order.is_power_of_two() {
            return Err(Error::Config(format!(
                "qam_order {} is not a square power of four",
                self.qam_order
            )));
        }
        if self.num_channels == 0 || self.num_symbols == 0 {
            return Err(Error::Config(
                "num_channels and num_symbols must be positive".into(),
            ));
        }
        if self.subcarriers_per_channel < 2 {
            return Err(Error::Config("subcarriers_per_channel must be >= 2".into()));
        }
        if !(self.channel_bw_hz > 0.0 && self.sample_rate_hz > 0.0) {
            return Err(Error::Config(
                "bandwidth and sample rate must be positive".into(),
            ));
        }
        if self.num_channels as f64 * self.channel_bw_hz > self.sample_rate_hz * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "{} channels of {} Hz do not fit in {} Hz",
                self.num_channels, self.channel_bw_hz, self.sample_rate_hz
            )));
        }
        let n = self.sample_rate_hz * self.subcarriers_per_channel as f64 / self.channel_bw_hz;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "subcarrier spacing does not divide the sample rate (FFT length {n})"
            )));
        }
        if self.taper_len() > self.cyclic_prefix() {
            return Err(Error::Config(
                "taper_len must not exceed the cyclic prefix".into(),
            ));
        }
        Ok(())
    }

    fn qam_side(&self) -> usize {
        (self.qam_order as f64).sqrt().round() as usize
    }

    pub fn fft_len(&self) -> usize {
        (self.sample_rate_hz * self.subcarriers_per_channel as f64 / self.channel_bw_hz).round()
            as usize
    }

    pub fn cyclic_prefix(&self) -> usize {
        self.cyclic_prefix_len.unwrap_or(self.fft_len() / 8)
    }

    pub fn taper_len(&self) -> usize {
        self.taper_len.unwrap_or_else(|| self.cyclic_prefix())
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_len() + self.cyclic_prefix()
    }

    /// Occupied subcarriers per OFDM symbol.
    pub fn active_subcarriers(&self) -> usize {
        self.num_channels * self.subcarriers_per_channel
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.channel_bw_hz / self.subcarriers_per_channel as f64
    }

    /// Signed frequency index of global subcarrier `g`.
    pub fn subcarrier_offset(&self, g: usize) -> i64 {
        g as i64 - (self.active_subcarriers() / 2) as i64
    }

    /// FFT bin carrying global subcarrier `g`.
    pub fn bin_of(&self, g: usize) -> usize {
        self.subcarrier_offset(g).rem_euclid(self.fft_len() as i64) as usize
    }

    /// Lowest and highest occupied subcarrier centre frequencies.
    pub fn occupied_edges_hz(&self) -> (f64, f64) {
        let k = self.active_subcarriers();
        let df = self.subcarrier_spacing_hz();
        (
            self.subcarrier_offset(0) as f64 * df,
            self.subcarrier_offset(k - 1) as f64 * df,
        )
    }

    /// Smallest symbol count whose waveform spans `n` samples.
    pub fn symbols_for(&self, n: usize) -> usize {
        n.div_ceil(self.symbol_len()).max(1)
    }

    /// Unit-average-power square QAM alphabet, row-major over (I, Q) levels.
    pub fn constellation(&self) -> Vec<IqSample> {
        let m = self.qam_side();
        let scale = (2.0 * (self.qam_order as f64 - 1.0) / 3.0).sqrt();
        let level = |k: usize| (2.0 * k as f64 - (m as f64 - 1.0)) / scale;
        (0..m)
            .flat_map(|a| (0..m).map(move |b| IqSample::new(level(a), level(b))))
            .collect()
    }
}

/// The exact transmitted constellation points, indexed (symbol, channel,
/// subcarrier), together with where the first symbol starts inside the
/// sequence it describes.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmReference {
    pub config: OfdmConfig,
    /// Flattened grid, `num_symbols × num_channels × subcarriers_per_channel`.
    pub symbols: Vec<IqSample>,
    pub num_symbols: usize,
    /// Index of the first listed symbol in the full generated waveform.
    pub first_symbol: usize,
    /// Sample offset of the first listed symbol within the sequence this
    /// reference is paired with.
    pub offset: usize,
}

impl OfdmReference {
    pub fn points_per_symbol(&self) -> usize {
        self.config.active_subcarriers()
    }

    pub fn symbol(&self, s: usize) -> &[IqSample] {
        let k = self.points_per_symbol();
        &self.symbols[s * k..(s + 1) * k]
    }

    /// Samples a paired sequence needs to contain every listed symbol.
    pub fn required_len(&self) -> usize {
        self.offset + self.num_symbols * self.config.symbol_len()
    }

    /// Restrict to the symbols lying entirely inside `[start, start + len)` of
    /// the sequence this reference currently describes. Returns `None` when no
    /// full symbol fits.
    pub fn window(&self, start: usize, len: usize) -> Option<OfdmReference> {
        let l = self.config.symbol_len();
        let end = start + len;
        let begin = (0..self.num_symbols).find(|&s| self.offset + s * l >= start)?;
        let count = (begin..self.num_symbols)
            .take_while(|&s| self.offset + (s + 1) * l <= end)
            .count();
        if count == 0 {
            return None;
        }
        let k = self.points_per_symbol();
        Some(OfdmReference {
            config: self.config.clone(),
            symbols: self.symbols[begin * k..(begin + count) * k].to_vec(),
            num_symbols: count,
            first_symbol: self.first_symbol + begin,
            offset: self.offset + begin * l - start,
        })
    }

    /// Reference rows `(symbol, channel, subcarrier, point)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize, IqSample)> + '_ {
        let sc = self.config.subcarriers_per_channel;
        let k = self.points_per_symbol();
        self.symbols.iter().enumerate().map(move |(idx, &p)| {
            let s = idx / k;
            let g = idx % k;
            (self.first_symbol + s, g / sc, g % sc, p)
        })
    }

    pub fn from_rows(
        config: OfdmConfig,
        rows: &[(usize, usize, usize, IqSample)],
    ) -> Result<OfdmReference> {
        config.validate()?;
        let k = config.active_subcarriers();
        let sc = config.subcarriers_per_channel;
        if rows.is_empty() || !rows.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "reference has {} rows, not a multiple of {k}",
                rows.len()
            )));
        }
        let first = rows[0].0;
        let num_symbols = rows.len() / k;
        let mut symbols = vec![IqSample::ZERO; rows.len()];
        let mut seen = vec![false; rows.len()];
        for &(s, c, n, p) in rows {
            if s < first || s >= first + num_symbols || c >= config.num_channels || n >= sc {
                return Err(Error::invalid(format!(
                    "reference row ({s},{c},{n}) out of range"
                )));
            }
            let idx = (s - first) * k + c * sc + n;
            if seen[idx] {
                return Err(Error::invalid(format!(
                    "duplicate reference row ({s},{c},{n})"
                )));
            }
            seen[idx] = true;
            symbols[idx] = p;
        }
        Ok(OfdmReference {
            symbols,
            num_symbols,
            first_symbol: first,
            offset: first * config.symbol_len(),
            config,
        })
    }
}

struct OfdmEngine {
    cfg: OfdmConfig,
    ifft: Arc<dyn Fft<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl OfdmEngine {
    fn new(cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        let n = cfg.fft_len();
        Ok(Self {
            cfg: cfg.clone(),
            ifft: planner.plan_fft_inverse(n),
            fft: planner.plan_fft_forward(n),
        })
    }

    /// One symbol body: `x[n] = K^{-1/2} Σ_k X_k e^{j2πkn/N}`.
    fn symbol_body(&self, points: &[IqSample]) -> Vec<Complex64> {
        let n = self.cfg.fft_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (g, p) in points.iter().enumerate() {
            buf[self.cfg.bin_of(g)] = Complex64::new(p.i, p.q);
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / (points.len() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    fn modulate(&self, grid: &[IqSample], num_symbols: usize) -> Vec<IqSample> {
        let cfg = &self.cfg;
        let (n, cp, w) = (cfg.fft_len(), cfg.cyclic_prefix(), cfg.taper_len());
        let l = n + cp;
        let k = cfg.active_subcarriers();
        let ramp: Vec<f64> = (0..w)
            .map(|j| 0.5 * (1.0 - (PI * (j as f64 + 0.5) / w as f64).cos()))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); num_symbols * l + w];
        for s in 0..num_symbols {
            let body = self.symbol_body(&grid[s * k..(s + 1) * k]);
            let base = s * l;
            // prefix, body, then a cyclic suffix that overlaps the next prefix
            for j in 0..(l + w) {
                let v = if j < cp {
                    body[n - cp + j]
                } else if j < l {
                    body[j - cp]
                } else {
                    body[j - l]
                };
                let g = if j < w {
                    ramp[j]
                } else if j >= l {
                    ramp[w - 1 - (j - l)]
                } else {
                    1.0
                };
                out[base + j] += v * g;
            }
        }
        out.truncate(num_symbols * l);
        out.into_iter().map(|c| IqSample::new(c.re, c.im)).collect()
    }

    fn demodulate_symbol(&self, window: &[IqSample]) -> Vec<IqSample> {
        let n = self.cfg.fft_len();
        let mut buf: Vec<Complex64> = window.iter().map(|s| Complex64::new(s.i, s.q)).collect();
        self.fft.process(&mut buf);
        let k = self.cfg.active_subcarriers();
        let scale = (k as f64).sqrt() / n as f64;
        (0..k)
            .map(|g| {
                let v = buf[self.cfg.bin_of(g)] * scale;
                IqSample::new(v.re, v.im)
            })
            .collect()
    }
}

/// Draw a seeded QAM grid and modulate it.
pub fn generate_ofdm(cfg: &OfdmConfig) -> Result<(IqSequence, OfdmReference)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alphabet = cfg.constellation();
    let count = cfg.num_symbols * cfg.active_subcarriers();
    let symbols: Vec<IqSample> = (0..count)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect();
    let reference = OfdmReference {
        config: cfg.clone(),
        symbols,
        num_symbols: cfg.num_symbols,
        first_symbol: 0,
        offset: 0,
    };
    let x = modulate(&reference)?;
    Ok((x, reference))
}

/// Waveform carrying exactly the points in `reference`, starting at sample 0.
pub fn modulate(reference: &OfdmReference) -> Result<IqSequence> {
    let engine = OfdmEngine::new(&reference.config)?;
    let samples = engine.modulate(&reference.symbols, reference.num_symbols);
    IqSequence::new(samples, reference.config.sample_rate_hz)
}

/// Recover the occupied-bin constellation of every symbol in `reference` from
/// `measured`, in the reference's (symbol, channel, subcarrier) order.
pub fn demodulate(measured: &[IqSample], reference: &OfdmReference) -> Result<Vec<IqSample>> {
    if measured.len() < reference.required_len() {
        return Err(Error::invalid(format!(
            "measured sequence has {} samples, reference needs {}",
            measured.len(),
            reference.required_len()
        )));
    }
    let engine = OfdmEngine::new(&reference.config)?;
    let cfg = &reference.config;
    let (n, cp, l) = (cfg.fft_len(), cfg.cyclic_prefix(), cfg.symbol_len());
    let mut out = Vec::with_capacity(reference.symbols.len());
    for s in 0..reference.num_symbols {
        let start = reference.offset + s * l + cp;
        out.extend(engine.demodulate_symbol(&measured[start..start + n]));
    }
    Ok(out)
}

/// Memory-polynomial PA with optional soft saturation, amplitude quantization
/// and additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPaConfig {
    pub memory_depth: usize,
    pub nonlinearity_order: usize,
    /// Row-major `(memory_depth + 1) × ceil(order / 2)`; column `k` holds the
    /// coefficient of `u|u|^{2k}`.
    pub coefficients: Vec<IqSample>,
    pub saturation_level: Option<f64>,
    pub amplitude_quantization_bits: Option<u32>,
    pub snr_db: Option<f64>,
    /// Quadrature-modulator imbalance applied after saturation.
    #[serde(default)]
    pub iq_imbalance: Option<IqImbalance>,
    pub seed: u64,
}

/// Transmitter I/Q imbalance: `y' = mu y + nu conj(y)` with
/// `mu = (1 + g e^{-j phi}) / 2`, `nu = (1 - g e^{j phi}) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqImbalance {
    pub gain: f64,
    pub phase_deg: f64,
}

impl IqImbalance {
    /// `(mu, nu)`.
    pub fn coefficients(&self) -> (IqSample, IqSample) {
        let phi = self.phase_deg.to_radians();
        let (s, c) = phi.sin_cos();
        let mu = IqSample::new(0.5 * (1.0 + self.gain * c), -0.5 * self.gain * s);
        let nu = IqSample::new(0.5 * (1.0 - self.gain * c), -0.5 * self.gain * s);
        (mu, nu)
    }

    /// Image-to-signal power ratio in dB.
    pub fn image_rejection_db(&self) -> f64 {
        let (mu, nu) = self.coefficients();
        10.0 * (nu.norm_sqr() / mu.norm_sqr()).log10()
    }
}

/// Imbalance of the default PA.
pub const DEFAULT_PA_IQ_IMBALANCE: IqImbalance = IqImbalance {
    gain: 1.1,
    phase_deg: 5.0,
};

/// Seed of the pinned default PA coefficient draw.
pub const DEFAULT_PA_SEED: u64 = 7;
/// Drive scale applied per odd order in the default PA.
pub const DEFAULT_PA_DRIVE: f64 = 0.1;
/// Saturation amplitude of the default PA (about 1.2x the stimulus peak).
pub const DEFAULT_PA_SATURATION: f64 = 4.0;

impl Default for SynthPaConfig {
    fn default() -> Self {
        Self::default_dpa()
    }
}

impl SynthPaConfig {
    pub fn order_columns(order: usize) -> usize {
        order.div_ceil(2)
    }

    pub fn linear(gain: f64) -> Self {
        Self {
            memory_depth: 0,
            nonlinearity_order: 1,
            coefficients: vec![IqSample::new(gain, 0.0)],
            saturation_level: None,
            amplitude_quantization_bits: None,
            snr_db: None,
            iq_imbalance: None,
            seed: 0,
        }
    }

    /// The pinned device under test: memory depth 3, odd orders up to 7,
    /// coefficient magnitudes `0.3^m (0.5 d)^{(p-1)/2}` with seeded phases,
    /// `c[0][1] = 1`, soft saturation and I/Q imbalance.
    pub fn default_dpa() -> Self {
        Self {
            iq_imbalance: Some(DEFAULT_PA_IQ_IMBALANCE),
            ..Self::seeded(
                3,
                7,
                DEFAULT_PA_DRIVE,
                Some(DEFAULT_PA_SATURATION),
                DEFAULT_PA_SEED,
            )
        }
    }

    pub fn seeded(
        memory_depth: usize,
        order: usize,
        drive: f64,
        saturation_level: Option<f64>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = Self::order_columns(order);
        let mut coefficients = Vec::with_capacity((memory_depth + 1) * cols);
        for m in 0..=memory_depth {
            for k in 0..cols {
                let phase = 2.0 * PI * rng.gen::<f64>();
                if m == 0 && k == 0 {
                    coefficients.push(IqSample::new(1.0, 0.0));
                    continue;
                }
                let mag = 0.3f64.powi(m as i32) * (0.5 * drive).powi(k as i32);
                coefficients.push(IqSample::new(mag * phase.cos(), mag * phase.sin()));
            }
        }
        Self {
            memory_depth,
            nonlinearity_order: order,
            coefficients,
            saturation_level,
            amplitude_quantization_bits: None,
            snr_db: None,
            iq_imbalance: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nonlinearity_order < 1 {
            return Err(Error::Config("nonlinearity_order must be >= 1".into()));
        }
        let want = (self.memory_depth + 1) * Self::order_columns(self.nonlinearity_order);
        if self.coefficients.len() != want {
            return Err(Error::Config(format!(
                "PA coefficient array has {} entries, expected {want}",
                self.coefficients.len()
            )));
        }
        if let Some(s) = self.saturation_level {
            if !(s > 0.0) {
                return Err(Error::Config("saturation_level must be positive".into()));
            }
        }
        if let Some(b) = self.amplitude_quantization_bits {
            if b == 0 || b > 52 {
                return Err(Error::Config("quantization bits must be in 1..=52".into()));
            }
        }
        if let Some(imb) = self.iq_imbalance {
            if !(imb.gain > 0.0 && imb.gain.is_finite() && imb.phase_deg.is_finite()) {
                return Err(Error::Config(
                    "I/Q imbalance gain must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, delay: usize, order: usize) -> IqSample {
        let cols = Self::order_columns(self.nonlinearity_order);
        self.coefficients[delay * cols + (order - 1) / 2]
    }
}

#[inline]
fn cmul(a: IqSample, b: IqSample) -> IqSample {
    IqSample::new(a.i * b.i - a.q * b.q, a.i * b.q + a.q * b.i)
}

/// Run `u` through the synthetic PA.
pub fn synth_pa_forward(cfg: &SynthPaConfig, u: &IqSequence) -> Result<IqSequence> {
    cfg.validate()?;
    let x = u.samples();
    let cols = SynthPaConfig::order_columns(cfg.nonlinearity_order);
    // basis values u|u|^{2k} per sample, reused across delays
    let basis: Vec<Vec<IqSample>> = x
        .iter()
        .map(|&s| {
            let p = s.norm_sqr();
            let mut acc = 1.0;
            (0..cols)
                .map(|_| {
                    let b = s.scale(acc);
                    acc *= p;
                    b
                })
                .collect()
        })
        .collect();
    let mut y: Vec<IqSample> = (0..x.len())
        .map(|n| {
            let mut acc = IqSample::ZERO;
            for m in 0..=cfg.memory_depth.min(n) {
                let row = &basis[n - m];
                for (k, &b) in row.iter().enumerate() {
                    acc = acc + cmul(cfg.coefficients[m * cols + k], b);
                }
            }
            acc
        })
        .collect();

    if let Some(sat) = cfg.saturation_level {
        for s in y.iter_mut() {
            let a = s.abs() / sat;
            if a > 0.0 {
                *s = s.scale(a.tanh() / a);
            }
        }
    }
    if let Some(imb) = cfg.iq_imbalance {
        let (mu, nu) = imb.coefficients();
        for s in y.iter_mut() {
            *s = cmul(mu, *s) + cmul(nu, IqSample::new(s.i, -s.q));
        }
    }
    if let Some(bits) = cfg.amplitude_quantization_bits {
        let full_scale = cfg
            .saturation_level
            .unwrap_or_else(|| y.iter().map(|s| s.abs()).fold(0.0, f64::max));
        let levels = ((1u64 << bits) - 1) as f64;
        if full_scale > 0.0 {
            let step = full_scale / levels;
            for s in y.iter_mut() {
                let a = s.abs();
                if a > 0.0 {
                    let qa = ((a / step).round().min(levels)) * step;
                    *s = s.scale(qa / a);
                }
            }
        }
    }
    if let Some(snr_db) = cfg.snr_db {
        let power = y.iter().map(|s| s.norm_sqr()).sum::<f64>() / y.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0a15e);
        for s in y.iter_mut() {
            s.i += normal.sample(&mut rng);
            s.q += normal.sample(&mut rng);
        }
    }
    IqSequence::new(y, u.sample_rate_hz())
}
