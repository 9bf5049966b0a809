//! Figures of merit: NMSE, Welch PSD, ACPR, EVM, PAPR and the cascade target
//! gain.

use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::signal::IqSequence;
use crate::waveform::{demodulate, OfdmReference};

/// Linear floor applied before every dB conversion.
pub const LINEAR_FLOOR: f64 = 1e-15;

/// `10 log10(max(x, 1e-15))`, so exact zeros report -150 dB.
#[inline]
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.max(LINEAR_FLOOR).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmse {
    pub linear: f64,
    pub db: f64,
}

pub fn nmse(pred: &IqSequence, reference: &IqSequence) -> Result<Nmse> {
    if pred.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: reference.len(),
        });
    }
    let (err, energy) = pred
        .samples()
        .iter()
        .zip(reference.samples())
        .fold((0.0, 0.0), |(e, p), (a, b)| {
            (e + (*a - *b).norm_sqr(), p + b.norm_sqr())
        });
    if energy == 0.0 {
        return Err(Error::invalid("NMSE reference has zero energy"));
    }
    let linear = err / energy;
    Ok(Nmse {
        linear,
        db: to_db(linear),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rect,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            // periodic Hann, the usual choice for spectral averaging
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdConfig {
    pub segment_len: usize,
    pub overlap: usize,
    pub window: Window,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_len: 1024,
            overlap: 512,
            window: Window::Hann,
        }
    }
}

impl PsdConfig {
    /// Same settings with the segment shrunk (and overlap kept proportional)
    /// so that it fits a signal of `n` samples.
    pub fn fitted_to(&self, n: usize) -> PsdConfig {
        if self.segment_len <= n {
            return *self;
        }
        let seg = n.max(1);
        let overlap = (self.overlap as f64 * seg as f64 / self.segment_len as f64) as usize;
        PsdConfig {
            segment_len: seg,
            overlap: overlap.min(seg - 1),
            window: self.window,
        }
    }
}

/// Two-sided Welch estimate. Frequencies run over `(-fs/2, fs/2]` in
/// increasing order; densities are in power per Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub power_density: Vec<f64>,
    pub resolution_bw_hz: f64,
}

impl PsdEstimate {
    pub fn total_power(&self) -> f64 {
        self.power_density.iter().sum::<f64>() * self.resolution_bw_hz
    }

    /// Power inside `[lo, hi]`, weighting each bin by the fraction of its
    /// width that falls in the band.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution_bw_hz;
        self.freqs_hz
            .iter()
            .zip(&self.power_density)
            .map(|(&f, &p)| {
                let overlap = (hi.min(f + df / 2.0) - lo.max(f - df / 2.0)).max(0.0);
                p * overlap
            })
            .sum()
    }

    pub fn argmax_hz(&self) -> f64 {
        let (idx, _) = self
            .power_density
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc },
            );
        self.freqs_hz[idx]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .freqs_hz
            .iter()
            .zip(&self.power_density)
            .map(|(f, p)| vec![f.to_string(), to_db(*p).to_string()])
            .collect();
        io::write_table(path, &["freq_hz", "power_db"], &rows)
    }
}

pub fn psd(x: &IqSequence, cfg: &PsdConfig) -> Result<PsdEstimate> {
    let n = x.len();
    let seg = cfg.segment_len;
    if seg == 0 || seg > n {
        return Err(Error::invalid(format!(
            "PSD segment of {seg} samples does not fit a signal of {n}"
        )));
    }
    if cfg.overlap >= seg {
        return Err(Error::invalid(
            "PSD overlap must be smaller than the segment",
        ));
    }
    let step = seg - cfg.overlap;
    let count = (n - seg) / step + 1;
    let win = cfg.window.coefficients(seg);
    let win_energy: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; seg];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for s in 0..count {
        let chunk = &x.samples()[s * step..s * step + seg];
        for ((b, v), w) in buf.iter_mut().zip(chunk).zip(&win) {
            *b = Complex64::new(v.i * w, v.q * w);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let fs = x.sample_rate_hz();
    let norm = 1.0 / (count as f64 * fs * win_energy);
    // bins -(seg/2)+1 ..= seg/2 for even seg, -(seg-1)/2 ..= (seg-1)/2 for odd
    let lo = -(((seg - 1) / 2) as i64);
    let hi = (seg / 2) as i64;
    let df = fs / seg as f64;
    let (freqs_hz, power_density) = (lo..=hi)
        .map(|k| {
            let bin = k.rem_euclid(seg as i64) as usize;
            (k as f64 * fs / seg as f64, acc[bin] * norm)
        })
        .unzip();
    Ok(PsdEstimate {
        freqs_hz,
        power_density,
        resolution_bw_hz: df,
    })
}

/// Integration regions for the main channel and the two adjacent channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelPlan {
    pub main_center_hz: f64,
    pub main_bw_hz: f64,
    pub adjacent_offset_hz: f64,
    pub adjacent_bw_hz: f64,
}

impl Default for ChannelPlan {
    /// 200 MHz main channel at DC; 180 MHz adjacent measurement bands centred
    /// at ±200 MHz, leaving a 10 MHz gap either side of the main channel.
    fn default() -> Self {
        Self {
            main_center_hz: 0.0,
            main_bw_hz: 200e6,
            adjacent_offset_hz: 200e6,
            adjacent_bw_hz: 180e6,
        }
    }
}

impl ChannelPlan {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.main_bw_hz > 0.0 && self.adjacent_bw_hz > 0.0) {
            return Err(Error::invalid("channel bandwidths must be positive"));
        }
        if self.adjacent_offset_hz - self.adjacent_bw_hz / 2.0 < self.main_bw_hz / 2.0 - 1e-6 {
            return Err(Error::invalid("adjacent bands overlap the main band"));
        }
        let nyq = sample_rate_hz / 2.0;
        let (l_lo, _) = self.left_band();
        let (_, r_hi) = self.right_band();
        if l_lo < -nyq - 1e-6 || r_hi > nyq + 1e-6 {
            return Err(Error::invalid(format!(
                "channel plan [{l_lo}, {r_hi}] Hz exceeds the Nyquist range ±{nyq} Hz"
            )));
        }
        Ok(())
    }

    pub fn main_band(&self) -> (f64, f64) {
        (
            self.main_center_hz - self.main_bw_hz / 2.0,
            self.main_center_hz + self.main_bw_hz / 2.0,
        )
    }

    pub fn left_band(&self) -> (f64, f64) {
        let c = self.main_center_hz - self.adjacent_offset_hz;
        (c - self.adjacent_bw_hz / 2.0, c + self.adjacent_bw_hz / 2.0)
    }

    pub fn right_band(&self) -> (f64, f64) {
        let c = self.main_center_hz + self.adjacent_offset_hz;
        (c - self.adjacent_bw_hz / 2.0, c + self.adjacent_bw_hz / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acpr {
    pub left_dbc: f64,
    pub right_dbc: f64,
}

impl Acpr {
    pub fn mean_dbc(&self) -> f64 {
        0.5 * (self.left_dbc + self.right_dbc)
    }
}

/// ACPR of an existing PSD estimate.
pub fn acpr_from_psd(est: &PsdEstimate, plan: &ChannelPlan) -> Result<Acpr> {
    let (m_lo, m_hi) = plan.main_band();
    let main = est.band_power(m_lo, m_hi);
    if main <= 0.0 {
        return Err(Error::invalid("main channel carries no power"));
    }
    let (l_lo, l_hi) = plan.left_band();
    let (r_lo, r_hi) = plan.right_band();
    Ok(Acpr {
        left_dbc: to_db(est.band_power(l_lo, l_hi) / main),
        right_dbc: to_db(est.band_power(r_lo, r_hi) / main),
    })
}

pub fn acpr(x: &IqSequence, plan: &ChannelPlan, psd_cfg: &PsdConfig) -> Result<Acpr> {
    plan.validate(x.sample_rate_hz())?;
    acpr_from_psd(&psd(x, psd_cfg)?, plan)
}

/// EVM in dB of `measured / gain` against the reference constellation.
pub fn evm(measured: &IqSequence, reference: &OfdmReference, gain: f64) -> Result<f64> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::invalid(format!(
            "EVM gain must be positive, got {gain}"
        )));
    }
    let scaled = measured.scaled(1.0 / gain)?;
    let points = demodulate(scaled.samples(), reference)?;
    let (err, energy) = points
        .iter()
        .zip(&reference.symbols)
        .fold((0.0, 0.0), |(e, p), (y, x)| {
            (e + (*y - *x).norm_sqr(), p + x.norm_sqr())
        });
    if energy == 0.0 {
        return Err(Error::invalid("EVM reference has zero energy"));
    }
    Ok(to_db(err / energy))
}

/// Smallest input magnitude accepted by [`target_gain`].
pub const GAIN_MIN_MAGNITUDE: f64 = 1e-12;

/// Mean per-sample magnitude ratio `|y[n]| / |x[n]|`.
pub fn target_gain(x: &IqSequence, y: &IqSequence) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let mut sum = 0.0;
    for (n, (a, b)) in x.samples().iter().zip(y.samples()).enumerate() {
        let mag = a.abs();
        if mag < GAIN_MIN_MAGNITUDE {
            return Err(Error::invalid(format!(
                "input magnitude {mag:e} at index {n} is too small for a gain ratio"
            )));
        }
        sum += b.abs() / mag;
    }
    Ok(sum / x.len() as f64)
}

pub fn papr(x: &IqSequence) -> Result<f64> {
    let (peak, total) = x
        .samples()
        .iter()
        .map(|s| s.norm_sqr())
        .fold((0.0f64, 0.0), |(m, t), p| (m.max(p), t + p));
    if total == 0.0 {
        return Err(Error::invalid("PAPR of a zero-energy signal"));
    }
    Ok(10.0 * (peak / (total / x.len() as f64)).log10())
}

/// One evaluation row: the figures reported for a DPD/PA pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub nmse_db: f64,
    pub acpr_left_dbc: f64,
    pub acpr_right_dbc: f64,
    pub evm_db: f64,
    pub papr_db: f64,
    pub gain: f64,
}

impl MetricReport {
    pub fn mean_acpr_dbc(&self) -> f64 {
        0.5 * (self.acpr_left_dbc + self.acpr_right_dbc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::IqSample;

    fn seq(v: Vec<IqSample>, fs: f64) -> IqSequence {
        IqSequence::new(v, fs).unwrap()
    }

    #[test]
    fn nmse_identical_hits_floor() {
        let a = IqSequence::from_pairs(&[(1.0, 2.0), (-0.5, 0.1)], 1.0).unwrap();
        let r = nmse(&a, &a).unwrap();
        assert_eq!(r.linear, 0.0);
        assert_eq!(r.db, -150.0);
    }

    #[test]
    fn nmse_double_is_zero_db() {
        let a = IqSequence::from_pairs(&[(1.0, 2.0), (-0.5, 0.1)], 1.0).unwrap();
        let r = nmse(&a.scaled(2.0).unwrap(), &a).unwrap();
        assert_eq!(r.linear, 1.0);
        assert_eq!(r.db, 0.0);
    }

    #[test]
    fn nmse_errors() {
        let a = IqSequence::from_pairs(&[(1.0, 2.0)], 1.0).unwrap();
        let b = IqSequence::from_pairs(&[(1.0, 2.0), (0.0, 0.0)], 1.0).unwrap();
        let z = IqSequence::from_pairs(&[(0.0, 0.0)], 1.0).unwrap();
        assert!(nmse(&a, &b).is_err());
        assert!(nmse(&a, &z).is_err());
    }

    #[test]
    fn gain_examples() {
        let x = IqSequence::from_pairs(&[(1.0, 0.0), (0.0, 2.0)], 1.0).unwrap();
        let y = IqSequence::from_pairs(&[(0.0, 2.0), (6.0, 0.0)], 1.0).unwrap();
        assert_eq!(target_gain(&x, &y).unwrap(), 2.5);
        assert_eq!(target_gain(&x, &x.scaled(3.0).unwrap()).unwrap(), 3.0);
        assert_eq!(target_gain(&x, &x).unwrap(), 1.0);
        let z = IqSequence::from_pairs(&[(0.0, 0.0), (1.0, 0.0)], 1.0).unwrap();
        assert!(target_gain(&z, &z).is_err());
    }

    #[test]
    fn papr_examples() {
        let flat = seq(
            (0..64)
                .map(|k| {
                    let t = k as f64 * 0.3;
                    IqSample::new(t.cos(), t.sin())
                })
                .collect(),
            1.0,
        );
        assert!(papr(&flat).unwrap().abs() < 1e-12);
        let mut v = vec![IqSample::ZERO; 100];
        v[17] = IqSample::new(0.0, 3.0);
        assert!((papr(&seq(v, 1.0)).unwrap() - 20.0).abs() < 1e-12);
        assert!(papr(&seq(vec![IqSample::ZERO; 4], 1.0)).is_err());
    }

    #[test]
    fn psd_frequency_axis() {
        let x = seq(vec![IqSample::new(1.0, 0.0); 64], 800e6);
        let p = psd(
            &x,
            &PsdConfig {
                segment_len: 16,
                overlap: 8,
                window: Window::Hann,
            },
        )
        .unwrap();
        assert_eq!(p.freqs_hz.len(), 16);
        assert_eq!(*p.freqs_hz.first().unwrap(), -350e6);
        assert_eq!(*p.freqs_hz.last().unwrap(), 400e6);
        assert!(p.freqs_hz.windows(2).all(|w| w[1] > w[0]));
        assert!(p.power_density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn psd_rejects_bad_segments() {
        let x = seq(vec![IqSample::new(1.0, 0.0); 8], 1.0);
        let mut c = PsdConfig {
            segment_len: 16,
            overlap: 0,
            window: Window::Rect,
        };
        assert!(psd(&x, &c).is_err());
        c.segment_len = 4;
        c.overlap = 4;
        assert!(psd(&x, &c).is_err());
    }

    #[test]
    fn dc_power() {
        let a = 0.7;
        let x = seq(vec![IqSample::new(a, 0.0); 4096], 800e6);
        let p = psd(&x, &PsdConfig::default()).unwrap();
        assert!((p.total_power() - a * a).abs() < 0.01 * a * a);
    }

    #[test]
    fn plan_validation() {
        ChannelPlan::default().validate(800e6).unwrap();
        assert!(ChannelPlan::default().validate(400e6).is_err());
        let overlapping = ChannelPlan {
            adjacent_offset_hz: 150e6,
            ..Default::default()
        };
        assert!(overlapping.validate(800e6).is_err());
    }

    #[test]
    fn evm_rejects_bad_gain() {
        let cfg = crate::waveform::OfdmConfig {
            subcarriers_per_channel: 8,
            num_symbols: 2,
            ..Default::default()
        };
        let (x, r) = crate::waveform::generate_ofdm(&cfg).unwrap();
        assert!(evm(&x, &r, 0.0).is_err());
        assert!(evm(&x.slice(0, 10).unwrap(), &r, 1.0).is_err());
    }
}
