//! Baseband I/Q sequences, overlapping frames and contiguous dataset partitions.
//!
//! Samples are kept as paired reals rather than a complex type: every model in
//! the crate consumes a two-channel real feature vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex baseband sample `i + jq`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IqSample {
    pub i: f64,
    pub q: f64,
}

impl IqSample {
    pub const ZERO: IqSample = IqSample { i: 0.0, q: 0.0 };

    #[inline]
    pub const fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.i * self.i + self.q * self.q
    }

    #[inline]
    pub fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Self::new(self.i * k, self.q * k)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.i.is_finite() && self.q.is_finite()
    }
}

impl std::ops::Add for IqSample {
    type Output = IqSample;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.i + rhs.i, self.q + rhs.q)
    }
}

impl std::ops::Sub for IqSample {
    type Output = IqSample;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.i - rhs.i, self.q - rhs.q)
    }
}

/// An ordered, finite, non-empty baseband signal at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSequence {
    samples: Vec<IqSample>,
    sample_rate_hz: f64,
}

impl IqSequence {
    pub fn new(samples: Vec<IqSample>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("sequence must contain at least one sample"));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(n) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {n}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)], sample_rate_hz: f64) -> Result<Self> {
        Self::new(
            pairs.iter().map(|&(i, q)| IqSample::new(i, q)).collect(),
            sample_rate_hz,
        )
    }

    pub fn samples(&self) -> &[IqSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<IqSample> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy of `[start, end)` at the same sample rate.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s.scale(k)).collect(),
            self.sample_rate_hz,
        )
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }
}

/// A training unit: aligned input and target windows of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub input: Vec<IqSample>,
    pub target: Vec<IqSample>,
    pub start_index: usize,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedDataset {
    pub frames: Vec<Frame>,
    pub frame_len: usize,
    pub stride: usize,
}

impl FramedDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Number of complete frames of `frame_len` samples at `stride` over `n` samples.
pub fn frame_count(n: usize, frame_len: usize, stride: usize) -> usize {
    if stride == 0 || frame_len == 0 || frame_len > n {
        return 0;
    }
    (n - frame_len) / stride + 1
}

/// Cut `x`/`y` into overlapping windows. Samples that do not fill a final
/// frame are dropped.
pub fn frame_sequence(
    x: &IqSequence,
    y: &IqSequence,
    frame_len: usize,
    stride: usize,
) -> Result<FramedDataset> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if stride < 1 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if frame_len < stride {
        return Err(Error::invalid(format!(
            "stride {stride} exceeds frame length {frame_len}"
        )));
    }
    if frame_len > x.len() {
        return Err(Error::invalid(format!(
            "frame length {frame_len} exceeds sequence length {}",
            x.len()
        )));
    }
    let count = frame_count(x.len(), frame_len, stride);
    let frames = (0..count)
        .map(|k| {
            let start = k * stride;
            let end = start + frame_len;
            Frame {
                input: x.samples[start..end].to_vec(),
                target: y.samples[start..end].to_vec(),
                start_index: start,
            }
        })
        .collect();
    Ok(FramedDataset {
        frames,
        frame_len,
        stride,
    })
}

/// Paired input/output capture for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPair {
    pub input: IqSequence,
    pub output: IqSequence,
}

impl SignalPair {
    pub fn new(input: IqSequence, output: IqSequence) -> Result<Self> {
        if input.len() != output.len() {
            return Err(Error::LengthMismatch {
                left: input.len(),
                right: output.len(),
            });
        }
        Ok(Self { input, output })
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }
}

/// Contiguous train → validation → test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: SignalPair,
    pub validation: SignalPair,
    pub test: SignalPair,
}

impl DatasetSplit {
    /// Start offsets of the train, validation and test partitions within
    /// the original sequence.
    pub fn offsets(&self) -> (usize, usize, usize) {
        let t = self.train.len();
        (0, t, t + self.validation.len())
    }
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// Partition lengths for `n` samples; leftover samples go to the test set.
pub fn split_lengths(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios sum to {}, expected 1",
            a + b + c
        )));
    }
    if n < 3 {
        return Err(Error::invalid(format!(
            "cannot split {n} samples three ways"
        )));
    }
    // the small bias keeps products like 0.6 * 10 = 6.000000000000001 or
    // 0.29 * 100 = 28.999999999999996 on the intended integer
    let train = (a * n as f64 + 1e-9).floor() as usize;
    let val = (b * n as f64 + 1e-9).floor() as usize;
    let test = n - train - val;
    if train == 0 || val == 0 || test == 0 {
        return Err(Error::invalid(format!(
            "split of {n} samples leaves an empty partition ({train}/{val}/{test})"
        )));
    }
    Ok((train, val, test))
}

pub fn split_dataset(
    x: &IqSequence,
    y: &IqSequence,
    ratios: (f64, f64, f64),
) -> Result<DatasetSplit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (train, val, _) = split_lengths(x.len(), ratios)?;
    let n = x.len();
    let pair = |s: usize, e: usize| SignalPair::new(x.slice(s, e)?, y.slice(s, e)?);
    Ok(DatasetSplit {
        train: pair(0, train)?,
        validation: pair(train, train + val)?,
        test: pair(train + val, n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> IqSequence {
        IqSequence::new(
            (0..n)
                .map(|k| IqSample::new(k as f64, -(k as f64)))
                .collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn five_samples_three_frames() {
        let x = ramp(5);
        let f = frame_sequence(&x, &x, 3, 1).unwrap();
        let starts: Vec<_> = f.frames.iter().map(|f| f.start_index).collect();
        assert_eq!(starts, vec![0, 1, 2]);
    }

    #[test]
    fn trailing_sample_dropped() {
        let x = ramp(6);
        let f = frame_sequence(&x, &x, 3, 2).unwrap();
        let starts: Vec<_> = f.frames.iter().map(|f| f.start_index).collect();
        assert_eq!(starts, vec![0, 2]);
        assert_eq!(f.frames[1].input.last().unwrap().i, 4.0);
    }

    #[test]
    fn full_length_frame_count() {
        assert_eq!(frame_count(38_400, 50, 1), 38_351);
    }

    #[test]
    fn framing_errors() {
        let x = ramp(5);
        let y = ramp(4);
        assert!(matches!(
            frame_sequence(&x, &y, 3, 1),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(frame_sequence(&x, &x, 6, 1).is_err());
        assert!(frame_sequence(&x, &x, 3, 0).is_err());
        assert!(frame_sequence(&x, &x, 2, 3).is_err());
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            split_lengths(38_400, DEFAULT_SPLIT).unwrap(),
            (23_040, 7_680, 7_680)
        );
        assert_eq!(split_lengths(10, DEFAULT_SPLIT).unwrap(), (6, 2, 2));
        assert_eq!(split_lengths(11, DEFAULT_SPLIT).unwrap(), (6, 2, 3));
    }

    #[test]
    fn split_errors() {
        assert!(split_lengths(100, (0.5, 0.2, 0.2)).is_err());
        assert!(split_lengths(2, DEFAULT_SPLIT).is_err());
        assert!(split_lengths(100, (0.8, 0.3, -0.1)).is_err());
    }

    #[test]
    fn split_is_contiguous() {
        let x = ramp(11);
        let s = split_dataset(&x, &x, DEFAULT_SPLIT).unwrap();
        assert_eq!(s.validation.input.samples()[0].i, 6.0);
        assert_eq!(s.test.input.samples()[0].i, 8.0);
        assert_eq!(s.test.len(), 3);
        assert_eq!(s.offsets(), (0, 6, 8));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(IqSequence::from_pairs(&[(0.0, f64::NAN)], 1.0).is_err());
        assert!(IqSequence::from_pairs(&[(0.0, 0.0)], 0.0).is_err());
        assert!(IqSequence::new(vec![], 1.0).is_err());
    }
}
