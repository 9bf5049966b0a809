//! Row-major 2-D arrays and the forward/backward kernels used by both graph
//! backends. Rows are batch entries; columns are features.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape");
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Magnitudes below this are treated as zero by the feature extractor.
pub const FEATURE_EPS: f64 = 1e-12;

pub mod kernels {
    //! Forward kernels. Every op's forward value is computed here so that the
    //! recording tape and the eager evaluator agree bit for bit.

    use super::{sigmoid, Tensor, FEATURE_EPS};

    /// `x · wᵀ + b` for `x: B×in`, `w: out×in`, `b: 1×out`.
    pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
        let (rows, inp) = x.shape();
        let out = w.rows;
        let mut y = Tensor::zeros(rows, out);
        for r in 0..rows {
            let xr = x.row(r);
            let yr = &mut y.data[r * out..(r + 1) * out];
            for (o, yo) in yr.iter_mut().enumerate() {
                let wr = &w.data[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for k in 0..inp {
                    acc += xr[k] * wr[k];
                }
                *yo = acc + b.map_or(0.0, |b| b.data[o]);
            }
        }
        y
    }

    pub fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor::from_vec(
            a.rows,
            a.cols,
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn sigmoid_t(a: &Tensor) -> Tensor {
        a.map(sigmoid)
    }

    pub fn tanh_t(a: &Tensor) -> Tensor {
        a.map(f64::tanh)
    }

    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(r));
            }
        }
        Tensor::from_vec(rows, cols, out)
    }

    pub fn slice_cols(a: &Tensor, start: usize, end: usize) -> Tensor {
        let mut out = Vec::with_capacity(a.rows * (end - start));
        for r in 0..a.rows {
            out.extend_from_slice(&a.row(r)[start..end]);
        }
        Tensor::from_vec(a.rows, end - start, out)
    }

    /// `[i, q, |x|, |x|³, sinθ, cosθ]` per row of a `B×2` input.
    pub fn features(x: &Tensor) -> Tensor {
        let mut out = Vec::with_capacity(x.rows * 6);
        for r in 0..x.rows {
            let (i, q) = (x.get(r, 0), x.get(r, 1));
            let amp = (i * i + q * q).sqrt();
            let (s, c) = if amp >= FEATURE_EPS {
                (q / amp, i / amp)
            } else {
                (0.0, 0.0)
            };
            out.extend_from_slice(&[i, q, amp, amp * amp * amp, s, c]);
        }
        Tensor::from_vec(x.rows, 6, out)
    }

    /// Sum over all entries of `(a - target)²`, as a 1×1 tensor.
    pub fn squared_error(a: &Tensor, target: &Tensor) -> Tensor {
        let s = a
            .data
            .iter()
            .zip(&target.data)
            .map(|(x, t)| (x - t) * (x - t))
            .sum();
        Tensor::scalar(s)
    }

    pub fn sum(parts: &[&Tensor]) -> Tensor {
        let mut out = parts[0].clone();
        for p in &parts[1..] {
            out.add_assign(p);
        }
        out
    }

    /// GMP regressors for one time step. `taps[d - min_delay]` holds the
    /// `B×2` input delayed by `d` samples (or `None` past the sequence edge).
    /// Output is `B×2K`: real parts of all K terms, then imaginary parts.
    pub fn gmp_basis(
        taps: &[Option<&Tensor>],
        min_delay: i64,
        terms: &[crate::models::GmpTerm],
        rows: usize,
    ) -> Tensor {
        let k = terms.len();
        let mut out = Tensor::zeros(rows, 2 * k);
        let tap = |d: i64| taps[(d - min_delay) as usize];
        for (j, t) in terms.iter().enumerate() {
            let (sig, env) = match (tap(t.signal_delay()), tap(t.envelope_delay())) {
                (Some(s), Some(e)) => (s, e),
                _ => continue,
            };
            for r in 0..rows {
                let (xr, xi) = (sig.get(r, 0), sig.get(r, 1));
                let (er, ei) = (env.get(r, 0), env.get(r, 1));
                let scale = (er * er + ei * ei).powf(0.5 * (t.order - 1) as f64);
                out.set(r, j, xr * scale);
                out.set(r, k + j, xi * scale);
            }
        }
        out
    }
}
