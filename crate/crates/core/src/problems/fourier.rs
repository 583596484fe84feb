use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(SdcError::InvalidArgument(format!(
            "transform length must be a power of two, got {n}"
        )));
    }
    Ok(())
}

fn transform(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(data);
    let scale = 1.0 / (n as f64).sqrt();
    data.iter_mut().for_each(|c| *c *= scale);
}

/// Unitary DFT, `X_k = n^{-1/2} sum_j x_j e^{-2 pi i jk/n}`.
pub fn dft(values: &[f64]) -> Result<Vec<Complex64>> {
    check_len(values.len())?;
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, false);
    Ok(data)
}

/// Inverse of [`dft`].
pub fn idft(coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(coefficients.len())?;
    let mut data = coefficients.to_vec();
    transform(&mut data, true);
    Ok(data)
}

/// Integer wavenumber of DFT index `k`, in `{-n/2, ..., n/2 - 1}`.
pub(crate) fn wavenumber(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Periodic first and second derivatives on `x_i = i/n`, applied through
/// the FFT.
#[derive(Clone)]
pub struct SpectralOperators {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    d1: Vec<Complex64>,
    d2: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperators").field("n", &self.n).finish()
    }
}

impl SpectralOperators {
    pub fn new(n: usize) -> Result<Self> {
        check_len(n)?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for k in 0..n {
            let omega = 2.0 * PI * wavenumber(k, n);
            // the Nyquist mode has no real-valued first derivative
            let first = if n > 1 && k == n / 2 { 0.0 } else { omega };
            d1.push(Complex64::new(0.0, first));
            d2.push(Complex64::new(-omega * omega, 0.0));
        }
        Ok(Self {
            n,
            forward,
            inverse,
            d1,
            d2,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn apply(&self, symbol: &[Complex64], x: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(symbol) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    pub fn d1(&self, x: &[f64], out: &mut [f64]) {
        self.apply(&self.d1, x, out);
    }

    pub fn d2(&self, x: &[f64], out: &mut [f64]) {
        self.apply(&self.d2, x, out);
    }

    fn matrix(&self, symbol: &[Complex64]) -> DenseMatrix {
        let n = self.n;
        let mut m = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(symbol, &e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    pub fn d1_matrix(&self) -> DenseMatrix {
        self.matrix(&self.d1)
    }

    pub fn d2_matrix(&self) -> DenseMatrix {
        self.matrix(&self.d2)
    }

    /// Solves `w_xx = r` with the zero mode of `w` set to 0. `r` must have
    /// zero mean.
    pub fn inverse_laplacian(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let mean = buf[0].re / n as f64;
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-12 * (1.0 + scale) {
            return Err(SdcError::InvalidArgument(format!(
                "inverse Laplacian needs a zero-mean right-hand side, mean is {mean:e}"
            )));
        }
        buf[0] = Complex64::new(0.0, 0.0);
        for (b, s) in buf.iter_mut().zip(&self.d2).skip(1) {
            *b /= s.re;
        }
        self.inverse.process(&mut buf);
        Ok(buf.iter().map(|b| b.re / n as f64).collect())
    }
}
