//! Unnormalized complex DFT: iterative radix-2 for power-of-two sizes, direct
//! summation otherwise (only tiny test geometries hit that path).

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct FftPlan {
    n: usize,
    /// `exp(-2πi k / n)` for `k < n`.
    twiddles: Vec<Complex64>,
    bitrev: Option<Vec<usize>>,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT size must be positive");
        let twiddles = (0..n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let bitrev = n.is_power_of_two().then(|| {
            let bits = n.trailing_zeros();
            (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect()
        });
        Self { n, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In place `X_k = Σ x_n e^{-2πi kn/N}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// In place `x_n = Σ X_k e^{+2πi kn/N}` (no `1/N`).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex64 {
        let w = self.twiddles[k % self.n];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n);
        match &self.bitrev {
            Some(rev) => {
                for (i, &j) in rev.iter().enumerate() {
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let mut size = 2;
                while size <= self.n {
                    let half = size / 2;
                    let step = self.n / size;
                    for start in (0..self.n).step_by(size) {
                        for j in 0..half {
                            let w = self.twiddle(j * step, inverse);
                            let u = buf[start + j];
                            let t = w * buf[start + j + half];
                            buf[start + j] = u + t;
                            buf[start + j + half] = u - t;
                        }
                    }
                    size <<= 1;
                }
            }
            None => {
                let input = buf.to_vec();
                for (k, out) in buf.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (n, &x) in input.iter().enumerate() {
                        acc += x * self.twiddle(k * n, inverse);
                    }
                    *out = acc;
                }
            }
        }
    }

    /// One-sided spectrum (`n/2 + 1` bins) of a real frame.
    pub fn rfft(&self, frame: &[f64], scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        scratch.clear();
        scratch.extend(frame.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward(scratch);
        scratch[..self.n / 2 + 1].to_vec()
    }

    /// Real inverse of a one-sided spectrum with `1/n` normalization.
    ///
    /// Imaginary parts of the DC and Nyquist bins are ignored, which makes this
    /// the pseudo-inverse of [`FftPlan::rfft`].
    pub fn irfft(&self, spec: &[Complex64], scratch: &mut Vec<Complex64>) -> Vec<f64> {
        let n = self.n;
        let half = n / 2;
        scratch.clear();
        scratch.resize(n, Complex64::new(0.0, 0.0));
        scratch[0] = Complex64::new(spec[0].re, 0.0);
        for f in 1..half {
            scratch[f] = spec[f];
            scratch[n - f] = spec[f].conj();
        }
        if n.is_multiple_of(2) {
            scratch[half] = Complex64::new(spec[half].re, 0.0);
        } else if half > 0 {
            scratch[half] = spec[half];
            scratch[n - half] = spec[half].conj();
        }
        self.inverse(scratch);
        let norm = 1.0 / n as f64;
        scratch.iter().map(|c| c.re * norm).collect()
    }
}
