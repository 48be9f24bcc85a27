//! Constant-Q transform computed bin by bin in the time domain.
//!
//! Bin `k` has center `f_k = fmin * 2^(k / b)`, quality `Q = 1 / (2^(1/b) - 1)` and a Hann
//! window of `N_k = ceil(Q * sr / f_k)` samples, so every bin spans the same number (`Q`) of
//! periods of its center frequency. The coefficient is the normalized inner product
//!
//! ```text
//! X[k] = (1 / N_k) * sum_{n < N_k} w_k[n] x[n] exp(-2 pi i Q n / N_k)
//! ```
//!
//! All bins share frame centers spaced by the hop. Only frames where the longest window
//! (bin 0) lies entirely inside the signal are produced.

use super::{FrontendError, FrontendKind, FrontendParams, TimeFreqMatrix};
use crate::stimulus::AudioBuffer;
use std::f64::consts::PI;

pub fn cqt_center_frequencies(fmin_hz: f64, bins_per_octave: usize, n_bins: usize) -> Vec<f64> {
    (0..n_bins)
        .map(|k| fmin_hz * 2f64.powf(k as f64 / bins_per_octave as f64))
        .collect()
}

/// Precomputed windowed complex exponentials for every bin.
pub struct CqtKernel {
    sample_rate_hz: u32,
    hop: usize,
    centers_hz: Vec<f64>,
    /// (real, imaginary) kernel per bin, already divided by N_k.
    kernels: Vec<(Vec<f64>, Vec<f64>)>,
    longest: usize,
}

impl CqtKernel {
    pub fn new(params: &FrontendParams, sample_rate_hz: u32) -> Result<Self, FrontendError> {
        params.expect_kind(FrontendKind::Cqt)?;
        params.validate(sample_rate_hz)?;
        let b = params.bins_per_octave.expect("validated");
        let centers_hz = cqt_center_frequencies(params.fmin_hz, b, params.n_channels);
        let nyquist_hz = sample_rate_hz as f64 / 2.0;
        let top = *centers_hz.last().expect("n_channels >= 2");
        if top > nyquist_hz {
            return Err(FrontendError::AboveNyquist { freq_hz: top, nyquist_hz });
        }
        if top > params.fmax_hz {
            return Err(FrontendError::InvalidParams(format!(
                "top bin center {top:.3} Hz exceeds fmax {} Hz",
                params.fmax_hz
            )));
        }

        let q = 1.0 / (2f64.powf(1.0 / b as f64) - 1.0);
        let sr = sample_rate_hz as f64;
        let kernels: Vec<(Vec<f64>, Vec<f64>)> = centers_hz
            .iter()
            .map(|&f| {
                let n_k = (q * sr / f).ceil() as usize;
                let scale = 1.0 / n_k as f64;
                (0..n_k)
                    .map(|n| {
                        let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / n_k as f64).cos();
                        let (s, c) = (2.0 * PI * q * n as f64 / n_k as f64).sin_cos();
                        (w * c * scale, -w * s * scale)
                    })
                    .unzip()
            })
            .collect();
        let longest = kernels.iter().map(|k| k.0.len()).max().expect("non-empty");
        Ok(Self {
            sample_rate_hz,
            hop: params.hop_samples(sample_rate_hz),
            centers_hz,
            kernels,
            longest,
        })
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Window length of each bin in samples.
    pub fn window_lengths(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k.0.len()).collect()
    }

    pub fn apply(&self, audio: &AudioBuffer) -> Result<TimeFreqMatrix, FrontendError> {
        if audio.sample_rate_hz() != self.sample_rate_hz {
            return Err(FrontendError::InvalidParams(format!(
                "kernel built for {} Hz, audio is {} Hz",
                self.sample_rate_hz,
                audio.sample_rate_hz()
            )));
        }
        let x = audio.samples();
        if self.longest > x.len() {
            return Err(FrontendError::FminTooLow {
                window: self.longest,
                samples: x.len(),
            });
        }
        let n_frames = 1 + (x.len() - self.longest) / self.hop;
        let n_bins = self.kernels.len();
        let mut values = vec![0.0; n_bins * n_frames];
        for (k, (re, im)) in self.kernels.iter().enumerate() {
            let n_k = re.len();
            for t in 0..n_frames {
                let center = t * self.hop + self.longest / 2;
                let start = center - n_k / 2;
                let (sr, si) = dot2(&x[start..start + n_k], re, im);
                values[k * n_frames + t] = (sr * sr + si * si).sqrt();
            }
        }
        let frame_rate = self.sample_rate_hz as f64 / self.hop as f64;
        TimeFreqMatrix::new(values, n_frames, self.centers_hz.clone(), frame_rate)
    }
}

/// (x . a, x . b) with eight independent accumulators so the loop vectorizes.
fn dot2(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    const L: usize = 8;
    let mut acc_a = [0.0; L];
    let mut acc_b = [0.0; L];
    let chunks = x.len() / L;
    for c in 0..chunks {
        let xs = &x[c * L..(c + 1) * L];
        let as_ = &a[c * L..(c + 1) * L];
        let bs = &b[c * L..(c + 1) * L];
        for j in 0..L {
            acc_a[j] += xs[j] * as_[j];
            acc_b[j] += xs[j] * bs[j];
        }
    }
    let mut sa: f64 = acc_a.iter().sum();
    let mut sb: f64 = acc_b.iter().sum();
    for i in chunks * L..x.len() {
        sa += x[i] * a[i];
        sb += x[i] * b[i];
    }
    (sa, sb)
}

/// Constant-Q magnitude spectrogram.
pub fn cqt(audio: &AudioBuffer, params: &FrontendParams) -> Result<TimeFreqMatrix, FrontendError> {
    CqtKernel::new(params, audio.sample_rate_hz())?.apply(audio)
}
