//! ERB-spaced gammatone cochleagram.
//!
//! Each channel is a 4th-order complex gammatone realized as four cascaded complex one-pole
//! sections sharing the pole `exp(-2 pi b / sr) * exp(i 2 pi fc / sr)` with `b = 1.019 ERB(fc)`.
//! The magnitude of the complex output is the channel envelope. Envelopes are averaged over
//! `window_s` frames every `hop_s` and compressed with exponent 0.3.

use super::{FrontendError, FrontendKind, FrontendParams, TimeFreqMatrix};
use crate::stimulus::AudioBuffer;
use std::f64::consts::PI;

pub const COMPRESSION_EXPONENT: f64 = 0.3;
const ORDER: usize = 4;
/// Channels filtered together; the inner loop vectorizes across them.
const GROUP: usize = 8;

/// ERB-number (Cam) scale: `21.4 log10(1 + 0.00437 f)`.
pub fn erb_number(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

pub fn erb_number_inverse(erb: f64) -> f64 {
    (10f64.powf(erb / 21.4) - 1.0) / 0.00437
}

/// Equivalent rectangular bandwidth in Hz at `hz` (Glasberg & Moore).
pub fn erb_width(hz: f64) -> f64 {
    24.7 * (4.37 * hz / 1000.0 + 1.0)
}

/// `n` frequencies equally spaced in ERB number from `fmin_hz` to `fmax_hz` inclusive.
pub fn erb_center_frequencies(n: usize, fmin_hz: f64, fmax_hz: f64) -> Result<Vec<f64>, FrontendError> {
    if n < 2 {
        return Err(FrontendError::InvalidParams(format!("need at least 2 channels, got {n}")));
    }
    if !(fmin_hz.is_finite() && fmax_hz.is_finite()) || fmin_hz < 0.0 {
        return Err(FrontendError::InvalidParams("frequency bounds must be finite and >= 0".into()));
    }
    if fmin_hz >= fmax_hz {
        return Err(FrontendError::InvalidParams(format!("fmin {fmin_hz} >= fmax {fmax_hz}")));
    }
    let (lo, hi) = (erb_number(fmin_hz), erb_number(fmax_hz));
    let mut out: Vec<f64> = (0..n)
        .map(|i| erb_number_inverse(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect();
    out[0] = fmin_hz;
    out[n - 1] = fmax_hz;
    Ok(out)
}

pub fn cochleagram(audio: &AudioBuffer, params: &FrontendParams) -> Result<TimeFreqMatrix, FrontendError> {
    params.expect_kind(FrontendKind::Cochleagram)?;
    let sr_hz = audio.sample_rate_hz();
    params.validate(sr_hz)?;
    let centers = erb_center_frequencies(params.n_channels, params.fmin_hz, params.fmax_hz)?;
    let x = audio.samples();
    let win = params.window_samples(sr_hz);
    if x.len() < win {
        return Err(FrontendError::AudioTooShort {
            samples: x.len(),
            window: win,
        });
    }
    let hop = params.hop_samples(sr_hz);
    let n_frames = 1 + (x.len() - win) / hop;
    let sr = sr_hz as f64;

    let mut values = vec![0.0; centers.len() * n_frames];
    let mut env = vec![0.0f64; GROUP * x.len()];
    let mut prefix = vec![0.0f64; x.len() + 1];
    for (g, group) in centers.chunks(GROUP).enumerate() {
        let mut pole_re = [0.0; GROUP];
        let mut pole_im = [0.0; GROUP];
        let mut gain = [0.0; GROUP];
        for (j, &fc) in group.iter().enumerate() {
            let r = (-2.0 * PI * 1.019 * erb_width(fc) / sr).exp();
            let (s, c) = (2.0 * PI * fc / sr).sin_cos();
            pole_re[j] = r * c;
            pole_im[j] = r * s;
            // unit gain at the center frequency for each section
            gain[j] = 1.0 - r;
        }
        let mut st_re = [[0.0; GROUP]; ORDER];
        let mut st_im = [[0.0; GROUP]; ORDER];
        for (n, &xn) in x.iter().enumerate() {
            let mut in_re = [0.0; GROUP];
            let mut in_im = [0.0; GROUP];
            for j in 0..GROUP {
                in_re[j] = gain[j] * xn;
            }
            for stage in 0..ORDER {
                for j in 0..GROUP {
                    let yr = pole_re[j] * st_re[stage][j] - pole_im[j] * st_im[stage][j] + in_re[j];
                    let yi = pole_re[j] * st_im[stage][j] + pole_im[j] * st_re[stage][j] + in_im[j];
                    st_re[stage][j] = yr;
                    st_im[stage][j] = yi;
                    in_re[j] = gain[j] * yr;
                    in_im[j] = gain[j] * yi;
                }
            }
            for j in 0..GROUP {
                let (yr, yi) = (st_re[ORDER - 1][j], st_im[ORDER - 1][j]);
                env[j * x.len() + n] = (yr * yr + yi * yi).sqrt();
            }
        }
        for j in 0..group.len() {
            let e = &env[j * x.len()..(j + 1) * x.len()];
            for (i, v) in e.iter().enumerate() {
                prefix[i + 1] = prefix[i] + v;
            }
            let ch = g * GROUP + j;
            for t in 0..n_frames {
                let mean = (prefix[t * hop + win] - prefix[t * hop]) / win as f64;
                // Prefix differences can go a hair negative for silent stretches.
                values[ch * n_frames + t] = mean.max(0.0).powf(COMPRESSION_EXPONENT);
            }
        }
    }
    TimeFreqMatrix::new(values, n_frames, centers, sr / hop as f64)
}
