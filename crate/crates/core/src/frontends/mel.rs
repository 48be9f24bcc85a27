use super::{FrontendError, FrontendKind, FrontendParams, TimeFreqMatrix};
use crate::stimulus::AudioBuffer;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// STFT plan plus a sparse triangular mel filterbank.
pub struct MelBank {
    params: FrontendParams,
    sample_rate_hz: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
    /// Per band: (FFT bin, weight) pairs with nonzero weight.
    filters: Vec<Vec<(usize, f64)>>,
    centers_hz: Vec<f64>,
}

impl MelBank {
    pub fn new(params: &FrontendParams, sample_rate_hz: u32) -> Result<Self, FrontendError> {
        params.expect_kind(FrontendKind::Mel)?;
        params.validate(sample_rate_hz)?;
        let win_len = params.window_samples(sample_rate_hz);
        // Zero-pad to at least 1024 points so the narrow low-frequency bands each cover FFT bins.
        let n_fft = win_len.next_power_of_two().max(1024);
        let window = (0..win_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win_len as f64).cos())
            .collect();

        let sr = sample_rate_hz as f64;
        let n = params.n_channels;
        let (lo, hi) = (hz_to_mel(params.fmin_hz), hz_to_mel(params.fmax_hz));
        let edges: Vec<f64> = (0..n + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n + 1) as f64))
            .collect();
        let bin_hz = sr / n_fft as f64;
        let filters = (0..n)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                // Area normalization: every triangle integrates to the same value.
                let norm = 2.0 / (right - left);
                (0..=n_fft / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > left && f <= center {
                            (f - left) / (center - left)
                        } else if f > center && f < right {
                            (right - f) / (right - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w * norm))
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            params: params.clone(),
            sample_rate_hz,
            window,
            fft: FftPlanner::new().plan_fft_forward(n_fft),
            n_fft,
            filters,
            centers_hz: edges[1..=n].to_vec(),
        })
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, audio: &AudioBuffer) -> Result<TimeFreqMatrix, FrontendError> {
        if audio.sample_rate_hz() != self.sample_rate_hz {
            return Err(FrontendError::InvalidParams(format!(
                "filterbank built for {} Hz, audio is {} Hz",
                self.sample_rate_hz,
                audio.sample_rate_hz()
            )));
        }
        let x = audio.samples();
        let win_len = self.window.len();
        if x.len() < win_len {
            return Err(FrontendError::AudioTooShort {
                samples: x.len(),
                window: win_len,
            });
        }
        let hop = self.params.hop_samples(self.sample_rate_hz);
        let n_frames = 1 + (x.len() - win_len) / hop;
        let n_ch = self.filters.len();

        let mut values = vec![0.0; n_ch * n_frames];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0; self.n_fft / 2 + 1];
        for t in 0..n_frames {
            let frame = &x[t * hop..t * hop + win_len];
            for (b, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex::new(s * w, 0.0);
            }
            buf[win_len..].iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (ch, filt) in self.filters.iter().enumerate() {
                values[ch * n_frames + t] = filt.iter().map(|&(k, w)| w * mag[k]).sum();
            }
        }
        let frame_rate = self.sample_rate_hz as f64 / hop as f64;
        TimeFreqMatrix::new(values, n_frames, self.centers_hz.clone(), frame_rate)
    }
}

/// Magnitude STFT (Hann window) through a triangular mel filterbank.
pub fn mel_spectrogram(audio: &AudioBuffer, params: &FrontendParams) -> Result<TimeFreqMatrix, FrontendError> {
    MelBank::new(params, audio.sample_rate_hz())?.apply(audio)
}
