//! Hand-engineered time-frequency representations and time pooling.
//!
//! Three front-ends share one output type, [`TimeFreqMatrix`]:
//!
//! * [`mel_spectrogram`]: magnitude STFT through a triangular mel filterbank
//! * [`cqt`]: direct time-domain constant-Q transform
//! * [`cochleagram`]: ERB-spaced complex gammatone filterbank envelopes
//!
//! [`pool_time`] collapses a matrix into one embedding vector per note.

mod cochleagram;
mod cqt;
mod mel;

pub use cochleagram::{cochleagram, erb_center_frequencies, erb_number, erb_number_inverse, erb_width};
pub use cqt::{cqt, cqt_center_frequencies, CqtKernel};
pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelBank};

use crate::stimulus::AudioBuffer;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("{kind} front-end called with {got} parameters")]
    WrongKind { kind: FrontendKind, got: FrontendKind },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("audio has {samples} samples, shorter than one {window}-sample window")]
    AudioTooShort { samples: usize, window: usize },
    #[error("lowest CQT window ({window} samples) exceeds the signal length ({samples} samples)")]
    FminTooLow { window: usize, samples: usize },
    #[error("frequency {freq_hz} Hz above Nyquist ({nyquist_hz} Hz)")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },
    #[error("time-frequency matrix has no frames")]
    EmptyMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    Mel,
    Cqt,
    Cochleagram,
}

impl FrontendKind {
    pub const ALL: [FrontendKind; 3] = [FrontendKind::Mel, FrontendKind::Cqt, FrontendKind::Cochleagram];

    pub fn name(self) -> &'static str {
        match self {
            FrontendKind::Mel => "mel",
            FrontendKind::Cqt => "cqt",
            FrontendKind::Cochleagram => "cochleagram",
        }
    }
}

impl fmt::Display for FrontendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Configuration of one front-end.
///
/// `bins_per_octave` is read by the CQT only. The CQT sizes its windows per bin, so it
/// ignores `window_s`; the other two front-ends frame with `window_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendParams {
    pub kind: FrontendKind,
    pub n_channels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins_per_octave: Option<usize>,
    pub window_s: f64,
    pub hop_s: f64,
}

/// C1 in 12-TET.
pub const CQT_FMIN_HZ: f64 = 32.703_195_662_574_83;

impl FrontendParams {
    /// 128 mel bands from 0 Hz to Nyquist, 25 ms Hann window, 10 ms hop.
    pub fn mel(sample_rate_hz: u32) -> Self {
        Self {
            kind: FrontendKind::Mel,
            n_channels: 128,
            fmin_hz: 0.0,
            fmax_hz: sample_rate_hz as f64 / 2.0,
            bins_per_octave: None,
            window_s: 0.025,
            hop_s: 0.010,
        }
    }

    /// 48 bins per octave over 7 octaves from C1: 336 bins.
    pub fn cqt(sample_rate_hz: u32) -> Self {
        Self {
            kind: FrontendKind::Cqt,
            n_channels: 336,
            fmin_hz: CQT_FMIN_HZ,
            fmax_hz: sample_rate_hz as f64 / 2.0,
            bins_per_octave: Some(48),
            window_s: 0.025,
            hop_s: 0.010,
        }
    }

    /// 128 gammatone channels, ERB-spaced from 50 Hz to Nyquist.
    pub fn cochleagram(sample_rate_hz: u32) -> Self {
        Self {
            kind: FrontendKind::Cochleagram,
            n_channels: 128,
            fmin_hz: 50.0,
            fmax_hz: sample_rate_hz as f64 / 2.0,
            bins_per_octave: None,
            window_s: 0.025,
            hop_s: 0.010,
        }
    }

    pub fn default_for(kind: FrontendKind, sample_rate_hz: u32) -> Self {
        match kind {
            FrontendKind::Mel => Self::mel(sample_rate_hz),
            FrontendKind::Cqt => Self::cqt(sample_rate_hz),
            FrontendKind::Cochleagram => Self::cochleagram(sample_rate_hz),
        }
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<(), FrontendError> {
        let bad = |m: String| Err(FrontendError::InvalidParams(m));
        let nyquist_hz = sample_rate_hz as f64 / 2.0;
        if self.n_channels < 2 {
            return bad(format!("n_channels = {} (need >= 2)", self.n_channels));
        }
        if !(self.fmin_hz.is_finite() && self.fmax_hz.is_finite()) || self.fmin_hz < 0.0 {
            return bad("frequency bounds must be finite and nonnegative".into());
        }
        if self.fmin_hz >= self.fmax_hz {
            return bad(format!("fmin {} >= fmax {}", self.fmin_hz, self.fmax_hz));
        }
        if self.fmax_hz > nyquist_hz {
            return Err(FrontendError::AboveNyquist {
                freq_hz: self.fmax_hz,
                nyquist_hz,
            });
        }
        if !(self.hop_s > 0.0 && self.hop_s.is_finite()) {
            return bad(format!("hop {} s must be positive", self.hop_s));
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return bad(format!("window {} s must be positive", self.window_s));
        }
        if self.kind == FrontendKind::Cqt {
            match self.bins_per_octave {
                Some(b) if b > 0 && self.n_channels.is_multiple_of(b) => {}
                Some(b) => return bad(format!("{} bins is not a whole number of {b}-bin octaves", self.n_channels)),
                None => return bad("CQT needs bins_per_octave".into()),
            }
            if self.fmin_hz <= 0.0 {
                return bad("CQT fmin must be positive".into());
            }
        }
        Ok(())
    }

    fn samples(&self, seconds: f64, sample_rate_hz: u32) -> usize {
        ((seconds * sample_rate_hz as f64).round() as usize).max(1)
    }

    pub(crate) fn hop_samples(&self, sample_rate_hz: u32) -> usize {
        self.samples(self.hop_s, sample_rate_hz)
    }

    pub(crate) fn window_samples(&self, sample_rate_hz: u32) -> usize {
        self.samples(self.window_s, sample_rate_hz)
    }

    pub(crate) fn expect_kind(&self, kind: FrontendKind) -> Result<(), FrontendError> {
        if self.kind != kind {
            return Err(FrontendError::WrongKind { kind, got: self.kind });
        }
        Ok(())
    }
}

/// Nonnegative channels-by-frames matrix with its channel center frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFreqMatrix {
    values: Vec<f64>,
    n_frames: usize,
    channel_freqs_hz: Vec<f64>,
    frame_rate_hz: f64,
}

impl TimeFreqMatrix {
    /// `values` is channel-major: `values[c * n_frames + t]`.
    pub fn new(
        values: Vec<f64>,
        n_frames: usize,
        channel_freqs_hz: Vec<f64>,
        frame_rate_hz: f64,
    ) -> Result<Self, FrontendError> {
        if values.len() != n_frames * channel_freqs_hz.len() {
            return Err(FrontendError::InvalidParams(format!(
                "{} values for {} channels x {} frames",
                values.len(),
                channel_freqs_hz.len(),
                n_frames
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FrontendError::InvalidParams("values must be finite and >= 0".into()));
        }
        if channel_freqs_hz.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FrontendError::InvalidParams(
                "channel frequencies must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            values,
            n_frames,
            channel_freqs_hz,
            frame_rate_hz,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channel_freqs_hz.len()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn channel_freqs_hz(&self) -> &[f64] {
        &self.channel_freqs_hz
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn get(&self, channel: usize, frame: usize) -> f64 {
        self.values[channel * self.n_frames + frame]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.values[channel * self.n_frames..(channel + 1) * self.n_frames]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean over frames, one value per channel.
pub fn pool_time(m: &TimeFreqMatrix) -> Result<Vec<f64>, FrontendError> {
    if m.n_frames == 0 || m.n_channels() == 0 {
        return Err(FrontendError::EmptyMatrix);
    }
    Ok((0..m.n_channels())
        .map(|c| m.channel(c).iter().sum::<f64>() / m.n_frames as f64)
        .collect())
}

/// Runs whichever front-end `params` selects.
pub fn compute(audio: &AudioBuffer, params: &FrontendParams) -> Result<TimeFreqMatrix, FrontendError> {
    match params.kind {
        FrontendKind::Mel => mel_spectrogram(audio, params),
        FrontendKind::Cqt => cqt(audio, params),
        FrontendKind::Cochleagram => cochleagram(audio, params),
    }
}

/// Front-end with its expensive setup (filterbanks, CQT kernels) done once, for reuse
/// across many notes of the same sample rate.
pub enum PreparedFrontend {
    Mel(MelBank),
    Cqt(CqtKernel),
    Cochleagram(FrontendParams),
}

impl PreparedFrontend {
    pub fn new(params: &FrontendParams, sample_rate_hz: u32) -> Result<Self, FrontendError> {
        params.validate(sample_rate_hz)?;
        Ok(match params.kind {
            FrontendKind::Mel => PreparedFrontend::Mel(MelBank::new(params, sample_rate_hz)?),
            FrontendKind::Cqt => PreparedFrontend::Cqt(CqtKernel::new(params, sample_rate_hz)?),
            FrontendKind::Cochleagram => PreparedFrontend::Cochleagram(params.clone()),
        })
    }

    pub fn apply(&self, audio: &AudioBuffer) -> Result<TimeFreqMatrix, FrontendError> {
        match self {
            PreparedFrontend::Mel(bank) => bank.apply(audio),
            PreparedFrontend::Cqt(kernel) => kernel.apply(audio),
            PreparedFrontend::Cochleagram(params) => cochleagram(audio, params),
        }
    }

    /// Front-end followed by [`pool_time`].
    pub fn embed(&self, audio: &AudioBuffer) -> Result<Vec<f64>, FrontendError> {
        pool_time(&self.apply(audio)?)
    }
}
