//! Note stimuli: tuning, additive synthesis, the instrument bank and WAV I/O.

mod bank;
mod wav;

pub use bank::{build_bank, sample_timbre, write_bank, BankConfig, BankEntry, InstrumentEntry, Manifest, ManifestNote};
pub use wav::{read_wav, write_wav, WavError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Lowest MIDI note of the stimulus range (C4).
pub const MIDI_MIN: u8 = 60;
/// Highest MIDI note of the stimulus range (B6).
pub const MIDI_MAX: u8 = 95;

/// Peak amplitude every synthesized buffer is normalized to.
pub const PEAK_LEVEL: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("MIDI note {0} outside the stimulus range {MIDI_MIN}..={MIDI_MAX}")]
    MidiOutOfRange(i32),
    #[error("timbre has no harmonics")]
    NoHarmonics,
    #[error("invalid timbre: {0}")]
    InvalidTimbre(String),
    #[error("duration {duration_s} s is shorter than attack + release ({min_s} s)")]
    DurationTooShort { duration_s: f64, min_s: f64 },
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("no partial of f0 = {f0_hz} Hz lies below Nyquist")]
    NothingBelowNyquist { f0_hz: f64 },
    #[error("invalid bank configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Flute,
    Guitar,
    Keyboard,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Flute, Family::Guitar, Family::Keyboard];

    pub fn name(self) -> &'static str {
        match self {
            Family::Flute => "flute",
            Family::Guitar => "guitar",
            Family::Keyboard => "keyboard",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One stimulus: a note played by one instrument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSpec {
    midi: u8,
    instrument_id: String,
    family: Family,
}

impl NoteSpec {
    pub fn new(midi: i32, instrument_id: impl Into<String>, family: Family) -> Result<Self, SynthError> {
        if !(MIDI_MIN as i32..=MIDI_MAX as i32).contains(&midi) {
            return Err(SynthError::MidiOutOfRange(midi));
        }
        Ok(Self {
            midi: midi as u8,
            instrument_id: instrument_id.into(),
            family,
        })
    }

    pub fn midi(&self) -> u8 {
        self.midi
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn family(&self) -> Family {
        self.family
    }
}

/// Additive-synthesis recipe for one instrument.
///
/// Partial `k` (1-based) sounds at `k * f0` with gain `harmonic_amplitudes[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreProfile {
    pub harmonic_amplitudes: Vec<f64>,
    pub attack_s: f64,
    pub decay_s: f64,
    pub sustain_level: f64,
    pub release_s: f64,
    pub detune_cents: f64,
}

impl TimbreProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.harmonic_amplitudes.is_empty() {
            return Err(SynthError::NoHarmonics);
        }
        if self
            .harmonic_amplitudes
            .iter()
            .any(|a| !a.is_finite() || *a < 0.0)
        {
            return Err(SynthError::InvalidTimbre(
                "harmonic amplitudes must be finite and nonnegative".into(),
            ));
        }
        if self.harmonic_amplitudes.iter().all(|a| *a == 0.0) {
            return Err(SynthError::InvalidTimbre("all harmonic amplitudes are zero".into()));
        }
        if !(0.0..=1.0).contains(&self.sustain_level) {
            return Err(SynthError::InvalidTimbre(format!(
                "sustain level {} outside [0, 1]",
                self.sustain_level
            )));
        }
        for (name, v) in [
            ("attack", self.attack_s),
            ("decay", self.decay_s),
            ("release", self.release_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::InvalidTimbre(format!("{name} time {v} must be >= 0")));
            }
        }
        if !self.detune_cents.is_finite() || self.detune_cents.abs() > 10.0 {
            return Err(SynthError::InvalidTimbre(format!(
                "detune {} cents exceeds 10",
                self.detune_cents
            )));
        }
        Ok(())
    }

    /// Gain of the ADSR envelope at sample `n` of a note `len` samples long.
    fn envelope(&self, n: usize, len: usize, sample_rate: f64) -> f64 {
        let t = n as f64 / sample_rate;
        let note_off = len as f64 / sample_rate - self.release_s;
        let held = if t < self.attack_s {
            t / self.attack_s
        } else if t < self.attack_s + self.decay_s {
            let u = (t - self.attack_s) / self.decay_s;
            1.0 - (1.0 - self.sustain_level) * u
        } else {
            self.sustain_level
        };
        if t < note_off || self.release_s == 0.0 {
            held
        } else {
            let level_at_off = if note_off < self.attack_s {
                note_off / self.attack_s
            } else if note_off < self.attack_s + self.decay_s {
                1.0 - (1.0 - self.sustain_level) * (note_off - self.attack_s) / self.decay_s
            } else {
                self.sustain_level
            };
            level_at_off * (1.0 - (t - note_off) / self.release_s).max(0.0)
        }
    }
}

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("audio buffer is empty")]
    Empty,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} has magnitude {value} > 1")]
    Clipped { index: usize, value: f64 },
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NonFinite { index });
            }
            if value.abs() > 1.0 {
                return Err(AudioError::Clipped { index, value });
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

/// Twelve-tone equal temperament, A4 (MIDI 69) = 440 Hz.
pub fn midi_to_freq(midi: i32) -> f64 {
    440.0 * 2f64.powf((midi - 69) as f64 / 12.0)
}

/// Renders one note by additive synthesis.
///
/// Partials at or above Nyquist are omitted. Partial start phases are drawn from `seed`,
/// so the output is a pure function of the arguments.
pub fn synthesize_note(
    spec: &NoteSpec,
    timbre: &TimbreProfile,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<AudioBuffer, SynthError> {
    timbre.validate()?;
    if sample_rate_hz == 0 {
        return Err(SynthError::InvalidSampleRate(sample_rate_hz));
    }
    let min_s = (timbre.attack_s + timbre.release_s).max(0.5);
    if !duration_s.is_finite() || duration_s < min_s {
        return Err(SynthError::DurationTooShort { duration_s, min_s });
    }

    let sr = sample_rate_hz as f64;
    let len = (duration_s * sr).round() as usize;
    let f0 = midi_to_freq(spec.midi as i32) * 2f64.powf(timbre.detune_cents / 1200.0);
    let nyquist = sr / 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0f64; len];
    let mut audible = false;
    for (k, &amp) in timbre.harmonic_amplitudes.iter().enumerate() {
        // Draw a phase for every partial so the phase of partial k does not depend on
        // which higher partials happen to be dropped.
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let freq = (k + 1) as f64 * f0;
        if freq >= nyquist || amp == 0.0 {
            continue;
        }
        audible = true;
        let step = 2.0 * PI * freq / sr;
        let (rot_im, rot_re) = step.sin_cos();
        let (mut im, mut re) = phase.sin_cos();
        for (n, y) in out.iter_mut().enumerate() {
            *y += amp * im;
            let next_re = re * rot_re - im * rot_im;
            let next_im = re * rot_im + im * rot_re;
            re = next_re;
            im = next_im;
            // Pin the phasor back to the unit circle now and then; the recursion drifts.
            if n % 1024 == 1023 {
                let norm = (re * re + im * im).sqrt();
                re /= norm;
                im /= norm;
            }
        }
    }
    if !audible {
        return Err(SynthError::NothingBelowNyquist { f0_hz: f0 });
    }

    for (n, y) in out.iter_mut().enumerate() {
        *y *= timbre.envelope(n, len, sr);
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(SynthError::InvalidTimbre("envelope silences the note".into()));
    }
    let gain = PEAK_LEVEL / peak;
    out.iter_mut().for_each(|y| *y *= gain);

    Ok(AudioBuffer::new(out, sample_rate_hz).expect("synthesized samples are finite and within range"))
}
