use super::{synthesize_note, write_wav, AudioBuffer, Family, NoteSpec, SynthError, TimbreProfile, WavError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;

/// What to synthesize: how many instruments per family, which octaves, and the audio format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub families: Vec<Family>,
    pub instruments_per_family: usize,
    /// Scientific-pitch octave numbers (4 = C4..B4).
    pub octaves: Vec<u8>,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            instruments_per_family: 10,
            octaves: vec![4, 5, 6],
            duration_s: 2.5,
            sample_rate_hz: 16000,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.families.is_empty() {
            return bad("no families");
        }
        let mut fams = self.families.clone();
        fams.sort_by_key(|f| *f as u8);
        fams.dedup();
        if fams.len() != self.families.len() {
            return bad("duplicate family");
        }
        if self.instruments_per_family == 0 || self.instruments_per_family > 100 {
            return bad("instruments_per_family must be in 1..=100");
        }
        if self.octaves.is_empty() {
            return bad("no octaves");
        }
        if self.octaves.windows(2).any(|w| w[0] >= w[1]) {
            return bad("octaves must be strictly ascending");
        }
        if self.octaves.iter().any(|o| !(4..=6).contains(o)) {
            return bad("octaves must lie in 4..=6");
        }
        if self.sample_rate_hz == 0 {
            return Err(SynthError::InvalidSampleRate(0));
        }
        Ok(())
    }

    /// Ascending MIDI numbers of every note in the configured octaves.
    pub fn note_midis(&self) -> Vec<u16> {
        self.octaves
            .iter()
            .flat_map(|&o| {
                let c = 12 * (o as u16 + 1);
                c..c + 12
            })
            .collect()
    }

    /// Instrument ids with their families, in bank order.
    pub fn instruments(&self) -> Vec<(String, Family)> {
        self.families
            .iter()
            .flat_map(|&fam| (0..self.instruments_per_family).map(move |i| (format!("{}_{:02}", fam.name(), i), fam)))
            .collect()
    }
}

/// One synthesized stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub note: NoteSpec,
    pub audio: AudioBuffer,
}

/// Listing of the bank written next to the WAV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub note_midis: Vec<u16>,
    pub instruments: Vec<InstrumentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentEntry {
    pub id: String,
    pub family: Family,
    pub timbre: TimbreProfile,
    pub notes: Vec<ManifestNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestNote {
    pub midi: u16,
    /// Relative to the manifest's directory.
    pub path: String,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, instrument: usize, midi: u16) -> u64 {
    mix(mix(seed ^ mix(instrument as u64)) ^ midi as u64)
}

/// Draws a timbre for one instrument of `family`.
///
/// Flutes get a few steeply decaying partials, guitars a plucked spectrum with a long decay,
/// keyboards many partials with a fast attack.
pub fn sample_timbre(family: Family, rng: &mut impl Rng) -> TimbreProfile {
    let detune_cents = rng.gen_range(-8.0..8.0);
    match family {
        Family::Flute => {
            let n = rng.gen_range(4..=6);
            let ratio = rng.gen_range(0.25..0.4);
            TimbreProfile {
                harmonic_amplitudes: (0..n).map(|k| f64::powi(ratio, k)).collect(),
                attack_s: rng.gen_range(0.06..0.12),
                decay_s: rng.gen_range(0.1..0.2),
                sustain_level: rng.gen_range(0.7..0.9),
                release_s: rng.gen_range(0.1..0.2),
                detune_cents,
            }
        }
        Family::Guitar => {
            let n = rng.gen_range(10..=16);
            let pluck: f64 = rng.gen_range(0.1..0.25);
            TimbreProfile {
                harmonic_amplitudes: (1..=n)
                    .map(|k| (std::f64::consts::PI * k as f64 * pluck).sin().abs() / k as f64)
                    .collect(),
                attack_s: rng.gen_range(0.003..0.01),
                decay_s: rng.gen_range(0.6..1.2),
                sustain_level: rng.gen_range(0.05..0.2),
                release_s: rng.gen_range(0.1..0.2),
                detune_cents,
            }
        }
        Family::Keyboard => {
            let n = rng.gen_range(20..=30);
            let slope: f64 = rng.gen_range(0.8..1.3);
            TimbreProfile {
                harmonic_amplitudes: (1..=n).map(|k| (k as f64).powf(-slope)).collect(),
                attack_s: rng.gen_range(0.005..0.02),
                decay_s: rng.gen_range(0.2..0.5),
                sustain_level: rng.gen_range(0.3..0.6),
                release_s: rng.gen_range(0.15..0.3),
                detune_cents,
            }
        }
    }
}

/// Synthesizes every (instrument, note) of the configuration.
///
/// Entries are instrument-major in [`BankConfig::instruments`] order with ascending MIDI inside
/// each instrument. The result depends only on `(config, seed)`.
pub fn build_bank(config: &BankConfig, seed: u64) -> Result<(Manifest, Vec<BankEntry>), SynthError> {
    config.validate()?;
    let midis = config.note_midis();
    let instruments = config.instruments();

    let timbres: Vec<TimbreProfile> = instruments
        .iter()
        .enumerate()
        .map(|(i, (_, fam))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i, u16::MAX));
            sample_timbre(*fam, &mut rng)
        })
        .collect();

    let jobs: Vec<(usize, u16)> = (0..instruments.len())
        .flat_map(|i| midis.iter().map(move |&m| (i, m)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(i, midi)| {
            let (id, fam) = &instruments[i];
            let note = NoteSpec::new(midi as i32, id.clone(), *fam)?;
            let audio = synthesize_note(
                &note,
                &timbres[i],
                config.duration_s,
                config.sample_rate_hz,
                derive_seed(seed, i, midi),
            )?;
            Ok(BankEntry { note, audio })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let manifest = Manifest {
        seed,
        sample_rate_hz: config.sample_rate_hz,
        duration_s: config.duration_s,
        note_midis: midis.clone(),
        instruments: instruments
            .iter()
            .zip(timbres)
            .map(|((id, fam), timbre)| InstrumentEntry {
                id: id.clone(),
                family: *fam,
                timbre,
                notes: midis
                    .iter()
                    .map(|&m| ManifestNote {
                        midi: m,
                        path: format!("wav/{id}/{m:03}.wav"),
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok((manifest, entries))
}

/// Writes `manifest.json` and one WAV per entry under `dir`.
pub fn write_bank(dir: &Path, manifest: &Manifest, entries: &[BankEntry]) -> Result<(), WavError> {
    for inst in &manifest.instruments {
        fs::create_dir_all(dir.join("wav").join(&inst.id))?;
    }
    let paths: Vec<(&ManifestNote, &str)> = manifest
        .instruments
        .iter()
        .flat_map(|inst| inst.notes.iter().map(move |n| (n, inst.id.as_str())))
        .collect();
    if paths.len() != entries.len() {
        return Err(WavError::Io(io::Error::new(
            io::ErrorKind::InvalidInput,
            "manifest and entries disagree in length",
        )));
    }
    paths
        .par_iter()
        .zip(entries)
        .try_for_each(|((note, id), entry)| {
            debug_assert_eq!(entry.note.instrument_id(), *id);
            debug_assert_eq!(entry.note.midi() as u16, note.midi);
            write_wav(&entry.audio, &dir.join(&note.path))
        })?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}
