//! Hypothesis RDMs for the two perceptual readings of the pitch helix.
//!
//! The pitch-height model orders notes on a line (semitone distance). The chroma models
//! put notes on the pitch-class circle and ignore the octave.

use crate::rdm::{Rdm, RdmError};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PitchHeight,
    /// 0 for the same pitch class, 1 otherwise.
    ChromaBinary,
    /// Shortest distance around the 12-step pitch-class circle, scaled so a tritone is 1.
    ChromaCircular,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PitchHeight => "pitch_height",
            ModelKind::ChromaBinary => "chroma_binary",
            ModelKind::ChromaCircular => "chroma_circular",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_notes(note_midis: &[u16]) -> Result<(), RdmError> {
    if note_midis.len() < 2 {
        return Err(RdmError::Invalid(format!("need at least 2 notes, got {}", note_midis.len())));
    }
    let mut sorted = note_midis.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(RdmError::Invalid("duplicate notes".into()));
    }
    Ok(())
}

/// `|m_i - m_j|` divided by the largest pairwise distance.
pub fn pitch_height_model(note_midis: &[u16]) -> Result<Rdm, RdmError> {
    check_notes(note_midis)?;
    let lo = *note_midis.iter().min().expect("non-empty") as f64;
    let hi = *note_midis.iter().max().expect("non-empty") as f64;
    let span = hi - lo;
    Rdm::from_fn(note_midis.to_vec(), |i, j| {
        (note_midis[i] as f64 - note_midis[j] as f64).abs() / span
    })
}

/// Chroma-equivalence model; `kind` selects binary or circular distance.
pub fn chroma_model(note_midis: &[u16], kind: ModelKind) -> Result<Rdm, RdmError> {
    check_notes(note_midis)?;
    let pc_step = |i: usize, j: usize| (note_midis[i] as i32 - note_midis[j] as i32).rem_euclid(12);
    match kind {
        ModelKind::ChromaBinary => Rdm::from_fn(note_midis.to_vec(), |i, j| if pc_step(i, j) == 0 { 0.0 } else { 1.0 }),
        ModelKind::ChromaCircular => Rdm::from_fn(note_midis.to_vec(), |i, j| {
            let d = pc_step(i, j);
            d.min(12 - d) as f64 / 6.0
        }),
        ModelKind::PitchHeight => Err(RdmError::Invalid("pitch_height is not a chroma model".into())),
    }
}

/// Either model by kind.
pub fn model_rdm(note_midis: &[u16], kind: ModelKind) -> Result<Rdm, RdmError> {
    match kind {
        ModelKind::PitchHeight => pitch_height_model(note_midis),
        _ => chroma_model(note_midis, kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> Vec<u16> {
        (60..=95).collect()
    }

    #[test]
    fn pitch_height_three_octaves() {
        let r = pitch_height_model(&[60, 72, 84]).unwrap();
        let expected = [0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0];
        assert_eq!(r.values(), &expected);
    }

    #[test]
    fn pitch_height_full_bank_endpoint() {
        let r = pitch_height_model(&bank()).unwrap();
        assert_eq!(r.get(0, 35), 1.0);
        assert!((0..36).all(|i| r.get(i, i) == 0.0));
    }

    #[test]
    fn pitch_height_satisfies_triangle_inequality() {
        let r = pitch_height_model(&bank()).unwrap();
        for i in 0..36 {
            for j in 0..36 {
                for k in 0..36 {
                    assert!(r.get(i, k) <= r.get(i, j) + r.get(j, k) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn chroma_pairs() {
        let b = chroma_model(&[60, 61, 66, 72], ModelKind::ChromaBinary).unwrap();
        assert_eq!(b.get(0, 3), 0.0);
        assert_eq!(b.get(0, 1), 1.0);
        let c = chroma_model(&[60, 61, 66, 72], ModelKind::ChromaCircular).unwrap();
        assert_eq!(c.get(0, 2), 1.0);
        assert!((c.get(0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(c.get(0, 3), 0.0);
    }

    #[test]
    fn binary_chroma_has_36_octave_pairs() {
        let r = chroma_model(&bank(), ModelKind::ChromaBinary).unwrap();
        let zeros = r.upper_triangle().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 36);
    }

    #[test]
    fn models_are_transposition_invariant() {
        let up: Vec<u16> = bank().iter().map(|m| m + 5).collect();
        for kind in [ModelKind::PitchHeight, ModelKind::ChromaBinary, ModelKind::ChromaCircular] {
            assert_eq!(model_rdm(&bank(), kind).unwrap().values(), model_rdm(&up, kind).unwrap().values());
        }
    }

    #[test]
    fn rejects_duplicates_and_singletons() {
        assert!(pitch_height_model(&[60, 60, 61]).is_err());
        assert!(pitch_height_model(&[60]).is_err());
        assert!(chroma_model(&[60], ModelKind::ChromaBinary).is_err());
        assert!(chroma_model(&[60, 61], ModelKind::PitchHeight).is_err());
    }
}
