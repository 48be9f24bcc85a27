//! Binary embedding interchange format.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "AEMB"
//! 4       4         u32 version (= 1)
//! 8       4         u32 byte length L1 of representation_name
//! 12      L1        representation_name, UTF-8
//! ..      4         u32 byte length L2 of instrument_id
//! ..      L2        instrument_id, UTF-8
//! ..      4         u32 note count N
//! ..      4         u32 dim D
//! ..      2*N       u16 MIDI note numbers, strictly ascending
//! ..      4*N*D     f32 IEEE-754 payload, row-major (note, dim)
//! ```
//!
//! Nothing may follow the payload.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"AEMB";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not an embedding file (magic {0:02x?})")]
    NotEmbeddingFile([u8; 4]),
    #[error("unsupported format version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("length mismatch: header implies {expected} bytes, file has {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value at note {note}, dim {dim}")]
    NonFinite { note: usize, dim: usize },
    #[error("invalid embedding set: {0}")]
    Invalid(String),
    #[error("study needs at least 2 embedding sets, got {0}")]
    TooFewSets(usize),
    #[error("set {instrument_id} disagrees with the study: {what}")]
    StudyMismatch { instrument_id: String, what: String },
    #[error("instrument {0} appears more than once")]
    DuplicateInstrument(String),
}

/// Per-note embedding vectors of one instrument under one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    representation_name: String,
    instrument_id: String,
    note_midis: Vec<u16>,
    dim: usize,
    /// Row-major `note_midis.len() x dim`.
    vectors: Vec<f32>,
}

impl EmbeddingSet {
    pub fn new(
        representation_name: impl Into<String>,
        instrument_id: impl Into<String>,
        note_midis: Vec<u16>,
        dim: usize,
        vectors: Vec<f32>,
    ) -> Result<Self, InterchangeError> {
        let set = Self {
            representation_name: representation_name.into(),
            instrument_id: instrument_id.into(),
            note_midis,
            dim,
            vectors,
        };
        set.validate()?;
        Ok(set)
    }

    /// Builds a set from 64-bit rows, rounding to the 32-bit storage precision.
    pub fn from_rows(
        representation_name: impl Into<String>,
        instrument_id: impl Into<String>,
        note_midis: Vec<u16>,
        rows: &[Vec<f64>],
    ) -> Result<Self, InterchangeError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(InterchangeError::Invalid("rows have different lengths".into()));
        }
        let vectors = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(representation_name, instrument_id, note_midis, dim, vectors)
    }

    fn validate(&self) -> Result<(), InterchangeError> {
        let invalid = |m: &str| Err(InterchangeError::Invalid(m.to_string()));
        if self.note_midis.is_empty() {
            return invalid("no notes");
        }
        if self.dim == 0 {
            return invalid("dim must be >= 1");
        }
        if self.note_midis.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("note MIDI numbers must be strictly ascending");
        }
        if self.vectors.len() != self.note_midis.len() * self.dim {
            return invalid("payload size does not match notes x dim");
        }
        if let Some(i) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(InterchangeError::NonFinite {
                note: i / self.dim,
                dim: i % self.dim,
            });
        }
        if u32::try_from(self.representation_name.len()).is_err() || u32::try_from(self.instrument_id.len()).is_err() {
            return invalid("name too long");
        }
        Ok(())
    }

    pub fn representation_name(&self) -> &str {
        &self.representation_name
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn note_midis(&self) -> &[u16] {
        &self.note_midis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_notes(&self) -> usize {
        self.note_midis.len()
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, note: usize) -> &[f32] {
        &self.vectors[note * self.dim..(note + 1) * self.dim]
    }

    /// Row widened to 64 bits for statistics.
    pub fn row_f64(&self, note: usize) -> Vec<f64> {
        self.row(note).iter().map(|&v| v as f64).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            24 + self.representation_name.len() + self.instrument_id.len() + 2 * self.n_notes() + 4 * self.vectors.len(),
        );
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for s in [&self.representation_name, &self.instrument_id] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&(self.n_notes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for m in &self.note_midis {
            out.extend_from_slice(&m.to_le_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, InterchangeError> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(InterchangeError::NotEmbeddingFile(magic));
        }
        let found = r.u32()?;
        if found != VERSION {
            return Err(InterchangeError::VersionMismatch { found });
        }
        let representation_name = r.string()?;
        let instrument_id = r.string()?;
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        // a corrupt header can claim absurd sizes; saturate instead of overflowing
        let expected = n
            .checked_mul(dim)
            .and_then(|nd| nd.checked_mul(4))
            .and_then(|p| p.checked_add(2 * n + r.pos))
            .unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(InterchangeError::LengthMismatch {
                expected,
                found: bytes.len(),
            });
        }
        let note_midis = r
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        let vectors = r
            .take(4 * n * dim)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(representation_name, instrument_id, note_midis, dim, vectors)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], InterchangeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            InterchangeError::LengthMismatch {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, InterchangeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, InterchangeError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| InterchangeError::Invalid("name is not valid UTF-8".into()))
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<(), InterchangeError> {
    // Sets are validated on construction, but a caller-built NaN must never reach disk.
    set.validate()?;
    fs::write(path, set.to_bytes())?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, InterchangeError> {
    EmbeddingSet::from_bytes(&fs::read(path)?)
}

/// Embedding sets of one representation across instruments, checked for consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    representation_name: String,
    note_midis: Vec<u16>,
    dim: usize,
    sets: Vec<EmbeddingSet>,
}

impl Study {
    pub fn representation_name(&self) -> &str {
        &self.representation_name
    }

    pub fn note_midis(&self) -> &[u16] {
        &self.note_midis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sets(&self) -> &[EmbeddingSet] {
        &self.sets
    }

    pub fn instrument_ids(&self) -> Vec<&str> {
        self.sets.iter().map(|s| s.instrument_id()).collect()
    }
}

/// Checks that the sets share representation, dimension and note ordering and that
/// instrument ids are distinct. Input order is kept.
pub fn validate_study(sets: Vec<EmbeddingSet>) -> Result<Study, InterchangeError> {
    if sets.len() < 2 {
        return Err(InterchangeError::TooFewSets(sets.len()));
    }
    let first = &sets[0];
    let mut seen = HashSet::new();
    for s in &sets {
        let mismatch = |what: String| InterchangeError::StudyMismatch {
            instrument_id: s.instrument_id.clone(),
            what,
        };
        if s.representation_name != first.representation_name {
            return Err(mismatch(format!(
                "representation {:?} != {:?}",
                s.representation_name, first.representation_name
            )));
        }
        if s.dim != first.dim {
            return Err(mismatch(format!("dim {} != {}", s.dim, first.dim)));
        }
        if s.note_midis != first.note_midis {
            return Err(mismatch("note ordering differs".into()));
        }
        if !seen.insert(s.instrument_id.as_str()) {
            return Err(InterchangeError::DuplicateInstrument(s.instrument_id.clone()));
        }
    }
    Ok(Study {
        representation_name: first.representation_name.clone(),
        note_midis: first.note_midis.clone(),
        dim: first.dim,
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(inst: &str) -> EmbeddingSet {
        EmbeddingSet::new("mel", inst, vec![60, 61, 62], 2, vec![0.5, -1.0, 2.0, 3.25, 1e-7, 7.0]).unwrap()
    }

    #[test]
    fn documented_example_bytes() {
        let hex = "41454d4201000000030000006d656c010000007803000000020000003c003d00\
                   3e000000803f0000003f000000c00000803e0000000000004040";
        let hex: String = hex.split_whitespace().collect();
        let bytes: Vec<u8> = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap())
            .collect();
        let set = EmbeddingSet::new("mel", "x", vec![60, 61, 62], 2, vec![1.0, 0.5, -2.0, 0.25, 0.0, 3.0]).unwrap();
        assert_eq!(set.to_bytes(), bytes);
        assert_eq!(EmbeddingSet::from_bytes(&bytes).unwrap(), set);
    }

    #[test]
    fn layout_of_a_tiny_file() {
        let set = EmbeddingSet::new("r", "i", vec![60], 1, vec![1.0]).unwrap();
        let bytes = set.to_bytes();
        assert_eq!(
            bytes,
            [
                b'A', b'E', b'M', b'B', 1, 0, 0, 0, // magic, version
                1, 0, 0, 0, b'r', // representation
                1, 0, 0, 0, b'i', // instrument
                1, 0, 0, 0, 1, 0, 0, 0, // notes, dim
                60, 0, // midi
                0x00, 0x00, 0x80, 0x3f, // 1.0f32
            ]
        );
    }

    #[test]
    fn file_round_trip_and_rewrite_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.aemb");
        let set = sample("flute_00");
        write_embeddings(&set, &p).unwrap();
        let first = fs::read(&p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), set);
        write_embeddings(&set, &p).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(matches!(
            EmbeddingSet::new("r", "i", vec![60, 61], 1, vec![1.0, f32::NAN]),
            Err(InterchangeError::NonFinite { note: 1, dim: 0 })
        ));
        assert!(matches!(
            EmbeddingSet::new("r", "i", vec![], 1, vec![]),
            Err(InterchangeError::Invalid(_))
        ));
        assert!(matches!(
            EmbeddingSet::new("r", "i", vec![61, 60], 1, vec![1.0, 2.0]),
            Err(InterchangeError::Invalid(_))
        ));
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let mut bytes = sample("x").to_bytes();
        let mut wrong = bytes.clone();
        wrong[0] = b'R';
        assert!(matches!(
            EmbeddingSet::from_bytes(&wrong),
            Err(InterchangeError::NotEmbeddingFile(_))
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            EmbeddingSet::from_bytes(&v2),
            Err(InterchangeError::VersionMismatch { found: 2 })
        ));
        let cut = bytes.len() - 5;
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes[..cut]),
            Err(InterchangeError::LengthMismatch { .. })
        ));
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes[..10]),
            Err(InterchangeError::LengthMismatch { .. })
        ));
        bytes.push(0);
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes),
            Err(InterchangeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn absurd_header_sizes_do_not_overflow() {
        let mut bytes = sample("x").to_bytes();
        // N and D sit right after the two names: 12 + 3 ("mel") + 4 + 1 ("x")
        let at = 12 + 3 + 4 + 1;
        bytes[at..at + 8].copy_from_slice(&[0xff; 8]);
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes),
            Err(InterchangeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_payload_on_read() {
        let mut bytes = sample("x").to_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            EmbeddingSet::from_bytes(&bytes),
            Err(InterchangeError::NonFinite { note: 2, dim: 1 })
        ));
    }

    #[test]
    fn study_validation() {
        let ok = validate_study(vec![sample("a"), sample("b")]).unwrap();
        assert_eq!(ok.instrument_ids(), vec!["a", "b"]);
        assert_eq!(ok.note_midis(), &[60, 61, 62]);
        assert!(matches!(validate_study(vec![sample("a")]), Err(InterchangeError::TooFewSets(1))));
        assert!(matches!(
            validate_study(vec![sample("a"), sample("a")]),
            Err(InterchangeError::DuplicateInstrument(_))
        ));
        let shifted = EmbeddingSet::new("mel", "b", vec![60, 61, 63], 2, vec![0.0; 6]).unwrap();
        assert!(matches!(
            validate_study(vec![sample("a"), shifted]),
            Err(InterchangeError::StudyMismatch { .. })
        ));
        let wide = EmbeddingSet::new("mel", "b", vec![60, 61, 62], 3, vec![0.0; 9]).unwrap();
        assert!(validate_study(vec![sample("a"), wide]).is_err());
        let other = EmbeddingSet::new("cqt", "b", vec![60, 61, 62], 2, vec![0.0; 6]).unwrap();
        assert!(validate_study(vec![sample("a"), other]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            name in "[a-z0-9/_-]{0,24}",
            inst in "\\PC{0,12}",
            n in 1usize..40,
            dim in 1usize..20,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let midis: Vec<u16> = (0..n as u16).map(|i| 20 + 2 * i).collect();
            let vectors: Vec<f32> = (0..n * dim)
                .map(|_| loop {
                    let v = f32::from_bits(rng.gen());
                    if v.is_finite() { break v; }
                })
                .collect();
            let set = EmbeddingSet::new(name, inst, midis, dim, vectors).unwrap();
            let back = EmbeddingSet::from_bytes(&set.to_bytes()).unwrap();
            prop_assert_eq!(back.vectors().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            set.vectors().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back, set);
        }
    }
}
