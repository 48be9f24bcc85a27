//! Representational dissimilarity matrices over notes.

use crate::interchange::EmbeddingSet;
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RdmError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vectors need at least 2 elements, got {0}")]
    TooShort(usize),
    #[error("RDM shapes or labels differ")]
    LabelMismatch,
    #[error("no RDMs to combine")]
    Empty,
    #[error("off-diagonal entries are constant; cannot normalize")]
    Degenerate,
    #[error("invalid RDM: {0}")]
    Invalid(String),
    #[error("malformed RDM CSV: {0}")]
    Csv(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Square, symmetric, zero-diagonal dissimilarity matrix labelled by MIDI note.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    labels: Vec<u16>,
    /// Row-major n x n.
    values: Vec<f64>,
}

impl Rdm {
    pub fn new(labels: Vec<u16>, values: Vec<f64>) -> Result<Self, RdmError> {
        let n = labels.len();
        if n < 2 {
            return Err(RdmError::Invalid(format!("need at least 2 labels, got {n}")));
        }
        if values.len() != n * n {
            return Err(RdmError::Invalid(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(RdmError::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(RdmError::Invalid(format!("entry ({i}, {j}) = {v}")));
                }
                if (v - values[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(RdmError::Invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { labels, values })
    }

    /// Builds from a pairwise function evaluated on the upper triangle.
    pub fn from_fn(labels: Vec<u16>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, RdmError> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::new(labels, values)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    /// Off-diagonal upper triangle, row-major: (0,1), (0,2), ..., (n-2,n-1).
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.values[i * n + j])
            .collect()
    }

    /// `labels` as the header line, then one line of values per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self.labels.iter().map(u16::to_string).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for i in 0..self.n() {
            let row: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, RdmError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| RdmError::Csv("empty file".into()))?;
        let labels = header
            .split(',')
            .map(|t| t.trim().parse::<u16>().map_err(|e| RdmError::Csv(format!("label {t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut values = Vec::with_capacity(labels.len() * labels.len());
        let mut rows = 0;
        for line in lines {
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| RdmError::Csv(format!("value {t:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != labels.len() {
                return Err(RdmError::Csv(format!("row {rows} has {} fields, expected {}", row.len(), labels.len())));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != labels.len() {
            return Err(RdmError::Csv(format!("{rows} rows for {} labels", labels.len())));
        }
        Self::new(labels, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RdmError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, RdmError> {
        Self::from_csv(&fs::read_to_string(path)?)
    }

    /// True when every entry lies in [0, 1].
    pub fn is_unit_range(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Result of [`correlation_distance`]; `degenerate` marks a zero-variance input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationDistance {
    pub value: f64,
    pub degenerate: bool,
}

/// `v - mean(v)` scaled to unit norm, or `None` for a constant vector.
fn centered_unit(v: &[f64]) -> Option<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(centered.into_iter().map(|x| x / norm).collect())
}

/// Dot product accumulated in twice the working precision (error-free transforms).
///
/// A plain running sum rounds differently depending on where the large terms sit,
/// which splits ties between distances that are equal in exact arithmetic.
fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += se + pe;
    }
    s + c
}

fn distance_from_units(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>) -> CorrelationDistance {
    match (a, b) {
        (Some(a), Some(b)) => {
            let r = dot2(a, b);
            CorrelationDistance {
                value: 1.0 - r.abs().min(1.0),
                degenerate: false,
            }
        }
        _ => CorrelationDistance {
            value: 1.0,
            degenerate: true,
        },
    }
}

/// `1 - |pearson(a, b)|`. A constant input gives 1 and sets `degenerate`.
pub fn correlation_distance(a: &[f64], b: &[f64]) -> Result<CorrelationDistance, RdmError> {
    if a.len() != b.len() {
        return Err(RdmError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(RdmError::TooShort(a.len()));
    }
    Ok(distance_from_units(&centered_unit(a), &centered_unit(b)))
}

/// Correlation-distance RDM between every pair of note embeddings in `set`.
///
/// Zero-variance embeddings are maximally dissimilar to everything and are reported
/// through `log::warn!` rather than failing.
pub fn compute_rdm(set: &EmbeddingSet) -> Result<Rdm, RdmError> {
    let rows: Vec<Vec<f64>> = (0..set.n_notes()).map(|i| set.row_f64(i)).collect();
    let context = format!("{}/{}", set.representation_name(), set.instrument_id());
    rdm_from_rows(set.note_midis().to_vec(), &rows, &context)
}

/// [`compute_rdm`] on 64-bit rows. `context` names the rows in warnings.
pub fn rdm_from_rows(labels: Vec<u16>, rows: &[Vec<f64>], context: &str) -> Result<Rdm, RdmError> {
    if rows.len() != labels.len() {
        return Err(RdmError::Invalid(format!("{} rows for {} labels", rows.len(), labels.len())));
    }
    if rows.len() < 2 {
        return Err(RdmError::Invalid("need at least 2 notes".into()));
    }
    let dim = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(RdmError::LengthMismatch(dim, r.len()));
    }
    if dim < 2 {
        return Err(RdmError::TooShort(dim));
    }
    let units: Vec<Option<Vec<f64>>> = rows.iter().map(|r| centered_unit(r)).collect();
    let dead: Vec<u16> = units
        .iter()
        .zip(&labels)
        .filter(|(u, _)| u.is_none())
        .map(|(_, m)| *m)
        .collect();
    if !dead.is_empty() {
        log::warn!("{context}: zero-variance embeddings for notes {dead:?}; their distances are set to 1");
    }
    Rdm::from_fn(labels, |i, j| distance_from_units(&units[i], &units[j]).value)
}

/// Element-wise mean.
pub fn average_rdms(rdms: &[Rdm]) -> Result<Rdm, RdmError> {
    let first = rdms.first().ok_or(RdmError::Empty)?;
    if rdms.iter().any(|r| r.labels != first.labels) {
        return Err(RdmError::LabelMismatch);
    }
    let k = rdms.len() as f64;
    let values = (0..first.values.len())
        .map(|idx| rdms.iter().map(|r| r.values[idx]).sum::<f64>() / k)
        .collect();
    Rdm::new(first.labels.clone(), values)
}

/// Min-max scales off-diagonal entries to [0, 1]; the diagonal stays 0. For plotting only.
pub fn normalize_rdm(rdm: &Rdm) -> Result<Rdm, RdmError> {
    let off = rdm.upper_triangle();
    let lo = off.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = off.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(RdmError::Degenerate);
    }
    let span = hi - lo;
    Rdm::from_fn(rdm.labels.clone(), |i, j| ((rdm.get(i, j) - lo) / span).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[Vec<f64>]) -> EmbeddingSet {
        let midis = (0..rows.len() as u16).map(|i| 60 + i).collect();
        EmbeddingSet::from_rows("test", "inst", midis, rows).unwrap()
    }

    #[test]
    fn one_hot_rows_give_exactly_two_distances() {
        let rows: Vec<Vec<f64>> = (0..36).map(|m| (0..12).map(|k| if m % 12 == k { 1.0 } else { 0.0 }).collect()).collect();
        let rdm = rdm_from_rows((60..96).collect(), &rows, "onehot").unwrap();
        let mut distinct: Vec<f64> = Vec::new();
        for i in 0..36 {
            for j in i + 1..36 {
                let d = rdm.get(i, j);
                if !distinct.contains(&d) {
                    distinct.push(d);
                }
            }
        }
        distinct.sort_by(f64::total_cmp);
        assert_eq!(distinct.len(), 2, "{distinct:?}");
        assert!(distinct[0] < 1e-15);
        assert!((distinct[1] - 10.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn identical_and_negated_vectors_are_at_distance_zero() {
        let a = [1.0, 5.0, -2.0, 0.5];
        assert!(correlation_distance(&a, &a).unwrap().value.abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!(correlation_distance(&a, &neg).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_centered_vectors_are_at_distance_one() {
        let d = correlation_distance(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!((d.value - 1.0).abs() < 1e-15);
        assert!(!d.degenerate);
    }

    #[test]
    fn constant_vector_is_degenerate() {
        let d = correlation_distance(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.value, 1.0);
        assert!(d.degenerate);
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(correlation_distance(&[1.0, 2.0], &[1.0]), Err(RdmError::LengthMismatch(2, 1))));
        assert!(matches!(correlation_distance(&[1.0], &[1.0]), Err(RdmError::TooShort(1))));
    }

    #[test]
    fn same_vector_everywhere_gives_zero_rdm() {
        let v = vec![0.3, -1.0, 2.0, 4.0];
        let rdm = compute_rdm(&set(&vec![v; 5])).unwrap();
        assert!(rdm.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn two_orthogonal_notes() {
        let rdm = compute_rdm(&set(&[vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 2.0, 1.0]])).unwrap();
        assert_eq!(rdm.n(), 2);
        assert!((rdm.get(0, 1) - 1.0).abs() < 1e-7);
        assert_eq!(rdm.get(0, 0), 0.0);
    }

    #[test]
    fn thirty_six_notes_give_630_pairs() {
        let rows: Vec<Vec<f64>> = (0..36).map(|i| (0..8).map(|d| ((i * 7 + d * 3) % 11) as f64).collect()).collect();
        let rdm = compute_rdm(&set(&rows)).unwrap();
        assert_eq!(rdm.n(), 36);
        assert_eq!(rdm.upper_triangle().len(), 630);
    }

    #[test]
    fn dead_note_is_maximally_dissimilar() {
        let rdm = compute_rdm(&set(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0], vec![3.0, 2.0, 1.0]])).unwrap();
        assert_eq!(rdm.get(0, 1), 1.0);
        assert_eq!(rdm.get(1, 2), 1.0);
        assert!(rdm.get(0, 2).abs() < 1e-12);
    }

    #[test]
    fn averaging() {
        let a = Rdm::from_fn(vec![1, 2, 3], |i, j| (i + j) as f64 / 4.0).unwrap();
        let b = Rdm::from_fn(vec![1, 2, 3], |i, j| (j - i) as f64 / 2.0).unwrap();
        assert_eq!(average_rdms(std::slice::from_ref(&a)).unwrap(), a);
        let mid = average_rdms(&[a.clone(), b.clone()]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((mid.get(i, j) - 0.5 * (a.get(i, j) + b.get(i, j))).abs() < 1e-15);
            }
        }
        let many = vec![b.clone(); 30];
        let avg = average_rdms(&many).unwrap();
        for (x, y) in avg.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
        let c = Rdm::from_fn(vec![1, 2, 4], |_, _| 1.0).unwrap();
        assert!(matches!(average_rdms(&[a, c]), Err(RdmError::LabelMismatch)));
        assert!(matches!(average_rdms(&[]), Err(RdmError::Empty)));
    }

    #[test]
    fn normalization() {
        let r = Rdm::from_fn(vec![1, 2, 3], |i, j| [0.2, 0.45, 0.7][i + j - 1]).unwrap();
        let n = normalize_rdm(&r).unwrap();
        assert_eq!(n.get(0, 1), 0.0);
        assert!((n.get(0, 2) - 0.5).abs() < 1e-12);
        assert_eq!(n.get(1, 2), 1.0);
        assert_eq!(n.get(2, 2), 0.0);
        assert_eq!(normalize_rdm(&n).unwrap(), n);
        let flat = Rdm::from_fn(vec![1, 2, 3], |_, _| 0.4).unwrap();
        assert!(matches!(normalize_rdm(&flat), Err(RdmError::Degenerate)));
    }

    #[test]
    fn csv_round_trip() {
        let r = Rdm::from_fn(vec![60, 61, 62, 63], |i, j| 1.0 / (1.0 + (i * j) as f64 + 0.1 * j as f64)).unwrap();
        let text = r.to_csv();
        assert!(text.starts_with("60,61,62,63\n"));
        assert_eq!(Rdm::from_csv(&text).unwrap(), r);
        assert!(Rdm::from_csv("60,61\n0,1\n").is_err());
        assert!(Rdm::from_csv("60,61\n0,1\n1,x\n").is_err());
    }

    #[test]
    fn rejects_asymmetric_and_bad_diagonal() {
        assert!(Rdm::new(vec![1, 2], vec![0.0, 0.5, 0.4, 0.0]).is_err());
        assert!(Rdm::new(vec![1, 2], vec![0.1, 0.5, 0.5, 0.0]).is_err());
        assert!(Rdm::new(vec![1, 2], vec![0.0, f64::NAN, f64::NAN, 0.0]).is_err());
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (3usize..10, 2usize..12).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n))
    }

    proptest! {
        #[test]
        fn affine_per_note_transform_leaves_rdm_unchanged(
            rows in rows_strategy(),
            alphas in prop::collection::vec(prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], 10),
            betas in prop::collection::vec(-10.0f64..10.0, 10),
        ) {
            let labels: Vec<u16> = (0..rows.len() as u16).collect();
            let base = rdm_from_rows(labels.clone(), &rows, "base").unwrap();
            let moved: Vec<Vec<f64>> = rows.iter().enumerate()
                .map(|(i, r)| r.iter().map(|x| alphas[i] * x + betas[i]).collect())
                .collect();
            let after = rdm_from_rows(labels, &moved, "moved").unwrap();
            for (a, b) in base.values().iter().zip(after.values()) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn dimension_permutation_leaves_rdm_unchanged(rows in rows_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let d = rows[0].len();
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&p| r[p]).collect()).collect();
            let a = compute_rdm(&set(&rows)).unwrap();
            let b = compute_rdm(&set(&permuted)).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn averaging_commutes_with_list_permutation(rows in rows_strategy(), k in 2usize..6) {
            let rdms: Vec<Rdm> = (0..k)
                .map(|s| {
                    let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * (s as f64 + 1.0) + (s * s) as f64 * x.sin()).collect()).collect();
                    compute_rdm(&set(&shifted)).unwrap()
                })
                .collect();
            let mut rev = rdms.clone();
            rev.reverse();
            let a = average_rdms(&rdms).unwrap();
            let b = average_rdms(&rev).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }
    }
}
