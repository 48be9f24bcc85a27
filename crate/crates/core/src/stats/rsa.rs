//! Model comparison across a study: per-instrument rho, noise ceiling and the tests on top.

use super::{bonferroni, mean, one_sample_ttest, sem, spearman, vectorize, StatsError};
use crate::rdm::Rdm;
use serde::{Deserialize, Serialize};

fn check_labels(rdms: &[Rdm], reference: &Rdm) -> Result<(), StatsError> {
    if rdms.iter().any(|r| r.labels() != reference.labels()) {
        return Err(StatsError::LabelMismatch);
    }
    Ok(())
}

/// Spearman rho between each instrument RDM and the model, in input order.
///
/// `None` marks an instrument whose RDM is constant (rho undefined).
pub fn compare_study(instrument_rdms: &[Rdm], model_rdm: &Rdm) -> Result<Vec<Option<f64>>, StatsError> {
    check_labels(instrument_rdms, model_rdm)?;
    let model = vectorize(model_rdm);
    instrument_rdms
        .iter()
        .map(|r| match spearman(&vectorize(r), &model) {
            Ok(rho) => Ok(Some(rho)),
            Err(StatsError::Undefined(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Either bound is `None` when one of its correlations is undefined (a constant
/// instrument RDM, or a constant mean RDM). The bounds can fail independently:
/// two rank-reversed RDMs have a defined lower bound of -1 but a constant mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCeiling {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn mean_spearman(pairs: impl Iterator<Item = Result<f64, StatsError>>, n: f64) -> Result<Option<f64>, StatsError> {
    let mut total = 0.0;
    for rho in pairs {
        match rho {
            Ok(r) => total += r,
            Err(StatsError::Undefined(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(total / n))
}

/// Leave-one-out lower bound and all-inclusive upper bound, both with Spearman.
pub fn noise_ceiling(instrument_rdms: &[Rdm]) -> Result<NoiseCeiling, StatsError> {
    if instrument_rdms.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: instrument_rdms.len() });
    }
    check_labels(instrument_rdms, &instrument_rdms[0])?;
    let vecs: Vec<Vec<f64>> = instrument_rdms.iter().map(vectorize).collect();
    let n = vecs.len() as f64;
    let len = vecs[0].len();
    let mut sum = vec![0.0; len];
    for v in &vecs {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let all_mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let lower = mean_spearman(
        vecs.iter().map(|v| {
            let others: Vec<f64> = sum.iter().zip(v).map(|(s, x)| (s - x) / (n - 1.0)).collect();
            spearman(v, &others)
        }),
        n,
    )?;
    let upper = mean_spearman(vecs.iter().map(|v| spearman(v, &all_mean)), n)?;
    Ok(NoiseCeiling { lower, upper })
}

/// One (representation, model) comparison with its statistics.
///
/// Fields that cannot be computed (too few defined rho values, zero variance,
/// an undefined ceiling) are `None` and serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub representation_name: String,
    pub model_name: String,
    pub per_instrument_rho: Vec<Option<f64>>,
    pub mean_rho: Option<f64>,
    pub sem: Option<f64>,
    pub t_vs_zero: Option<f64>,
    pub p_vs_zero: Option<f64>,
    pub sig_vs_zero: bool,
    pub noise_lower: Option<f64>,
    pub noise_upper: Option<f64>,
    pub t_vs_ceiling: Option<f64>,
    pub p_vs_ceiling: Option<f64>,
    pub sig_below_ceiling: bool,
    pub alpha: f64,
    pub n_comparisons: usize,
}

fn ttest_or_none(values: &[f64], mu: f64) -> Result<Option<super::TTest>, StatsError> {
    match one_sample_ttest(values, mu) {
        Ok(t) => Ok(Some(t)),
        Err(StatsError::Undefined(_)) | Err(StatsError::TooFew { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes every field of an [`RsaResult`] for one comparison treated as a
/// family of one; call [`apply_family_correction`] once the figure's results are known.
pub fn rsa_result(
    representation_name: &str,
    model_name: &str,
    instrument_rdms: &[Rdm],
    model_rdm: &Rdm,
    alpha: f64,
) -> Result<RsaResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let rho = compare_study(instrument_rdms, model_rdm)?;
    let defined: Vec<f64> = rho.iter().flatten().copied().collect();
    let ceiling = noise_ceiling(instrument_rdms)?;
    let mean_rho = (!defined.is_empty()).then(|| mean(&defined));
    let vs_zero = ttest_or_none(&defined, 0.0)?;
    let vs_ceiling = match ceiling.lower {
        Some(lower) => ttest_or_none(&defined, lower)?,
        None => None,
    };
    let mut result = RsaResult {
        representation_name: representation_name.to_string(),
        model_name: model_name.to_string(),
        per_instrument_rho: rho,
        mean_rho,
        sem: sem(&defined).ok(),
        t_vs_zero: vs_zero.map(|t| t.t),
        p_vs_zero: vs_zero.map(|t| t.p),
        sig_vs_zero: false,
        noise_lower: ceiling.lower,
        noise_upper: ceiling.upper,
        t_vs_ceiling: vs_ceiling.map(|t| t.t),
        p_vs_ceiling: vs_ceiling.map(|t| t.p),
        sig_below_ceiling: false,
        alpha,
        n_comparisons: 1,
    };
    apply_family_correction(std::slice::from_mut(&mut result), alpha)?;
    Ok(result)
}

/// Sets `n_comparisons` to the family size and recomputes both flags at `alpha / m`.
///
/// An undefined p-value is never significant. Below-ceiling additionally
/// requires the mean to sit under the lower bound.
pub fn apply_family_correction(results: &mut [RsaResult], alpha: f64) -> Result<(), StatsError> {
    let m = results.len();
    let p_zero: Vec<f64> = results.iter().map(|r| r.p_vs_zero.unwrap_or(1.0)).collect();
    let p_ceil: Vec<f64> = results.iter().map(|r| r.p_vs_ceiling.unwrap_or(1.0)).collect();
    let sig_zero = bonferroni(&p_zero, alpha)?;
    let sig_ceil = bonferroni(&p_ceil, alpha)?;
    for (i, r) in results.iter_mut().enumerate() {
        r.alpha = alpha;
        r.n_comparisons = m;
        r.sig_vs_zero = r.p_vs_zero.is_some() && sig_zero[i];
        let below = matches!((r.mean_rho, r.noise_lower), (Some(mu), Some(lo)) if mu < lo);
        r.sig_below_ceiling = r.p_vs_ceiling.is_some() && sig_ceil[i] && below;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_rdm, ModelKind};
    use proptest::prelude::*;

    fn notes() -> Vec<u16> {
        (60..72).collect()
    }

    fn reversed(r: &Rdm) -> Rdm {
        Rdm::from_fn(r.labels().to_vec(), |i, j| if i == j { 0.0 } else { 1.0 - r.get(i, j) }).unwrap()
    }

    fn from_upper(labels: Vec<u16>, upper: &[f64]) -> Rdm {
        let n = labels.len();
        let mut idx = vec![vec![0usize; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                idx[i][j] = k;
                idx[j][i] = k;
                k += 1;
            }
        }
        Rdm::from_fn(labels, |i, j| if i == j { 0.0 } else { upper[idx[i][j]] }).unwrap()
    }

    #[test]
    fn identical_rdms_correlate_perfectly() {
        let m = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let study = vec![m.clone(); 30];
        assert!(compare_study(&study, &m).unwrap().iter().all(|r| *r == Some(1.0)));
        let c = noise_ceiling(&study).unwrap();
        assert_eq!((c.lower, c.upper), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn reversed_rdms_anticorrelate() {
        let m = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let study = vec![reversed(&m); 30];
        assert!(compare_study(&study, &m).unwrap().iter().all(|r| (r.unwrap() + 1.0).abs() < 1e-15));
        let c = noise_ceiling(&[m.clone(), reversed(&m)]).unwrap();
        assert!((c.lower.unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(c.upper, None);
    }

    #[test]
    fn label_mismatch_is_an_error() {
        let a = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let b = model_rdm(&(61..73).collect::<Vec<_>>(), ModelKind::PitchHeight).unwrap();
        assert_eq!(compare_study(&[a.clone()], &b), Err(StatsError::LabelMismatch));
        assert_eq!(noise_ceiling(&[a, b]), Err(StatsError::LabelMismatch));
    }

    #[test]
    fn constant_rdm_gives_markers_not_numbers() {
        let m = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let flat = Rdm::from_fn(notes(), |i, j| if i == j { 0.0 } else { 0.5 }).unwrap();
        assert_eq!(compare_study(&[flat.clone(), m.clone()], &m).unwrap(), vec![None, Some(1.0)]);
        assert_eq!(noise_ceiling(&[flat.clone(), flat.clone()]).unwrap(), NoiseCeiling { lower: None, upper: None });
        let r = rsa_result("x", "pitch_height", &[flat.clone(), flat], &m, 0.01).unwrap();
        assert_eq!(r.mean_rho, None);
        assert_eq!(r.p_vs_zero, None);
        assert!(!r.sig_vs_zero && !r.sig_below_ceiling);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"p_vs_zero\":null"));
        assert!(!json.contains("inf") && !json.contains("NaN"));
    }

    #[test]
    fn family_correction_uses_figure_size() {
        let m = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let base = rsa_result("x", "pitch_height", &[m.clone(), m.clone()], &m, 0.01).unwrap();
        let mut family: Vec<RsaResult> = [0.004, 0.02, 0.0049, 0.5]
            .iter()
            .map(|&p| RsaResult { p_vs_zero: Some(p), ..base.clone() })
            .collect();
        apply_family_correction(&mut family, 0.01).unwrap();
        let flags: Vec<bool> = family.iter().map(|r| r.sig_vs_zero).collect();
        // threshold 0.0025
        assert_eq!(flags, vec![false, false, false, false]);
        family.truncate(2);
        apply_family_correction(&mut family, 0.01).unwrap();
        assert_eq!(family.iter().map(|r| r.sig_vs_zero).collect::<Vec<_>>(), vec![true, false]);
        assert!(family.iter().all(|r| r.n_comparisons == 2));
    }

    #[test]
    fn below_ceiling_needs_mean_under_lower_bound() {
        let m = model_rdm(&notes(), ModelKind::PitchHeight).unwrap();
        let base = rsa_result("x", "pitch_height", &[m.clone(), m.clone()], &m, 0.01).unwrap();
        let mut above = RsaResult {
            mean_rho: Some(0.9),
            noise_lower: Some(0.5),
            p_vs_ceiling: Some(1e-9),
            ..base.clone()
        };
        apply_family_correction(std::slice::from_mut(&mut above), 0.01).unwrap();
        assert!(!above.sig_below_ceiling);
        let mut below = RsaResult { mean_rho: Some(0.1), ..above };
        apply_family_correction(std::slice::from_mut(&mut below), 0.01).unwrap();
        assert!(below.sig_below_ceiling);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ceiling_lower_never_exceeds_upper(n_rdms in 2usize..8, n in 3usize..8, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<u16> = (0..n as u16).collect();
            let len = n * (n - 1) / 2;
            let study: Vec<Rdm> = (0..n_rdms)
                .map(|_| from_upper(labels.clone(), &(0..len).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
                .collect();
            if let NoiseCeiling { lower: Some(lo), upper: Some(hi) } = noise_ceiling(&study).unwrap() {
                prop_assert!(lo <= hi + 1e-12, "{} > {}", lo, hi);
            }
        }

        #[test]
        fn compare_study_is_relabeling_invariant(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 8;
            let labels: Vec<u16> = (0..n as u16).collect();
            let len = n * (n - 1) / 2;
            let study: Vec<Rdm> = (0..5)
                .map(|_| from_upper(labels.clone(), &(0..len).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
                .collect();
            let model = from_upper(labels.clone(), &(0..len).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permute = |r: &Rdm| Rdm::from_fn(labels.clone(), |i, j| r.get(perm[i], perm[j])).unwrap();
            let before = compare_study(&study, &model).unwrap();
            let after = compare_study(&study.iter().map(permute).collect::<Vec<_>>(), &permute(&model)).unwrap();
            for (a, b) in before.iter().zip(&after) {
                prop_assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
            }
        }
    }
}
