use super::{format_opt, format_value, ReportError};
use crate::stats::RsaResult;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Bumped whenever the JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;

const COLUMNS: [&str; 15] = [
    "representation_name",
    "model_name",
    "per_instrument_rho",
    "mean_rho",
    "sem",
    "t_vs_zero",
    "p_vs_zero",
    "sig_vs_zero",
    "noise_lower",
    "noise_upper",
    "t_vs_ceiling",
    "p_vs_ceiling",
    "sig_below_ceiling",
    "alpha",
    "n_comparisons",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub config_hash: String,
    pub results: Vec<RsaResult>,
}

/// One row per result, fixed column order. `per_instrument_rho` is `;`-joined and
/// undefined values are empty.
pub fn results_csv(results: &[RsaResult]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in results {
        let rhos: Vec<String> = r.per_instrument_rho.iter().map(|v| format_opt(*v)).collect();
        w.write_record([
            r.representation_name.clone(),
            r.model_name.clone(),
            rhos.join(";"),
            format_opt(r.mean_rho),
            format_opt(r.sem),
            format_opt(r.t_vs_zero),
            format_opt(r.p_vs_zero),
            r.sig_vs_zero.to_string(),
            format_opt(r.noise_lower),
            format_opt(r.noise_upper),
            format_opt(r.t_vs_ceiling),
            format_opt(r.p_vs_ceiling),
            r.sig_below_ceiling.to_string(),
            format_value(r.alpha),
            r.n_comparisons.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn results_json(results: &[RsaResult], config_hash: &str) -> Result<String, ReportError> {
    let doc = ReportDocument {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        results: results.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// Writes `rsa_results.csv` and `rsa_results.json` into `dir`.
pub fn write_tables(results: &[RsaResult], config_hash: &str, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("rsa_results.csv"), results_csv(results)?)?;
    fs::write(dir.join("rsa_results.json"), results_json(results, config_hash)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(rep: &str, model: &str, mean: f64) -> RsaResult {
        RsaResult {
            representation_name: rep.into(),
            model_name: model.into(),
            per_instrument_rho: vec![Some(mean - 0.1), None, Some(mean + 0.1)],
            mean_rho: Some(mean),
            sem: Some(0.1),
            t_vs_zero: Some(3.0),
            p_vs_zero: Some(0.004),
            sig_vs_zero: true,
            noise_lower: Some(0.6),
            noise_upper: Some(0.7),
            t_vs_ceiling: None,
            p_vs_ceiling: None,
            sig_below_ceiling: false,
            alpha: 0.01,
            n_comparisons: 2,
        }
    }

    #[test]
    fn empty_results_give_header_only() {
        let csv = results_csv(&[]).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("representation_name,model_name,per_instrument_rho,mean_rho"));
    }

    #[test]
    fn one_row_per_result_with_quoting() {
        let rs = vec![sample("mel", "pitch_height", 0.5), sample("odd,\"name\"", "chroma_binary", 0.25)];
        let csv = results_csv(&rs).unwrap();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][0], "odd,\"name\"");
        assert_eq!(&rows[0][2], "0.4;;0.6");
        assert_eq!(&rows[0][3], "0.5");
        assert_eq!(&rows[0][10], "");
        assert_eq!(&rows[0][14], "2");
    }

    #[test]
    fn json_round_trips_and_marks_missing_as_null() {
        let rs = vec![sample("mel", "pitch_height", 0.5)];
        let text = results_json(&rs, "deadbeef").unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert!(text.contains("\"p_vs_ceiling\": null"));
        let back: ReportDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.results, rs);
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let rs = vec![sample("mel", "pitch_height", 0.5)];
        write_tables(&rs, "h", dir.path()).unwrap();
        let first = (fs::read(dir.path().join("rsa_results.csv")).unwrap(), fs::read(dir.path().join("rsa_results.json")).unwrap());
        write_tables(&rs, "h", dir.path()).unwrap();
        assert_eq!(first.0, fs::read(dir.path().join("rsa_results.csv")).unwrap());
        assert_eq!(first.1, fs::read(dir.path().join("rsa_results.json")).unwrap());
    }
}
