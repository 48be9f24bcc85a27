//! SVG figures and result tables.
//!
//! Figures never print a number that is missing from the tables: exact values only
//! appear in `<title>` tooltips, formatted by [`format_value`] exactly as in the CSV.

mod figures;
mod tables;

pub use figures::{render_rdm_heatmap, render_rsa_bars};
pub use tables::{results_csv, results_json, write_tables, ReportDocument, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("heatmap input must be normalized to [0, 1]")]
    NotNormalized,
    #[error("nothing to plot")]
    Empty,
    #[error("results do not form one comparison family: {0}")]
    MixedFamilies(String),
    #[error("invalid figure spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    RdmHeatmap,
    RsaBars,
}

/// Single-hue ramps; only one is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    Blues,
}

impl Palette {
    fn endpoints(self) -> ([f64; 3], [f64; 3]) {
        match self {
            Palette::Blues => ([247.0, 251.0, 255.0], [8.0, 48.0, 107.0]),
        }
    }

    /// Colour for `v` in [0, 1]: light at 0, dark at 1. Every channel is monotone in `v`.
    pub fn color(self, v: f64) -> String {
        let (light, dark) = self.endpoints();
        let v = v.clamp(0.0, 1.0);
        let c: Vec<u8> = (0..3).map(|i| (light[i] + (dark[i] - light[i]) * v).round() as u8).collect();
        format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub title: String,
    /// Names of the RDMs or results drawn; recorded in the metadata block.
    pub inputs: Vec<String>,
    pub palette: Palette,
    pub size_px: (u32, u32),
    /// Hash of the study config, recorded for provenance.
    pub config_hash: String,
}

impl FigureSpec {
    pub fn new(kind: FigureKind, title: impl Into<String>, inputs: Vec<String>, config_hash: impl Into<String>) -> Self {
        let size_px = match kind {
            FigureKind::RdmHeatmap => (560, 600),
            FigureKind::RsaBars => (720, 420),
        };
        Self {
            kind,
            title: title.into(),
            inputs,
            palette: Palette::Blues,
            size_px,
            config_hash: config_hash.into(),
        }
    }

    fn check(&self, kind: FigureKind) -> Result<(), ReportError> {
        if self.kind != kind {
            return Err(ReportError::InvalidSpec(format!("expected {kind:?}, got {:?}", self.kind)));
        }
        if self.size_px.0 < 200 || self.size_px.1 < 200 {
            return Err(ReportError::InvalidSpec(format!("size {:?} is too small", self.size_px)));
        }
        Ok(())
    }
}

/// The one number format shared by tables and figure tooltips.
pub fn format_value(v: f64) -> String {
    v.to_string()
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub(crate) fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}
