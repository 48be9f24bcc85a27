//! The study as five file-backed stages: synth, frontend, rdm, rsa, report.
//!
//! Each stage writes to `<out>/<stage>-<hash8>`, where the hash covers the stage's own
//! settings and the hash of the stage it reads from. A later stage looks for exactly the
//! directory its config implies, so outputs of different configs are never mixed.
//! Stages are written to a `.partial` directory and renamed when complete.

use crate::config::{hash_json, ConfigError, StudyConfig};
use crate::frontends::{FrontendError, FrontendParams, PreparedFrontend};
use crate::interchange::{read_embeddings, validate_study, write_embeddings, EmbeddingSet, InterchangeError, Study};
use crate::models::{model_rdm, ModelKind};
use crate::rdm::{average_rdms, compute_rdm, normalize_rdm, Rdm, RdmError};
use crate::report::{
    render_rdm_heatmap, render_rsa_bars, write_tables, FigureKind, FigureSpec, ReportDocument, ReportError,
};
use crate::stats::{apply_family_correction, rsa_result, RsaResult, StatsError};
use crate::stimulus::{build_bank, read_wav, write_bank, Manifest, SynthError, WavError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` has no output for this config (expected {path}); run `{stage}` first")]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Interchange(#[from] InterchangeError),
    #[error(transparent)]
    Rdm(#[from] RdmError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(ConfigError::Read { .. }) => 4,
            PipelineError::Config(_) => 2,
            PipelineError::MissingStage { .. } => 3,
            PipelineError::Io { .. }
            | PipelineError::Wav(WavError::Io(_))
            | PipelineError::Interchange(InterchangeError::Io(_))
            | PipelineError::Rdm(RdmError::Io(_))
            | PipelineError::Report(ReportError::Io(_)) => 4,
            _ => 5,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Frontend,
    Rdm,
    Rsa,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Frontend => "frontend",
            Stage::Rdm => "rdm",
            Stage::Rsa => "rsa",
            Stage::Report => "report",
        }
    }
}

/// Full stage hashes for a config. Each covers the settings the stage reads plus its input's hash.
#[derive(Debug, Clone, PartialEq)]
pub struct StageHashes {
    pub synth: String,
    pub frontend: String,
    pub rdm: String,
    pub rsa: String,
    pub report: String,
}

impl StageHashes {
    pub fn get(&self, stage: Stage) -> &str {
        match stage {
            Stage::Synth => &self.synth,
            Stage::Frontend => &self.frontend,
            Stage::Rdm => &self.rdm,
            Stage::Rsa => &self.rsa,
            Stage::Report => &self.report,
        }
    }
}

fn external_files(cfg: &StudyConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for dir in &cfg.embedding_dirs {
        let mut here: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_at(dir))?
            .map(|e| e.map(|e| e.path()).map_err(io_at(dir)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "aemb"))
            .collect();
        here.sort();
        if here.is_empty() {
            return Err(PipelineError::Data(format!("no .aemb files in {}", dir.display())));
        }
        files.extend(here);
    }
    Ok(files)
}

pub fn stage_hashes(cfg: &StudyConfig) -> Result<StageHashes> {
    let synth = hash_json(&("synth", &cfg.bank, cfg.seed()?));
    let fronts = cfg.frontend_params();
    let frontend = hash_json(&("frontend", &synth, &fronts));
    // external files enter by content, so a re-export invalidates downstream stages
    let mut external = Vec::new();
    for f in external_files(cfg)? {
        let bytes = fs::read(&f).map_err(io_at(&f))?;
        external.push(hash_json(&bytes));
    }
    let internal = (!fronts.is_empty()).then_some(&frontend);
    let rdm = hash_json(&("rdm", internal, &external));
    let rsa = hash_json(&("rsa", &rdm, &cfg.models, cfg.alpha));
    let report = hash_json(&("report", &rsa, &rdm));
    Ok(StageHashes {
        synth,
        frontend,
        rdm,
        rsa,
        report,
    })
}

pub fn stage_dir(cfg: &StudyConfig, hashes: &StageHashes, stage: Stage) -> PathBuf {
    cfg.out.join(format!("{}-{}", stage.name(), &hashes.get(stage)[..8]))
}

fn require(cfg: &StudyConfig, hashes: &StageHashes, stage: Stage) -> Result<PathBuf> {
    let dir = stage_dir(cfg, hashes, stage);
    if dir.join("stage.json").is_file() {
        Ok(dir)
    } else {
        Err(PipelineError::MissingStage {
            stage: stage.name(),
            path: dir,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StageRecord {
    stage: String,
    hash: String,
}

/// Runs `write` into a scratch directory and moves it into place once it succeeds.
fn write_stage(
    cfg: &StudyConfig,
    hashes: &StageHashes,
    stage: Stage,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<PathBuf> {
    let dir = stage_dir(cfg, hashes, stage);
    let name = dir.file_name().expect("stage dir has a name").to_string_lossy().into_owned();
    let scratch = cfg.out.join(format!(".{name}.partial"));
    if scratch.exists() {
        fs::remove_dir_all(&scratch).map_err(io_at(&scratch))?;
    }
    fs::create_dir_all(&scratch).map_err(io_at(&scratch))?;
    write(&scratch)?;
    let record = StageRecord {
        stage: stage.name().into(),
        hash: hashes.get(stage).into(),
    };
    write_text(&scratch.join("stage.json"), &to_json(&record))?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_at(&dir))?;
    }
    fs::rename(&scratch, &dir).map_err(io_at(&dir))?;
    log::info!("{} -> {}", stage.name(), dir.display());
    Ok(dir)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("stage records serialize");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(path, text).map_err(io_at(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn checked(cfg: &StudyConfig) -> Result<StageHashes> {
    cfg.validate()?;
    stage_hashes(cfg)
}

/// Builds the stimulus bank: `manifest.json` plus one WAV per note.
pub fn cmd_synth(cfg: &StudyConfig) -> Result<PathBuf> {
    let hashes = checked(cfg)?;
    let (manifest, entries) = build_bank(&cfg.bank, cfg.seed()?)?;
    write_stage(cfg, &hashes, Stage::Synth, |dir| Ok(write_bank(dir, &manifest, &entries)?))
}

/// Runs every configured front-end over the bank and writes `<kind>/<instrument>.aemb`.
pub fn cmd_frontend(cfg: &StudyConfig) -> Result<PathBuf> {
    let hashes = checked(cfg)?;
    let synth = require(cfg, &hashes, Stage::Synth)?;
    let manifest: Manifest = read_json(&synth.join("manifest.json"))?;
    let notes: Vec<(usize, &str, u16)> = manifest
        .instruments
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| inst.notes.iter().map(move |n| (i, n.path.as_str(), n.midi)))
        .collect();
    let audio = notes
        .par_iter()
        .map(|(_, path, _)| read_wav(&synth.join(path)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if let Some(a) = audio.iter().find(|a| a.sample_rate_hz() != cfg.bank.sample_rate_hz) {
        return Err(PipelineError::Data(format!("bank audio is {} Hz, config says {}", a.sample_rate_hz(), cfg.bank.sample_rate_hz)));
    }
    let fronts: Vec<FrontendParams> = cfg.frontend_params();
    write_stage(cfg, &hashes, Stage::Frontend, |dir| {
        for params in &fronts {
            let fe = PreparedFrontend::new(params, cfg.bank.sample_rate_hz)?;
            let rows = audio.par_iter().map(|a| fe.embed(a)).collect::<std::result::Result<Vec<_>, _>>()?;
            let rep = params.kind.name();
            for (i, inst) in manifest.instruments.iter().enumerate() {
                let (midis, inst_rows): (Vec<u16>, Vec<Vec<f64>>) = notes
                    .iter()
                    .zip(&rows)
                    .filter(|((k, _, _), _)| *k == i)
                    .map(|((_, _, m), r)| (*m, r.clone()))
                    .unzip();
                let set = EmbeddingSet::from_rows(rep, &inst.id, midis, &inst_rows)?;
                let path = dir.join(rep).join(format!("{}.aemb", inst.id));
                fs::create_dir_all(path.parent().expect("has parent")).map_err(io_at(dir))?;
                write_embeddings(&set, &path)?;
            }
            log::info!("{rep}: {} instruments embedded", manifest.instruments.len());
        }
        Ok(())
    })
}

/// Listing written by the rdm stage and read by everything after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmIndex {
    pub note_midis: Vec<u16>,
    pub representations: Vec<RepresentationEntry>,
    pub models: Vec<ModelKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationEntry {
    pub name: String,
    /// Directory under the rdm stage holding this representation's CSVs.
    pub dir: String,
    pub instruments: Vec<String>,
    /// False when the averaged RDM is constant and cannot be normalized for plotting.
    pub has_normalized_mean: bool,
}

/// Directory-safe form of a representation name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect()
}

fn read_dir_sets(dir: &Path) -> Result<Vec<EmbeddingSet>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_at(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_at(dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "aemb"))
        .collect();
    files.sort();
    files.iter().map(|f| Ok(read_embeddings(f)?)).collect()
}

fn gather_studies(cfg: &StudyConfig, hashes: &StageHashes) -> Result<Vec<Study>> {
    let mut groups: Vec<(String, Vec<EmbeddingSet>)> = Vec::new();
    let fronts = cfg.frontend_params();
    if !fronts.is_empty() {
        let fdir = require(cfg, hashes, Stage::Frontend)?;
        for p in &fronts {
            groups.push((p.kind.name().to_string(), read_dir_sets(&fdir.join(p.kind.name()))?));
        }
    }
    for f in external_files(cfg)? {
        let set = read_embeddings(&f)?;
        let name = set.representation_name();
        if fronts.iter().any(|p| p.kind.name() == name) {
            return Err(PipelineError::Data(format!(
                "{}: representation {name:?} clashes with a built-in front-end",
                f.display()
            )));
        }
        match groups.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => v.push(set),
            None => groups.push((name.to_string(), vec![set])),
        }
    }
    let studies = groups
        .into_iter()
        .map(|(_, sets)| validate_study(sets))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let notes = studies[0].note_midis();
    if let Some(s) = studies.iter().find(|s| s.note_midis() != notes) {
        return Err(PipelineError::Data(format!(
            "representation {:?} uses a different note set; all representations in a study must share the stimuli",
            s.representation_name()
        )));
    }
    let slugs: Vec<String> = studies.iter().map(|s| slug(s.representation_name())).collect();
    for (i, s) in slugs.iter().enumerate() {
        if slugs[..i].contains(s) || s == "models" {
            return Err(PipelineError::Data(format!("representation directory name {s:?} is ambiguous")));
        }
    }
    Ok(studies)
}

/// Per-instrument RDMs, their mean and its normalized form per representation, plus the model RDMs.
pub fn cmd_rdm(cfg: &StudyConfig) -> Result<PathBuf> {
    let hashes = checked(cfg)?;
    let studies = gather_studies(cfg, &hashes)?;
    let notes = studies[0].note_midis().to_vec();
    write_stage(cfg, &hashes, Stage::Rdm, |dir| {
        let mut reps = Vec::new();
        for study in &studies {
            let rep_dir = slug(study.representation_name());
            let rdms = study.sets().par_iter().map(compute_rdm).collect::<std::result::Result<Vec<_>, _>>()?;
            for (set, rdm) in study.sets().iter().zip(&rdms) {
                write_text(&dir.join(&rep_dir).join(format!("{}.csv", set.instrument_id())), &rdm.to_csv())?;
            }
            let mean = average_rdms(&rdms)?;
            write_text(&dir.join(&rep_dir).join("mean.csv"), &mean.to_csv())?;
            let has_normalized_mean = match normalize_rdm(&mean) {
                Ok(n) => {
                    write_text(&dir.join(&rep_dir).join("mean_normalized.csv"), &n.to_csv())?;
                    true
                }
                Err(RdmError::Degenerate) => {
                    log::warn!("{}: averaged RDM is constant, no heatmap", study.representation_name());
                    false
                }
                Err(e) => return Err(e.into()),
            };
            reps.push(RepresentationEntry {
                name: study.representation_name().to_string(),
                dir: rep_dir,
                instruments: study.instrument_ids().iter().map(|s| s.to_string()).collect(),
                has_normalized_mean,
            });
        }
        for &m in &cfg.models {
            write_text(&dir.join("models").join(format!("{}.csv", m.name())), &model_rdm(&notes, m)?.to_csv())?;
        }
        let index = RdmIndex {
            note_midis: notes.clone(),
            representations: reps,
            models: cfg.models.clone(),
        };
        write_text(&dir.join("index.json"), &to_json(&index))
    })
}

fn read_rdm(path: &Path) -> Result<Rdm> {
    if !path.is_file() {
        return Err(PipelineError::Data(format!("missing RDM file {}", path.display())));
    }
    Ok(Rdm::read_csv(path)?)
}

/// Compares every representation with every model; one Bonferroni family for all of them.
pub fn cmd_rsa(cfg: &StudyConfig) -> Result<PathBuf> {
    let hashes = checked(cfg)?;
    let rdm_dir = require(cfg, &hashes, Stage::Rdm)?;
    let index: RdmIndex = read_json(&rdm_dir.join("index.json"))?;
    let per_rep = index
        .representations
        .par_iter()
        .map(|rep| -> Result<Vec<RsaResult>> {
            let rdms = rep
                .instruments
                .iter()
                .map(|id| read_rdm(&rdm_dir.join(&rep.dir).join(format!("{id}.csv"))))
                .collect::<Result<Vec<_>>>()?;
            index
                .models
                .iter()
                .map(|m| {
                    let model = read_rdm(&rdm_dir.join("models").join(format!("{}.csv", m.name())))?;
                    Ok(rsa_result(&rep.name, m.name(), &rdms, &model, cfg.alpha)?)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results: Vec<RsaResult> = per_rep.into_iter().flatten().collect();
    apply_family_correction(&mut results, cfg.alpha)?;
    write_stage(cfg, &hashes, Stage::Rsa, |dir| Ok(write_tables(&results, &cfg.hash(), dir)?))
}

/// Heatmaps of each averaged RDM and each model, and the RSA bar chart.
pub fn cmd_report(cfg: &StudyConfig) -> Result<PathBuf> {
    let hashes = checked(cfg)?;
    let rsa_dir = require(cfg, &hashes, Stage::Rsa)?;
    let rdm_dir = require(cfg, &hashes, Stage::Rdm)?;
    let doc: ReportDocument = read_json(&rsa_dir.join("rsa_results.json"))?;
    let index: RdmIndex = read_json(&rdm_dir.join("index.json"))?;
    let config_hash = cfg.hash();
    write_stage(cfg, &hashes, Stage::Report, |dir| {
        let figs = dir.join("figures");
        for rep in index.representations.iter().filter(|r| r.has_normalized_mean) {
            let rdm = read_rdm(&rdm_dir.join(&rep.dir).join("mean_normalized.csv"))?;
            let spec = FigureSpec::new(
                FigureKind::RdmHeatmap,
                format!("{} (mean over {} instruments, normalized)", rep.name, rep.instruments.len()),
                vec![format!("{}/mean_normalized.csv", rep.dir)],
                &config_hash,
            );
            write_text(&figs.join(format!("rdm_{}.svg", rep.dir)), &render_rdm_heatmap(&rdm, &spec)?)?;
        }
        for m in &index.models {
            let rdm = read_rdm(&rdm_dir.join("models").join(format!("{}.csv", m.name())))?;
            let spec = FigureSpec::new(
                FigureKind::RdmHeatmap,
                format!("{} model", m.name()),
                vec![format!("models/{}.csv", m.name())],
                &config_hash,
            );
            write_text(&figs.join(format!("model_{}.svg", m.name())), &render_rdm_heatmap(&rdm, &spec)?)?;
        }
        let inputs = doc
            .results
            .iter()
            .map(|r| format!("{}/{}", r.representation_name, r.model_name))
            .collect();
        let spec = FigureSpec::new(FigureKind::RsaBars, "Model fit by representation", inputs, &config_hash);
        write_text(&figs.join("rsa_bars.svg"), &render_rsa_bars(&doc.results, &spec)?)
    })
}

/// Every stage's output directory, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub synth: Option<PathBuf>,
    pub frontend: Option<PathBuf>,
    pub rdm: PathBuf,
    pub rsa: PathBuf,
    pub report: PathBuf,
}

/// synth -> frontend -> rdm -> rsa -> report. Synthesis and front-ends are skipped
/// when the config lists no front-ends.
pub fn cmd_all(cfg: &StudyConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let internal = !cfg.frontend_params().is_empty();
    let synth = internal.then(|| cmd_synth(cfg)).transpose()?;
    let frontend = internal.then(|| cmd_frontend(cfg)).transpose()?;
    Ok(RunSummary {
        synth,
        frontend,
        rdm: cmd_rdm(cfg)?,
        rsa: cmd_rsa(cfg)?,
        report: cmd_report(cfg)?,
    })
}

/// Runs `f` on a rayon pool of `workers` threads (all logical CPUs when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == Some(0) {
        return Err(ConfigError::Invalid("workers must be at least 1".into()).into());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| PipelineError::Data(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
