//! End-to-end run driven by one JSON configuration: ingest, opinion scoring,
//! per-epoch rasters, trends, mismatch, regressions, word frequencies,
//! renders, reports and a digest manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::affectmap::{aggregate_cells, mismatch, score_histogram, smooth, trend, Raster, ScoreDistribution, ScoredPoint, Smoothing};
use crate::geo::{BoundingBox, Grid, ZoningSet};
use crate::ingest::{dataset_stats, parse_opinion, parse_perception, parse_zoning, Channel, EpochSet, IngestReport, OpinionRecord, PerceptionRecord};
use crate::regress::{run_zone_element_regressions, RegressionReport, ReportFilter};
use crate::render::{export_geojson, render_ppm};
use crate::synth::{files, generate_scenario, write_scenario, ScenarioSpec};
use crate::textsent::{word_frequency, Lexicon, SentimentModel, StopwordSet, WordFrequencyReport};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "URBAN_AFFECT_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: err.to_string(),
        }
    }

    pub fn stage_name(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Stage { stage, .. } => stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub perception: PathBuf,
    pub opinion: PathBuf,
    pub zoning: PathBuf,
    pub lexicon: PathBuf,
    pub positive_corpus: PathBuf,
    pub negative_corpus: PathBuf,
    /// Built-in list when absent.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epochs {
    pub early: i32,
    pub late: i32,
}

impl Default for Epochs {
    fn default() -> Self {
        Self { early: 2016, late: 2022 }
    }
}

fn default_bbox() -> BoundingBox {
    BoundingBox::STUDY_REGION
}
fn default_cell_size() -> f64 {
    0.001
}
fn default_alpha() -> f64 {
    1.0
}
fn default_top_k() -> usize {
    50
}
fn default_scale() -> usize {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    #[serde(default = "default_bbox")]
    pub bbox: BoundingBox,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub epochs: Epochs,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub filter: ReportFilter,
    /// Additive smoothing for the text classifier.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_top_k")]
    pub top_k_words: usize,
    /// Pixels per cell edge in rendered images.
    #[serde(default = "default_scale")]
    pub render_scale: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Never affects outputs.
    #[serde(default)]
    pub workers: usize,
}

impl PipelineConfig {
    /// Read a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.perception,
            &mut i.opinion,
            &mut i.zoning,
            &mut i.lexicon,
            &mut i.positive_corpus,
            &mut i.negative_corpus,
        ] {
            fix(p);
        }
        if let Some(p) = i.stopwords.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Apply the output-directory environment override, if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.epochs.early == self.epochs.late {
            return bad(format!("epochs must differ, got {} twice", self.epochs.early));
        }
        for (name, v) in [("r_square_min", self.filter.r_square_min), ("sig_max", self.filter.sig_max)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("filter {name} = {v} must lie in (0, 1)"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if self.top_k_words == 0 {
            return bad("top_k_words must be at least 1".into());
        }
        if self.render_scale == 0 {
            return bad("render_scale must be at least 1".into());
        }
        self.smoothing.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, PipelineError> {
        Grid::new(self.bbox, self.cell_size).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn epoch_set(&self) -> EpochSet {
        EpochSet::of([self.epochs.early, self.epochs.late])
    }

    /// Digest over the analysis settings. Paths, output directory and worker
    /// count are left out; inputs are identified by content digests instead.
    pub fn digest(&self) -> String {
        let view = serde_json::json!({
            "bbox": self.bbox,
            "cell_size": self.cell_size,
            "epochs": self.epochs,
            "smoothing": self.smoothing,
            "filter": self.filter,
            "alpha": self.alpha,
            "top_k_words": self.top_k_words,
            "render_scale": self.render_scale,
            "seed": self.seed,
        });
        sha256_hex(view.to_string().as_bytes())
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn open(stage: &'static str, path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::stage(stage, format!("cannot open {}: {e}", path.display())))
}

fn read_text(stage: &'static str, path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::stage(stage, format!("cannot read {}: {e}", path.display())))
}

fn read_docs(stage: &'static str, path: &Path) -> Result<Vec<String>, PipelineError> {
    Ok(read_text(stage, path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn load_perception(cfg: &PipelineConfig) -> Result<(Vec<PerceptionRecord>, IngestReport), PipelineError> {
    let reader = open("perception", &cfg.inputs.perception)?;
    parse_perception(reader, &cfg.epoch_set()).map_err(|e| PipelineError::stage("perception", e))
}

pub fn load_opinion(cfg: &PipelineConfig) -> Result<(Vec<OpinionRecord>, IngestReport), PipelineError> {
    let reader = open("opinion", &cfg.inputs.opinion)?;
    parse_opinion(reader, &cfg.epoch_set()).map_err(|e| PipelineError::stage("opinion", e))
}

pub fn load_zoning(cfg: &PipelineConfig) -> Result<ZoningSet, PipelineError> {
    let text = read_text("zoning", &cfg.inputs.zoning)?;
    parse_zoning(&text).map_err(|e| PipelineError::stage("zoning", e))
}

pub fn load_lexicon(cfg: &PipelineConfig) -> Result<Lexicon, PipelineError> {
    Lexicon::from_reader(open("lexicon", &cfg.inputs.lexicon)?).map_err(|e| PipelineError::stage("lexicon", e))
}

pub fn load_stopwords(cfg: &PipelineConfig) -> Result<StopwordSet, PipelineError> {
    match &cfg.inputs.stopwords {
        None => Ok(StopwordSet::default_set()),
        Some(p) => StopwordSet::from_reader(open("stopwords", p)?).map_err(|e| PipelineError::stage("stopwords", e)),
    }
}

pub fn train_model(cfg: &PipelineConfig, lexicon: &Lexicon) -> Result<SentimentModel, PipelineError> {
    let pos = read_docs("sentiment corpus", &cfg.inputs.positive_corpus)?;
    let neg = read_docs("sentiment corpus", &cfg.inputs.negative_corpus)?;
    SentimentModel::train(&pos, &neg, cfg.alpha, lexicon).map_err(|e| PipelineError::stage("sentiment corpus", e))
}

/// Fill missing opinion scores with `10 · P(positive | text)`.
pub fn score_opinions(records: &mut [OpinionRecord], model: &SentimentModel, lexicon: &Lexicon) {
    records.par_iter_mut().for_each(|r| {
        if r.score.is_none() {
            r.score = Some((10.0 * model.score_text(&r.text, lexicon)).clamp(0.0, 10.0));
        }
    });
}

fn perception_points(records: &[PerceptionRecord], epoch: i32) -> Vec<ScoredPoint> {
    records
        .iter()
        .filter(|r| r.epoch == epoch)
        .map(|r| ScoredPoint {
            id: r.id.clone(),
            point: r.point,
            score: r.score,
        })
        .collect()
}

fn opinion_points(records: &[OpinionRecord], epoch: i32) -> Vec<ScoredPoint> {
    records
        .iter()
        .filter(|r| r.epoch == epoch)
        .filter_map(|r| {
            r.score.map(|score| ScoredPoint {
                id: r.id.clone(),
                point: r.point,
                score,
            })
        })
        .collect()
}

/// Score rasters in the order perception early, perception late, opinion
/// early, opinion late.
pub fn score_rasters(
    cfg: &PipelineConfig,
    perception: &[PerceptionRecord],
    opinion: &[OpinionRecord],
) -> Result<[Raster; 4], PipelineError> {
    let grid = cfg.grid()?;
    let Epochs { early, late } = cfg.epochs;
    let jobs = [
        (Channel::Perception, early, perception_points(perception, early)),
        (Channel::Perception, late, perception_points(perception, late)),
        (Channel::Opinion, early, opinion_points(opinion, early)),
        (Channel::Opinion, late, opinion_points(opinion, late)),
    ];
    let mut out = Vec::with_capacity(4);
    for (channel, epoch, points) in jobs {
        let (raster, _) =
            aggregate_cells(&grid, &points, channel, epoch).map_err(|e| PipelineError::stage("aggregate", e))?;
        out.push(smooth(&raster, cfg.smoothing).map_err(|e| PipelineError::stage("aggregate", e))?);
    }
    Ok(out.try_into().expect("four rasters"))
}

/// Distributions keyed `"<channel>_<epoch>"`.
pub fn score_distributions(
    cfg: &PipelineConfig,
    perception: &[PerceptionRecord],
    opinion: &[OpinionRecord],
) -> Result<BTreeMap<String, ScoreDistribution>, PipelineError> {
    let mut out = BTreeMap::new();
    for epoch in [cfg.epochs.early, cfg.epochs.late] {
        let p: Vec<f64> = perception.iter().filter(|r| r.epoch == epoch).map(|r| r.score).collect();
        let o: Vec<f64> = opinion.iter().filter(|r| r.epoch == epoch).filter_map(|r| r.score).collect();
        for (channel, scores) in [(Channel::Perception, p), (Channel::Opinion, o)] {
            let d = score_histogram(&scores).map_err(|e| PipelineError::stage("distribution", e))?;
            out.insert(format!("{channel}_{epoch}"), d);
        }
    }
    Ok(out)
}

pub fn word_frequencies(
    cfg: &PipelineConfig,
    opinion: &[OpinionRecord],
    lexicon: &Lexicon,
    stopwords: &StopwordSet,
) -> Result<Vec<(i32, WordFrequencyReport)>, PipelineError> {
    [cfg.epochs.early, cfg.epochs.late]
        .into_iter()
        .map(|epoch| {
            let docs: Vec<&str> = opinion.iter().filter(|r| r.epoch == epoch).map(|r| r.text.as_str()).collect();
            word_frequency(&docs, stopwords, cfg.top_k_words, lexicon)
                .map(|rep| (epoch, rep))
                .map_err(|e| PipelineError::stage("wordfreq", e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    /// Digest of the manifest's own canonical JSON.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("serializable"))
    }
}

/// Collects output files and their digests.
pub struct OutputWriter {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputWriter {
    pub fn create(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::stage("output", format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::stage("output", format!("{}: {e}", path.display())))?;
        self.written.push(FileDigest {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::stage("output", e))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// CSV, JSON sidecar and PPM for one raster.
    pub fn write_raster(&mut self, raster: &Raster, scale: usize) -> Result<(), PipelineError> {
        let stem = raster.kind.stem();
        let mut csv = Vec::new();
        raster.write_csv(&mut csv).map_err(|e| PipelineError::stage("output", e))?;
        self.write(&format!("{stem}.csv"), &csv)?;
        let mut side = Vec::new();
        raster.write_sidecar(&mut side).map_err(|e| PipelineError::stage("output", e))?;
        self.write(&format!("{stem}.json"), &side)?;
        let ppm = render_ppm(raster, scale).map_err(|e| PipelineError::stage("render", e))?;
        self.write(&format!("{stem}.ppm"), &ppm)?;
        Ok(())
    }

    pub fn written(&self) -> &[FileDigest] {
        &self.written
    }

    /// Write `manifest.json` listing every file written so far.
    pub fn finish(mut self, cfg: &PipelineConfig, inputs: BTreeMap<String, FileDigest>) -> Result<Manifest, PipelineError> {
        let mut outputs = std::mem::take(&mut self.written);
        outputs.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = Manifest {
            tool: "urban-affect".to_string(),
            version: crate::VERSION.to_string(),
            config_digest: cfg.digest(),
            inputs,
            outputs,
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

/// Content digests of every configured input file, keyed by role.
pub fn input_digests(cfg: &PipelineConfig) -> Result<BTreeMap<String, FileDigest>, PipelineError> {
    let i = &cfg.inputs;
    let mut list: Vec<(&str, &PathBuf)> = vec![
        ("perception", &i.perception),
        ("opinion", &i.opinion),
        ("zoning", &i.zoning),
        ("lexicon", &i.lexicon),
        ("positive_corpus", &i.positive_corpus),
        ("negative_corpus", &i.negative_corpus),
    ];
    if let Some(p) = &i.stopwords {
        list.push(("stopwords", p));
    }
    let mut out = BTreeMap::new();
    for (name, path) in list {
        let bytes = fs::read(path).map_err(|e| PipelineError::stage("manifest", format!("{}: {e}", path.display())))?;
        out.insert(
            name.to_string(),
            FileDigest {
                file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
    }
    Ok(out)
}

/// In-memory results of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub scores: [Raster; 4],
    pub trend_perception: Raster,
    pub trend_opinion: Raster,
    pub mismatch: Raster,
    pub regression: RegressionReport,
    pub manifest: Manifest,
}

#[derive(Debug, Serialize)]
struct IngestSummary<'a> {
    perception: &'a IngestReport,
    opinion: &'a IngestReport,
    perception_grid: IngestReport,
    opinion_grid: IngestReport,
}

/// Execute every stage and write the artifact set into `cfg.output_dir`.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    cfg.thread_pool()?.install(|| run_stages(cfg))
}

fn run_stages(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let grid = cfg.grid()?;
    let zoning = load_zoning(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let stopwords = load_stopwords(cfg)?;
    let model = train_model(cfg, &lexicon)?;
    let (perception, p_report) = load_perception(cfg)?;
    let (mut opinion, o_report) = load_opinion(cfg)?;
    let inputs = input_digests(cfg)?;
    score_opinions(&mut opinion, &model, &lexicon);

    let scores = score_rasters(cfg, &perception, &opinion)?;
    let trend_perception = trend(&scores[1], &scores[0]).map_err(|e| PipelineError::stage("trend", e))?;
    let trend_opinion = trend(&scores[3], &scores[2]).map_err(|e| PipelineError::stage("trend", e))?;
    let mismatch = mismatch(&trend_perception, &trend_opinion).map_err(|e| PipelineError::stage("mismatch", e))?;
    let regression = run_zone_element_regressions(&perception, &zoning, &[cfg.epochs.early, cfg.epochs.late], cfg.filter);
    let words = word_frequencies(cfg, &opinion, &lexicon, &stopwords)?;
    let distributions = score_distributions(cfg, &perception, &opinion)?;

    let mut out = OutputWriter::create(&cfg.output_dir)?;
    for r in scores.iter().chain([&trend_perception, &trend_opinion, &mismatch]) {
        out.write_raster(r, cfg.render_scale)?;
    }
    out.write_json("mismatch.geojson", &export_geojson(&mismatch))?;
    let mut csv = Vec::new();
    regression.write_csv(&mut csv).map_err(|e| PipelineError::stage("regress", e))?;
    out.write("regression.csv", &csv)?;
    out.write_json("regression_skipped.json", &regression.skipped)?;
    for (epoch, rep) in &words {
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).map_err(|e| PipelineError::stage("wordfreq", e))?;
        out.write(&format!("wordfreq_{epoch}.csv"), &csv)?;
    }
    out.write_json("distributions.json", &distributions)?;
    out.write_json(
        "ingest_report.json",
        &IngestSummary {
            perception: &p_report,
            opinion: &o_report,
            perception_grid: dataset_stats(&perception, &grid, Channel::Perception),
            opinion_grid: dataset_stats(&opinion, &grid, Channel::Opinion),
        },
    )?;
    let manifest = out.finish(cfg, inputs)?;

    Ok(RunOutput {
        output_dir: cfg.output_dir.clone(),
        scores,
        trend_perception,
        trend_opinion,
        mismatch,
        regression,
        manifest,
    })
}

pub const CONFIG_FILE: &str = "config.json";

/// Generate a scenario into `dir` together with a ready-to-run `config.json`
/// (relative paths, output under `dir/out`). Returns the config path.
pub fn write_synth_fixture(spec: &ScenarioSpec, dir: &Path) -> Result<PathBuf, PipelineError> {
    let scenario = generate_scenario(spec).map_err(|e| PipelineError::stage("synth", e))?;
    write_scenario(&scenario, dir).map_err(|e| PipelineError::stage("synth", e))?;
    let cfg = PipelineConfig {
        inputs: InputPaths {
            perception: files::PERCEPTION.into(),
            opinion: files::OPINION.into(),
            zoning: files::ZONING.into(),
            lexicon: files::LEXICON.into(),
            positive_corpus: files::POSITIVE.into(),
            negative_corpus: files::NEGATIVE.into(),
            stopwords: Some(files::STOPWORDS.into()),
        },
        bbox: spec.bbox,
        cell_size: spec.cell_size,
        epochs: Epochs {
            early: spec.epochs[0],
            late: spec.epochs[1],
        },
        smoothing: Smoothing::None,
        filter: ReportFilter::default(),
        alpha: default_alpha(),
        top_k_words: default_top_k(),
        render_scale: default_scale(),
        output_dir: default_output_dir(),
        seed: spec.seed,
        workers: 0,
    };
    let path = dir.join(CONFIG_FILE);
    let mut bytes = serde_json::to_vec_pretty(&cfg).map_err(|e| PipelineError::stage("synth", e))?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| PipelineError::stage("synth", format!("{}: {e}", path.display())))?;
    Ok(path)
}
