use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use urban_affect::affectmap::{mismatch, trend, Raster};
use urban_affect::ingest::{dataset_stats, Channel, OpinionRecord, PerceptionRecord};
use urban_affect::pipeline::{
    input_digests, load_lexicon, load_opinion, load_perception, load_zoning, run, score_opinions, score_rasters,
    train_model, word_frequencies, write_synth_fixture, OutputWriter, PipelineConfig, PipelineError,
};
use urban_affect::regress::run_zone_element_regressions;
use urban_affect::render::{export_geojson, render_ppm};
use urban_affect::synth::ScenarioSpec;

#[derive(Parser)]
#[command(name = "urban-affect", version = urban_affect::VERSION, about = "Perception and opinion affect mapping pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; beats both the config and the environment.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: every raster, report, render and the manifest.
    Run(Common),
    /// Ingest both record files and print their reports as JSON.
    IngestStats(Common),
    /// Score texts (one per line, from --text or stdin) with the trained classifier.
    ScoreText {
        #[command(flatten)]
        common: Common,
        /// Text to score; repeatable. Reads stdin when absent.
        #[arg(long)]
        text: Vec<String>,
    },
    /// Per-epoch score rasters for both channels.
    Aggregate(Common),
    /// Perception and opinion trend rasters.
    Trend(Common),
    /// Mismatch raster and its GeoJSON export.
    Mismatch(Common),
    /// Zone by element cubic regressions.
    Regress(Common),
    /// Top word frequencies per epoch.
    Wordfreq(Common),
    /// Render a raster CSV (with its JSON sidecar) to PPM.
    Render {
        /// Raster CSV; the sidecar is the same path with a .json extension.
        #[arg(long)]
        raster: PathBuf,
        /// Pixels per cell edge.
        #[arg(long, default_value_t = 4)]
        scale: usize,
        /// Output image; defaults to the raster path with a .ppm extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic scenario and a ready-to-run config.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Make opinion trends follow perception trends exactly.
        #[arg(long)]
        zero_divergence: bool,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    cfg.apply_env();
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

/// Run `f` inside the configured worker pool.
fn with_pool<T>(cfg: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    cfg.thread_pool()?.install(f)
}

fn scored_records(cfg: &PipelineConfig) -> Result<(Vec<PerceptionRecord>, Vec<OpinionRecord>), PipelineError> {
    let lexicon = load_lexicon(cfg)?;
    let model = train_model(cfg, &lexicon)?;
    let (perception, _) = load_perception(cfg)?;
    let (mut opinion, _) = load_opinion(cfg)?;
    score_opinions(&mut opinion, &model, &lexicon);
    Ok((perception, opinion))
}

fn trends(cfg: &PipelineConfig) -> Result<(Raster, Raster), PipelineError> {
    let (perception, opinion) = scored_records(cfg)?;
    let s = score_rasters(cfg, &perception, &opinion)?;
    let tp = trend(&s[1], &s[0]).map_err(|e| PipelineError::stage("trend", e))?;
    let to = trend(&s[3], &s[2]).map_err(|e| PipelineError::stage("trend", e))?;
    Ok((tp, to))
}

fn finish(cfg: &PipelineConfig, out: OutputWriter) -> Result<()> {
    let dir = out.dir().to_path_buf();
    out.finish(cfg, input_digests(cfg)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let out = run(&cfg)?;
            println!(
                "wrote {} files to {} (manifest {})",
                out.manifest.outputs.len() + 1,
                out.output_dir.display(),
                &out.manifest.digest()[..16]
            );
        }
        Command::IngestStats(common) => {
            let cfg = load_config(&common)?;
            let grid = cfg.grid()?;
            let (p, o) = with_pool(&cfg, || {
                let (p, p_rep) = load_perception(&cfg)?;
                let (o, o_rep) = load_opinion(&cfg)?;
                Ok(((p_rep, dataset_stats(&p, &grid, Channel::Perception)), (o_rep, dataset_stats(&o, &grid, Channel::Opinion))))
            })?;
            print_json(&serde_json::json!({
                "perception": p.0,
                "opinion": o.0,
                "perception_grid": p.1,
                "opinion_grid": o.1,
            }))?;
        }
        Command::ScoreText { common, text } => {
            let cfg = load_config(&common)?;
            let lexicon = load_lexicon(&cfg)?;
            let model = train_model(&cfg, &lexicon)?;
            let texts = if text.is_empty() {
                io::stdin().lock().lines().collect::<io::Result<Vec<_>>>().context("score-text: reading stdin")?
            } else {
                text
            };
            let mut stdout = io::stdout().lock();
            for t in texts {
                writeln!(stdout, "{:.6}\t{t}", 10.0 * model.score_text(&t, &lexicon))?;
            }
        }
        Command::Aggregate(common) => {
            let cfg = load_config(&common)?;
            with_pool(&cfg, || {
                let (perception, opinion) = scored_records(&cfg)?;
                let mut out = OutputWriter::create(&cfg.output_dir)?;
                for r in &score_rasters(&cfg, &perception, &opinion)? {
                    out.write_raster(r, cfg.render_scale)?;
                }
                finish(&cfg, out)
            })?;
        }
        Command::Trend(common) => {
            let cfg = load_config(&common)?;
            with_pool(&cfg, || {
                let (tp, to) = trends(&cfg)?;
                let mut out = OutputWriter::create(&cfg.output_dir)?;
                out.write_raster(&tp, cfg.render_scale)?;
                out.write_raster(&to, cfg.render_scale)?;
                finish(&cfg, out)
            })?;
        }
        Command::Mismatch(common) => {
            let cfg = load_config(&common)?;
            with_pool(&cfg, || {
                let (tp, to) = trends(&cfg)?;
                let m = mismatch(&tp, &to).map_err(|e| PipelineError::stage("mismatch", e))?;
                let mut out = OutputWriter::create(&cfg.output_dir)?;
                out.write_raster(&m, cfg.render_scale)?;
                out.write_json("mismatch.geojson", &export_geojson(&m))?;
                finish(&cfg, out)
            })?;
        }
        Command::Regress(common) => {
            let cfg = load_config(&common)?;
            with_pool(&cfg, || {
                let zoning = load_zoning(&cfg)?;
                let (perception, _) = load_perception(&cfg)?;
                let report =
                    run_zone_element_regressions(&perception, &zoning, &[cfg.epochs.early, cfg.epochs.late], cfg.filter);
                let mut csv = Vec::new();
                report.write_csv(&mut csv).map_err(|e| PipelineError::stage("regress", e))?;
                let mut out = OutputWriter::create(&cfg.output_dir)?;
                out.write("regression.csv", &csv)?;
                out.write_json("regression_skipped.json", &report.skipped)?;
                for row in report.reported() {
                    println!(
                        "{} {} {}: r2={:.3} F={:.3} sig={}",
                        row.epoch,
                        row.zone,
                        row.element,
                        row.fit.r_square,
                        row.fit.f_stat,
                        row.fit.sig_display()
                    );
                }
                finish(&cfg, out)
            })?;
        }
        Command::Wordfreq(common) => {
            let cfg = load_config(&common)?;
            with_pool(&cfg, || {
                let lexicon = load_lexicon(&cfg)?;
                let stopwords = urban_affect::pipeline::load_stopwords(&cfg)?;
                let (opinion, _) = load_opinion(&cfg)?;
                let mut out = OutputWriter::create(&cfg.output_dir)?;
                for (epoch, rep) in word_frequencies(&cfg, &opinion, &lexicon, &stopwords)? {
                    let mut csv = Vec::new();
                    rep.write_csv(&mut csv).map_err(|e| PipelineError::stage("wordfreq", e))?;
                    out.write(&format!("wordfreq_{epoch}.csv"), &csv)?;
                }
                finish(&cfg, out)
            })?;
        }
        Command::Render { raster, scale, out } => {
            if scale == 0 {
                bail!("render: scale must be at least 1");
            }
            let sidecar = sibling(&raster, "json");
            let open = |p: &Path| File::open(p).map(BufReader::new).with_context(|| format!("render: cannot open {}", p.display()));
            let r = Raster::read(open(&raster)?, open(&sidecar)?).with_context(|| format!("render: {}", raster.display()))?;
            let bytes = render_ppm(&r, scale).context("render")?;
            let target = out.unwrap_or_else(|| sibling(&raster, "ppm"));
            std::fs::write(&target, bytes).with_context(|| format!("render: cannot write {}", target.display()))?;
            println!("wrote {}", target.display());
        }
        Command::Synth {
            out_dir,
            seed,
            zero_divergence,
        } => {
            let mut spec = ScenarioSpec::standard(seed);
            if zero_divergence {
                spec = spec.zero_divergence();
            }
            let cfg = write_synth_fixture(&spec, &out_dir)?;
            println!("wrote scenario; config at {}", cfg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
