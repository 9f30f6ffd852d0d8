//! Command-line front end. `main` forwards to [`run`], which returns the
//! process exit status: 0 on success, 1 on validation errors, 2 on I/O and
//! client failures.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{PipelineConfig, SmoothingMode};
use crate::error::{Result, VadError};
use crate::events::{
    build_instruction_set, derive_seed, export_jsonl, generate_event_proposals, generate_normal_proposals,
    mean_assistant_words, ClientConfig, ClientMode, FilterRules, PromptTemplatePool,
};
use crate::io::{
    read_annotations, read_feature_stream, read_json_lines, read_scores, read_truth, write_json_lines, write_scores,
};
use crate::metrics::evaluate_scores;
use crate::pseudo_label::update_pseudo_labels;
use crate::sampler::{sample_for_downstream, SampledFrames};
use crate::scorer::{fit, gradient_check, load_checkpoint, save_checkpoint, score, TrainingVideo};
use crate::synth::{desk_config, gen_corpus, run_experiment, ExperimentName, SynthSpec};
use crate::types::{ClassLabel, EventProposal, FeatureStream, GlanceSet, InstructionRecord, ScoreSeries};

#[derive(Debug, Parser)]
#[command(name = "vadkit", version, about = "Glance-supervised video anomaly detection toolkit")]
struct Cli {
    /// TOML or JSON pipeline configuration; flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Log filter (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, visible_alias = "r")]
    smoothing_ratio: Option<f64>,
    /// Interpret the smoothing ratio in snippets instead of a fraction of T.
    #[arg(long)]
    absolute_smoothing: bool,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, annotations, ground truth, split).
    Synth {
        /// JSON corpus specification; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a scorer on feature files and glance annotations.
    Train {
        /// Feature file or directory of `.hvf` files.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// `split.json` restricting training to its `train` list.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Per-epoch loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score feature files with a trained checkpoint.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `split.json` restricting scoring to one subset.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        subset: String,
    },
    /// Mine pseudo-anomalous snippets around glances and write smoothed labels.
    MineLabels {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Smoothed labels, in the score CSV layout.
        #[arg(long)]
        out: PathBuf,
        /// Mined snippet indices per video (JSON lines).
        #[arg(long)]
        mined: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Select snippets for downstream analysis.
    Sample {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        /// Fallback frame count when nothing clears the threshold.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        max_frames: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate event proposals around glances and in normal videos.
    Propose {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Caption proposals and build instruction records.
    BuildInstructions {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Generation endpoint; HOLMES_ENDPOINT is used when absent.
        #[arg(long)]
        endpoint: Option<String>,
        /// Offline deterministic client.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        out: PathBuf,
        /// Prompt template pool (JSON); the bundled pool otherwise.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        #[arg(long, default_value_t = 2)]
        retries: u32,
        #[arg(long, default_value_t = 256)]
        max_tokens: u32,
        #[arg(long)]
        model_name: Option<String>,
    },
    /// Frame-level AUC/AP of a score file against ground truth.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// ROC/PR point CSV; defaults to `<report>.curves.csv`.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Run a synthetic experiment design.
    Experiment {
        #[arg(long, value_parser = ["supervision-ablation", "glance-shift", "sampler-compare"])]
        name: String,
        #[arg(long)]
        report: PathBuf,
        /// JSON corpus specification; the design's default otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare analytic and finite-difference gradients.
    GradientCheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Corpus statistics.
    Stats {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => return report_parse_error(e),
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn report_parse_error(e: clap::Error) -> i32 {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            0
        }
        ErrorKind::UnknownArgument => {
            let flag = match e.get(ContextKind::InvalidArg) {
                Some(ContextValue::String(s)) => s.clone(),
                _ => "?".into(),
            };
            eprintln!("error[UnknownArgument]: unexpected argument '{flag}'");
            1
        }
        _ => {
            let _ = e.print();
            1
        }
    }
}

fn resolve_config(path: Option<&Path>, base: PipelineConfig, overrides: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => base,
    };
    let o = overrides;
    if let Some(v) = o.seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.smoothing_ratio {
        cfg.smoothing_ratio = v;
    }
    if o.absolute_smoothing {
        cfg.smoothing_mode = SmoothingMode::Absolute;
    }
    if let Some(v) = o.theta {
        cfg.theta = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config(cli: &Cli, overrides: &Overrides) -> Result<PipelineConfig> {
    resolve_config(cli.config.as_deref(), PipelineConfig::default(), overrides)
}

/// Every JSON report carries the resolved configuration hash and seed.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn write_report<T: Serialize>(path: &Path, cfg: &PipelineConfig, body: &T) -> Result<()> {
    let report = Report {
        config_hash: cfg.hash(),
        seed: cfg.rng_seed,
        body,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| VadError::InvalidValue(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| VadError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| VadError::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// A single `.hvf` file or every `.hvf` file of a directory, by file name.
fn load_streams(path: &Path) -> Result<Vec<FeatureStream>> {
    if path.is_file() {
        return Ok(vec![read_feature_stream(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| VadError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hvf"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(VadError::InvalidValue(format!("no .hvf files in {}", path.display())));
    }
    files.iter().map(|p| read_feature_stream(p)).collect()
}

fn filter_split(streams: Vec<FeatureStream>, split: Option<&Path>, subset: &str) -> Result<Vec<FeatureStream>> {
    let Some(path) = split else {
        return Ok(streams);
    };
    let text = std::fs::read_to_string(path).map_err(|e| VadError::io(path, e))?;
    let lists: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| VadError::schema(1, format!("split file: {e}")))?;
    let keep = lists
        .get(subset)
        .ok_or_else(|| VadError::InvalidValue(format!("split file lacks a {subset:?} list")))?;
    Ok(streams.into_iter().filter(|s| keep.contains(&s.video_id)).collect())
}

fn annotations_by_id(path: &Path) -> Result<HashMap<String, GlanceSet>> {
    Ok(read_annotations(path)?
        .into_iter()
        .map(|g| (g.video_id.clone(), g))
        .collect())
}

fn glances_for(id: &str, class: &ClassLabel, annotations: &HashMap<String, GlanceSet>) -> Result<GlanceSet> {
    match annotations.get(id) {
        Some(g) => Ok(g.clone()),
        None if class.is_normal() => Ok(GlanceSet::normal(id)),
        None => Err(VadError::InvalidValue(format!("abnormal video {id} has no annotation"))),
    }
}

#[derive(Serialize)]
struct MinedLabels {
    video_id: String,
    mined: Vec<usize>,
}

#[derive(Serialize)]
struct ClassCount {
    videos: usize,
    glances: usize,
}

#[derive(Serialize)]
struct AnnotationStats {
    videos: usize,
    abnormal_videos: usize,
    glances: usize,
    glances_per_abnormal_video: f64,
    glances_per_video: f64,
    classes: BTreeMap<String, ClassCount>,
}

#[derive(Serialize)]
struct InstructionStats {
    records: usize,
    filtered: usize,
    mean_assistant_words: f64,
}

#[derive(Serialize, Default)]
struct Stats {
    #[serde(skip_serializing_if = "Option::is_none")]
    annotations: Option<AnnotationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instructions: Option<InstructionStats>,
}

fn proposals_for(
    scores: &[ScoreSeries],
    annotations: &HashMap<String, GlanceSet>,
    cfg: &PipelineConfig,
) -> Result<Vec<EventProposal>> {
    let p = &cfg.proposals;
    let mut out = Vec::new();
    for s in scores {
        let glances = annotations
            .get(&s.video_id)
            .ok_or_else(|| VadError::InvalidValue(format!("no annotation for {}", s.video_id)))?;
        if glances.glances.is_empty() {
            out.extend(generate_normal_proposals(
                &s.video_id,
                s.len(),
                p.normal_count,
                (p.normal_min_len, p.normal_max_len),
                derive_seed(cfg.rng_seed, &s.video_id),
            )?);
        } else {
            out.extend(generate_event_proposals(s, glances, p)?);
        }
    }
    Ok(out)
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec, out, seed } => {
            let mut spec = match spec {
                Some(p) => SynthSpec::load(p)?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.rng_seed = *s;
            }
            let corpus = gen_corpus(&spec)?;
            corpus.write_to(out)?;
            println!("wrote {} videos to {}", corpus.videos.len(), out.display());
        }
        Command::Train {
            features,
            annotations,
            out,
            split,
            log,
            overrides,
        } => {
            let cfg = config(cli, overrides)?;
            let streams = filter_split(load_streams(features)?, split.as_deref(), "train")?;
            let annotations = annotations_by_id(annotations)?;
            let dataset = streams
                .into_iter()
                .map(|stream| {
                    let glances = glances_for(&stream.video_id, &stream.anomaly_class, &annotations)?;
                    Ok(TrainingVideo { stream, glances })
                })
                .collect::<Result<Vec<_>>>()?;
            let (model, training_log) = fit(&dataset, &cfg)?;
            save_checkpoint(&model, &cfg.hash(), out)?;
            if let Some(path) = log {
                write_text(path, &training_log.to_csv())?;
            }
            let last = training_log.epochs.last().map(|e| e.loss.total).unwrap_or(f64::NAN);
            println!("trained on {} videos, final loss {last:.6}, config {}", dataset.len(), cfg.hash());
        }
        Command::Score {
            model,
            features,
            out,
            split,
            subset,
        } => {
            let (model, _) = load_checkpoint(model)?;
            let streams = filter_split(load_streams(features)?, split.as_deref(), subset)?;
            let series = streams.iter().map(|s| score(&model, s)).collect::<Result<Vec<_>>>()?;
            write_scores(&series, out)?;
            println!("scored {} videos", series.len());
        }
        Command::MineLabels {
            scores,
            annotations,
            out,
            mined,
            overrides,
        } => {
            let cfg = config(cli, overrides)?;
            let annotations = annotations_by_id(annotations)?;
            let mut rows = Vec::new();
            let mut series = Vec::new();
            for s in read_scores(scores)? {
                let Some(glances) = annotations.get(&s.video_id) else {
                    continue;
                };
                let labels = update_pseudo_labels(&s, glances, &cfg)?;
                rows.push(MinedLabels {
                    video_id: s.video_id.clone(),
                    mined: labels.support.into_iter().collect(),
                });
                series.push(ScoreSeries {
                    video_id: s.video_id,
                    scores: labels.values,
                });
            }
            write_scores(&series, out)?;
            if let Some(path) = mined {
                write_json_lines(&rows, path)?;
            }
            println!("mined labels for {} videos", rows.len());
        }
        Command::Sample {
            scores,
            theta,
            m,
            max_frames,
            out,
        } => {
            let cfg = resolve_config(
                cli.config.as_deref(),
                PipelineConfig::default(),
                &Overrides {
                    theta: *theta,
                    ..Default::default()
                },
            )?;
            let m = m.unwrap_or(cfg.fallback_frames);
            if m == 0 {
                return Err(VadError::InvalidValue("--m must be >= 1".into()));
            }
            let rows: Vec<SampledFrames> = read_scores(scores)?
                .into_iter()
                .map(|s| {
                    let (indices, verdict) = sample_for_downstream(&s.scores, cfg.theta, m, *max_frames);
                    SampledFrames {
                        video_id: s.video_id,
                        verdict,
                        indices,
                    }
                })
                .collect();
            write_report(out, &cfg, &serde_json::json!({ "theta": cfg.theta, "m": m, "videos": rows }))?;
            println!("sampled {} videos", rows.len());
        }
        Command::Propose {
            scores,
            annotations,
            out,
            seed,
        } => {
            let cfg = config(cli, &Overrides { seed: *seed, ..Default::default() })?;
            let proposals = proposals_for(&read_scores(scores)?, &annotations_by_id(annotations)?, &cfg)?;
            write_json_lines(&proposals, out)?;
            println!("wrote {} proposals", proposals.len());
        }
        Command::BuildInstructions {
            scores,
            annotations,
            endpoint,
            mock,
            out,
            templates,
            seed,
            max_in_flight,
            timeout,
            retries,
            max_tokens,
            model_name,
        } => {
            let cfg = config(cli, &Overrides { seed: *seed, ..Default::default() })?;
            let endpoint = endpoint.clone().or_else(|| std::env::var("HOLMES_ENDPOINT").ok());
            let mode = match (mock, &endpoint) {
                (true, _) => ClientMode::Mock,
                (false, Some(_)) => ClientMode::Live,
                (false, None) => {
                    return Err(VadError::InvalidConfig(
                        "pass --endpoint, set HOLMES_ENDPOINT, or use --mock".into(),
                    ))
                }
            };
            let client = ClientConfig {
                endpoint: endpoint.unwrap_or_default(),
                timeout_secs: *timeout,
                max_in_flight: *max_in_flight,
                retries: *retries,
                mode,
                mock_seed: cfg.rng_seed,
                max_tokens: *max_tokens,
                model_name: model_name.clone(),
                ..ClientConfig::default()
            };
            client.validate()?;
            let pool = match templates {
                Some(p) => PromptTemplatePool::load(p)?,
                None => PromptTemplatePool::default(),
            };
            let proposals = proposals_for(&read_scores(scores)?, &annotations_by_id(annotations)?, &cfg)?;
            let records = build_instruction_set(&proposals, &pool, &client, &FilterRules::default(), cfg.rng_seed)?;
            export_jsonl(&records, out)?;
            let flagged = records.iter().filter(|r| r.provenance.filtered).count();
            println!(
                "wrote {} records ({} flagged), mean assistant words {:.2}",
                records.len(),
                flagged,
                mean_assistant_words(&records)
            );
        }
        Command::Evaluate {
            scores,
            truth,
            report,
            curves,
        } => {
            let cfg = config(cli, &Overrides::default())?;
            let result = evaluate_scores(&read_scores(scores)?, &read_truth(truth)?)?;
            write_report(report, &cfg, &result)?;
            let curves = curves.clone().unwrap_or_else(|| sibling(report, ".curves.csv"));
            write_text(&curves, &result.curves_csv())?;
            println!("auc {:.6} ap {:.6} over {} frames", result.auc, result.ap, result.frames);
        }
        Command::Experiment {
            name,
            report,
            spec,
            overrides,
        } => {
            let name: ExperimentName = name.parse()?;
            let cfg = resolve_config(cli.config.as_deref(), desk_config(), overrides)?;
            let spec = match spec {
                Some(p) => SynthSpec::load(p)?,
                None if name == ExperimentName::SamplerCompare => SynthSpec::sparse(),
                None => SynthSpec::default(),
            };
            let result = run_experiment(name, &spec, &cfg)?;
            write_report(report, &cfg, &result)?;
            write_text(&sibling(report, ".rows.csv"), &result.rows_csv())?;
            write_text(&sibling(report, ".loss.csv"), &result.loss_csv())?;
            print!("{}", result.rows_csv());
        }
        Command::GradientCheck { seeds, report, seed } => {
            let cfg = config(cli, &Overrides { seed: *seed, ..Default::default() })?;
            let result = gradient_check(&cfg, *seeds)?;
            if let Some(path) = report {
                write_report(path, &cfg, &result)?;
            }
            println!(
                "max relative error {:.3e} over {} seeds (tolerance {:.0e}): {}",
                result.max_rel_error,
                result.cases.len(),
                result.tolerance,
                if result.passed { "pass" } else { "fail" }
            );
            if !result.passed {
                return Err(VadError::InvalidValue(format!(
                    "gradient check failed: {:?}",
                    result.worst
                )));
            }
        }
        Command::Stats { annotations, instructions } => {
            if annotations.is_none() && instructions.is_none() {
                return Err(VadError::InvalidValue("pass --annotations and/or --instructions".into()));
            }
            let mut stats = Stats::default();
            if let Some(path) = annotations {
                let sets = read_annotations(path)?;
                let mut classes: BTreeMap<String, ClassCount> = BTreeMap::new();
                for g in &sets {
                    let c = classes.entry(g.class.name().to_string()).or_insert(ClassCount { videos: 0, glances: 0 });
                    c.videos += 1;
                    c.glances += g.glances.len();
                }
                let abnormal = sets.iter().filter(|g| !g.class.is_normal()).count();
                let glances: usize = sets.iter().map(|g| g.glances.len()).sum();
                stats.annotations = Some(AnnotationStats {
                    videos: sets.len(),
                    abnormal_videos: abnormal,
                    glances,
                    glances_per_abnormal_video: glances as f64 / abnormal.max(1) as f64,
                    glances_per_video: glances as f64 / sets.len().max(1) as f64,
                    classes,
                });
            }
            if let Some(path) = instructions {
                let records: Vec<InstructionRecord> = read_json_lines(path)?.into_iter().map(|(_, r)| r).collect();
                stats.instructions = Some(InstructionStats {
                    records: records.len(),
                    filtered: records.iter().filter(|r| r.provenance.filtered).count(),
                    mean_assistant_words: mean_assistant_words(&records),
                });
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&stats).map_err(|e| VadError::InvalidValue(e.to_string()))?
            );
        }
    }
    Ok(())
}
