//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs as a plain binary (`harness = false`) so criteria execute
//! sequentially and their timings are not skewed by each other.

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use vadkit::events::{
    build_instruction_set, encode_jsonl, filter_instruction, ClientConfig, FilterRules, PromptTemplatePool,
    INSTRUCTION_SCHEMA,
};
use vadkit::io::{
    read_annotations, read_feature_stream, read_scores, write_annotations, write_feature_stream, write_scores,
};
use vadkit::metrics::{average_precision, roc_auc};
use vadkit::pseudo_label::mine_pseudo_snippets;
use vadkit::scorer::{decode_checkpoint, encode_checkpoint, gradient_check, ModelDims, ScorerModel};
use vadkit::synth::{desk_config, run_experiment, ExperimentName, SynthSpec};
use vadkit::types::{ClassLabel, EventProposal, FeatureStream, GlanceSet, InstructionRecord, Provenance, ScoreSeries};
use vadkit::PipelineConfig;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

// ---- 1. mining oracle -------------------------------------------------------

/// Snippet `t` is mined iff it is a glance, or it lies strictly between the
/// glance and its neighbours and every snippet from `t` up to (not including)
/// the glance scores above the glance's relative threshold.
fn mining_oracle(scores: &[f64], glances: &[usize], alpha: f64) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for t in 0..scores.len() {
        for (i, &g) in glances.iter().enumerate() {
            let thr = alpha * scores[g];
            let left_wall = if i == 0 { None } else { Some(glances[i - 1]) };
            let right_wall = glances.get(i + 1).copied();
            let reachable = if t == g {
                true
            } else if t < g {
                left_wall.is_none_or(|w| t > w) && (t..g).all(|s| scores[s] > thr)
            } else {
                right_wall.is_none_or(|w| t < w) && (g + 1..=t).all(|s| scores[s] > thr)
            };
            if reachable {
                out.insert(t);
                break;
            }
        }
    }
    out
}

fn criterion_mining() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances = 2000;
    let mut mismatches = 0;
    for _ in 0..instances {
        let len = rng.random_range(1..=64usize);
        // Coarse score grid so equality with the threshold happens often.
        let scores: Vec<f64> = if rng.random_bool(0.5) {
            (0..len).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect()
        } else {
            (0..len).map(|_| rng.random::<f64>()).collect()
        };
        let k = rng.random_range(1..=5usize).min(len);
        let mut glances: Vec<usize> = (0..len).collect::<Vec<_>>().choose_multiple(&mut rng, k).copied().collect();
        glances.sort_unstable();
        let alpha = if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.05..1.0) };
        let mined = mine_pseudo_snippets(&scores, &glances, alpha).expect("valid instance");
        if mined != mining_oracle(&scores, &glances, alpha) {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 1.0),
        format!("{instances} instances, {mismatches} mismatches, {:.3}s", elapsed.as_secs_f64()),
    )
}

// ---- 2. gradient fidelity ---------------------------------------------------

fn criterion_gradients() -> Outcome {
    let started = Instant::now();
    match gradient_check(&PipelineConfig::default(), 5) {
        Ok(report) => {
            let elapsed = started.elapsed();
            outcome(
                report.cases.len() == 5 && report.max_rel_error < 1e-4 && within(elapsed, 30.0),
                format!(
                    "5 seeds, max relative error {:.3e}, {:.1}s",
                    report.max_rel_error,
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

// ---- 3. supervision trend ---------------------------------------------------

fn criterion_supervision() -> Outcome {
    let started = Instant::now();
    let report = match run_experiment(ExperimentName::SupervisionAblation, &SynthSpec::default(), &desk_config()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    let auc = |v: &str| report.row(v).and_then(|r| r.get("auc")).unwrap_or(f64::NAN);
    let (weak, glance) = (auc("weak"), auc("glance"));
    outcome(
        glance - weak >= 0.03 && glance >= 0.90 && within(elapsed, 180.0),
        format!(
            "weak AUC {weak:.4}, glance AUC {glance:.4}, gap {:.2} points, {:.1}s",
            100.0 * (glance - weak),
            elapsed.as_secs_f64()
        ),
    )
}

// ---- 4. glance-shift robustness ---------------------------------------------

fn criterion_shift() -> Outcome {
    let started = Instant::now();
    let report = match run_experiment(ExperimentName::GlanceShift, &SynthSpec::default(), &desk_config()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    let auc = |s: usize| report.row(&format!("shift-{s}")).and_then(|r| r.get("auc")).unwrap_or(f64::NAN);
    let (a0, a10, a100) = (auc(0), auc(10), auc(100));
    outcome(
        (a10 - a0).abs() <= 0.02 && a100 < a10 && within(elapsed, 600.0),
        format!(
            "AUC shift 0 {a0:.4}, shift 10 {a10:.4}, shift 100 {a100:.4}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---- 5. sampler efficiency --------------------------------------------------

fn criterion_sampler() -> Outcome {
    let started = Instant::now();
    let report = match run_experiment(ExperimentName::SamplerCompare, &SynthSpec::sparse(), &desk_config()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    let row = report.row("temporal").expect("temporal row");
    let m = |k: &str| row.get(k).unwrap_or(f64::NAN);
    let (fraction, abnormal, coverage) = (m("forwarded_fraction"), m("abnormal_forwarded_fraction"), m("coverage"));
    outcome(
        fraction <= 0.20 && abnormal <= 0.20 && coverage >= 0.80,
        format!(
            "theta {:.2}, forwarded {:.1}% (abnormal streams {:.1}%, planted {:.1}%), coverage {:.1}%, {:.1}s",
            m("theta"),
            100.0 * fraction,
            100.0 * abnormal,
            100.0 * m("abnormal_anomaly_fraction"),
            100.0 * coverage,
            elapsed.as_secs_f64()
        ),
    )
}

// ---- 6. metric oracles ------------------------------------------------------

fn auc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut hits = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    hits += 1.0;
                } else if scores[i] == scores[j] {
                    hits += 0.5;
                }
            }
        }
    }
    hits / pairs
}

/// Ranks by descending score, ties by ascending index, and averages the
/// precision at the rank of every positive.
fn ap_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut seen = 0.0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            seen += 1.0;
            sum += seen / (rank + 1) as f64;
        }
    }
    sum / positives
}

fn random_labelled(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=120usize);
    let coarse = rng.random_bool(0.5);
    let scores = (0..n)
        .map(|_| {
            if coarse {
                rng.random_range(0..=5) as f64 / 5.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
    labels[0] = 1;
    labels[1] = 0;
    labels.shuffle(rng);
    (scores, labels)
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_auc = 0.0f64;
    let mut worst_ap = 0.0f64;
    for _ in 0..500 {
        let (s, l) = random_labelled(&mut rng);
        worst_auc = worst_auc.max((roc_auc(&s, &l).unwrap() - auc_oracle(&s, &l)).abs());
    }
    for _ in 0..500 {
        let (s, l) = random_labelled(&mut rng);
        worst_ap = worst_ap.max((average_precision(&s, &l).unwrap() - ap_oracle(&s, &l)).abs());
    }
    outcome(
        worst_auc <= 1e-9 && worst_ap <= 1e-9,
        format!("500+500 instances, max |AUC diff| {worst_auc:.1e}, max |AP diff| {worst_ap:.1e}"),
    )
}

// ---- 7. data-engine determinism and schema ----------------------------------

fn random_clips(n: usize, seed: u64) -> Vec<EventProposal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<ClassLabel> = ClassLabel::ANOMALOUS.to_vec();
    labels.push(ClassLabel::Normal);
    (0..n)
        .map(|i| {
            let start = rng.random_range(0..200usize);
            EventProposal {
                video_id: format!("clip_{:03}", i / 3),
                start,
                end: start + rng.random_range(0..40usize),
                label: labels.choose(&mut rng).unwrap().clone(),
                source_glance: None,
            }
        })
        .collect()
}

fn fixture_record(label: ClassLabel, assistant: &str) -> InstructionRecord {
    InstructionRecord {
        id: "fixture:0-9".into(),
        video_id: "fixture".into(),
        clip_span: [0, 9],
        label,
        user: "<video>\n Are there any unexpected or unusual events in the video clip?".into(),
        assistant: assistant.into(),
        provenance: Provenance {
            template_id: "fixture".into(),
            model_name: "fixture".into(),
            filtered: false,
        },
    }
}

/// 20 cases: 12 planted failures (refusals, contradictions, truncations) and
/// 8 acceptable answers. Returns (planted records kept, good records rejected).
fn filter_fixture() -> (usize, usize) {
    use ClassLabel::*;
    let long = "The video shows a crowded street where two people start shoving each other near a parked car";
    let bad = [
        (Fighting, "I cannot help with describing violent content in this video clip, sorry about that."),
        (Riot, "As an AI language model I am not able to watch videos or describe what happens in them."),
        (Abuse, "I CANNOT provide an analysis of this footage because it may contain sensitive material."),
        (Explosion, "Sorry, as an AI I have no eyes, so I will not comment on this clip at all today."),
        (Shooting, "There is no anomaly in this clip; people walk calmly along the pavement all the time."),
        (CarAccident, "No anomalies are visible: traffic flows normally through the junction during the day."),
        (Riot, "The footage looks ordinary and shows no anomalous behaviour among the people in the square."),
        (Fighting, "No anomalous events occur; the two men are simply talking next to the shop entrance."),
        (Explosion, "A flash."),
        (Abuse, "Nothing to report."),
        (Normal, "Quiet street."),
        (Shooting, "Someone fires a gun."),
    ];
    let good = [
        (Fighting, long),
        (Explosion, "A bright explosion erupts beside the warehouse and debris is thrown across the loading yard."),
        (Riot, "A large crowd pushes against the police line while several people throw objects at the vans."),
        (CarAccident, "A sedan runs the red light and collides with a van crossing the intersection from the left."),
        (Shooting, "A man draws a handgun and fires twice toward the entrance while customers run for cover."),
        (Abuse, "A person repeatedly strikes another person who is cornered against the wall of the corridor."),
        (Normal, "There is no anomaly in this clip; people walk calmly along the pavement past the shops."),
        (Normal, "Shoppers queue at the checkout while a clerk restocks shelves near the entrance of the store."),
    ];
    let rules = FilterRules::default();
    let false_passes = bad
        .iter()
        .filter(|(l, a)| filter_instruction(&fixture_record(l.clone(), a), &rules).keep)
        .count();
    let false_rejects = good
        .iter()
        .filter(|(l, a)| !filter_instruction(&fixture_record(l.clone(), a), &rules).keep)
        .count();
    (false_passes, false_rejects)
}

fn criterion_instructions() -> Outcome {
    let clips = random_clips(100, 7);
    let pool = PromptTemplatePool::default();
    let cfg = ClientConfig::mock(7);
    let rules = FilterRules::default();
    let build = || build_instruction_set(&clips, &pool, &cfg, &rules, 7).and_then(|r| Ok((encode_jsonl(&r)?, r)));
    let (first, records) = match build() {
        Ok(x) => x,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let second = build().map(|(text, _)| text).unwrap_or_default();
    let schema: Value = serde_json::from_str(INSTRUCTION_SCHEMA).expect("schema is JSON");
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let valid = first
        .lines()
        .filter(|line| serde_json::from_str::<Value>(line).is_ok_and(|v| validator.is_valid(&v)))
        .count();
    let (false_passes, false_rejects) = filter_fixture();
    outcome(
        records.len() == 100 && valid == 100 && first == second && false_passes == 0,
        format!(
            "{} records, {valid} schema-valid, reruns identical: {}, fixture false passes {false_passes}/12 (false rejects {false_rejects}/8)",
            records.len(),
            first == second
        ),
    )
}

// ---- 8. format round-trips --------------------------------------------------

fn random_class(rng: &mut ChaCha8Rng) -> ClassLabel {
    match rng.random_range(0..8) {
        0 => ClassLabel::Normal,
        7 => ClassLabel::Other("Vandalism".into()),
        k => ClassLabel::ANOMALOUS[k - 1].clone(),
    }
}

fn round_trip_once(rng: &mut ChaCha8Rng, dir: &std::path::Path, i: usize) -> std::result::Result<(), String> {
    let err = |e: vadkit::VadError| e.to_string();
    let t = rng.random_range(1..=80usize);
    let d = rng.random_range(1..=24usize);
    let class = random_class(rng);
    let features = (0..t * d).map(|_| rng.random_range(-1e3f32..1e3)).collect();
    let stream = FeatureStream::new(format!("vid_{i}"), t, d, features, rng.random_range(1..=32), class.clone())
        .map_err(err)?;

    let (a, b) = (dir.join(format!("{i}a.hvf")), dir.join(format!("{i}b.hvf")));
    write_feature_stream(&stream, &a).map_err(err)?;
    write_feature_stream(&read_feature_stream(&a).map_err(err)?, &b).map_err(err)?;
    if fs::read(&a).unwrap() != fs::read(&b).unwrap() {
        return Err("feature stream bytes differ".into());
    }

    let sets: Vec<GlanceSet> = (0..rng.random_range(1..6))
        .map(|k| {
            let c = random_class(rng);
            let glances = if c.is_normal() {
                Vec::new()
            } else {
                (0..rng.random_range(1..5)).map(|_| rng.random_range(0..t)).collect()
            };
            GlanceSet::new(format!("vid_{i}_{k}"), c, glances).map_err(err)
        })
        .collect::<std::result::Result<_, _>>()?;
    let (a, b) = (dir.join(format!("{i}a.jsonl")), dir.join(format!("{i}b.jsonl")));
    write_annotations(&sets, &a).map_err(err)?;
    write_annotations(&read_annotations(&a).map_err(err)?, &b).map_err(err)?;
    if fs::read(&a).unwrap() != fs::read(&b).unwrap() {
        return Err("annotation bytes differ".into());
    }

    let series: Vec<ScoreSeries> = (0..rng.random_range(1..4))
        .map(|k| {
            let scores = (0..rng.random_range(1..60)).map(|_| rng.random::<f64>()).collect();
            ScoreSeries::new(format!("vid_{i}_{k}"), scores).map_err(err)
        })
        .collect::<std::result::Result<_, _>>()?;
    let (a, b) = (dir.join(format!("{i}a.csv")), dir.join(format!("{i}b.csv")));
    write_scores(&series, &a).map_err(err)?;
    write_scores(&read_scores(&a).map_err(err)?, &b).map_err(err)?;
    if fs::read(&a).unwrap() != fs::read(&b).unwrap() {
        return Err("score bytes differ".into());
    }

    let dims = ModelDims {
        input_dim: d,
        hidden_dim: rng.random_range(1..=12),
        memory_slots: rng.random_range(1..=6),
        local_window: rng.random_range(1..=9),
    };
    let model = ScorerModel::init(dims, rng.random()).map_err(err)?;
    let hash = format!("{:016x}", rng.random::<u64>());
    let first = encode_checkpoint(&model, &hash).map_err(err)?;
    let (decoded, header) = decode_checkpoint(&first).map_err(err)?;
    let second = encode_checkpoint(&decoded, &header.config_hash).map_err(err)?;
    if first != second {
        return Err("checkpoint bytes differ".into());
    }
    Ok(())
}

fn criterion_round_trips() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for i in 0..100 {
        if let Err(e) = round_trip_once(&mut rng, dir.path(), i) {
            failures.push(format!("artifact {i}: {e}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "100 artifacts x 4 formats byte-identical".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("mining matches brute-force oracle", criterion_mining),
        ("gradient fidelity", criterion_gradients),
        ("glance supervision beats weak supervision", criterion_supervision),
        ("glance-shift robustness", criterion_shift),
        ("sampler efficiency and coverage", criterion_sampler),
        ("metric oracles", criterion_metrics),
        ("instruction determinism, schema and filter", criterion_instructions),
        ("format round-trips", criterion_round_trips),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += !o.pass as usize;
        println!("[{}] criterion {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
