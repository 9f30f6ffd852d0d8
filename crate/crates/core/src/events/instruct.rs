use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VadError};
use crate::io::write_json_lines;
use crate::types::{
    CaptionSource, CaptionedClip, ClassLabel, EventProposal, InstructionRecord, Provenance, VIDEO_PLACEHOLDER,
};

use super::client::{fan_out, generate_with_retry, ClientConfig, ClientMode, TextGenerator};
use super::proposals::derive_seed;

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/prompts.json");

/// JSON schema every exported record satisfies.
pub const INSTRUCTION_SCHEMA: &str = include_str!("../../schemas/instruction_record.schema.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: String,
    pub text: String,
}

/// Task prompts (slots `{label}` and `{caption}`) and user questions (each
/// containing the video placeholder).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplatePool {
    pub task_templates: Vec<Template>,
    pub question_templates: Vec<Template>,
}

impl Default for PromptTemplatePool {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl PromptTemplatePool {
    pub fn from_json(text: &str) -> Result<Self> {
        let pool: PromptTemplatePool =
            serde_json::from_str(text).map_err(|e| VadError::ConfigParse(format!("templates: {e}")))?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VadError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_templates.is_empty() || self.question_templates.is_empty() {
            return Err(VadError::InvalidConfig("template pool needs task and question templates".into()));
        }
        for q in &self.question_templates {
            if !q.text.contains(VIDEO_PLACEHOLDER) {
                return Err(VadError::InvalidConfig(format!("question template {} lacks the video placeholder", q.id)));
            }
        }
        for t in &self.task_templates {
            render_template(&t.text, "x", "x")?;
        }
        Ok(())
    }
}

/// Substitutes `{label}` and `{caption}`; any other slot or a stray brace is
/// an error.
pub fn render_template(template: &str, label: &str, caption: &str) -> Result<String> {
    let mut out = String::with_capacity(template.len() + caption.len());
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(VadError::TemplateRenderError(format!("unmatched '}}' in {template:?}")));
        }
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| VadError::TemplateRenderError(format!("unclosed slot in {template:?}")))?;
        match &after[..close] {
            "label" => out.push_str(label),
            "caption" => out.push_str(caption),
            other => return Err(VadError::TemplateRenderError(format!("unknown slot {{{other}}}"))),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn class_actions(label: &ClassLabel) -> &'static [&'static str] {
    match label {
        ClassLabel::Normal => &[
            "people walk past at an even pace",
            "cars move steadily through the junction",
            "a shopper browses the shelves and pays at the counter",
            "a few people wait and chat near the entrance",
        ],
        ClassLabel::Abuse => &[
            "a person repeatedly strikes another person who is lying on the ground",
            "an adult shoves and kicks a smaller person against a wall",
        ],
        ClassLabel::Explosion => &[
            "a sudden blast throws smoke and debris across the scene",
            "a bright flash is followed by flames spreading from a parked vehicle",
        ],
        ClassLabel::Fighting => &[
            "two people exchange punches while others gather around",
            "a scuffle breaks out and several people wrestle on the floor",
        ],
        ClassLabel::Shooting => &[
            "a person raises a firearm and bystanders run for cover",
            "a man fires a gun toward the doorway and people scatter",
        ],
        ClassLabel::CarAccident => &[
            "a car runs the light and collides with a crossing vehicle",
            "a motorcycle skids and slams into the side of a truck",
        ],
        ClassLabel::Riot => &[
            "a crowd hurls objects and overturns a vehicle",
            "masked people smash shop windows as a large group surges forward",
        ],
        ClassLabel::Other(_) => &["an irregular incident disrupts the scene"],
    }
}

const SETTINGS: &[&str] = &[
    "In a parking lot",
    "On a busy street",
    "Inside a convenience store",
    "At a gas station",
    "In a narrow hallway",
    "At a road intersection",
];
const TIMES: &[&str] = &["during the day", "at night", "at dusk", "in the early morning"];

/// Deterministic caption for offline runs, a function of the clip span,
/// its video and `seed`.
pub fn mock_caption(clip: &EventProposal, seed: u64) -> String {
    let key = format!("{}:{}:{}", clip.video_id, clip.start, clip.end);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &key));
    let setting = SETTINGS.choose(&mut rng).expect("non-empty");
    let time = TIMES.choose(&mut rng).expect("non-empty");
    let action = class_actions(&clip.label).choose(&mut rng).expect("non-empty");
    format!(
        "{setting} {time}, {action}. The clip spans snippets {} to {}.",
        clip.start, clip.end
    )
}

/// Attaches a caption from the client (or the offline template in mock mode).
pub fn caption_clip(clip: &EventProposal, cfg: &ClientConfig, generator: &dyn TextGenerator) -> Result<CaptionedClip> {
    let caption = match cfg.mode {
        ClientMode::Mock => mock_caption(clip, cfg.mock_seed),
        ClientMode::Live => {
            let prompt = format!(
                "Describe in detail what happens in video {} between snippets {} and {}.",
                clip.video_id, clip.start, clip.end
            );
            generate_with_retry(generator, &prompt, cfg)?.trim().to_string()
        }
    };
    if caption.is_empty() {
        return Err(VadError::EmptyCaption);
    }
    Ok(CaptionedClip {
        proposal: clip.clone(),
        caption,
        caption_source: CaptionSource::Client,
    })
}

/// One conversation item: a uniformly chosen question as the user turn and
/// the generator's answer to the rendered task prompt as the assistant turn.
pub fn build_instruction<R: Rng + ?Sized>(
    clip: &CaptionedClip,
    pool: &PromptTemplatePool,
    cfg: &ClientConfig,
    generator: &dyn TextGenerator,
    rng: &mut R,
) -> Result<InstructionRecord> {
    if clip.caption.trim().is_empty() {
        return Err(VadError::EmptyCaption);
    }
    let question = pool.question_templates.choose(rng).expect("validated pool");
    let task = pool.task_templates.choose(rng).expect("validated pool");
    let prompt = render_template(&task.text, clip.proposal.label.name(), &clip.caption)?;
    let assistant = generate_with_retry(generator, &prompt, cfg)?;
    let p = &clip.proposal;
    let record = InstructionRecord {
        id: format!("{}:{}-{}", p.video_id, p.start, p.end),
        video_id: p.video_id.clone(),
        clip_span: [p.start, p.end],
        label: p.label.clone(),
        user: question.text.clone(),
        assistant,
        provenance: Provenance {
            template_id: format!("{}+{}", task.id, question.id),
            model_name: cfg.model_name(),
            filtered: false,
        },
    };
    record.validate()?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRules {
    pub min_words: usize,
    /// Lower-case substrings marking a refusal.
    pub refusal_phrases: Vec<String>,
    /// Lower-case substrings asserting the absence of an anomaly.
    pub negation_phrases: Vec<String>,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_words: 10,
            refusal_phrases: vec!["i cannot".into(), "as an ai".into()],
            negation_phrases: vec!["no anomal".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    TooShort,
    Refusal,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reasons: Vec<FilterReason>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn filter_instruction(record: &InstructionRecord, rules: &FilterRules) -> FilterVerdict {
    let text = record.assistant.to_lowercase();
    let mut reasons = Vec::new();
    if word_count(&record.assistant) < rules.min_words {
        reasons.push(FilterReason::TooShort);
    }
    if rules.refusal_phrases.iter().any(|p| text.contains(p.as_str())) {
        reasons.push(FilterReason::Refusal);
    }
    if !record.label.is_normal() && rules.negation_phrases.iter().any(|p| text.contains(p.as_str())) {
        reasons.push(FilterReason::Contradiction);
    }
    FilterVerdict {
        keep: reasons.is_empty(),
        reasons,
    }
}

/// Flags (never drops) records that fail `rules`; returns how many were flagged.
pub fn apply_filter(records: &mut [InstructionRecord], rules: &FilterRules) -> usize {
    let mut flagged = 0;
    for r in records.iter_mut() {
        r.provenance.filtered = !filter_instruction(r, rules).keep;
        flagged += r.provenance.filtered as usize;
    }
    flagged
}

pub fn mean_assistant_words(records: &[InstructionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| word_count(&r.assistant)).sum::<usize>() as f64 / records.len() as f64
}

/// Captions every clip, builds one record per clip and flags filter
/// failures. Template choice for clip `i` draws from its own stream derived
/// from `seed`, so output does not depend on client scheduling.
pub fn build_instruction_set(
    clips: &[EventProposal],
    pool: &PromptTemplatePool,
    cfg: &ClientConfig,
    rules: &FilterRules,
    seed: u64,
) -> Result<Vec<InstructionRecord>> {
    let generator = cfg.generator()?;
    build_instruction_set_with(clips, pool, cfg, generator.as_ref(), rules, seed)
}

pub fn build_instruction_set_with(
    clips: &[EventProposal],
    pool: &PromptTemplatePool,
    cfg: &ClientConfig,
    generator: &dyn TextGenerator,
    rules: &FilterRules,
    seed: u64,
) -> Result<Vec<InstructionRecord>> {
    pool.validate()?;
    let captioned = fan_out(clips, cfg.max_in_flight, |_, c| caption_clip(c, cfg, generator))?;
    let mut records = fan_out(&captioned, cfg.max_in_flight, |i, c| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &i.to_string()));
        build_instruction(c, pool, cfg, generator, &mut rng)
    })?;
    apply_filter(&mut records, rules);
    Ok(records)
}

/// Records as JSON lines, exactly as [`export_jsonl`] writes them.
pub fn encode_jsonl(records: &[InstructionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| VadError::InvalidValue(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn export_jsonl(records: &[InstructionRecord], path: &Path) -> Result<()> {
    write_json_lines(records, path)
}
