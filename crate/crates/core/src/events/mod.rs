//! Event clips around glances, caption acquisition and instruction-record
//! construction through a pluggable text-generation client.

mod client;
mod instruct;
mod proposals;

pub use client::{
    fan_out, generate_with_retry, ClientConfig, ClientMode, HttpGenerator, MockEcho, TextGenerator,
};
pub use instruct::{
    apply_filter, build_instruction, build_instruction_set, build_instruction_set_with, caption_clip, encode_jsonl,
    export_jsonl, filter_instruction, mean_assistant_words, mock_caption, render_template, word_count, FilterReason,
    FilterRules, FilterVerdict, PromptTemplatePool, Template, INSTRUCTION_SCHEMA,
};
pub use proposals::{derive_seed, generate_event_proposals, generate_normal_proposals};
