//! Prompt templates. Every template is a pure function of its inputs.

use super::backend::{ChatMessage, ChatRequest};
use super::SketchTask;
use crate::code::DiagramCode;

pub const GENERATE_SYSTEM: &str = "You convert hand-drawn diagram sketches into TikZ code. \
Reply with one complete tikzpicture environment inside a single ```latex fenced block and nothing else.";

pub const EDIT_SYSTEM: &str = "You edit TikZ diagram code. Apply every requested change and keep everything else as it is. \
Reply with the full updated tikzpicture environment inside a single ```latex fenced block and nothing else.";

pub const JUDGE_SYSTEM: &str = "You check whether a rendered diagram matches a hand-drawn sketch and its instructions. \
Answer with a single JSON object and nothing else: \
{\"aligned\": true|false, \"rationale\": \"<one sentence>\", \"blame\": \"SketchToCode\"|\"EditingCode\"|\"None\"}. \
Use blame \"None\" exactly when aligned is true. Blame \"EditingCode\" when the requested edits were applied wrongly, \
otherwise \"SketchToCode\".";

pub const JUDGE_REASK: &str = "Your previous reply was not a JSON object in the required schema. \
Answer again with only the JSON object.";

/// What went wrong on the previous attempt, fed back into retry prompts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feedback {
    /// 1-based number of the attempt being made.
    pub attempt: u32,
    pub previous_code: Option<String>,
    pub problems: Vec<String>,
}

fn bullets(items: &[String]) -> String {
    items.iter().map(|s| format!("- {s}\n")).collect()
}

fn fenced(code: &str) -> String {
    format!("```latex\n{}\n```\n", code.trim_end())
}

fn feedback_block(fb: Option<&Feedback>) -> String {
    let Some(fb) = fb else {
        return String::new();
    };
    let mut s = format!("\nAttempt {}. The previous attempt was rejected.\n", fb.attempt);
    if let Some(code) = &fb.previous_code {
        s.push_str("Previous code:\n");
        s.push_str(&fenced(code));
    }
    if !fb.problems.is_empty() {
        s.push_str("Problems:\n");
        s.push_str(&bullets(&fb.problems));
    }
    s
}

pub fn generate_request(task: &SketchTask, sketch_png: String, feedback: Option<&Feedback>, temperature: f64) -> ChatRequest {
    let mut text = String::from("Reproduce the attached sketch as TikZ code.\nInstructions:\n");
    text.push_str(&bullets(&task.instructions));
    text.push_str(&feedback_block(feedback));
    ChatRequest {
        messages: vec![ChatMessage::system(GENERATE_SYSTEM), ChatMessage::user(text).with_image(sketch_png)],
        temperature,
    }
}

pub fn edit_request(code: &DiagramCode, edits: &[String], feedback: Option<&Feedback>, temperature: f64) -> ChatRequest {
    let mut text = String::from("Code:\n");
    text.push_str(&fenced(code.source()));
    text.push_str("Edits:\n");
    text.push_str(&bullets(edits));
    text.push_str(&feedback_block(feedback));
    ChatRequest {
        messages: vec![ChatMessage::system(EDIT_SYSTEM), ChatMessage::user(text)],
        temperature,
    }
}

pub fn judge_request(task: &SketchTask, sketch_png: String, diagram_png: String, temperature: f64) -> ChatRequest {
    let mut text = String::from("The first image is the sketch, the second is the rendered diagram.\nInstructions:\n");
    text.push_str(&bullets(&task.instructions));
    if let Some(edits) = &task.edit_instructions {
        text.push_str("Requested edits:\n");
        text.push_str(&bullets(edits));
    }
    ChatRequest {
        messages: vec![
            ChatMessage::system(JUDGE_SYSTEM),
            ChatMessage::user(text).with_image(sketch_png).with_image(diagram_png),
        ],
        temperature,
    }
}
