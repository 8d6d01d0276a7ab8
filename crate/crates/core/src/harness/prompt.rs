use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a model family wants its class prompt phrased.
///
/// Label-ID families are conditioned on the integer class id, which every job
/// sample carries; they still receive the default prompt for alignment
/// scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    #[default]
    Default,
    Conversational,
    LabelId,
}

impl PromptStyle {
    pub fn template(self) -> &'static str {
        match self {
            PromptStyle::Default | PromptStyle::LabelId => "a photo of a {class}",
            PromptStyle::Conversational => "Can you generate a photo of a {class}?",
        }
    }
}

/// Prompt used when scoring alignment, whatever the generation style.
pub const EVAL_TEMPLATE: &str = "a photo of a {class}";

pub fn fill_template(template: &str, class_name: &str) -> Result<String> {
    let name = class_name.trim();
    if name.is_empty() {
        return Err(Error::InvalidInput("class name must be nonempty".into()));
    }
    if !template.contains("{class}") {
        return Err(Error::InvalidInput(format!(
            "prompt template `{template}` has no {{class}} placeholder"
        )));
    }
    Ok(template.replace("{class}", name))
}

pub fn render_prompt(style: PromptStyle, class_name: &str) -> Result<String> {
    fill_template(style.template(), class_name)
}
