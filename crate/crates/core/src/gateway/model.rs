use std::fmt;

use serde::{Deserialize, Serialize};

/// The pipeline step a model is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageBinding {
    RelevanceCaregiver,
    RelevanceNoncaregiver,
    LonelinessEval,
    CauseCategorize,
    Demographics,
}

impl StageBinding {
    pub const ALL: [StageBinding; 5] = [
        StageBinding::RelevanceCaregiver,
        StageBinding::RelevanceNoncaregiver,
        StageBinding::LonelinessEval,
        StageBinding::CauseCategorize,
        StageBinding::Demographics,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StageBinding::RelevanceCaregiver => "relevance_caregiver",
            StageBinding::RelevanceNoncaregiver => "relevance_noncaregiver",
            StageBinding::LonelinessEval => "loneliness_eval",
            StageBinding::CauseCategorize => "cause_categorize",
            StageBinding::Demographics => "demographics",
        }
    }

    /// Model class used when a run config does not override the binding.
    pub fn default_model(&self) -> &'static str {
        match self {
            StageBinding::RelevanceCaregiver | StageBinding::Demographics => "gpt-4o",
            StageBinding::RelevanceNoncaregiver => "gpt-5-nano",
            StageBinding::LonelinessEval | StageBinding::CauseCategorize => "gpt-5",
        }
    }
}

impl fmt::Display for StageBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    OpenaiCompatible,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub stage_binding: StageBinding,
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1".into()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

impl ModelSpec {
    pub fn default_for(binding: StageBinding) -> ModelSpec {
        ModelSpec {
            stage_binding: binding,
            provider: ProviderKind::default(),
            endpoint: default_endpoint(),
            model_name: binding.default_model().to_string(),
            api_key_env: default_key_env(),
            temperature: 0.0,
            top_p: None,
            max_tokens: None,
            seed: None,
        }
    }
}
