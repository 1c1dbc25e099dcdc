//! Versioned JSON container for trained models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::AcousticModel;
use crate::gloss::GlossModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("unsupported artifact format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Transcription,
    Gloss,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Transcription => "transcription",
            ModelKind::Gloss => "gloss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Model {
    Transcription(AcousticModel),
    Gloss(GlossModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Transcription(_) => ModelKind::Transcription,
            Model::Gloss(_) => ModelKind::Gloss,
        }
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format_version: u32,
    #[serde(flatten)]
    model: &'a Model,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(flatten)]
    model: Model,
}

pub fn encode(model: &Model) -> Vec<u8> {
    serde_json::to_vec(&EnvelopeRef {
        format_version: FORMAT_VERSION,
        model,
    })
    .expect("models serialize to JSON")
}

pub fn decode(bytes: &[u8]) -> Result<Model, ArtifactError> {
    let header: Header = serde_json::from_slice(bytes).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ArtifactError::UnsupportedVersion(header.format_version));
    }
    let env: Envelope = serde_json::from_slice(bytes).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    if let Model::Transcription(m) = &env.model {
        m.validate().map_err(|e| ArtifactError::Invalid(e.to_string()))?;
    }
    Ok(env.model)
}
