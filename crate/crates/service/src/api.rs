//! HTTP routes over the registry.

use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use lab_core::artifact::Model;
use lab_core::corpus::ManifestEntry;
use lab_core::gloss::{suggest_glosses, GlossSuggestion, DEFAULT_K};
use serde::{Deserialize, Serialize};

use crate::registry::{JobSpec, Proposal, Registry, RegistryError};

/// Upload size cap for corpora and audio.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NotFound,
    MethodNotAllowed,
    Validation,
    Conflict,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ErrorCode::Validation => StatusCode::BAD_REQUEST,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        use RegistryError::*;
        let code = match &e {
            NotFound(_) | UnknownCorpus(_) | UnknownParent(_) => ErrorCode::NotFound,
            KindMismatch { .. } | FineTuneUnsupported | Validation(_) => ErrorCode::Validation,
            AlreadyTerminal { .. } => ErrorCode::Conflict,
            CorruptArtifact(_) => ErrorCode::Internal,
            StoreUnwritable { .. } | Io(_) => {
                eprintln!("storage error: {e}");
                return ApiError::new(ErrorCode::Internal, "internal storage error");
            }
        };
        ApiError::new(code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, RegistryError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::new(ErrorCode::Internal, "request handler failed"))?
        .map_err(ApiError::from)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub phonemes: String,
    pub consent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossRequest {
    pub sentences: Vec<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossResult {
    pub source: Vec<String>,
    pub suggestions: Vec<GlossSuggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossResponse {
    pub model_id: String,
    pub k: usize,
    pub results: Vec<GlossResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionResponse {
    pub model_id: String,
    pub transcriptions: Vec<Proposal>,
}

#[derive(Debug, Deserialize)]
struct TranscribeQuery {
    beam_width: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

pub fn router(registry: Registry, prefix: &str) -> Router {
    let routes = Router::new()
        .route("/healthz", get(healthz))
        .route("/corpora", post(upload_corpus))
        .route("/corpora/{id}", get(get_corpus))
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/transcriptions", post(transcribe))
        .route("/models/{id}/glosses", post(glosses))
        .route("/models/{id}/export", get(export))
        .route("/transcriptions/{id}", put(correct))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(registry);
    let prefix = prefix.trim_end_matches('/');
    if prefix.is_empty() {
        routes
    } else {
        let prefix = if prefix.starts_with('/') { prefix.to_string() } else { format!("/{prefix}") };
        Router::new().nest(&prefix, routes).fallback(not_found)
    }
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed")
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

/// Field `kind` is `speech` or `parallel`. Speech parts are named
/// `wav/<id>.wav` and `txt/<id>.txt` (or `wav`/`txt` with that file name);
/// parallel uploads carry `source` and `target` text parts.
async fn upload_corpus(
    State(registry): State<Registry>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let mut multipart = multipart.map_err(|e| ApiError::validation(e.body_text()))?;
    let mut kind = None;
    let mut wavs = BTreeMap::new();
    let mut txts = BTreeMap::new();
    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    let mut warnings = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::validation(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().replace("%2F", "/").replace("%2f", "/");
        let path = match (name.contains('/'), field.file_name()) {
            (false, Some(file)) if name == "wav" || name == "txt" => format!("{name}/{file}"),
            _ => name.clone(),
        };
        let data = field.bytes().await.map_err(|e| ApiError::validation(e.body_text()))?;
        if name == "kind" {
            kind = Some(String::from_utf8_lossy(&data).trim().to_string());
        } else if let Some(id) = path.strip_prefix("wav/").and_then(|p| p.strip_suffix(".wav")) {
            wavs.insert(id.to_string(), data.to_vec());
        } else if let Some(id) = path.strip_prefix("txt/").and_then(|p| p.strip_suffix(".txt")) {
            txts.insert(id.to_string(), String::from_utf8_lossy(&data).into_owned());
        } else if name == "source" || name == "target" {
            let text = String::from_utf8(data.to_vec()).map_err(|_| ApiError::validation(format!("{name} is not UTF-8")))?;
            texts.insert(name, text);
        } else {
            warnings.push(format!("ignored part {path:?}"));
        }
    }
    let manifest = match kind.as_deref() {
        Some("speech") => {
            let mut entries = Vec::new();
            for (id, wav) in wavs {
                match txts.remove(&id) {
                    Some(transcript) => entries.push(ManifestEntry {
                        utterance_id: id,
                        wav,
                        transcript,
                    }),
                    None => warnings.push(format!("wav/{id}.wav has no transcript; skipped")),
                }
            }
            warnings.extend(txts.keys().map(|id| format!("txt/{id}.txt has no audio; skipped")));
            if entries.is_empty() {
                return Err(ApiError::validation("speech upload contains no complete utterances"));
            }
            blocking(move || registry.create_speech_corpus(&entries, warnings)).await?
        }
        Some("parallel") => {
            let (Some(source), Some(target)) = (texts.remove("source"), texts.remove("target")) else {
                return Err(ApiError::validation("parallel upload needs source and target parts"));
            };
            blocking(move || registry.create_parallel_corpus(&source, &target)).await?
        }
        Some(other) => return Err(ApiError::validation(format!("unknown corpus kind {other:?}"))),
        None => return Err(ApiError::validation("missing kind field")),
    };
    Ok((StatusCode::CREATED, Json(manifest)))
}

async fn get_corpus(State(registry): State<Registry>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(registry.get_corpus(&id)?))
}

async fn submit_job(State(registry): State<Registry>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let spec: JobSpec = parse_json(&body)?;
    let job = blocking(move || registry.submit_job(spec)).await?;
    Ok((StatusCode::CREATED, Json(job)))
}

async fn get_job(State(registry): State<Registry>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(registry.get_job(&id)?))
}

async fn cancel_job(State(registry): State<Registry>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || registry.cancel_job(&id)).await?))
}

async fn list_models(State(registry): State<Registry>) -> impl IntoResponse {
    Json(registry.list_models())
}

async fn get_model(State(registry): State<Registry>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(registry.get_model(&id)?))
}

/// Every file part is one utterance, named by its file name stem.
async fn transcribe(
    State(registry): State<Registry>,
    Path(id): Path<String>,
    query: Result<Query<TranscribeQuery>, QueryRejection>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let mut multipart = multipart.map_err(|e| ApiError::validation(e.body_text()))?;
    let mut files = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::validation(e.body_text()))?
    {
        let label = field
            .file_name()
            .or(field.name())
            .unwrap_or("utterance")
            .to_string();
        let utterance_id = label.rsplit('/').next().unwrap_or(&label);
        let utterance_id = utterance_id.strip_suffix(".wav").unwrap_or(utterance_id).to_string();
        let data = field.bytes().await.map_err(|e| ApiError::validation(e.body_text()))?;
        files.push((utterance_id, data.to_vec()));
    }
    let model_id = id.clone();
    let transcriptions = blocking(move || registry.transcribe(&id, files, query.beam_width)).await?;
    Ok(Json(TranscriptionResponse {
        model_id,
        transcriptions,
    }))
}

async fn correct(State(registry): State<Registry>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CorrectionRequest = parse_json(&body)?;
    Ok(Json(blocking(move || registry.correct(&id, &req.phonemes, req.consent)).await?))
}

async fn glosses(State(registry): State<Registry>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: GlossRequest = parse_json(&body)?;
    let k = req.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(ApiError::validation("k must be at least 1"));
    }
    let model_id = id.clone();
    let results = blocking(move || {
        let Model::Gloss(model) = registry.load_model(&id)?.1 else {
            return Err(RegistryError::KindMismatch {
                expected: "gloss".into(),
                found: "transcription".into(),
            });
        };
        Ok(req
            .sentences
            .iter()
            .map(|s| {
                let source: Vec<String> = s.split_whitespace().map(str::to_string).collect();
                let suggestions = suggest_glosses(&source, &model, k);
                GlossResult { source, suggestions }
            })
            .collect())
    })
    .await?;
    Ok(Json(GlossResponse { model_id, k, results }))
}

/// `format` is `artifact` (default), `manifest`, or `phrase-table` for
/// gloss models.
async fn export(
    State(registry): State<Registry>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let format = query.format.unwrap_or_else(|| "artifact".into());
    let (content_type, file, body) = match format.as_str() {
        "artifact" => {
            let bytes = blocking({
                let id = id.clone();
                move || registry.artifact_bytes(&id)
            })
            .await?;
            ("application/octet-stream", "artifact.bin", bytes)
        }
        "manifest" => (
            "application/json",
            "manifest.json",
            serde_json::to_vec_pretty(&registry.get_model(&id)?).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?,
        ),
        "phrase-table" => {
            let tsv = blocking({
                let id = id.clone();
                move || match registry.load_model(&id)?.1 {
                    Model::Gloss(m) => Ok(m.phrase_table.to_tsv()),
                    Model::Transcription(_) => Err(RegistryError::Validation("transcription models have no phrase table".into())),
                }
            })
            .await?;
            ("text/tab-separated-values", "phrases.tsv", tsv.into_bytes())
        }
        other => return Err(ApiError::validation(format!("unknown export format {other:?}"))),
    };
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}-{file}\"")),
        ],
        body,
    )
        .into_response())
}
