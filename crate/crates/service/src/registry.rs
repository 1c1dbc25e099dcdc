//! Filesystem-backed model registry and training job queue.
//!
//! Layout under the store root:
//!
//! ```text
//! models/<id>/manifest.json   ModelRecord
//! models/<id>/artifact.bin    versioned model artifact
//! jobs/<id>.json              TrainingJob
//! corpora/<id>/corpus.json    UploadManifest, plus the corpus files
//! ```

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::thread::JoinHandle;

use chrono::{DateTime, TimeDelta, Utc};
use lab_core::artifact::{self, Model, ModelKind};
use lab_core::corpus::{
    load_parallel_corpus, load_speech_corpus, parse_wav, ManifestEntry, ParallelCorpus, SpeechCorpus,
};
use lab_core::ctc::{train_acoustic_with, CtcConfig, CtcError};
use lab_core::gloss::{train_glosser, GlossConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

const MANIFEST: &str = "manifest.json";
const ARTIFACT: &str = "artifact.bin";
const CORPUS_MANIFEST: &str = "corpus.json";
const TMP_PREFIX: &str = ".tmp-";
pub const INTERRUPTED: &str = "interrupted";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("unknown corpus {0}")]
    UnknownCorpus(String),
    #[error("unknown parent model {0}")]
    UnknownParent(String),
    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("job {job_id} is already {state:?}")]
    AlreadyTerminal { job_id: String, state: JobState },
    #[error("gloss models cannot be fine-tuned")]
    FineTuneUnsupported,
    #[error("corrupt artifact for model {0}")]
    CorruptArtifact(String),
    #[error("store {path} is not writable: {reason}")]
    StoreUnwritable { path: PathBuf, reason: String },
    #[error("{0}")]
    Validation(String),
    #[error("storage error: {0}")]
    Io(String),
}

impl From<io::Error> for RegistryError {
    fn from(e: io::Error) -> Self {
        RegistryError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RegistryError {
    fn from(e: serde_json::Error) -> Self {
        RegistryError::Io(e.to_string())
    }
}

pub type Result<T, E = RegistryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed | JobState::Cancelled)
    }

    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Cancelled) | (Running, Succeeded) | (Running, Failed) | (Running, Cancelled)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Speech,
    Parallel,
}

impl CorpusKind {
    fn trains(self) -> ModelKind {
        match self {
            CorpusKind::Speech => ModelKind::Transcription,
            CorpusKind::Parallel => ModelKind::Gloss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadManifest {
    pub corpus_id: String,
    pub kind: CorpusKind,
    pub item_count: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub created_at: DateTime<Utc>,
}

/// Training request; `config` holds `CtcConfig` or `GlossConfig` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub kind: ModelKind,
    pub corpus_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub job_id: String,
    pub kind: ModelKind,
    pub state: JobState,
    pub progress: f64,
    pub corpus_id: String,
    pub parent_id: Option<String>,
    pub name: Option<String>,
    pub config: Value,
    pub result_model_id: Option<String>,
    pub error_message: Option<String>,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub corpus_id: String,
    pub kind: CorpusKind,
    pub item_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub name: String,
    pub corpus: CorpusSummary,
    pub config: Value,
    #[serde(default)]
    pub final_per: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub kind: ModelKind,
    pub created_at: DateTime<Utc>,
    pub parent_id: Option<String>,
    pub artifact_path: String,
    pub artifact_sha256: String,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub transcription_id: String,
    pub model_id: String,
    pub utterance_id: String,
    pub phonemes: String,
    pub consent: bool,
}

/// A transcription awaiting review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub transcription_id: String,
    pub model_id: String,
    pub utterance_id: String,
    pub phonemes: String,
    #[serde(skip)]
    wav: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    pub transcription_id: String,
    pub model_id: String,
    pub utterance_id: String,
    pub phonemes: String,
    pub consent: bool,
    /// Corpus holding the stored correction, when consent was given.
    pub corpus_id: Option<String>,
}

pub fn corrections_corpus_id(model_id: &str) -> String {
    format!("corrections-{model_id}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn new_id() -> String {
    Uuid::new_v4().simple().to_string()
}

enum TrainConfig {
    Transcription(CtcConfig),
    Gloss(GlossConfig),
}

fn parse_config(kind: ModelKind, raw: &Value) -> Result<TrainConfig> {
    let raw = if raw.is_null() { Value::Object(Default::default()) } else { raw.clone() };
    let bad = |e: String| RegistryError::Validation(format!("invalid config: {e}"));
    match kind {
        ModelKind::Transcription => {
            let cfg: CtcConfig = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
            cfg.validate().map_err(|e| bad(e.to_string()))?;
            Ok(TrainConfig::Transcription(cfg))
        }
        ModelKind::Gloss => {
            let cfg: GlossConfig = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
            if cfg.max_phrase_len == 0 {
                return Err(bad("max_phrase_len must be positive".into()));
            }
            Ok(TrainConfig::Gloss(cfg))
        }
    }
}

#[derive(Default)]
struct State {
    jobs: BTreeMap<String, TrainingJob>,
    cancel: HashMap<String, Arc<AtomicBool>>,
    models: BTreeMap<String, ModelRecord>,
    corpora: BTreeMap<String, UploadManifest>,
    proposals: HashMap<String, Proposal>,
    last_model_time: Option<DateTime<Utc>>,
}

struct Inner {
    root: PathBuf,
    state: RwLock<State>,
    queue: Mutex<VecDeque<String>>,
    wake: Condvar,
    shutdown: AtomicBool,
    workers: Mutex<Vec<JoinHandle<()>>>,
    /// Serializes writes to correction corpora against training reads.
    corpus_io: Mutex<()>,
}

/// Shared handle; clones refer to the same store.
#[derive(Clone)]
pub struct Registry {
    inner: Arc<Inner>,
}

impl Registry {
    /// Opens (creating if needed) a store. Jobs left RUNNING by a previous
    /// process become FAILED("interrupted"); QUEUED jobs are queued again.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let unwritable = |e: io::Error| RegistryError::StoreUnwritable {
            path: root.clone(),
            reason: e.to_string(),
        };
        for sub in ["models", "jobs", "corpora"] {
            fs::create_dir_all(root.join(sub)).map_err(unwritable)?;
        }
        let probe = root.join(".write-probe");
        fs::write(&probe, b"").and_then(|_| fs::remove_file(&probe)).map_err(unwritable)?;

        let mut state = State::default();
        for sub in ["models", "corpora"] {
            for entry in fs::read_dir(root.join(sub))? {
                let path = entry?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if name.starts_with(TMP_PREFIX) {
                    fs::remove_dir_all(&path)?;
                } else if sub == "models" && path.join(MANIFEST).is_file() {
                    let rec: ModelRecord = read_json(&path.join(MANIFEST))?;
                    state.last_model_time = state.last_model_time.max(Some(rec.created_at));
                    state.models.insert(rec.model_id.clone(), rec);
                } else if sub == "corpora" && path.join(CORPUS_MANIFEST).is_file() {
                    let m: UploadManifest = read_json(&path.join(CORPUS_MANIFEST))?;
                    state.corpora.insert(m.corpus_id.clone(), m);
                }
            }
        }
        let mut queued = Vec::new();
        for entry in fs::read_dir(root.join("jobs"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let mut job: TrainingJob = read_json(&path)?;
            match job.state {
                JobState::Running => {
                    job.state = JobState::Failed;
                    job.error_message = Some(INTERRUPTED.into());
                    job.finished_at = Some(Utc::now());
                    write_json(&path, &job)?;
                }
                JobState::Queued => queued.push((job.created_at, job.job_id.clone())),
                _ => {}
            }
            state.jobs.insert(job.job_id.clone(), job);
        }
        queued.sort();
        Ok(Self {
            inner: Arc::new(Inner {
                root,
                state: RwLock::new(state),
                queue: Mutex::new(queued.into_iter().map(|(_, id)| id).collect()),
                wake: Condvar::new(),
                shutdown: AtomicBool::new(false),
                workers: Mutex::new(Vec::new()),
                corpus_io: Mutex::new(()),
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.inner.root
    }

    /// Starts `count` worker threads draining the queue in FIFO order.
    pub fn spawn_workers(&self, count: usize) {
        let mut workers = lock(&self.inner.workers);
        for _ in 0..count {
            let inner = Arc::clone(&self.inner);
            workers.push(std::thread::spawn(move || worker_loop(&inner)));
        }
    }

    /// Stops the workers. Running jobs stop at their next epoch boundary
    /// and are recorded as FAILED("interrupted").
    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        self.inner.wake.notify_all();
        let handles: Vec<_> = lock(&self.inner.workers).drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.inner.state.read().unwrap_or_else(PoisonError::into_inner)
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.inner.state.write().unwrap_or_else(PoisonError::into_inner)
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.inner.root.join("jobs").join(format!("{id}.json"))
    }

    fn model_dir(&self, id: &str) -> PathBuf {
        self.inner.root.join("models").join(id)
    }

    fn corpus_dir(&self, id: &str) -> PathBuf {
        self.inner.root.join("corpora").join(id)
    }

    // ---- corpora ----

    fn publish_corpus(&self, kind: CorpusKind, item_count: usize, warnings: Vec<String>, fill: impl FnOnce(&Path) -> Result<()>) -> Result<UploadManifest> {
        let id = new_id();
        let tmp = self.inner.root.join("corpora").join(format!("{TMP_PREFIX}{id}"));
        fs::create_dir_all(&tmp)?;
        let manifest = UploadManifest {
            corpus_id: id.clone(),
            kind,
            item_count,
            warnings,
            created_at: Utc::now(),
        };
        let res = fill(&tmp).and_then(|_| write_json(&tmp.join(CORPUS_MANIFEST), &manifest));
        if let Err(e) = res {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, self.corpus_dir(&id))?;
        self.write().corpora.insert(id, manifest.clone());
        Ok(manifest)
    }

    pub fn create_speech_corpus(&self, entries: &[ManifestEntry], warnings: Vec<String>) -> Result<UploadManifest> {
        let corpus = load_speech_corpus(entries).map_err(|e| RegistryError::Validation(e.to_string()))?;
        self.publish_corpus(CorpusKind::Speech, corpus.len(), warnings, |dir| {
            corpus.write_dir(dir).map_err(|e| RegistryError::Io(e.to_string()))
        })
    }

    pub fn create_parallel_corpus(&self, source: &str, target: &str) -> Result<UploadManifest> {
        let corpus = load_parallel_corpus(source, target).map_err(|e| RegistryError::Validation(e.to_string()))?;
        self.publish_corpus(CorpusKind::Parallel, corpus.len(), Vec::new(), |dir| {
            fs::write(dir.join("source.txt"), source)?;
            fs::write(dir.join("target.txt"), target)?;
            Ok(())
        })
    }

    pub fn get_corpus(&self, id: &str) -> Result<UploadManifest> {
        self.read()
            .corpora
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("corpus {id}")))
    }

    pub fn load_speech(&self, id: &str) -> Result<SpeechCorpus> {
        let _io = lock(&self.inner.corpus_io);
        SpeechCorpus::read_dir(&self.corpus_dir(id)).map_err(|e| RegistryError::Io(e.to_string()))
    }

    pub fn load_parallel(&self, id: &str) -> Result<ParallelCorpus> {
        let dir = self.corpus_dir(id);
        let source = fs::read_to_string(dir.join("source.txt"))?;
        let target = fs::read_to_string(dir.join("target.txt"))?;
        load_parallel_corpus(&source, &target).map_err(|e| RegistryError::Io(e.to_string()))
    }

    // ---- models ----

    fn next_model_time(state: &mut State) -> DateTime<Utc> {
        let mut now = Utc::now();
        if let Some(last) = state.last_model_time {
            if now <= last {
                now = last + TimeDelta::microseconds(1);
            }
        }
        state.last_model_time = Some(now);
        now
    }

    fn write_model_locked(
        &self,
        state: &mut State,
        model: &Model,
        parent_id: Option<String>,
        metadata: ModelMetadata,
    ) -> Result<ModelRecord> {
        let id = new_id();
        let bytes = artifact::encode(model);
        let record = ModelRecord {
            model_id: id.clone(),
            kind: model.kind(),
            created_at: Self::next_model_time(state),
            parent_id,
            artifact_path: format!("models/{id}/{ARTIFACT}"),
            artifact_sha256: sha256_hex(&bytes),
            metadata,
        };
        let tmp = self.inner.root.join("models").join(format!("{TMP_PREFIX}{id}"));
        fs::create_dir_all(&tmp)?;
        fs::write(tmp.join(ARTIFACT), &bytes)?;
        write_json(&tmp.join(MANIFEST), &record)?;
        fs::rename(&tmp, self.model_dir(&id))?;
        state.models.insert(id, record.clone());
        Ok(record)
    }

    /// Stores a model outside the job flow.
    pub fn store_model(&self, model: &Model, parent_id: Option<String>, metadata: ModelMetadata) -> Result<ModelRecord> {
        let mut state = self.write();
        if let Some(p) = &parent_id {
            let parent = state.models.get(p).ok_or_else(|| RegistryError::UnknownParent(p.clone()))?;
            if parent.kind != model.kind() {
                return Err(RegistryError::KindMismatch {
                    expected: model.kind().to_string(),
                    found: parent.kind.to_string(),
                });
            }
        }
        self.write_model_locked(&mut state, model, parent_id, metadata)
    }

    pub fn get_model(&self, id: &str) -> Result<ModelRecord> {
        self.read()
            .models
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("model {id}")))
    }

    /// Newest first.
    pub fn list_models(&self) -> Vec<ModelRecord> {
        let mut out: Vec<ModelRecord> = self.read().models.values().cloned().collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| b.model_id.cmp(&a.model_id)));
        out
    }

    /// Artifact bytes after checksum verification.
    pub fn artifact_bytes(&self, id: &str) -> Result<Vec<u8>> {
        let record = self.get_model(id)?;
        let bytes = fs::read(self.inner.root.join(&record.artifact_path))
            .map_err(|_| RegistryError::CorruptArtifact(id.to_string()))?;
        if sha256_hex(&bytes) != record.artifact_sha256 {
            return Err(RegistryError::CorruptArtifact(id.to_string()));
        }
        Ok(bytes)
    }

    pub fn load_model(&self, id: &str) -> Result<(ModelRecord, Model)> {
        let bytes = self.artifact_bytes(id)?;
        let model = artifact::decode(&bytes).map_err(|_| RegistryError::CorruptArtifact(id.to_string()))?;
        Ok((self.get_model(id)?, model))
    }

    // ---- jobs ----

    pub fn submit_job(&self, spec: JobSpec) -> Result<TrainingJob> {
        let corpus = self
            .read()
            .corpora
            .get(&spec.corpus_id)
            .cloned()
            .ok_or_else(|| RegistryError::UnknownCorpus(spec.corpus_id.clone()))?;
        if corpus.kind.trains() != spec.kind {
            return Err(RegistryError::KindMismatch {
                expected: spec.kind.to_string(),
                found: format!("{:?} corpus", corpus.kind).to_lowercase(),
            });
        }
        if let Some(p) = &spec.parent_id {
            let parent = self.get_model(p).map_err(|_| RegistryError::UnknownParent(p.clone()))?;
            if parent.kind != spec.kind {
                return Err(RegistryError::KindMismatch {
                    expected: spec.kind.to_string(),
                    found: parent.kind.to_string(),
                });
            }
            if spec.kind == ModelKind::Gloss {
                return Err(RegistryError::FineTuneUnsupported);
            }
        }
        let config = match parse_config(spec.kind, &spec.config)? {
            TrainConfig::Transcription(c) => serde_json::to_value(c)?,
            TrainConfig::Gloss(c) => serde_json::to_value(c)?,
        };
        let job = TrainingJob {
            job_id: new_id(),
            kind: spec.kind,
            state: JobState::Queued,
            progress: 0.0,
            corpus_id: spec.corpus_id,
            parent_id: spec.parent_id,
            name: spec.name,
            config,
            result_model_id: None,
            error_message: None,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
        };
        {
            let mut state = self.write();
            write_json(&self.job_path(&job.job_id), &job)?;
            state.jobs.insert(job.job_id.clone(), job.clone());
        }
        lock(&self.inner.queue).push_back(job.job_id.clone());
        self.inner.wake.notify_one();
        Ok(job)
    }

    pub fn get_job(&self, id: &str) -> Result<TrainingJob> {
        self.read()
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("job {id}")))
    }

    pub fn cancel_job(&self, id: &str) -> Result<TrainingJob> {
        let mut state = self.write();
        let job = state
            .jobs
            .get(id)
            .ok_or_else(|| RegistryError::NotFound(format!("job {id}")))?;
        if job.state.is_terminal() {
            return Err(RegistryError::AlreadyTerminal {
                job_id: id.to_string(),
                state: job.state,
            });
        }
        if let Some(flag) = state.cancel.get(id) {
            flag.store(true, Ordering::SeqCst);
        }
        self.transition(&mut state, id, JobState::Cancelled, |_| {})
    }

    /// Applies a legal state change and persists it; callers hold the lock.
    fn transition(
        &self,
        state: &mut State,
        id: &str,
        next: JobState,
        edit: impl FnOnce(&mut TrainingJob),
    ) -> Result<TrainingJob> {
        let job = state
            .jobs
            .get_mut(id)
            .ok_or_else(|| RegistryError::NotFound(format!("job {id}")))?;
        assert!(job.state.can_become(next), "illegal transition {:?} -> {next:?}", job.state);
        let mut updated = job.clone();
        updated.state = next;
        let now = Utc::now();
        if next == JobState::Running {
            updated.started_at = Some(now);
        } else {
            updated.finished_at = Some(now);
        }
        edit(&mut updated);
        write_json(&self.job_path(id), &updated)?;
        *job = updated.clone();
        if next.is_terminal() {
            state.cancel.remove(id);
        }
        Ok(updated)
    }

    // ---- transcription review ----

    /// Transcribes each `(utterance_id, wav bytes)` and records the results
    /// as pending proposals.
    pub fn transcribe(&self, model_id: &str, files: Vec<(String, Vec<u8>)>, beam_width: Option<usize>) -> Result<Vec<Proposal>> {
        let (_, model) = self.load_model(model_id)?;
        let Model::Transcription(model) = model else {
            return Err(RegistryError::KindMismatch {
                expected: ModelKind::Transcription.to_string(),
                found: ModelKind::Gloss.to_string(),
            });
        };
        if files.is_empty() {
            return Err(RegistryError::Validation("no audio files supplied".into()));
        }
        let mut out = Vec::with_capacity(files.len());
        for (utterance_id, wav) in files {
            let audio = parse_wav(&wav).map_err(|e| RegistryError::Validation(format!("{utterance_id}: {e}")))?;
            let seq = model
                .transcribe(&audio, beam_width)
                .map_err(|e| RegistryError::Validation(format!("{utterance_id}: {e}")))?;
            out.push(Proposal {
                transcription_id: new_id(),
                model_id: model_id.to_string(),
                utterance_id,
                phonemes: model.inventory.render(&seq),
                wav,
            });
        }
        let mut state = self.write();
        for p in &out {
            state.proposals.insert(p.transcription_id.clone(), p.clone());
        }
        Ok(out)
    }

    /// Accepts or edits a proposal. With consent the correction joins the
    /// model's correction corpus; without it nothing is stored and any
    /// earlier consented copy is removed.
    pub fn correct(&self, transcription_id: &str, phonemes: &str, consent: bool) -> Result<CorrectionOutcome> {
        let proposal = self
            .read()
            .proposals
            .get(transcription_id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("transcription {transcription_id}")))?;
        let (_, model) = self.load_model(&proposal.model_id)?;
        let Model::Transcription(model) = model else {
            return Err(RegistryError::Io("proposal refers to a gloss model".into()));
        };
        let seq = model
            .inventory
            .encode(phonemes)
            .map_err(|e| RegistryError::Validation(e.to_string()))?;
        if seq.0.is_empty() {
            return Err(RegistryError::Validation("corrected transcript is empty".into()));
        }
        let rendered = model.inventory.render(&seq);
        let corpus_id = corrections_corpus_id(&proposal.model_id);
        let _io = lock(&self.inner.corpus_io);
        let dir = self.corpus_dir(&corpus_id);
        let (wav_path, txt_path, rec_path) = (
            dir.join("wav").join(format!("{transcription_id}.wav")),
            dir.join("txt").join(format!("{transcription_id}.txt")),
            dir.join("records").join(format!("{transcription_id}.json")),
        );
        if consent {
            for sub in ["wav", "txt", "records"] {
                fs::create_dir_all(dir.join(sub))?;
            }
            let mut inv = model.inventory.symbols().join("\n");
            inv.push('\n');
            fs::write(dir.join("inventory.txt"), inv)?;
            fs::write(&wav_path, &proposal.wav)?;
            fs::write(&txt_path, format!("{rendered}\n"))?;
            write_json(
                &rec_path,
                &CorrectionRecord {
                    transcription_id: transcription_id.to_string(),
                    model_id: proposal.model_id.clone(),
                    utterance_id: proposal.utterance_id.clone(),
                    phonemes: rendered.clone(),
                    consent: true,
                },
            )?;
        } else if rec_path.exists() {
            for p in [&wav_path, &txt_path, &rec_path] {
                fs::remove_file(p)?;
            }
        }
        self.refresh_corrections_corpus(&corpus_id)?;
        Ok(CorrectionOutcome {
            transcription_id: transcription_id.to_string(),
            model_id: proposal.model_id,
            utterance_id: proposal.utterance_id,
            phonemes: rendered,
            consent,
            corpus_id: consent.then_some(corpus_id),
        })
    }

    /// Rewrites (or removes, when empty) a correction corpus manifest.
    fn refresh_corrections_corpus(&self, corpus_id: &str) -> Result<()> {
        let dir = self.corpus_dir(corpus_id);
        let count = match fs::read_dir(dir.join("records")) {
            Ok(entries) => entries.count(),
            Err(_) => 0,
        };
        let mut state = self.write();
        if count == 0 {
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            state.corpora.remove(corpus_id);
            return Ok(());
        }
        let manifest = UploadManifest {
            corpus_id: corpus_id.to_string(),
            kind: CorpusKind::Speech,
            item_count: count,
            warnings: Vec::new(),
            created_at: state.corpora.get(corpus_id).map_or_else(Utc::now, |m| m.created_at),
        };
        write_json(&dir.join(CORPUS_MANIFEST), &manifest)?;
        state.corpora.insert(corpus_id.to_string(), manifest);
        Ok(())
    }

    pub fn list_corrections(&self, model_id: &str) -> Result<Vec<CorrectionRecord>> {
        let dir = self.corpus_dir(&corrections_corpus_id(model_id)).join("records");
        let Ok(entries) = fs::read_dir(&dir) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for entry in entries {
            out.push(read_json(&entry?.path())?);
        }
        out.sort_by(|a: &CorrectionRecord, b| a.transcription_id.cmp(&b.transcription_id));
        Ok(out)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

fn worker_loop(inner: &Arc<Inner>) {
    let registry = Registry {
        inner: Arc::clone(inner),
    };
    loop {
        let next = {
            let mut queue = lock(&inner.queue);
            loop {
                if inner.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(id) = queue.pop_front() {
                    break id;
                }
                queue = inner.wake.wait(queue).unwrap_or_else(PoisonError::into_inner);
            }
        };
        if let Err(e) = run_job(&registry, &next) {
            // Storage failures while recording the outcome leave the job
            // RUNNING on disk, which the next open reports as interrupted.
            let mut state = registry.write();
            if state.jobs.get(&next).is_some_and(|j| j.state == JobState::Running) {
                let _ = registry.transition(&mut state, &next, JobState::Failed, |j| {
                    j.error_message = Some(e.to_string());
                });
            }
        }
    }
}

struct Trained {
    model: Model,
    final_per: Option<f64>,
    config: Value,
    item_count: usize,
    corpus_kind: CorpusKind,
}

fn run_job(registry: &Registry, id: &str) -> Result<()> {
    let flag = Arc::new(AtomicBool::new(false));
    let job = {
        let mut state = registry.write();
        match state.jobs.get(id) {
            Some(j) if j.state == JobState::Queued => {}
            _ => return Ok(()),
        }
        state.cancel.insert(id.to_string(), Arc::clone(&flag));
        registry.transition(&mut state, id, JobState::Running, |_| {})?
    };

    let outcome = train(registry, &job, &flag);
    let mut state = registry.write();
    if state.jobs.get(id).map(|j| j.state) != Some(JobState::Running) {
        return Ok(());
    }
    match outcome {
        Ok(t) => {
            let metadata = ModelMetadata {
                name: job.name.clone().unwrap_or_else(|| format!("{} {}", t.model.kind(), &id[..8.min(id.len())])),
                corpus: CorpusSummary {
                    corpus_id: job.corpus_id.clone(),
                    kind: t.corpus_kind,
                    item_count: t.item_count,
                },
                config: t.config,
                final_per: t.final_per,
            };
            let record = registry.write_model_locked(&mut state, &t.model, job.parent_id.clone(), metadata)?;
            registry.transition(&mut state, id, JobState::Succeeded, |j| {
                j.progress = 1.0;
                j.result_model_id = Some(record.model_id.clone());
            })?;
        }
        Err(e) => {
            let message = if registry.inner.shutdown.load(Ordering::SeqCst) {
                INTERRUPTED.to_string()
            } else {
                e.to_string()
            };
            registry.transition(&mut state, id, JobState::Failed, |j| j.error_message = Some(message))?;
        }
    }
    Ok(())
}

fn train(registry: &Registry, job: &TrainingJob, cancel: &AtomicBool) -> Result<Trained> {
    match parse_config(job.kind, &job.config)? {
        TrainConfig::Transcription(cfg) => {
            let corpus = registry.load_speech(&job.corpus_id)?;
            let parent = match &job.parent_id {
                Some(p) => match registry.load_model(p)?.1 {
                    Model::Transcription(m) => Some(m),
                    Model::Gloss(_) => return Err(RegistryError::FineTuneUnsupported),
                },
                None => None,
            };
            let observer = |ev: lab_core::ctc::EpochEvent| {
                if cancel.load(Ordering::SeqCst) || registry.inner.shutdown.load(Ordering::SeqCst) {
                    return ControlFlow::Break(());
                }
                let mut state = registry.write();
                if let Some(j) = state.jobs.get_mut(&job.job_id) {
                    if j.state == JobState::Running {
                        j.progress = ev.epoch as f64 / ev.total_epochs as f64;
                    }
                }
                ControlFlow::Continue(())
            };
            let (model, report) = train_acoustic_with(&corpus, &cfg, parent.as_ref(), observer).map_err(|e| match e {
                CtcError::Cancelled => RegistryError::Validation("cancelled".into()),
                other => RegistryError::Validation(other.to_string()),
            })?;
            Ok(Trained {
                config: serde_json::to_value(&model.config)?,
                model: Model::Transcription(model),
                final_per: Some(report.final_per),
                item_count: corpus.len(),
                corpus_kind: CorpusKind::Speech,
            })
        }
        TrainConfig::Gloss(cfg) => {
            let corpus = registry.load_parallel(&job.corpus_id)?;
            let model = train_glosser(&corpus, &cfg.align, cfg.max_phrase_len)
                .map_err(|e| RegistryError::Validation(e.to_string()))?;
            Ok(Trained {
                config: serde_json::to_value(&model.config)?,
                model: Model::Gloss(model),
                final_per: None,
                item_count: corpus.len(),
                corpus_kind: CorpusKind::Parallel,
            })
        }
    }
}
