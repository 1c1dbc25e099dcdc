//! `lab`: batch access to the annotation pipelines and the HTTP service.
//!
//! Every subcommand prints a one-line `key=value` summary as its last line
//! on stdout. Exit status is 0 on success, 1 on a domain error and 2 on a
//! usage error.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lab_core::align::{align_corpus, AlignConfig, Symmetrization};
use lab_core::artifact::{self, Model};
use lab_core::corpus::{load_parallel_corpus, parse_wav, PhonemeInventory, SpeechCorpus};
use lab_core::ctc::{corpus_error_rate, train_acoustic, AcousticModel, CtcConfig};
use lab_core::dsp::{log_mel, FeatureConfig};
use lab_core::gloss::{suggest_glosses, train_glosser, GlossModel, DEFAULT_K, DEFAULT_MAX_PHRASE_LEN};
use lab_service::api::GlossResult;
use lab_service::{ServeConfig, ENV_ADDR, ENV_STORE, ENV_WORKERS};

#[derive(Parser)]
#[command(name = "lab", version, about = "Phoneme transcription and gloss suggestion tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
    /// Train a phoneme recognizer on a speech corpus directory.
    TrainAsr(TrainAsrArgs),
    /// Transcribe WAV files with a trained recognizer.
    Transcribe(TranscribeArgs),
    /// Continue training an existing recognizer on a speech corpus.
    FineTune(FineTuneArgs),
    /// Train a gloss model on a line-aligned parallel corpus.
    TrainGloss(TrainGlossArgs),
    /// Suggest glosses for each line of a source text, as JSON lines.
    Gloss(GlossArgs),
    /// Word-align a parallel corpus and write Pharaoh `i-j` lines.
    Align(AlignArgs),
    /// Dump unnormalized log-mel features of a WAV file as CSV.
    Features(FeaturesArgs),
    /// Pooled phoneme error rate between line-aligned transcript files.
    EvalPer(EvalPerArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Bind address.
    #[arg(long, env = ENV_ADDR, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Store directory.
    #[arg(long, env = ENV_STORE, default_value = "store")]
    store: PathBuf,
    /// Training worker threads.
    #[arg(long, env = ENV_WORKERS, default_value_t = 1)]
    workers: usize,
    /// Path prefix for every endpoint, e.g. /api.
    #[arg(long, default_value = "")]
    prefix: String,
}

/// Feature extraction settings; unset flags keep their defaults.
#[derive(Args, Clone)]
struct FeatureArgs {
    /// Analysis window length in ms.
    #[arg(long)]
    win_ms: Option<f64>,
    /// Frame hop in ms.
    #[arg(long)]
    hop_ms: Option<f64>,
    /// FFT size; defaults to the window length rounded up to a power of two.
    #[arg(long)]
    n_fft: Option<usize>,
    /// Number of mel bands.
    #[arg(long)]
    n_mels: Option<usize>,
    /// Lowest filterbank frequency.
    #[arg(long)]
    fmin_hz: Option<f64>,
    /// Highest filterbank frequency; defaults to Nyquist.
    #[arg(long)]
    fmax_hz: Option<f64>,
}

impl FeatureArgs {
    fn apply(&self, mut cfg: FeatureConfig) -> FeatureConfig {
        if let Some(v) = self.win_ms {
            cfg.win_ms = v;
        }
        if let Some(v) = self.hop_ms {
            cfg.hop_ms = v;
        }
        if self.n_fft.is_some() {
            cfg.n_fft = self.n_fft;
        }
        if let Some(v) = self.n_mels {
            cfg.n_mels = v;
        }
        if let Some(v) = self.fmin_hz {
            cfg.fmin_hz = v;
        }
        if self.fmax_hz.is_some() {
            cfg.fmax_hz = self.fmax_hz;
        }
        cfg
    }
}

/// Optimizer settings; unset flags keep their defaults.
#[derive(Args, Clone)]
struct OptimArgs {
    /// Passes over the corpus.
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Adam first-moment decay.
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator epsilon.
    #[arg(long)]
    adam_epsilon: Option<f64>,
    /// Utterances per update.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Global gradient norm clip.
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    /// Seed for initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
}

impl OptimArgs {
    fn apply(&self, mut cfg: CtcConfig) -> CtcConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(epochs, learning_rate, beta1, beta2, adam_epsilon, batch_size, grad_clip_norm, seed);
        cfg
    }
}

#[derive(Args)]
struct TrainAsrArgs {
    /// Speech corpus directory (wav/, txt/, optional inventory.txt).
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Recurrent hidden units.
    #[arg(long)]
    hidden_size: Option<usize>,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct FineTuneArgs {
    /// Model to start from.
    #[arg(long)]
    model: PathBuf,
    /// Speech corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct TranscribeArgs {
    /// Recognizer model file.
    #[arg(long)]
    model: PathBuf,
    /// Prefix beam width; 1 or unset decodes greedily.
    #[arg(long)]
    beam_width: Option<usize>,
    /// Write `<id>\t<phonemes>` lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// WAV files; each id is the file stem.
    #[arg(required = true)]
    wavs: Vec<PathBuf>,
}

/// Alignment settings.
#[derive(Args, Clone)]
struct AlignOpts {
    /// IBM Model 1 EM iterations.
    #[arg(long, default_value_t = AlignConfig::default().iterations_m1)]
    iterations_m1: usize,
    /// IBM Model 2 EM iterations.
    #[arg(long, default_value_t = AlignConfig::default().iterations_m2)]
    iterations_m2: usize,
    /// Disable the NULL source word.
    #[arg(long)]
    no_null: bool,
    /// intersection, union or grow-diag-final.
    #[arg(long, default_value_t = Symmetrization::default())]
    symmetrization: Symmetrization,
}

impl AlignOpts {
    fn config(&self) -> AlignConfig {
        AlignConfig {
            iterations_m1: self.iterations_m1,
            iterations_m2: self.iterations_m2,
            use_null: !self.no_null,
            symmetrization: self.symmetrization,
        }
    }
}

#[derive(Args)]
struct TrainGlossArgs {
    /// Source-language text, one sentence per line.
    #[arg(long)]
    source: PathBuf,
    /// Target-language text, line-aligned with the source.
    #[arg(long)]
    target: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Longest phrase extracted, in words.
    #[arg(long, default_value_t = DEFAULT_MAX_PHRASE_LEN)]
    max_phrase_len: usize,
    /// Also write the phrase table as TSV.
    #[arg(long)]
    phrase_table: Option<PathBuf>,
    #[command(flatten)]
    align: AlignOpts,
}

#[derive(Args)]
struct GlossArgs {
    /// Gloss model file.
    #[arg(long)]
    model: PathBuf,
    /// Source text, one whitespace-tokenized sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Candidates per token.
    #[arg(long, default_value_t = DEFAULT_K, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    k: usize,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// Source-language text, one sentence per line.
    #[arg(long)]
    source: PathBuf,
    /// Target-language text, line-aligned with the source.
    #[arg(long)]
    target: PathBuf,
    /// Write alignments here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the forward translation table as TSV.
    #[arg(long)]
    ttable: Option<PathBuf>,
    #[command(flatten)]
    align: AlignOpts,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input WAV file.
    #[arg(long)]
    wav: PathBuf,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct EvalPerArgs {
    /// Reference transcripts, one per line.
    #[arg(long)]
    r#ref: PathBuf,
    /// Hypothesis transcripts, line-aligned with the reference.
    #[arg(long)]
    hyp: PathBuf,
}

type Result<T> = std::result::Result<T, String>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(p) => write(p, data.as_bytes()),
        None => {
            print!("{data}");
            Ok(())
        }
    }
}

fn load_acoustic(path: &Path) -> Result<AcousticModel> {
    match artifact::decode(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))? {
        Model::Transcription(m) => Ok(m),
        Model::Gloss(_) => Err(format!("{} is a gloss model", path.display())),
    }
}

fn load_gloss(path: &Path) -> Result<GlossModel> {
    match artifact::decode(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))? {
        Model::Gloss(m) => Ok(m),
        Model::Transcription(_) => Err(format!("{} is a transcription model", path.display())),
    }
}

fn load_speech(dir: &Path) -> Result<SpeechCorpus> {
    SpeechCorpus::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn train_summary(out: &Path, corpus: &SpeechCorpus, report: &lab_core::ctc::TrainReport) -> String {
    let loss = report.epoch_losses.last().map_or("nan".to_string(), |l| format!("{l:.6}"));
    format!(
        "model={} utterances={} epochs={} final_loss={loss} per={:.4}",
        out.display(),
        corpus.len(),
        report.epochs,
        report.final_per
    )
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Serve(a) => {
            let cfg = ServeConfig {
                addr: a.addr,
                store: a.store,
                workers: a.workers,
                prefix: a.prefix,
            };
            lab_service::run_until_signal(&cfg, |addr| println!("listening addr={addr}"))
                .map_err(|e| e.to_string())?;
            Ok("stopped".into())
        }
        Command::TrainAsr(a) => {
            let corpus = load_speech(&a.corpus)?;
            let mut cfg = a.optim.apply(CtcConfig::default());
            if let Some(h) = a.hidden_size {
                cfg.hidden_size = h;
            }
            cfg.features = a.features.apply(cfg.features);
            let (model, report) = train_acoustic(&corpus, &cfg, None).map_err(|e| e.to_string())?;
            write(&a.out, &artifact::encode(&Model::Transcription(model)))?;
            Ok(train_summary(&a.out, &corpus, &report))
        }
        Command::FineTune(a) => {
            let base = load_acoustic(&a.model)?;
            let corpus = load_speech(&a.corpus)?;
            let cfg = a.optim.apply(base.config.clone());
            let (model, report) = train_acoustic(&corpus, &cfg, Some(&base)).map_err(|e| e.to_string())?;
            write(&a.out, &artifact::encode(&Model::Transcription(model)))?;
            Ok(format!("{} parent={}", train_summary(&a.out, &corpus, &report), a.model.display()))
        }
        Command::Transcribe(a) => {
            let model = load_acoustic(&a.model)?;
            let mut out = String::new();
            let mut phonemes = 0;
            for path in &a.wavs {
                let audio = parse_wav(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
                let seq = model
                    .transcribe(&audio, a.beam_width)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                phonemes += seq.0.len();
                out.push_str(&format!("{}\t{}\n", stem(path), model.inventory.render(&seq)));
            }
            emit(a.out.as_deref(), &out)?;
            Ok(format!("utterances={} phonemes={phonemes}", a.wavs.len()))
        }
        Command::TrainGloss(a) => {
            let corpus = load_parallel_corpus(&read_text(&a.source)?, &read_text(&a.target)?).map_err(|e| e.to_string())?;
            let model = train_glosser(&corpus, &a.align.config(), a.max_phrase_len).map_err(|e| e.to_string())?;
            if let Some(p) = &a.phrase_table {
                write(p, model.phrase_table.to_tsv().as_bytes())?;
            }
            let phrases = model.phrase_table.len();
            write(&a.out, &artifact::encode(&Model::Gloss(model)))?;
            Ok(format!("model={} pairs={} source_phrases={phrases}", a.out.display(), corpus.len()))
        }
        Command::Gloss(a) => {
            let model = load_gloss(&a.model)?;
            let text = read_text(&a.input)?;
            let mut out = String::new();
            let mut tokens = 0;
            let mut lines = 0;
            for line in text.lines() {
                let source: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                tokens += source.len();
                lines += 1;
                let suggestions = suggest_glosses(&source, &model, a.k);
                let record = GlossResult { source, suggestions };
                out.push_str(&serde_json::to_string(&record).map_err(|e| e.to_string())?);
                out.push('\n');
            }
            emit(a.out.as_deref(), &out)?;
            Ok(format!("sentences={lines} tokens={tokens} k={}", a.k))
        }
        Command::Align(a) => {
            let corpus = load_parallel_corpus(&read_text(&a.source)?, &read_text(&a.target)?).map_err(|e| e.to_string())?;
            let aligned = align_corpus(&corpus, &a.align.config()).map_err(|e| e.to_string())?;
            let mut out = String::new();
            let mut links = 0;
            for al in &aligned.alignments {
                links += al.links.len();
                out.push_str(&al.to_pharaoh());
                out.push('\n');
            }
            if let Some(p) = &a.ttable {
                write(p, aligned.forward.0.to_tsv().as_bytes())?;
            }
            emit(a.out.as_deref(), &out)?;
            Ok(format!(
                "pairs={} links={links} symmetrization={}",
                corpus.len(),
                a.align.symmetrization
            ))
        }
        Command::Features(a) => {
            let audio = parse_wav(&read(&a.wav)?).map_err(|e| format!("{}: {e}", a.wav.display()))?;
            let feats = log_mel(&audio, &a.features.apply(FeatureConfig::default())).map_err(|e| e.to_string())?;
            emit(a.out.as_deref(), &feats.to_csv())?;
            Ok(format!(
                "frames={} dims={} frame_rate_hz={}",
                feats.n_frames(),
                feats.n_dims(),
                feats.frame_rate_hz()
            ))
        }
        Command::EvalPer(a) => {
            let (r, h) = (read_text(&a.r#ref)?, read_text(&a.hyp)?);
            let (r, h): (Vec<&str>, Vec<&str>) = (r.lines().collect(), h.lines().collect());
            if r.len() != h.len() {
                return Err(format!("{} reference lines but {} hypothesis lines", r.len(), h.len()));
            }
            let mut inv = PhonemeInventory::new();
            let mut intern = |line: &str| -> Result<Vec<usize>> {
                line.split_whitespace()
                    .map(|s| inv.get_or_insert(s).map_err(|e| e.to_string()))
                    .collect()
            };
            let mut pairs = Vec::with_capacity(r.len());
            for (rl, hl) in r.iter().zip(&h) {
                pairs.push((intern(rl)?, intern(hl)?));
            }
            let per = corpus_error_rate(pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice()))).map_err(|e| e.to_string())?;
            Ok(format!("PER {per:.4}"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
