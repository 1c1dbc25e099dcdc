//! Corpus data model: phoneme inventories, transcripts, WAV audio and
//! line-aligned parallel text.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved CTC blank marker. Never a member of an inventory.
pub const BLANK_MARKER: &str = "<blk>";

/// Sample rates accepted by [`AudioBuffer`].
pub const SUPPORTED_SAMPLE_RATES: [u32; 5] = [8000, 16000, 22050, 44100, 48000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("not a RIFF/WAVE file")]
    NotWav,
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedSampleRate(u32),
    #[error("truncated WAV: {0}")]
    Truncated(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("sample value {0} outside [-1, 1]")]
    SampleOutOfRange(f64),
    #[error("transcript contains no tokens")]
    EmptyTranscript,
    #[error("invalid phoneme symbol {0:?}")]
    InvalidSymbol(String),
    #[error("duplicate phoneme symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("phoneme id {id} outside inventory of size {size}")]
    InvalidId { id: usize, size: usize },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("utterance {utterance_id}: {source}")]
    Item {
        utterance_id: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("line count mismatch: {0} source lines, {1} target lines")]
    LineCountMismatch(usize, usize),
    #[error("empty line {0} on {1} side")]
    EmptyLine(usize, Side),
    #[error("corpus has no sentence pairs")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(err: std::io::Error) -> Self {
        CorpusError::Io(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Target => f.write_str("target"),
        }
    }
}

/// Ordered set of phoneme symbols; a symbol's id is its insertion index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<I, S>(symbols: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inv = Self::new();
        for sym in symbols {
            let sym = sym.into();
            if inv.index.contains_key(&sym) {
                return Err(CorpusError::DuplicateSymbol(sym));
            }
            inv.insert(sym)?;
        }
        Ok(inv)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    /// Returns the id of `symbol`, appending it if unseen.
    pub fn get_or_insert(&mut self, symbol: &str) -> Result<usize, CorpusError> {
        match self.index.get(symbol) {
            Some(&id) => Ok(id),
            None => self.insert(symbol.to_string()),
        }
    }

    fn insert(&mut self, symbol: String) -> Result<usize, CorpusError> {
        validate_symbol(&symbol)?;
        let id = self.symbols.len();
        self.index.insert(symbol.clone(), id);
        self.symbols.push(symbol);
        Ok(id)
    }

    /// Renders a sequence as space-separated symbols.
    pub fn render(&self, seq: &PhonemeSequence) -> String {
        seq.ids()
            .iter()
            .map(|&id| self.symbol(id).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses `text` against this inventory without extending it.
    pub fn encode(&self, text: &str) -> Result<PhonemeSequence, CorpusError> {
        let ids = text
            .split_whitespace()
            .map(|tok| {
                self.id(tok)
                    .ok_or_else(|| CorpusError::InvalidSymbol(tok.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if ids.is_empty() {
            return Err(CorpusError::EmptyTranscript);
        }
        Ok(PhonemeSequence(ids))
    }
}

impl TryFrom<Vec<String>> for PhonemeInventory {
    type Error = CorpusError;

    fn try_from(symbols: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_symbols(symbols)
    }
}

impl From<PhonemeInventory> for Vec<String> {
    fn from(inv: PhonemeInventory) -> Self {
        inv.symbols
    }
}

fn validate_symbol(symbol: &str) -> Result<(), CorpusError> {
    if symbol.is_empty() || symbol == BLANK_MARKER || symbol.chars().any(char::is_whitespace) {
        return Err(CorpusError::InvalidSymbol(symbol.to_string()));
    }
    Ok(())
}

/// A transcript as inventory ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhonemeSequence(pub Vec<usize>);

impl PhonemeSequence {
    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, inventory: &PhonemeInventory) -> Result<(), CorpusError> {
        match self.0.iter().find(|&&id| id >= inventory.len()) {
            Some(&id) => Err(CorpusError::InvalidId {
                id,
                size: inventory.len(),
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for PhonemeSequence {
    fn from(ids: Vec<usize>) -> Self {
        PhonemeSequence(ids)
    }
}

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, CorpusError> {
        if samples.is_empty() {
            return Err(CorpusError::EmptyAudio);
        }
        if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate_hz) {
            return Err(CorpusError::UnsupportedSampleRate(sample_rate_hz));
        }
        if let Some(&bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(CorpusError::SampleOutOfRange(bad));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a PCM16 mono RIFF/WAVE container.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, CorpusError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(CorpusError::NotWav);
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(CorpusError::Truncated("fmt chunk".into()));
                }
                format = Some((
                    read_u16(bytes, body),
                    read_u16(bytes, body + 2),
                    read_u32(bytes, body + 4),
                    read_u16(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, rate, bits) =
                    format.ok_or_else(|| CorpusError::UnsupportedEncoding("data before fmt".into()))?;
                if tag != 1 || bits != 16 {
                    return Err(CorpusError::UnsupportedEncoding(format!(
                        "format tag {tag}, {bits} bits per sample"
                    )));
                }
                if channels != 1 {
                    return Err(CorpusError::UnsupportedEncoding(format!("{channels} channels")));
                }
                if body + size > bytes.len() {
                    return Err(CorpusError::Truncated(format!(
                        "data chunk declares {size} bytes, {} present",
                        bytes.len() - body
                    )));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return AudioBuffer::new(samples, rate);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    if format.is_none() {
        Err(CorpusError::Truncated("missing fmt chunk".into()))
    } else {
        Err(CorpusError::Truncated("missing data chunk".into()))
    }
}

/// Encodes audio as a canonical 44-byte-header PCM16 mono WAV.
pub fn write_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in audio.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Tokenizes a whitespace-delimited transcript, extending `inventory` with
/// unseen symbols in first-seen order. Returns the sequence and the symbols
/// that were added.
pub fn parse_transcript(
    text: &str,
    inventory: &mut PhonemeInventory,
) -> Result<(PhonemeSequence, Vec<String>), CorpusError> {
    let mut discovered = Vec::new();
    let mut ids = Vec::new();
    for tok in text.split_whitespace() {
        if !inventory.contains(tok) {
            discovered.push(tok.to_string());
        }
        ids.push(inventory.get_or_insert(tok)?);
    }
    if ids.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    Ok((PhonemeSequence(ids), discovered))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechItem {
    pub utterance_id: String,
    pub audio: AudioBuffer,
    pub transcript: PhonemeSequence,
}

/// One uploaded utterance before decoding.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub wav: Vec<u8>,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechCorpus {
    pub items: Vec<SpeechItem>,
    pub inventory: PhonemeInventory,
}

impl SpeechCorpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_duration_secs(&self) -> f64 {
        self.items.iter().map(|i| i.audio.duration_secs()).sum()
    }

    /// Writes the corpus as `wav/<id>.wav`, `txt/<id>.txt` and `inventory.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir.join("wav"))?;
        fs::create_dir_all(dir.join("txt"))?;
        let mut inv = self.inventory.symbols().join("\n");
        inv.push('\n');
        fs::write(dir.join("inventory.txt"), inv)?;
        for item in &self.items {
            fs::write(
                dir.join("wav").join(format!("{}.wav", item.utterance_id)),
                write_wav(&item.audio),
            )?;
            let mut line = self.inventory.render(&item.transcript);
            line.push('\n');
            fs::write(dir.join("txt").join(format!("{}.txt", item.utterance_id)), line)?;
        }
        Ok(())
    }

    /// Reads a corpus directory. Items come back in lexicographic id order;
    /// `inventory.txt`, when present, fixes the initial symbol ids.
    pub fn read_dir(dir: &Path) -> Result<SpeechCorpus, CorpusError> {
        let inv_path = dir.join("inventory.txt");
        let inventory = if inv_path.exists() {
            let text = fs::read_to_string(&inv_path)?;
            PhonemeInventory::from_symbols(text.lines().map(str::trim).filter(|l| !l.is_empty()))?
        } else {
            PhonemeInventory::new()
        };
        let mut ids: Vec<String> = fs::read_dir(dir.join("wav"))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".wav").map(str::to_string)
            })
            .collect();
        ids.sort();
        let mut manifest = Vec::with_capacity(ids.len());
        for id in ids {
            let wav = fs::read(dir.join("wav").join(format!("{id}.wav")))?;
            let transcript = fs::read_to_string(dir.join("txt").join(format!("{id}.txt")))
                .map_err(|e| CorpusError::Item {
                    utterance_id: id.clone(),
                    source: Box::new(e.into()),
                })?;
            manifest.push(ManifestEntry {
                utterance_id: id,
                wav,
                transcript,
            });
        }
        load_speech_corpus_with(&manifest, inventory)
    }
}

/// Builds a corpus from uploaded items, sharing one inventory across them.
pub fn load_speech_corpus(manifest: &[ManifestEntry]) -> Result<SpeechCorpus, CorpusError> {
    load_speech_corpus_with(manifest, PhonemeInventory::new())
}

/// As [`load_speech_corpus`], starting from an existing inventory.
pub fn load_speech_corpus_with(
    manifest: &[ManifestEntry],
    mut inventory: PhonemeInventory,
) -> Result<SpeechCorpus, CorpusError> {
    if manifest.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(manifest.len());
    for entry in manifest {
        if !seen.insert(entry.utterance_id.as_str()) {
            return Err(CorpusError::DuplicateId(entry.utterance_id.clone()));
        }
        let tag = |e: CorpusError| CorpusError::Item {
            utterance_id: entry.utterance_id.clone(),
            source: Box::new(e),
        };
        let audio = parse_wav(&entry.wav).map_err(tag)?;
        let (transcript, _) = parse_transcript(&entry.transcript, &mut inventory).map_err(tag)?;
        items.push(SpeechItem {
            utterance_id: entry.utterance_id.clone(),
            audio,
            transcript,
        });
    }
    Ok(SpeechCorpus { items, inventory })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl SentencePair {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(source: S, target: T) -> Self {
        Self {
            source: tokenize(source.as_ref()),
            target: tokenize(target.as_ref()),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }
}

fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Sentence-aligned source/target text; the target side may hold
/// translations or glosses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The same corpus with source and target exchanged.
    pub fn reversed(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(SentencePair::swapped).collect(),
        }
    }
}

fn content_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
}

/// Pairs line `i` of `source_text` with line `i` of `target_text`.
pub fn load_parallel_corpus(source_text: &str, target_text: &str) -> Result<ParallelCorpus, CorpusError> {
    let src = content_lines(source_text);
    let tgt = content_lines(target_text);
    if src.len() != tgt.len() {
        return Err(CorpusError::LineCountMismatch(src.len(), tgt.len()));
    }
    let mut pairs = Vec::with_capacity(src.len());
    for (n, (s, t)) in src.iter().zip(&tgt).enumerate() {
        let pair = SentencePair::new(s, t);
        if pair.source.is_empty() {
            return Err(CorpusError::EmptyLine(n + 1, Side::Source));
        }
        if pair.target.is_empty() {
            return Err(CorpusError::EmptyLine(n + 1, Side::Target));
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(ParallelCorpus { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(samples: &[i16], rate: u32, channels: u16) -> Vec<u8> {
        let data_len = samples.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn canonical_wav_two_samples() {
        let bytes = wav_bytes(&[100, -32768], 16000, 1);
        assert_eq!(bytes.len(), 48);
        let audio = parse_wav(&bytes).unwrap();
        assert_eq!(audio.len(), 2);
        assert_eq!(audio.sample_rate_hz(), 16000);
        assert_eq!(audio.samples()[1], -1.0);
        assert_eq!(audio.samples()[0], 100.0 / 32768.0);
    }

    #[test]
    fn wav_errors() {
        assert_eq!(parse_wav(b"hello world, not a wav"), Err(CorpusError::NotWav));
        assert!(matches!(
            parse_wav(&wav_bytes(&[1, 2], 16000, 2)),
            Err(CorpusError::UnsupportedEncoding(_))
        ));
        let mut truncated = wav_bytes(&[1, 2, 3, 4], 16000, 1);
        truncated.truncate(46);
        assert!(matches!(parse_wav(&truncated), Err(CorpusError::Truncated(_))));
        let mut float = wav_bytes(&[1, 2], 16000, 1);
        float[20] = 3;
        assert!(matches!(parse_wav(&float), Err(CorpusError::UnsupportedEncoding(_))));
        assert_eq!(
            parse_wav(&wav_bytes(&[1], 12345, 1)),
            Err(CorpusError::UnsupportedSampleRate(12345))
        );
    }

    #[test]
    fn wav_skips_unknown_chunks() {
        let plain = wav_bytes(&[7, 8, 9], 8000, 1);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        assert_eq!(parse_wav(&bytes).unwrap(), parse_wav(&plain).unwrap());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let bytes = wav_bytes(&[0, 1, -1, 32767, -32768, 1234], 22050, 1);
        let audio = parse_wav(&bytes).unwrap();
        assert_eq!(write_wav(&audio), bytes);
    }

    #[test]
    fn transcript_first_seen_order() {
        let mut inv = PhonemeInventory::new();
        let (seq, found) = parse_transcript("p a t a", &mut inv).unwrap();
        assert_eq!(seq.ids(), &[0, 1, 2, 1]);
        assert_eq!(inv.symbols(), &["p", "a", "t"]);
        assert_eq!(found, vec!["p", "a", "t"]);

        let mut inv = PhonemeInventory::new();
        let (seq, _) = parse_transcript("a a a", &mut inv).unwrap();
        assert_eq!(seq.ids(), &[0, 0, 0]);
        assert_eq!(inv.symbols(), &["a"]);

        assert_eq!(
            parse_transcript("  ", &mut PhonemeInventory::new()),
            Err(CorpusError::EmptyTranscript)
        );
    }

    #[test]
    fn inventory_rejects_reserved_symbols() {
        assert!(PhonemeInventory::from_symbols(["a", "<blk>"]).is_err());
        assert_eq!(
            PhonemeInventory::from_symbols(["a", "a"]),
            Err(CorpusError::DuplicateSymbol("a".into()))
        );
        assert!(PhonemeInventory::from_symbols([""]).is_err());
        let inv = PhonemeInventory::from_symbols(["a", "b"]).unwrap();
        assert!(PhonemeSequence(vec![0, 2]).validate(&inv).is_err());
    }

    fn entry(id: &str, text: &str) -> ManifestEntry {
        ManifestEntry {
            utterance_id: id.into(),
            wav: wav_bytes(&[1, 2, 3], 16000, 1),
            transcript: text.into(),
        }
    }

    #[test]
    fn speech_corpus_loading() {
        let corpus = load_speech_corpus(&[entry("u1", "a b"), entry("u2", "b c"), entry("u3", "d")]).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.inventory.symbols(), &["a", "b", "c", "d"]);
        assert_eq!(corpus.items[2].utterance_id, "u3");

        assert_eq!(
            load_speech_corpus(&[entry("u1", "a"), entry("u1", "b")]),
            Err(CorpusError::DuplicateId("u1".into()))
        );
        match load_speech_corpus(&[entry("u1", "a"), entry("u2", " ")]) {
            Err(CorpusError::Item { utterance_id, source }) => {
                assert_eq!(utterance_id, "u2");
                assert_eq!(*source, CorpusError::EmptyTranscript);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(load_speech_corpus(&[]), Err(CorpusError::EmptyManifest));
    }

    #[test]
    fn parallel_corpus_loading() {
        let c = load_parallel_corpus("das Haus\n", "the house\n").unwrap();
        assert_eq!(c.pairs[0].source, vec!["das", "Haus"]);
        assert_eq!(c.pairs[0].target, vec!["the", "house"]);

        let src = "ti kanni\nto spiti\nena vivlio\n";
        let tgt = "what do.2SG\nthe house\na book\n";
        assert_eq!(load_parallel_corpus(src, tgt).unwrap().len(), 3);

        assert_eq!(
            load_parallel_corpus("a\nb\nc", "x\ny"),
            Err(CorpusError::LineCountMismatch(3, 2))
        );
        assert_eq!(
            load_parallel_corpus("a\n \nc", "x\ny\nz"),
            Err(CorpusError::EmptyLine(2, Side::Source))
        );
    }
}
