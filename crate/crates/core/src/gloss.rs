//! Phrase extraction from word alignments, relative-frequency phrase tables
//! and ranked word-by-word gloss suggestions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align_corpus, AlignConfig, AlignError, Alignment, TranslationTable};
use crate::corpus::{ParallelCorpus, SentencePair};

/// Gloss emitted for a token neither table knows.
pub const UNK_GLOSS: &str = "<unk>";
pub const DEFAULT_MAX_PHRASE_LEN: usize = 3;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlossError {
    #[error("link ({f}, {e}) outside a {f_len}x{e_len} sentence pair")]
    IndexOutOfBounds {
        f: usize,
        e: usize,
        f_len: usize,
        e_len: usize,
    },
    #[error("{pairs} sentence pairs but {alignments} alignments")]
    LengthMismatch { pairs: usize, alignments: usize },
    #[error("max phrase length must be positive")]
    InvalidMaxLen,
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Half-open source and target spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanPair {
    pub f_start: usize,
    pub f_end: usize,
    pub e_start: usize,
    pub e_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhrasePair {
    pub f_span: Vec<String>,
    pub e_span: Vec<String>,
    pub count: f64,
}

fn check_bounds(f_len: usize, e_len: usize, alignment: &Alignment) -> Result<(), GlossError> {
    match alignment.links.iter().find(|&&(f, e)| f >= f_len || e >= e_len) {
        Some(&(f, e)) => Err(GlossError::IndexOutOfBounds { f, e, f_len, e_len }),
        None => Ok(()),
    }
}

/// Every span pair consistent with `alignment`, both sides at most
/// `max_len` long, including extensions over unaligned source words.
pub fn consistent_spans(
    f_len: usize,
    e_len: usize,
    alignment: &Alignment,
    max_len: usize,
) -> Result<BTreeSet<SpanPair>, GlossError> {
    check_bounds(f_len, e_len, alignment)?;
    let mut f_aligned = vec![false; f_len];
    for &(f, _) in &alignment.links {
        f_aligned[f] = true;
    }
    let mut out = BTreeSet::new();
    for e_start in 0..e_len {
        for e_end in e_start..e_len.min(e_start + max_len) {
            let inside = || alignment.links.iter().filter(|&&(_, e)| e >= e_start && e <= e_end);
            let (Some(f_min), Some(f_max)) = (inside().map(|l| l.0).min(), inside().map(|l| l.0).max()) else {
                continue;
            };
            let leaks = alignment
                .links
                .iter()
                .any(|&(f, e)| f >= f_min && f <= f_max && (e < e_start || e > e_end));
            if leaks || f_max - f_min + 1 > max_len {
                continue;
            }
            let mut fs = f_min;
            loop {
                let mut fe = f_max;
                while fe - fs < max_len {
                    out.insert(SpanPair {
                        f_start: fs,
                        f_end: fe + 1,
                        e_start,
                        e_end: e_end + 1,
                    });
                    fe += 1;
                    if fe >= f_len || f_aligned[fe] {
                        break;
                    }
                }
                if fs == 0 || f_aligned[fs - 1] || f_max + 1 - (fs - 1) > max_len {
                    break;
                }
                fs -= 1;
            }
        }
    }
    Ok(out)
}

/// Phrase pairs of one sentence pair, with occurrence counts.
pub fn extract_phrases(
    pair: &SentencePair,
    alignment: &Alignment,
    max_len: usize,
) -> Result<Vec<PhrasePair>, GlossError> {
    let mut counts: BTreeMap<(Vec<String>, Vec<String>), f64> = BTreeMap::new();
    for span in consistent_spans(pair.source.len(), pair.target.len(), alignment, max_len)? {
        let f = pair.source[span.f_start..span.f_end].to_vec();
        let e = pair.target[span.e_start..span.e_end].to_vec();
        *counts.entry((f, e)).or_insert(0.0) += 1.0;
    }
    Ok(counts
        .into_iter()
        .map(|((f_span, e_span), count)| PhrasePair { f_span, e_span, count })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub e_span: Vec<String>,
    pub phi_e_given_f: f64,
    pub phi_f_given_e: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "PhraseTableRepr", from = "PhraseTableRepr")]
pub struct PhraseTable {
    entries: BTreeMap<Vec<String>, Vec<PhraseEntry>>,
    pub max_phrase_len: usize,
}

#[derive(Serialize, Deserialize)]
struct PhraseRow {
    f_span: Vec<String>,
    translations: Vec<PhraseEntry>,
}

#[derive(Serialize, Deserialize)]
struct PhraseTableRepr {
    max_phrase_len: usize,
    entries: Vec<PhraseRow>,
}

impl From<PhraseTable> for PhraseTableRepr {
    fn from(t: PhraseTable) -> Self {
        Self {
            max_phrase_len: t.max_phrase_len,
            entries: t
                .entries
                .into_iter()
                .map(|(f_span, translations)| PhraseRow { f_span, translations })
                .collect(),
        }
    }
}

impl From<PhraseTableRepr> for PhraseTable {
    fn from(r: PhraseTableRepr) -> Self {
        Self {
            max_phrase_len: r.max_phrase_len,
            entries: r.entries.into_iter().map(|row| (row.f_span, row.translations)).collect(),
        }
    }
}

impl PhraseTable {
    /// Relative-frequency estimates in both directions from raw counts.
    pub fn from_counts(counts: &BTreeMap<(Vec<String>, Vec<String>), f64>, max_phrase_len: usize) -> Self {
        let mut f_totals: BTreeMap<&[String], f64> = BTreeMap::new();
        let mut e_totals: BTreeMap<&[String], f64> = BTreeMap::new();
        for ((f, e), &c) in counts {
            *f_totals.entry(f).or_insert(0.0) += c;
            *e_totals.entry(e).or_insert(0.0) += c;
        }
        let mut entries: BTreeMap<Vec<String>, Vec<PhraseEntry>> = BTreeMap::new();
        for ((f, e), &c) in counts {
            entries.entry(f.clone()).or_default().push(PhraseEntry {
                e_span: e.clone(),
                phi_e_given_f: c / f_totals[f.as_slice()],
                phi_f_given_e: c / e_totals[e.as_slice()],
                count: c,
            });
        }
        for list in entries.values_mut() {
            list.sort_by(|a, b| {
                b.phi_e_given_f
                    .total_cmp(&a.phi_e_given_f)
                    .then_with(|| a.e_span.cmp(&b.e_span))
            });
        }
        Self {
            entries,
            max_phrase_len,
        }
    }

    pub fn get(&self, f_span: &[String]) -> Option<&[PhraseEntry]> {
        self.entries.get(f_span).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<String>, &Vec<PhraseEntry>)> {
        self.entries.iter()
    }

    /// `f_span ||| e_span ||| phi_e_given_f phi_f_given_e count` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (f, list) in &self.entries {
            for entry in list {
                out.push_str(&format!(
                    "{} ||| {} ||| {} {} {}\n",
                    f.join(" "),
                    entry.e_span.join(" "),
                    entry.phi_e_given_f,
                    entry.phi_f_given_e,
                    entry.count
                ));
            }
        }
        out
    }
}

pub fn build_phrase_table(
    corpus: &ParallelCorpus,
    alignments: &[Alignment],
    max_len: usize,
) -> Result<PhraseTable, GlossError> {
    if max_len == 0 {
        return Err(GlossError::InvalidMaxLen);
    }
    if corpus.len() != alignments.len() {
        return Err(GlossError::LengthMismatch {
            pairs: corpus.len(),
            alignments: alignments.len(),
        });
    }
    let mut counts: BTreeMap<(Vec<String>, Vec<String>), f64> = BTreeMap::new();
    for (pair, alignment) in corpus.pairs.iter().zip(alignments) {
        for phrase in extract_phrases(pair, alignment, max_len)? {
            *counts.entry((phrase.f_span, phrase.e_span)).or_insert(0.0) += phrase.count;
        }
    }
    Ok(PhraseTable::from_counts(&counts, max_len))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossCandidate {
    pub gloss: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossSuggestion {
    pub token_index: usize,
    pub candidates: Vec<GlossCandidate>,
    /// (start, length) of the source tokens this suggestion covers.
    pub covered_span: (usize, usize),
}

/// Alignment settings plus the phrase length cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlossConfig {
    #[serde(flatten)]
    pub align: AlignConfig,
    pub max_phrase_len: usize,
}

impl Default for GlossConfig {
    fn default() -> Self {
        Self {
            align: AlignConfig::default(),
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossModel {
    pub phrase_table: PhraseTable,
    pub translation_table: TranslationTable,
    pub config: GlossConfig,
}

impl GlossModel {
    fn word_candidates(&self, token: &str, k: usize) -> Vec<GlossCandidate> {
        let key = [token.to_string()];
        if let Some(list) = self.phrase_table.get(&key) {
            return list
                .iter()
                .take(k)
                .map(|p| GlossCandidate {
                    gloss: p.e_span.clone(),
                    score: p.phi_e_given_f,
                })
                .collect();
        }
        self.translation_table
            .ranked(token)
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .take(k)
            .map(|(e, p)| GlossCandidate {
                gloss: vec![e.to_string()],
                score: p,
            })
            .collect()
    }

    /// A multi-word phrase whose best translation is just its words' best
    /// glosses side by side adds nothing over word-by-word output.
    fn is_compositional(&self, span: &[String], best: &PhraseEntry) -> bool {
        let mut joined = Vec::new();
        for tok in span {
            match self.word_candidates(tok, 1).into_iter().next() {
                Some(c) => joined.extend(c.gloss),
                None => return false,
            }
        }
        joined == best.e_span
    }
}

/// Left-to-right gloss suggestions covering every source token once.
///
/// At each position the longest phrase-table span is taken when its best
/// translation is not simply the concatenation of its words' glosses;
/// otherwise the single token is glossed from the phrase table, then the
/// lexical table, then as [`UNK_GLOSS`] with score 0.
pub fn suggest_glosses(source_tokens: &[String], model: &GlossModel, k: usize) -> Vec<GlossSuggestion> {
    let k = k.max(1);
    let max_len = model.phrase_table.max_phrase_len.max(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < source_tokens.len() {
        let longest = max_len.min(source_tokens.len() - i);
        let phrase = (2..=longest).rev().find_map(|len| {
            let span = &source_tokens[i..i + len];
            let list = model.phrase_table.get(span)?;
            (!model.is_compositional(span, &list[0])).then_some((len, list))
        });
        let (len, candidates) = match phrase {
            Some((len, list)) => (
                len,
                list.iter()
                    .take(k)
                    .map(|p| GlossCandidate {
                        gloss: p.e_span.clone(),
                        score: p.phi_e_given_f,
                    })
                    .collect(),
            ),
            None => {
                let mut c = model.word_candidates(&source_tokens[i], k);
                if c.is_empty() {
                    c.push(GlossCandidate {
                        gloss: vec![UNK_GLOSS.to_string()],
                        score: 0.0,
                    });
                }
                (1, c)
            }
        };
        out.push(GlossSuggestion {
            token_index: i,
            candidates,
            covered_span: (i, len),
        });
        i += len;
    }
    out
}

/// Full pipeline: Model 1, Model 2, both directions, symmetrize, extract,
/// score.
pub fn train_glosser(corpus: &ParallelCorpus, cfg: &AlignConfig, max_phrase_len: usize) -> Result<GlossModel, GlossError> {
    if corpus.is_empty() {
        return Err(AlignError::EmptyCorpus.into());
    }
    let aligned = align_corpus(corpus, cfg)?;
    let phrase_table = build_phrase_table(corpus, &aligned.alignments, max_phrase_len)?;
    Ok(GlossModel {
        phrase_table,
        translation_table: aligned.forward.0,
        config: GlossConfig {
            align: cfg.clone(),
            max_phrase_len,
        },
    })
}
