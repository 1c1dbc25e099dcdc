//! Word alignment with IBM Models 1 and 2, trained by EM, plus
//! bidirectional symmetrization heuristics.
//!
//! Source words are `f`, target words are `e`; a model explains each target
//! word by one source position (or the NULL word).  Training is fully
//! deterministic: tables start uniform and vocabularies are ordered.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParallelCorpus, SentencePair};

pub const NULL_TOKEN: &str = "<null>";
/// Probability used for unseen word pairs at inference time.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("parallel corpus is empty")]
    EmptyCorpus,
    #[error("unknown symmetrization heuristic {0:?}")]
    UnknownHeuristic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetrization {
    Intersection,
    Union,
    #[default]
    GrowDiagFinal,
}

impl FromStr for Symmetrization {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intersection" => Ok(Self::Intersection),
            "union" => Ok(Self::Union),
            "grow-diag-final" => Ok(Self::GrowDiagFinal),
            other => Err(AlignError::UnknownHeuristic(other.to_string())),
        }
    }
}

impl fmt::Display for Symmetrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Intersection => "intersection",
            Self::Union => "union",
            Self::GrowDiagFinal => "grow-diag-final",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub iterations_m1: usize,
    pub iterations_m2: usize,
    pub use_null: bool,
    pub symmetrization: Symmetrization,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            iterations_m1: 20,
            iterations_m2: 10,
            use_null: true,
            symmetrization: Symmetrization::GrowDiagFinal,
        }
    }
}

/// Lexical translation probabilities `t(e | f)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TranslationTable {
    table: BTreeMap<String, BTreeMap<String, f64>>,
    /// Whether the table was trained with a NULL source word.
    pub use_null: bool,
}

impl TranslationTable {
    pub fn new(use_null: bool) -> Self {
        Self {
            table: BTreeMap::new(),
            use_null,
        }
    }

    pub fn set(&mut self, f: &str, e: &str, p: f64) {
        self.table.entry(f.to_string()).or_default().insert(e.to_string(), p);
    }

    /// Stored probability, 0 when absent.
    pub fn prob(&self, f: &str, e: &str) -> f64 {
        self.table.get(f).and_then(|row| row.get(e)).copied().unwrap_or(0.0)
    }

    /// Probability with the inference floor applied.
    pub fn floored(&self, f: &str, e: &str) -> f64 {
        self.prob(f, e).max(PROB_FLOOR)
    }

    pub fn contains_source(&self, f: &str) -> bool {
        self.table.contains_key(f)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn row(&self, f: &str) -> Option<&BTreeMap<String, f64>> {
        self.table.get(f)
    }

    /// Candidates for `f` by descending probability, ties by `e`.
    pub fn ranked(&self, f: &str) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self
            .table
            .get(f)
            .map(|row| row.iter().map(|(e, &p)| (e.as_str(), p)).collect())
            .unwrap_or_default();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// `argmax_e t(e | f)`, smallest `e` on ties.
    pub fn best(&self, f: &str) -> Option<&str> {
        self.ranked(f).first().map(|(e, _)| *e)
    }

    pub fn row_sums(&self) -> impl Iterator<Item = (&str, f64)> {
        self.table.iter().map(|(f, row)| (f.as_str(), row.values().sum()))
    }

    /// `f<TAB>e<TAB>prob`, sorted by `f` then descending probability.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for f in self.table.keys() {
            for (e, p) in self.ranked(f) {
                out.push_str(&format!("{f}\t{e}\t{p}\n"));
            }
        }
        out
    }
}

/// Position probabilities `q(i | j, l, m)` with `i = 0` the NULL word and
/// `i, j` 1-based.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionTable {
    #[serde(with = "distortion_entries")]
    q: HashMap<(usize, usize, usize, usize), f64>,
    pub use_null: bool,
}

mod distortion_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        q: &HashMap<(usize, usize, usize, usize), f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let sorted: BTreeMap<_, _> = q.iter().map(|(k, v)| (*k, *v)).collect();
        let rows: Vec<(usize, usize, usize, usize, f64)> =
            sorted.into_iter().map(|((i, j, l, m), p)| (i, j, l, m, p)).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<HashMap<(usize, usize, usize, usize), f64>, D::Error> {
        let rows: Vec<(usize, usize, usize, usize, f64)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(i, j, l, m, p)| ((i, j, l, m), p)).collect())
    }
}

impl DistortionTable {
    pub fn new(use_null: bool) -> Self {
        Self {
            q: HashMap::new(),
            use_null,
        }
    }

    /// Uniform over the admissible source positions for every `(j, l, m)`
    /// occurring in `corpus`.
    pub fn uniform(corpus: &ParallelCorpus, use_null: bool) -> Self {
        let mut table = Self::new(use_null);
        let shapes: BTreeSet<(usize, usize)> = corpus.pairs.iter().map(|p| (p.source.len(), p.target.len())).collect();
        for (l, m) in shapes {
            let positions = table.positions(l);
            for j in 1..=m {
                for i in positions.clone() {
                    table.q.insert((i, j, l, m), 1.0 / positions.clone().count() as f64);
                }
            }
        }
        table
    }

    fn positions(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        if self.use_null {
            0..=l
        } else {
            1..=l
        }
    }

    /// `q(i | j, l, m)`; uniform for sentence shapes never seen in training.
    pub fn prob(&self, i: usize, j: usize, l: usize, m: usize) -> f64 {
        match self.q.get(&(i, j, l, m)) {
            Some(&p) => p,
            None if self.has_shape(j, l, m) => 0.0,
            None => 1.0 / self.positions(l).count() as f64,
        }
    }

    fn has_shape(&self, j: usize, l: usize, m: usize) -> bool {
        let first = *self.positions(l).start();
        self.q.contains_key(&(first, j, l, m))
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, m: usize, p: f64) {
        self.q.insert((i, j, l, m), p);
    }

    /// Sum of `q(· | j, l, m)` for every stored `(j, l, m)`.
    pub fn condition_sums(&self) -> BTreeMap<(usize, usize, usize), f64> {
        let mut sums = BTreeMap::new();
        for (&(_, j, l, m), &p) in &self.q {
            *sums.entry((j, l, m)).or_insert(0.0) += p;
        }
        sums
    }
}

/// Alignment links `(f_index, e_index)`, 0-based, NULL links left out.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub links: BTreeSet<(usize, usize)>,
}

impl Alignment {
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(links: I) -> Self {
        Self {
            links: links.into_iter().collect(),
        }
    }

    pub fn contains(&self, f: usize, e: usize) -> bool {
        self.links.contains(&(f, e))
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn transposed(&self) -> Self {
        Self::new(self.links.iter().map(|&(f, e)| (e, f)))
    }

    /// Pharaoh format: space-separated `i-j` pairs.
    pub fn to_pharaoh(&self) -> String {
        self.links
            .iter()
            .map(|(f, e)| format!("{f}-{e}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Row `j` holds the posterior over source positions for target word `j`.
/// Column 0 is the NULL word when `null_column` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub rows: Vec<Vec<f64>>,
    pub null_column: bool,
}

impl Posteriors {
    /// Source word index of a column, `None` for NULL.
    pub fn source_index(&self, column: usize) -> Option<usize> {
        if self.null_column {
            column.checked_sub(1)
        } else {
            Some(column)
        }
    }
}

fn source_with_null(pair: &SentencePair, use_null: bool) -> Vec<&str> {
    let mut words = Vec::with_capacity(pair.source.len() + 1);
    if use_null {
        words.push(NULL_TOKEN);
    }
    words.extend(pair.source.iter().map(String::as_str));
    words
}

/// Column index → `i` in `q(i | j, l, m)`.
fn q_index(column: usize, use_null: bool) -> usize {
    if use_null {
        column
    } else {
        column + 1
    }
}

pub fn alignment_posteriors(
    pair: &SentencePair,
    table: &TranslationTable,
    dist: Option<&DistortionTable>,
) -> Posteriors {
    let use_null = table.use_null;
    let src = source_with_null(pair, use_null);
    let (l, m) = (pair.source.len(), pair.target.len());
    let rows = pair
        .target
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let mut row: Vec<f64> = src
                .iter()
                .enumerate()
                .map(|(c, f)| {
                    let q = dist.map_or(1.0, |d| d.prob(q_index(c, use_null), j + 1, l, m));
                    table.floored(f, e) * q
                })
                .collect();
            let z: f64 = row.iter().sum();
            if z > 0.0 {
                row.iter_mut().for_each(|v| *v /= z);
            } else {
                let u = 1.0 / row.len() as f64;
                row.iter_mut().for_each(|v| *v = u);
            }
            row
        })
        .collect();
    Posteriors {
        rows,
        null_column: use_null,
    }
}

/// Per-target argmax alignment. Ties go to the smallest source position, and
/// NULL wins only when strictly more probable than every real word.
pub fn viterbi_align(pair: &SentencePair, table: &TranslationTable, dist: Option<&DistortionTable>) -> Alignment {
    let post = alignment_posteriors(pair, table, dist);
    let first = usize::from(post.null_column);
    let links = post.rows.iter().enumerate().filter_map(|(j, row)| {
        if row.len() <= first {
            return None;
        }
        let best = (first..row.len()).fold(first, |b, c| if row[c] > row[b] { c } else { b });
        if post.null_column && row[0] > row[best] {
            return None;
        }
        post.source_index(best).map(|f| (f, j))
    });
    Alignment::new(links)
}

/// Interned corpus used by the EM loops.
struct Indexed {
    f_vocab: Vec<String>,
    e_vocab: Vec<String>,
    /// (source ids with NULL first when enabled, target ids)
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    use_null: bool,
}

impl Indexed {
    fn new(corpus: &ParallelCorpus, use_null: bool) -> Self {
        let mut f_set: BTreeSet<&str> = corpus.pairs.iter().flat_map(|p| p.source.iter().map(String::as_str)).collect();
        if use_null {
            f_set.insert(NULL_TOKEN);
        }
        let e_set: BTreeSet<&str> = corpus.pairs.iter().flat_map(|p| p.target.iter().map(String::as_str)).collect();
        let f_vocab: Vec<String> = f_set.into_iter().map(str::to_string).collect();
        let e_vocab: Vec<String> = e_set.into_iter().map(str::to_string).collect();
        let f_id: HashMap<&str, usize> = f_vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let e_id: HashMap<&str, usize> = e_vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let pairs = corpus
            .pairs
            .iter()
            .map(|p| {
                let src = source_with_null(p, use_null).iter().map(|w| f_id[w]).collect();
                let tgt = p.target.iter().map(|w| e_id[w.as_str()]).collect();
                (src, tgt)
            })
            .collect();
        Self {
            f_vocab,
            e_vocab,
            pairs,
            use_null,
        }
    }

    fn real_len(&self, src: &[usize]) -> usize {
        src.len() - usize::from(self.use_null)
    }

    fn table_from(&self, t: &[BTreeMap<usize, f64>]) -> TranslationTable {
        let mut table = TranslationTable::new(self.use_null);
        for (f, row) in t.iter().enumerate() {
            for (&e, &p) in row {
                table.set(&self.f_vocab[f], &self.e_vocab[e], p);
            }
        }
        table
    }

    fn lexical_from(&self, table: &TranslationTable) -> Vec<BTreeMap<usize, f64>> {
        let mut t = vec![BTreeMap::new(); self.f_vocab.len()];
        for (src, tgt) in &self.pairs {
            for &f in src {
                for &e in tgt {
                    t[f].insert(e, table.prob(&self.f_vocab[f], &self.e_vocab[e]));
                }
            }
        }
        t
    }
}

fn normalize_rows(counts: Vec<BTreeMap<usize, f64>>) -> Vec<BTreeMap<usize, f64>> {
    counts
        .into_iter()
        .map(|row| {
            let z: f64 = row.values().sum();
            if z > 0.0 {
                row.into_iter().map(|(e, c)| (e, c / z)).collect()
            } else {
                row
            }
        })
        .collect()
}

/// Expected link counts `c(e | f)` for one E-step, plus the log-likelihood.
/// Exposed so the E-step can be checked against alignment enumeration.
pub fn model1_expected_counts(
    corpus: &ParallelCorpus,
    table: &TranslationTable,
) -> (BTreeMap<(String, String), f64>, f64) {
    let mut counts = BTreeMap::new();
    let mut ll = 0.0;
    for pair in &corpus.pairs {
        let src = source_with_null(pair, table.use_null);
        for e in &pair.target {
            let z: f64 = src.iter().map(|f| table.prob(f, e)).sum();
            ll += (z / src.len() as f64).ln();
            for f in &src {
                *counts.entry((f.to_string(), e.clone())).or_insert(0.0) += table.prob(f, e) / z;
            }
        }
    }
    (counts, ll)
}

/// IBM Model 1 EM from a uniform start. Returns the table and the
/// log-likelihood measured at the start of each iteration.
pub fn train_model1(corpus: &ParallelCorpus, cfg: &AlignConfig) -> Result<(TranslationTable, Vec<f64>), AlignError> {
    if corpus.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    let idx = Indexed::new(corpus, cfg.use_null);
    let uniform = 1.0 / idx.e_vocab.len() as f64;
    let mut t: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); idx.f_vocab.len()];
    if cfg.iterations_m1 == 0 {
        // untrained: every f row is uniform over the whole target vocabulary
        for row in t.iter_mut() {
            row.extend((0..idx.e_vocab.len()).map(|e| (e, uniform)));
        }
        return Ok((idx.table_from(&t), Vec::new()));
    }
    for (src, tgt) in &idx.pairs {
        for &f in src {
            for &e in tgt {
                t[f].insert(e, uniform);
            }
        }
    }
    let mut history = Vec::with_capacity(cfg.iterations_m1);
    for _ in 0..cfg.iterations_m1 {
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); idx.f_vocab.len()];
        let mut ll = 0.0;
        for (src, tgt) in &idx.pairs {
            let denom = src.len() as f64;
            for &e in tgt {
                let z: f64 = src.iter().map(|&f| t[f][&e]).sum();
                ll += (z / denom).ln();
                for &f in src {
                    *counts[f].entry(e).or_insert(0.0) += t[f][&e] / z;
                }
            }
        }
        history.push(ll);
        t = normalize_rows(counts);
    }
    Ok((idx.table_from(&t), history))
}

/// IBM Model 2 EM over `t` and `q`, starting from `init` and uniform `q`.
pub fn train_model2(
    corpus: &ParallelCorpus,
    cfg: &AlignConfig,
    init: &TranslationTable,
) -> Result<(TranslationTable, DistortionTable, Vec<f64>), AlignError> {
    if corpus.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    let use_null = init.use_null;
    let mut dist = DistortionTable::uniform(corpus, use_null);
    if cfg.iterations_m2 == 0 {
        return Ok((init.clone(), dist, Vec::new()));
    }
    let idx = Indexed::new(corpus, use_null);
    let mut t = idx.lexical_from(init);
    let mut history = Vec::with_capacity(cfg.iterations_m2);
    for _ in 0..cfg.iterations_m2 {
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); idx.f_vocab.len()];
        let mut q_counts: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
        let mut ll = 0.0;
        for (src, tgt) in &idx.pairs {
            let (l, m) = (idx.real_len(src), tgt.len());
            for (j, &e) in tgt.iter().enumerate() {
                let weights: Vec<f64> = src
                    .iter()
                    .enumerate()
                    .map(|(c, &f)| t[f].get(&e).copied().unwrap_or(0.0) * dist.prob(q_index(c, use_null), j + 1, l, m))
                    .collect();
                let z: f64 = weights.iter().sum();
                if z <= 0.0 {
                    continue;
                }
                ll += z.ln();
                for (c, (&f, w)) in src.iter().zip(&weights).enumerate() {
                    let post = w / z;
                    *counts[f].entry(e).or_insert(0.0) += post;
                    *q_counts.entry((q_index(c, use_null), j + 1, l, m)).or_insert(0.0) += post;
                }
            }
        }
        history.push(ll);
        t = normalize_rows(counts);
        let mut totals: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (&(_, j, l, m), &c) in &q_counts {
            *totals.entry((j, l, m)).or_insert(0.0) += c;
        }
        let mut next = DistortionTable::new(use_null);
        for (&(i, j, l, m), &c) in &q_counts {
            next.set(i, j, l, m, c / totals[&(j, l, m)]);
        }
        // keep explicit zeros so the shape stays known
        for &(i, j, l, m) in dist.q.keys() {
            next.q.entry((i, j, l, m)).or_insert(0.0);
        }
        dist = next;
    }
    Ok((idx.table_from(&t), dist, history))
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Combines two directional alignments given in the same `(f, e)` space.
pub fn symmetrize(fwd: &Alignment, rev: &Alignment, heuristic: Symmetrization) -> Alignment {
    let inter: BTreeSet<(usize, usize)> = fwd.links.intersection(&rev.links).copied().collect();
    let union: BTreeSet<(usize, usize)> = fwd.links.union(&rev.links).copied().collect();
    match heuristic {
        Symmetrization::Intersection => Alignment { links: inter },
        Symmetrization::Union => Alignment { links: union },
        Symmetrization::GrowDiagFinal => grow_diag_final(fwd, rev, inter, &union),
    }
}

struct Coverage {
    links: BTreeSet<(usize, usize)>,
    f_covered: BTreeSet<usize>,
    e_covered: BTreeSet<usize>,
}

impl Coverage {
    fn add(&mut self, f: usize, e: usize) {
        self.links.insert((f, e));
        self.f_covered.insert(f);
        self.e_covered.insert(e);
    }

    fn uncovered(&self, f: usize, e: usize) -> bool {
        !self.f_covered.contains(&f) || !self.e_covered.contains(&e)
    }
}

fn grow_diag_final(
    fwd: &Alignment,
    rev: &Alignment,
    seed: BTreeSet<(usize, usize)>,
    union: &BTreeSet<(usize, usize)>,
) -> Alignment {
    let f_len = union.iter().map(|&(f, _)| f + 1).max().unwrap_or(0);
    let e_len = union.iter().map(|&(_, e)| e + 1).max().unwrap_or(0);
    let mut cov = Coverage {
        f_covered: seed.iter().map(|&(f, _)| f).collect(),
        e_covered: seed.iter().map(|&(_, e)| e).collect(),
        links: seed,
    };
    // grow-diag
    loop {
        let mut added = false;
        for e in 0..e_len {
            for f in 0..f_len {
                if !cov.links.contains(&(f, e)) {
                    continue;
                }
                for (df, de) in NEIGHBORS {
                    let (Some(nf), Some(ne)) = (f.checked_add_signed(df), e.checked_add_signed(de)) else {
                        continue;
                    };
                    if union.contains(&(nf, ne)) && !cov.links.contains(&(nf, ne)) && cov.uncovered(nf, ne) {
                        cov.add(nf, ne);
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }
    // final
    for directional in [fwd, rev] {
        for e in 0..e_len {
            for f in 0..f_len {
                if directional.contains(f, e) && !cov.links.contains(&(f, e)) && cov.uncovered(f, e) {
                    cov.add(f, e);
                }
            }
        }
    }
    Alignment { links: cov.links }
}

/// Trains Model 1 then Model 2 in one direction.
pub fn train_direction(
    corpus: &ParallelCorpus,
    cfg: &AlignConfig,
) -> Result<(TranslationTable, DistortionTable), AlignError> {
    let (m1, _) = train_model1(corpus, cfg)?;
    let (t, q, _) = train_model2(corpus, cfg, &m1)?;
    Ok((t, q))
}

/// Symmetrized alignments for every pair, trained in both directions.
#[derive(Debug, Clone)]
pub struct BidirectionalAlignment {
    pub forward: (TranslationTable, DistortionTable),
    pub reverse: (TranslationTable, DistortionTable),
    pub alignments: Vec<Alignment>,
}

pub fn align_corpus(corpus: &ParallelCorpus, cfg: &AlignConfig) -> Result<BidirectionalAlignment, AlignError> {
    let forward = train_direction(corpus, cfg)?;
    let reversed = corpus.reversed();
    let reverse = train_direction(&reversed, cfg)?;
    let alignments = corpus
        .pairs
        .iter()
        .zip(&reversed.pairs)
        .map(|(pair, rpair)| {
            let fwd = viterbi_align(pair, &forward.0, Some(&forward.1));
            let rev = viterbi_align(rpair, &reverse.0, Some(&reverse.1)).transposed();
            symmetrize(&fwd, &rev, cfg.symmetrization)
        })
        .collect();
    Ok(BidirectionalAlignment {
        forward,
        reverse,
        alignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ParallelCorpus {
        ParallelCorpus::new(vec![
            SentencePair::new("das Haus", "the house"),
            SentencePair::new("das Buch", "the book"),
            SentencePair::new("ein Buch", "a book"),
        ])
    }

    fn no_null(m1: usize, m2: usize) -> AlignConfig {
        AlignConfig {
            iterations_m1: m1,
            iterations_m2: m2,
            use_null: false,
            ..AlignConfig::default()
        }
    }

    #[test]
    fn first_em_iteration_by_hand() {
        let (t, ll) = train_model1(&toy(), &no_null(1, 0)).unwrap();
        assert_eq!(t.prob("das", "the"), 0.5);
        assert_eq!(t.prob("das", "house"), 0.25);
        assert_eq!(t.prob("das", "book"), 0.25);
        // uniform start: each target word has probability 1/4 under any source word
        assert!((ll[0] - 6.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_pair_single_candidate() {
        let corpus = ParallelCorpus::new(vec![SentencePair::new("x", "y")]);
        let (t, _) = train_model1(&corpus, &no_null(1, 0)).unwrap();
        assert_eq!(t.prob("x", "y"), 1.0);
        let post = alignment_posteriors(&corpus.pairs[0], &t, None);
        assert_eq!(post.rows, vec![vec![1.0]]);
        assert_eq!(viterbi_align(&corpus.pairs[0], &t, None), Alignment::new([(0, 0)]));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty = ParallelCorpus::default();
        assert_eq!(train_model1(&empty, &AlignConfig::default()), Err(AlignError::EmptyCorpus));
        let init = TranslationTable::new(true);
        assert_eq!(
            train_model2(&empty, &AlignConfig::default(), &init).unwrap_err(),
            AlignError::EmptyCorpus
        );
    }

    #[test]
    fn converged_argmaxes() {
        let (t, _) = train_model1(&toy(), &no_null(50, 0)).unwrap();
        assert_eq!(t.best("Buch"), Some("book"));
        assert_eq!(t.best("Haus"), Some("house"));
        assert_eq!(t.best("das"), Some("the"));
        assert_eq!(t.best("ein"), Some("a"));
        let pair = SentencePair::new("das Buch", "the book");
        assert_eq!(viterbi_align(&pair, &t, None), Alignment::new([(0, 0), (1, 1)]));
    }

    #[test]
    fn uniform_posteriors_and_model2_reduction() {
        let corpus = toy();
        let (t, _) = train_model1(&corpus, &no_null(0, 0)).unwrap();
        let pair = &corpus.pairs[0];
        let post = alignment_posteriors(pair, &t, None);
        for row in &post.rows {
            assert!(row.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        }
        let (t5, _) = train_model1(&corpus, &no_null(5, 0)).unwrap();
        let q = DistortionTable::uniform(&corpus, false);
        assert_eq!(
            alignment_posteriors(pair, &t5, Some(&q)),
            alignment_posteriors(pair, &t5, None)
        );
    }

    #[test]
    fn posterior_tie_prefers_smallest_source_index() {
        let mut t = TranslationTable::new(false);
        t.set("a", "x", 0.5);
        t.set("b", "x", 0.5);
        let pair = SentencePair::new("a b", "x");
        assert_eq!(viterbi_align(&pair, &t, None), Alignment::new([(0, 0)]));
        let mut with_null = t.clone();
        with_null.use_null = true;
        with_null.set(NULL_TOKEN, "x", 0.9);
        assert!(viterbi_align(&pair, &with_null, None).is_empty());
    }

    #[test]
    fn oov_words_use_floor() {
        let t = TranslationTable::new(true);
        let pair = SentencePair::new("zzz qqq", "yyy");
        let post = alignment_posteriors(&pair, &t, None);
        assert_eq!(post.rows[0].len(), 3);
        assert!(post.rows[0].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn model2_without_iterations_is_identity() {
        let corpus = toy();
        let (t1, _) = train_model1(&corpus, &no_null(5, 0)).unwrap();
        let (t2, q, ll) = train_model2(&corpus, &no_null(5, 0), &t1).unwrap();
        assert_eq!(t1, t2);
        assert!(ll.is_empty());
        assert_eq!(q.prob(1, 1, 2, 2), 0.5);
        assert_eq!(q.prob(2, 2, 2, 2), 0.5);
    }

    #[test]
    fn symmetrization_set_algebra() {
        let a = Alignment::new([(0, 0), (1, 2), (2, 1)]);
        for h in [Symmetrization::Intersection, Symmetrization::Union, Symmetrization::GrowDiagFinal] {
            assert_eq!(symmetrize(&a, &a, h), a);
        }
        let fwd = Alignment::new([(0, 0)]);
        let rev = Alignment::new([(1, 1)]);
        assert!(symmetrize(&fwd, &rev, Symmetrization::Intersection).is_empty());
        assert_eq!(
            symmetrize(&fwd, &rev, Symmetrization::Union),
            Alignment::new([(0, 0), (1, 1)])
        );
    }

    #[test]
    fn grow_diag_final_traces() {
        // (1,1) is a diagonal neighbour of the seed (0,0) with both words free
        let fwd = Alignment::new([(0, 0), (1, 1)]);
        let rev = Alignment::new([(0, 0)]);
        assert_eq!(
            symmetrize(&fwd, &rev, Symmetrization::GrowDiagFinal),
            Alignment::new([(0, 0), (1, 1)])
        );
        // empty intersection: nothing grows, FINAL adds links of uncovered words
        let fwd = Alignment::new([(0, 0), (0, 1)]);
        let rev = Alignment::new([(1, 1)]);
        assert_eq!(
            symmetrize(&fwd, &rev, Symmetrization::GrowDiagFinal),
            Alignment::new([(0, 0), (0, 1), (1, 1)])
        );
        // growth stops once both words of a union point are covered
        let fwd = Alignment::new([(0, 0), (1, 1), (0, 1)]);
        let rev = Alignment::new([(0, 0), (1, 1)]);
        assert_eq!(
            symmetrize(&fwd, &rev, Symmetrization::GrowDiagFinal),
            Alignment::new([(0, 0), (1, 1)])
        );
    }

    #[test]
    fn pharaoh_and_tsv_exports() {
        assert_eq!(Alignment::new([(1, 0), (0, 1)]).to_pharaoh(), "0-1 1-0");
        let mut t = TranslationTable::new(false);
        t.set("b", "x", 0.25);
        t.set("b", "y", 0.75);
        t.set("a", "z", 1.0);
        assert_eq!(t.to_tsv(), "a\tz\t1\nb\ty\t0.75\nb\tx\t0.25\n");
    }

    #[test]
    fn heuristic_names_round_trip() {
        for h in [Symmetrization::Intersection, Symmetrization::Union, Symmetrization::GrowDiagFinal] {
            assert_eq!(h.to_string().parse::<Symmetrization>().unwrap(), h);
        }
        assert!("grow-diag".parse::<Symmetrization>().is_err());
    }
}
