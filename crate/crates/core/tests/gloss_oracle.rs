use std::collections::BTreeSet;

use lab_core::align::Alignment;
use lab_core::gloss::{consistent_spans, suggest_glosses, train_glosser, SpanPair};
use lab_core::{align::AlignConfig, corpus::ParallelCorpus, corpus::SentencePair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every span pair with at least one internal link and no link crossing
/// its boundary.
fn brute_force(f_len: usize, e_len: usize, links: &BTreeSet<(usize, usize)>, max: usize) -> BTreeSet<SpanPair> {
    let mut out = BTreeSet::new();
    for f_start in 0..f_len {
        for f_end in f_start + 1..=f_len.min(f_start + max) {
            for e_start in 0..e_len {
                for e_end in e_start + 1..=e_len.min(e_start + max) {
                    let f_in = |f: usize| f >= f_start && f < f_end;
                    let e_in = |e: usize| e >= e_start && e < e_end;
                    let any = links.iter().any(|&(f, e)| f_in(f) && e_in(e));
                    let clean = links.iter().all(|&(f, e)| f_in(f) == e_in(e));
                    if any && clean {
                        out.insert(SpanPair {
                            f_start,
                            f_end,
                            e_start,
                            e_end,
                        });
                    }
                }
            }
        }
    }
    out
}

#[test]
fn extraction_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..600 {
        let f_len = rng.random_range(1..=5usize);
        let e_len = rng.random_range(1..=5usize);
        let density = rng.random_range(0.0..0.6);
        let links: BTreeSet<(usize, usize)> = (0..f_len)
            .flat_map(|f| (0..e_len).map(move |e| (f, e)))
            .filter(|_| rng.random_bool(density))
            .collect();
        let max = rng.random_range(1..=5usize);
        let alignment = Alignment::new(links.iter().copied());
        let got = consistent_spans(f_len, e_len, &alignment, max).unwrap();
        assert_eq!(got, brute_force(f_len, e_len, &links, max), "case {case}: {links:?} max={max}");
    }
}

proptest! {
    #[test]
    fn suggestions_tile_the_input(words in prop::collection::vec(0..6usize, 1..8)) {
        let corpus = ParallelCorpus::new(vec![
            SentencePair::new("w0 w1 w2", "v0 v1 v2"),
            SentencePair::new("w1 w2", "v1 v2 v5"),
            SentencePair::new("w0 w3", "v3"),
        ]);
        let model = train_glosser(&corpus, &AlignConfig::default(), 3).unwrap();
        let tokens: Vec<String> = words.iter().map(|w| format!("w{w}")).collect();
        let out = suggest_glosses(&tokens, &model, 2);
        let mut next = 0;
        for s in &out {
            prop_assert_eq!(s.covered_span.0, next);
            prop_assert_eq!(s.token_index, next);
            prop_assert!(!s.candidates.is_empty() && s.candidates.len() <= 2);
            prop_assert!(s.candidates.windows(2).all(|w| w[0].score >= w[1].score));
            next += s.covered_span.1;
        }
        prop_assert_eq!(next, tokens.len());
    }
}
