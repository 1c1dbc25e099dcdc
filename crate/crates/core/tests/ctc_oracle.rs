use lab_core::corpus::PhonemeInventory;
use lab_core::ctc::{
    beam_decode, collapse_path, ctc_log_likelihood, ctc_loss, greedy_decode, AcousticModel, CtcConfig, Matrix,
    RnnParams,
};
use lab_core::dsp::{FeatureConfig, FeatureMatrix, FeatureStats};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn random_logprobs(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let mut row: Vec<f64> = (0..classes).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lse = row.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
            row
        })
        .collect();
    Matrix::from_rows(&rows)
}

/// Probability of every collapsed label sequence, by enumerating all paths.
fn enumerate_sequences(lp: &Matrix) -> BTreeMap<Vec<usize>, f64> {
    let (t_max, k) = (lp.rows(), lp.cols());
    let mut out = BTreeMap::new();
    let mut path = vec![0; t_max];
    for code in 0..k.pow(t_max as u32) {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % k;
            c /= k;
        }
        let p: f64 = path.iter().enumerate().map(|(t, &s)| lp.get(t, s)).sum::<f64>().exp();
        *out.entry(collapse_path(&path, k - 1)).or_insert(0.0) += p;
    }
    out
}

fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

#[test]
fn loss_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 300 {
        let n = rng.random_range(1..=2usize);
        let t = rng.random_range(1..=6usize);
        let len = rng.random_range(1..=3usize);
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
        if min_frames(&labels) > t {
            continue;
        }
        let lp = random_logprobs(&mut rng, t, n + 1);
        let oracle = enumerate_sequences(&lp)[&labels];
        let (loss, _) = ctc_loss(&lp, &labels).unwrap();
        assert!(((-loss).exp() - oracle).abs() < 1e-8, "t={t} labels={labels:?}");
        checked += 1;
    }
}

#[test]
fn collapsed_sequences_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.random_range(1..=2usize);
        let t = rng.random_range(1..=5usize);
        let lp = random_logprobs(&mut rng, t, n + 1);
        let seqs = enumerate_sequences(&lp);
        let total: f64 = seqs
            .keys()
            .map(|labels| {
                if labels.is_empty() {
                    seqs[labels]
                } else {
                    ctc_log_likelihood(&lp, labels).unwrap().exp()
                }
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}

fn loss_of(params: &RnnParams, feats: &FeatureMatrix, labels: &[usize]) -> f64 {
    ctc_loss(&params.forward(feats).unwrap().logprobs, labels).unwrap().0
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let (d, h, k) = (3, 4, 3);
    let params = RnnParams::init(d, h, k, 42);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let feats = FeatureMatrix::from_rows(rows, 100.0).unwrap();
    let labels = [0, 1];
    let pass = params.forward(&feats).unwrap();
    let (_, dlogits) = ctc_loss(&pass.logprobs, &labels).unwrap();
    let grad = params.backward(&feats, &pass, &dlogits);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for (ti, g) in grad.tensors().iter().enumerate() {
        for i in 0..g.data.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].data[i] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].data[i] -= eps;
            let fd = (loss_of(&plus, &feats, &labels) - loss_of(&minus, &feats, &labels)) / (2.0 * eps);
            let rel = (fd - g.data[i]).abs() / fd.abs().max(g.data[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn beam_search_equals_exhaustive_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..60 {
        let n = rng.random_range(1..=2usize);
        let t = rng.random_range(1..=4usize);
        let lp = random_logprobs(&mut rng, t, n + 1);
        let seqs = enumerate_sequences(&lp);
        let (best, p) = seqs.iter().fold((Vec::new(), -1.0), |acc, (s, &p)| {
            if p > acc.1 {
                (s.clone(), p)
            } else {
                acc
            }
        });
        let (seq, score) = beam_decode(&lp, (n + 1).pow(t as u32));
        assert_eq!(seq.ids(), best.as_slice());
        assert!((score.exp() - p).abs() < 1e-10);
    }
}

#[test]
fn wider_beam_never_scores_lower() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..200 {
        let (t, k) = (rng.random_range(2..=12), rng.random_range(2..=4));
        let lp = random_logprobs(&mut rng, t, k);
        let (_, narrow) = beam_decode(&lp, 1);
        let (_, wide) = beam_decode(&lp, 8);
        assert!(wide >= narrow - 1e-12);
    }
}

#[test]
fn greedy_output_has_no_blank_and_respects_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let k = rng.random_range(2..=5usize);
        let t = rng.random_range(1..=20usize);
        let lp = random_logprobs(&mut rng, t, k);
        let blank = k - 1;
        let out = greedy_decode(&lp);
        assert!(out.ids().iter().all(|&id| id != blank));
        let path: Vec<usize> = (0..t)
            .map(|r| (0..k).fold(0, |b, c| if lp.get(r, c) > lp.get(r, b) { c } else { b }))
            .collect();
        // runs of identical path symbols; equal neighbours in the output
        // must come from non-blank runs separated only by blank runs
        let mut runs: Vec<usize> = Vec::new();
        for &p in &path {
            if runs.last() != Some(&p) {
                runs.push(p);
            }
        }
        let kept: Vec<usize> = (0..runs.len()).filter(|&i| runs[i] != blank).collect();
        for pair in kept.windows(2) {
            let (i, j) = (pair[0], pair[1]);
            if runs[i] == runs[j] {
                assert!(j > i + 1 && runs[i + 1..j].iter().all(|&r| r == blank));
            }
        }
        assert_eq!(out.ids(), collapse_path(&path, blank).as_slice());
    }
}

proptest! {
    #[test]
    fn loss_is_nonnegative_and_grad_rows_sum_to_zero(
        seed in 0u64..10_000,
        t in 3usize..10,
        labels in proptest::collection::vec(0usize..3, 1..4),
    ) {
        prop_assume!(min_frames(&labels) <= t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_logprobs(&mut rng, t, 4);
        let (loss, grad) = ctc_loss(&lp, &labels).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        for r in 0..t {
            prop_assert!(grad.row(r).iter().sum::<f64>().abs() < 1e-9);
        }
    }
}

#[test]
fn model_inference_uses_inventory_blank() {
    let inventory = PhonemeInventory::from_symbols(["a", "b"]).unwrap();
    let model = AcousticModel {
        inventory,
        feature_config: FeatureConfig {
            n_mels: 2,
            ..FeatureConfig::default()
        },
        feature_stats: FeatureStats::identity(2),
        params: RnnParams::init(2, 3, 3, 0),
        config: CtcConfig::default(),
    };
    model.validate().unwrap();
    assert_eq!(model.blank(), 2);
}
