use lab_core::corpus::{load_parallel_corpus, parse_wav, write_wav, AudioBuffer, SpeechCorpus};
use lab_core::corpus::load_speech_corpus;
use lab_core::synth::ToneSpec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn parse_wav_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        if let Ok(audio) = parse_wav(&bytes) {
            prop_assert!(audio.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn pcm_samples_stay_in_range(pcm in prop::collection::vec(any::<i16>(), 1..64)) {
        let samples: Vec<f64> = pcm.iter().map(|&s| s as f64 / 32768.0).collect();
        let audio = AudioBuffer::new(samples.clone(), 16000).unwrap();
        let back = parse_wav(&write_wav(&audio)).unwrap();
        prop_assert_eq!(back.samples(), &samples[..]);
    }

    #[test]
    fn parallel_line_counts_must_agree(a in 1..6usize, b in 1..6usize) {
        let src = "w\n".repeat(a);
        let tgt = "v\n".repeat(b);
        prop_assert_eq!(load_parallel_corpus(&src, &tgt).is_ok(), a == b);
    }
}

#[test]
fn directory_layout_survives_reload() {
    let corpus = load_speech_corpus(&ToneSpec::default().manifest(5, 77)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_dir(dir.path()).unwrap();
    let back = SpeechCorpus::read_dir(dir.path()).unwrap();
    assert_eq!(back.inventory, corpus.inventory);
    assert_eq!(back.items.len(), 5);
    for (a, b) in back.items.iter().zip(&corpus.items) {
        assert_eq!(a.utterance_id, b.utterance_id);
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(parse_wav(&write_wav(&a.audio)).unwrap(), a.audio);
    }
}
