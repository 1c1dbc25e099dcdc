//! Synthetic tone corpora: each phoneme is a fixed-frequency sine segment.
//! Used for smoke tests and demos where no recorded speech is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_wav, AudioBuffer, ManifestEntry};

#[derive(Debug, Clone)]
pub struct ToneSpec {
    /// (symbol, frequency in Hz)
    pub phonemes: Vec<(String, f64)>,
    pub tone_ms: f64,
    pub amplitude: f64,
    pub sample_rate_hz: u32,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for ToneSpec {
    fn default() -> Self {
        Self {
            phonemes: vec![("a".into(), 440.0), ("i".into(), 1200.0), ("u".into(), 2800.0)],
            tone_ms: 100.0,
            amplitude: 0.5,
            sample_rate_hz: 16000,
            min_len: 3,
            max_len: 6,
        }
    }
}

impl ToneSpec {
    /// Renders a phoneme index sequence as concatenated tones.
    pub fn render(&self, seq: &[usize]) -> AudioBuffer {
        let rate = self.sample_rate_hz as f64;
        let per_tone = (rate * self.tone_ms / 1000.0).round() as usize;
        let mut samples = Vec::with_capacity(per_tone * seq.len());
        for &p in seq {
            let freq = self.phonemes[p].1;
            let start = samples.len();
            samples.extend((0..per_tone).map(|i| {
                let t = (start + i) as f64 / rate;
                self.amplitude * (2.0 * std::f64::consts::PI * freq * t).sin()
            }));
        }
        AudioBuffer::new(samples, self.sample_rate_hz).expect("amplitude within [-1, 1]")
    }

    /// Random sequence without immediate repeats; a repeated tone would be
    /// one unbroken segment and could not be told apart from a single one.
    pub fn random_sequence(&self, rng: &mut impl Rng) -> Vec<usize> {
        let len = rng.random_range(self.min_len..=self.max_len);
        let n = self.phonemes.len();
        let mut seq: Vec<usize> = Vec::with_capacity(len);
        while seq.len() < len {
            let p = rng.random_range(0..n);
            if n == 1 || seq.last() != Some(&p) {
                seq.push(p);
            }
        }
        seq
    }

    /// `count` utterances named `utt000`, `utt001`, ...
    pub fn manifest(&self, count: usize, seed: u64) -> Vec<ManifestEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let seq = self.random_sequence(&mut rng);
                let transcript: Vec<&str> = seq.iter().map(|&p| self.phonemes[p].0.as_str()).collect();
                ManifestEntry {
                    utterance_id: format!("utt{i:03}"),
                    wav: write_wav(&self.render(&seq)),
                    transcript: transcript.join(" "),
                }
            })
            .collect()
    }
}
