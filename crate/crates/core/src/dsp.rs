//! Log-mel front end: Hann-windowed framing, power spectrum, triangular
//! mel filterbank and corpus-level mean/variance normalization.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AudioBuffer;

/// Floor added before taking the log of filterbank energies.
pub const LOG_FLOOR: f64 = 1e-10;
/// Minimum standard deviation used by [`normalize`].
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("audio too short: {samples} samples, window needs {window}")]
    TooShort { samples: usize, window: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
    /// FFT size; `None` selects the next power of two at or above the window length.
    pub n_fft: Option<usize>,
    pub n_mels: usize,
    pub fmin_hz: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub fmax_hz: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            win_ms: 25.0,
            hop_ms: 10.0,
            n_fft: None,
            n_mels: 40,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }
}

/// Frame-level parameters resolved against a sample rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLayout {
    pub window: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub sample_rate_hz: u32,
}

impl FeatureConfig {
    pub fn layout(&self, sample_rate_hz: u32) -> Result<FrameLayout, DspError> {
        let rate = sample_rate_hz as f64;
        if !(self.win_ms > 0.0 && self.hop_ms > 0.0) || self.hop_ms > self.win_ms {
            return Err(DspError::InvalidConfig(format!(
                "need 0 < hop_ms <= win_ms, got hop {} win {}",
                self.hop_ms, self.win_ms
            )));
        }
        if self.n_mels == 0 {
            return Err(DspError::InvalidConfig("n_mels must be positive".into()));
        }
        let window = (rate * self.win_ms / 1000.0).round() as usize;
        let hop = ((rate * self.hop_ms / 1000.0).round() as usize).max(1);
        let n_fft = self.n_fft.unwrap_or_else(|| window.next_power_of_two());
        if !n_fft.is_power_of_two() || n_fft < window {
            return Err(DspError::InvalidConfig(format!(
                "n_fft {n_fft} must be a power of two >= window length {window}"
            )));
        }
        let nyquist = rate / 2.0;
        let fmax_hz = self.fmax_hz.unwrap_or(nyquist);
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax_hz && fmax_hz <= nyquist) {
            return Err(DspError::InvalidConfig(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {} / {fmax_hz}",
                self.fmin_hz
            )));
        }
        Ok(FrameLayout {
            window,
            hop,
            n_fft,
            fmin_hz: self.fmin_hz,
            fmax_hz,
            sample_rate_hz,
        })
    }
}

/// Row-major `n_frames × n_dims` feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_frames: usize,
    n_dims: usize,
    frame_rate_hz: f64,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, frame_rate_hz: f64) -> Result<Self, DspError> {
        let n_dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_dims) {
            return Err(DspError::DimensionMismatch {
                expected: n_dims,
                found: bad.len(),
            });
        }
        Ok(Self {
            n_frames: rows.len(),
            n_dims,
            data: rows.into_iter().flatten().collect(),
            frame_rate_hz,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_dims..(t + 1) * self.n_dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_dims.max(1)).take(self.n_frames)
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.n_dims + d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// CSV dump, one frame per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// HTK mel scale.
pub fn mel_scale(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Splits audio into Hann-windowed frames of `W` samples every `H` samples.
pub fn frame_signal(audio: &AudioBuffer, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>, DspError> {
    let layout = cfg.layout(audio.sample_rate_hz())?;
    frames_with(audio.samples(), &layout)
}

fn frames_with(samples: &[f64], layout: &FrameLayout) -> Result<Vec<Vec<f64>>, DspError> {
    let (w, h) = (layout.window, layout.hop);
    if samples.len() < w {
        return Err(DspError::TooShort {
            samples: samples.len(),
            window: w,
        });
    }
    let window = hann_window(w);
    let n_frames = 1 + (samples.len() - w) / h;
    Ok((0..n_frames)
        .map(|t| {
            samples[t * h..t * h + w]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

/// Triangular filterbank as `n_mels` rows over the `n_fft/2 + 1` FFT bins.
pub fn mel_filterbank(layout: &FrameLayout, n_mels: usize) -> Vec<Vec<f64>> {
    let n_bins = layout.n_fft / 2 + 1;
    let (lo, hi) = (mel_scale(layout.fmin_hz), mel_scale(layout.fmax_hz));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = layout.sample_rate_hz as f64 / layout.n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - left) / (center - left);
                    let down = (right - f) / (right - center);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Center frequencies (Hz) of the filters produced by [`mel_filterbank`].
pub fn mel_centers(layout: &FrameLayout, n_mels: usize) -> Vec<f64> {
    let (lo, hi) = (mel_scale(layout.fmin_hz), mel_scale(layout.fmax_hz));
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Log mel filterbank energies of the power spectrum, one row per frame.
pub fn log_mel(audio: &AudioBuffer, cfg: &FeatureConfig) -> Result<FeatureMatrix, DspError> {
    let layout = cfg.layout(audio.sample_rate_hz())?;
    let frames = frames_with(audio.samples(), &layout)?;
    let bank = mel_filterbank(&layout, cfg.n_mels);
    if let Some(m) = bank.iter().position(|row| row.iter().sum::<f64>() <= 0.0) {
        return Err(DspError::InvalidConfig(format!(
            "mel filter {m} covers no FFT bin; reduce n_mels or raise n_fft"
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(layout.n_fft);
    let n_bins = layout.n_fft / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); layout.n_fft];
    let mut power = vec![0.0; n_bins];
    let mut data = Vec::with_capacity(frames.len() * cfg.n_mels);
    for frame in &frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, &s) in buf.iter_mut().zip(frame) {
            c.re = s;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        data.extend(bank.iter().map(|filter| {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            (energy + LOG_FLOOR).ln()
        }));
    }
    Ok(FeatureMatrix {
        data,
        n_frames: frames.len(),
        n_dims: cfg.n_mels,
        frame_rate_hz: layout.sample_rate_hz as f64 / layout.hop as f64,
    })
}

/// Per-dimension mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Population statistics pooled over every frame of every matrix.
    pub fn compute<'a, I>(matrices: I) -> Result<Self, DspError>
    where
        I: IntoIterator<Item = &'a FeatureMatrix>,
    {
        let matrices: Vec<&FeatureMatrix> = matrices.into_iter().collect();
        let d = match matrices.first() {
            Some(m) => m.n_dims(),
            None => return Err(DspError::InvalidConfig("no frames to compute statistics".into())),
        };
        if let Some(bad) = matrices.iter().find(|m| m.n_dims() != d) {
            return Err(DspError::DimensionMismatch {
                expected: d,
                found: bad.n_dims(),
            });
        }
        let count: usize = matrices.iter().map(|m| m.n_frames()).sum();
        if count == 0 {
            return Err(DspError::InvalidConfig("no frames to compute statistics".into()));
        }
        let mut mean = vec![0.0; d];
        for row in matrices.iter().flat_map(|m| m.rows()) {
            mean.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
        }
        mean.iter_mut().for_each(|v| *v /= count as f64);
        let mut var = vec![0.0; d];
        for row in matrices.iter().flat_map(|m| m.rows()) {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Stats that leave features unchanged.
    pub fn identity(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }
}

/// `(x - mean) / std` per dimension, with std floored at [`STD_FLOOR`].
pub fn normalize(features: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix, DspError> {
    if stats.dims() != features.n_dims() || stats.std.len() != stats.mean.len() {
        return Err(DspError::DimensionMismatch {
            expected: stats.dims(),
            found: features.n_dims(),
        });
    }
    let d = features.n_dims();
    let data = features
        .data
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - stats.mean[i % d]) / stats.std[i % d].max(STD_FLOOR))
        .collect();
    Ok(FeatureMatrix {
        data,
        ..features.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, n: usize, rate: u32) -> AudioBuffer {
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn frame_counts() {
        let cfg = FeatureConfig::default();
        let one_second = AudioBuffer::new(vec![0.0; 16000], 16000).unwrap();
        assert_eq!(frame_signal(&one_second, &cfg).unwrap().len(), 98);
        let exact = AudioBuffer::new(vec![0.0; 400], 16000).unwrap();
        let frames = frame_signal(&exact, &cfg).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 400);
        let short = AudioBuffer::new(vec![0.0; 399], 16000).unwrap();
        assert_eq!(
            frame_signal(&short, &cfg),
            Err(DspError::TooShort {
                samples: 399,
                window: 400
            })
        );
    }

    #[test]
    fn default_fft_size_at_16k() {
        let layout = FeatureConfig::default().layout(16000).unwrap();
        assert_eq!((layout.window, layout.hop, layout.n_fft), (400, 160, 512));
        assert_eq!(layout.fmax_hz, 8000.0);
    }

    #[test]
    fn config_validation() {
        let bad_hop = FeatureConfig {
            hop_ms: 30.0,
            ..FeatureConfig::default()
        };
        assert!(bad_hop.layout(16000).is_err());
        let bad_fmax = FeatureConfig {
            fmax_hz: Some(9000.0),
            ..FeatureConfig::default()
        };
        assert!(bad_fmax.layout(16000).is_err());
        let bad_fft = FeatureConfig {
            n_fft: Some(256),
            ..FeatureConfig::default()
        };
        assert!(bad_fft.layout(16000).is_err());
    }

    #[test]
    fn mel_formula() {
        assert_eq!(mel_scale(0.0), 0.0);
        let expected = 2595.0 * 2f64.log10();
        assert!((mel_scale(700.0) - expected).abs() < 1e-12);
        assert!((mel_scale(700.0) - 781.17).abs() < 0.01);
        assert!(mel_scale(1000.0) > mel_scale(700.0));
        assert!((mel_to_hz(mel_scale(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filterbank_coverage() {
        let layout = FeatureConfig::default().layout(16000).unwrap();
        let bank = mel_filterbank(&layout, 40);
        assert_eq!(bank.len(), 40);
        for row in &bank {
            assert!(row.iter().sum::<f64>() > 0.0);
        }
        let bin_hz = 16000.0 / 512.0;
        for k in 0..=256 {
            let f = k as f64 * bin_hz;
            if f > layout.fmin_hz && f < layout.fmax_hz {
                assert!(bank.iter().any(|row| row[k] > 0.0), "bin {k} uncovered");
            }
        }
    }

    #[test]
    fn zero_audio_hits_floor() {
        let audio = AudioBuffer::new(vec![0.0; 1600], 16000).unwrap();
        let feats = log_mel(&audio, &FeatureConfig::default()).unwrap();
        assert_eq!(feats.n_frames(), 8);
        assert_eq!(feats.n_dims(), 40);
        assert!(feats.as_slice().iter().all(|&v| v == LOG_FLOOR.ln()));
        assert_eq!(feats.frame_rate_hz(), 100.0);
    }

    #[test]
    fn sine_peaks_in_its_filter() {
        let cfg = FeatureConfig::default();
        let layout = cfg.layout(16000).unwrap();
        let centers = mel_centers(&layout, 40);
        for &m in &[10usize, 20, 30] {
            let audio = sine(centers[m], 0.5, 8000, 16000);
            let feats = log_mel(&audio, &cfg).unwrap();
            let means: Vec<f64> = (0..40)
                .map(|d| (0..feats.n_frames()).map(|t| feats.get(t, d)).sum::<f64>())
                .collect();
            let argmax = (0..40).fold(0, |b, d| if means[d] > means[b] { d } else { b });
            assert_eq!(argmax, m);
        }
    }

    #[test]
    fn doubling_amplitude_adds_log4() {
        let cfg = FeatureConfig::default();
        let quiet = log_mel(&sine(1000.0, 0.25, 4000, 16000), &cfg).unwrap();
        let loud = log_mel(&sine(1000.0, 0.5, 4000, 16000), &cfg).unwrap();
        let layout = cfg.layout(16000).unwrap();
        let centers = mel_centers(&layout, 40);
        // filters near 1 kHz carry energy far above the floor
        let near: Vec<usize> = (0..40).filter(|&d| (centers[d] - 1000.0).abs() < 300.0).collect();
        assert!(!near.is_empty());
        for t in 0..quiet.n_frames() {
            for &d in &near {
                let diff = loud.get(t, d) - quiet.get(t, d);
                assert!((diff - 4f64.ln()).abs() < 1e-6, "frame {t} dim {d}: {diff}");
            }
        }
    }

    #[test]
    fn deterministic_features() {
        let audio = sine(440.0, 0.3, 3000, 16000);
        let a = log_mel(&audio, &FeatureConfig::default()).unwrap();
        let b = log_mel(&audio, &FeatureConfig::default()).unwrap();
        assert_eq!(a.as_slice().len(), b.as_slice().len());
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn normalization_statistics() {
        let a = log_mel(&sine(300.0, 0.3, 3000, 16000), &FeatureConfig::default()).unwrap();
        let b = log_mel(&sine(2000.0, 0.6, 5000, 16000), &FeatureConfig::default()).unwrap();
        let stats = FeatureStats::compute([&a, &b]).unwrap();
        let na = normalize(&a, &stats).unwrap();
        let nb = normalize(&b, &stats).unwrap();
        let again = FeatureStats::compute([&na, &nb]).unwrap();
        for d in 0..40 {
            assert!(again.mean[d].abs() < 1e-6);
            assert!((again.std[d] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_edge_cases() {
        let stats = FeatureStats::identity(40);
        let wide = FeatureMatrix::from_rows(vec![vec![0.0; 41]], 100.0).unwrap();
        assert_eq!(
            normalize(&wide, &stats),
            Err(DspError::DimensionMismatch {
                expected: 40,
                found: 41
            })
        );
        let constant = FeatureMatrix::from_rows(vec![vec![3.0, 1.0], vec![3.0, 2.0]], 100.0).unwrap();
        let stats = FeatureStats::compute([&constant]).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let n = normalize(&constant, &stats).unwrap();
        assert_eq!(n.get(0, 0), 0.0);
        assert_eq!(n.get(1, 0), 0.0);
    }
}
