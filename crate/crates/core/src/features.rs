//! MFCC front-end: pre-emphasis, Hamming framing, energy VAD, mel
//! cepstra and per-utterance cepstral mean subtraction.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::binio::{Reader, Writer};
use crate::dataset::AudioClip;
use crate::{Error, Result};

/// Width of the feature vectors consumed by every classifier.
pub const FEATURE_DIM: usize = 24;

/// Floor applied to mel filter energies before taking the log.
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub pre_emphasis_mu: f64,
    pub window_ms: f64,
    pub overlap_fraction: f64,
    pub num_mel_filters: usize,
    pub num_ceps: usize,
    /// Frames quieter than the loudest frame by more than this many dB are
    /// discarded.
    pub vad_threshold_db: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pre_emphasis_mu: 0.98,
            window_ms: 20.0,
            overlap_fraction: 0.5,
            num_mel_filters: 26,
            num_ceps: FEATURE_DIM,
            vad_threshold_db: 30.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pre_emphasis_mu) {
            return Err(Error::invalid(
                "pre-emphasis coefficient must lie in [0, 1)",
            ));
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction < 1.0) {
            return Err(Error::invalid("overlap fraction must lie in (0, 1)"));
        }
        if !(self.window_ms > 0.0) {
            return Err(Error::invalid("window length must be positive"));
        }
        if self.num_ceps == 0 || self.num_ceps >= self.num_mel_filters {
            return Err(Error::invalid(
                "need 1 <= num_ceps < num_mel_filters (c0 is dropped)",
            ));
        }
        if self.vad_threshold_db.is_nan() || self.vad_threshold_db < 0.0 {
            return Err(Error::invalid(
                "VAD threshold must be a non-negative dB value",
            ));
        }
        Ok(())
    }
}

/// The per-utterance feature matrix: one row per retained frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    vectors: Array2<f64>,
    frame_times: Vec<f64>,
}

impl FeatureSet {
    pub fn new(vectors: Array2<f64>, frame_times: Vec<f64>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::invalid(
                "feature set must have at least one non-empty row",
            ));
        }
        if frame_times.len() != vectors.nrows() {
            return Err(Error::invalid("frame_times length differs from row count"));
        }
        Ok(FeatureSet {
            vectors,
            frame_times,
        })
    }

    /// Wraps a bare matrix, numbering frames 0, 1, 2, ... seconds.
    pub fn from_matrix(vectors: Array2<f64>) -> Result<Self> {
        let times = (0..vectors.nrows()).map(|i| i as f64).collect();
        Self::new(vectors, times)
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.vectors
    }

    /// Cache file: magic `OSIDFEAT`, version, N, D (u32 LE) followed by
    /// N*D row-major f64 LE values. Frame times are not stored.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(FEAT_MAGIC);
        w.u32(FEAT_VERSION);
        w.u32(self.len() as u32);
        w.u32(self.dim() as u32);
        w.f64s(self.vectors.iter());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FEAT_MAGIC)?;
        let version = r.u32()?;
        if version != FEAT_VERSION {
            return Err(Error::Format(format!("feature cache version {version}")));
        }
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let values = r.f64s(n * d)?;
        r.finish()?;
        let m = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_matrix(m).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes()).map_err(|e| Error::from(e).at(path.as_ref()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

const FEAT_MAGIC: &[u8; 8] = b"OSIDFEAT";
const FEAT_VERSION: u32 = 1;

/// First-order pre-emphasis `y[n] = x[n] - mu * x[n-1]`, with `y[0] = x[0]`.
pub fn pre_emphasize(samples: &[f64], mu: f64) -> Result<Vec<f64>> {
    let (&first, rest) = samples
        .split_first()
        .ok_or_else(|| Error::invalid("cannot pre-emphasize an empty signal"))?;
    let mut out = Vec::with_capacity(samples.len());
    out.push(first);
    out.extend(rest.iter().zip(samples).map(|(&x, &prev)| x - mu * prev));
    Ok(out)
}

/// Symmetric Hamming window of length `len`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Frame length and hop in samples.
pub fn frame_geometry(sample_rate: u32, window_ms: f64, overlap_fraction: f64) -> (usize, usize) {
    let len = (window_ms * sample_rate as f64 / 1000.0).round() as usize;
    let hop = (len as f64 * (1.0 - overlap_fraction)).round() as usize;
    (len, hop.max(1))
}

/// Cuts the signal into overlapping Hamming-weighted frames. Trailing
/// samples that do not fill a whole frame are dropped.
pub fn frame_and_window(
    samples: &[f64],
    sample_rate: u32,
    window_ms: f64,
    overlap_fraction: f64,
) -> Result<Vec<Vec<f64>>> {
    let (len, hop) = frame_geometry(sample_rate, window_ms, overlap_fraction);
    if len == 0 {
        return Err(Error::invalid("window shorter than one sample"));
    }
    if samples.len() < len {
        return Err(Error::TooShort {
            samples: samples.len(),
            frame_len: len,
        });
    }
    let window = hamming(len);
    let count = (samples.len() - len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            samples[i * hop..i * hop + len]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

pub fn frame_energy(frame: &[f64]) -> f64 {
    frame.iter().map(|x| x * x).sum()
}

/// Energy VAD: keeps frames within `threshold_db` of the loudest frame.
pub fn vad_filter(frames: &[Vec<f64>], threshold_db: f64) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to filter"));
    }
    let energies: Vec<f64> = frames.iter().map(|f| frame_energy(f)).collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::NoSpeech);
    }
    let floor_db = 10.0 * peak.log10() - threshold_db;
    Ok(energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e == peak || 10.0 * e.log10() >= floor_db)
        .map(|(i, _)| i)
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank spanning 0 Hz to Nyquist.
///
/// Filter edges are equally spaced on the mel scale; weights are evaluated
/// at the exact bin frequencies, so narrow low-frequency filters never
/// collapse to zero width.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `num_filters + 2` edge frequencies in Hz.
    edges: Vec<f64>,
    /// `num_filters × (fft_size / 2 + 1)` weights.
    weights: Array2<f64>,
}

impl MelFilterbank {
    pub fn new(num_filters: usize, fft_size: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
            .collect();
        let bins = fft_size / 2 + 1;
        let mut weights = Array2::zeros((num_filters, bins));
        for j in 0..num_filters {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            for k in 0..bins {
                let f = k as f64 * sample_rate as f64 / fft_size as f64;
                weights[[j, k]] = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
            }
        }
        MelFilterbank { edges, weights }
    }

    pub fn num_filters(&self) -> usize {
        self.weights.nrows()
    }

    /// Peak frequency of filter `j` in Hz.
    pub fn center_hz(&self, j: usize) -> f64 {
        self.edges[j + 1]
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(spectrum).map(|(w, s)| w * s).sum())
            .collect()
    }
}

/// Orthonormal DCT-II matrix, `n × n`, row `k` holding basis vector `k`.
pub fn dct2_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Reusable MFCC state: FFT plan, filterbank and DCT for one frame length.
pub struct MfccExtractor {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fft_size: usize,
    filterbank: MelFilterbank,
    dct: Array2<f64>,
    num_ceps: usize,
}

impl MfccExtractor {
    pub fn new(
        frame_len: usize,
        sample_rate: u32,
        num_mel_filters: usize,
        num_ceps: usize,
    ) -> Result<Self> {
        if frame_len < 2 {
            return Err(Error::invalid("MFCC frame must hold at least 2 samples"));
        }
        if num_ceps >= num_mel_filters {
            return Err(Error::invalid(format!(
                "{num_ceps} cepstra requested from {num_mel_filters} mel filters; c0 is dropped so need fewer"
            )));
        }
        let fft_size = frame_len.next_power_of_two();
        Ok(MfccExtractor {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            filterbank: MelFilterbank::new(num_mel_filters, fft_size, sample_rate),
            dct: dct2_matrix(num_mel_filters),
            num_ceps,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Magnitude spectrum of the zero-padded frame, bins `0..=fft_size/2`.
    pub fn magnitude_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        buf[..=self.fft_size / 2].iter().map(|c| c.norm()).collect()
    }

    /// Log mel filterbank energies, floored at [`LOG_ENERGY_FLOOR`].
    pub fn log_mel(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank
            .apply(&self.magnitude_spectrum(frame))
            .into_iter()
            .map(|e| e.max(LOG_ENERGY_FLOOR).ln())
            .collect()
    }

    /// Cepstral coefficients `c1..=c{num_ceps}`.
    pub fn compute(&self, frame: &[f64]) -> Vec<f64> {
        let log_mel = self.log_mel(frame);
        (1..=self.num_ceps)
            .map(|k| {
                self.dct
                    .row(k)
                    .iter()
                    .zip(&log_mel)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// MFCC of a single windowed frame. Prefer [`MfccExtractor`] when processing
/// many frames of the same length.
pub fn compute_mfcc(
    frame: &[f64],
    sample_rate: u32,
    num_mel_filters: usize,
    num_ceps: usize,
) -> Result<Vec<f64>> {
    Ok(MfccExtractor::new(frame.len(), sample_rate, num_mel_filters, num_ceps)?.compute(frame))
}

/// Subtracts each column's mean over the utterance.
pub fn cepstral_mean_subtract(vectors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mean = vectors
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::invalid("cannot mean-normalize an empty matrix"))?;
    Ok(&vectors - &mean)
}

/// Runs the full front-end on one clip.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureSet> {
    cfg.validate()?;
    let emphasized = pre_emphasize(clip.samples(), cfg.pre_emphasis_mu)?;
    let frames = frame_and_window(
        &emphasized,
        clip.sample_rate(),
        cfg.window_ms,
        cfg.overlap_fraction,
    )?;
    let keep = vad_filter(&frames, cfg.vad_threshold_db)?;
    let (len, hop) = frame_geometry(clip.sample_rate(), cfg.window_ms, cfg.overlap_fraction);
    let mfcc = MfccExtractor::new(len, clip.sample_rate(), cfg.num_mel_filters, cfg.num_ceps)?;
    let mut raw = Array2::zeros((keep.len(), cfg.num_ceps));
    for (row, &i) in keep.iter().enumerate() {
        raw.row_mut(row)
            .assign(&ndarray::Array1::from(mfcc.compute(&frames[i])));
    }
    let times = keep
        .iter()
        .map(|&i| (i * hop) as f64 / clip.sample_rate() as f64)
        .collect();
    FeatureSet::new(cepstral_mean_subtract(raw.view())?, times)
}
