//! Synthetic speakers for tests, examples and smoke runs.
//!
//! Two generators are provided. [`GaussianPopulation`] creates speakers
//! directly in feature space as random Gaussian mixtures. [`VoiceProfile`]
//! renders audio from a harmonic source shaped by speaker-specific
//! formants, and [`write_corpus`] turns a population of them into WAV files
//! plus a manifest.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{write_wav, AudioClip, CorpusManifest, ManifestEntry};
use crate::features::FeatureSet;
use crate::gmm::DiagGmm;
use crate::Result;

/// A point drawn uniformly from the `dim`-dimensional ball of `radius`.
pub fn uniform_in_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Array1<f64> {
    let dir: Array1<f64> = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(rng));
    let norm = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * (r / norm)
}

/// Speakers as equal-weight Gaussian mixtures whose component means are
/// uniform in a ball and whose variances are all equal.
#[derive(Debug, Clone)]
pub struct GaussianPopulation {
    speakers: Vec<DiagGmm>,
}

impl GaussianPopulation {
    pub fn new(
        count: usize,
        dim: usize,
        components: usize,
        radius: f64,
        variance: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speakers = (0..count)
            .map(|_| {
                let mut means = Array2::zeros((components, dim));
                for mut row in means.rows_mut() {
                    row.assign(&uniform_in_ball(dim, radius, &mut rng));
                }
                DiagGmm::new(
                    Array1::from_elem(components, 1.0 / components as f64),
                    means,
                    Array2::from_elem((components, dim), variance),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianPopulation { speakers })
    }

    pub fn speakers(&self) -> &[DiagGmm] {
        &self.speakers
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    /// `count` utterances of `frames` vectors each from speaker `index`.
    pub fn utterances(
        &self,
        index: usize,
        count: usize,
        frames: usize,
        seed: u64,
    ) -> Vec<FeatureSet> {
        (0..count)
            .map(|u| {
                let s = seed
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add((index as u64) << 20 | u as u64);
                FeatureSet::from_matrix(self.speakers[index].sample(frames, s)).expect("frames > 0")
            })
            .collect()
    }
}

/// Source-filter description of a synthetic voice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub f0: f64,
    /// `(centre Hz, bandwidth Hz)` resonances.
    pub formants: Vec<(f64, f64)>,
}

impl VoiceProfile {
    pub fn random(rng: &mut impl Rng) -> Self {
        VoiceProfile {
            f0: rng.random_range(90.0..250.0),
            formants: vec![
                (
                    rng.random_range(300.0..900.0),
                    rng.random_range(80.0..160.0),
                ),
                (
                    rng.random_range(900.0..2500.0),
                    rng.random_range(100.0..220.0),
                ),
                (
                    rng.random_range(2200.0..3800.0),
                    rng.random_range(150.0..300.0),
                ),
            ],
        }
    }

    fn harmonic_gain(&self, hz: f64) -> f64 {
        0.02 + self
            .formants
            .iter()
            .map(|&(c, bw)| (-((hz - c) / bw).powi(2)).exp())
            .sum::<f64>()
    }

    /// Renders one utterance: jittered pitch, random harmonic phases and a
    /// 3-4 Hz syllable envelope that leaves silent gaps for the VAD.
    pub fn render(&self, seconds: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (seconds * sample_rate as f64).round() as usize;
        let f0 = self.f0 * rng.random_range(0.97..1.03);
        let nyquist = sample_rate as f64 / 2.0;
        let harmonics: Vec<(f64, f64, f64)> = (1..)
            .map(|h| h as f64 * f0)
            .take_while(|&hz| hz < nyquist * 0.95)
            .map(|hz| (hz, self.harmonic_gain(hz), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let syllable_hz = rng.random_range(3.0..4.0);
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate as f64;
                let phase = (t * syllable_hz).fract();
                let env = if phase < 0.75 {
                    (PI * phase / 0.75).sin()
                } else {
                    0.0
                };
                let voiced: f64 = harmonics
                    .iter()
                    .map(|&(hz, g, ph)| g * (2.0 * PI * hz * t + ph).sin())
                    .sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                env * voiced + 1e-4 * noise
            })
            .collect();
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            out.iter_mut().for_each(|v| *v *= 0.5 / peak);
        }
        out
    }
}

/// Writes `speakers × utterances` WAV files under `dir` and a
/// `manifest.csv` listing them with relative paths.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    speakers: usize,
    utterances: usize,
    seconds: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("wav"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(speakers * utterances);
    for s in 0..speakers {
        let voice = VoiceProfile::random(&mut rng);
        let speaker_id = format!("spk{s:04}");
        for u in 0..utterances {
            let utterance_id = format!("{speaker_id}-utt{u:03}");
            let samples = voice.render(seconds, sample_rate, rng.random());
            let clip = AudioClip::new(
                samples,
                sample_rate,
                speaker_id.as_str(),
                utterance_id.as_str(),
            )?;
            let rel = Path::new("wav").join(format!("{utterance_id}.wav"));
            write_wav(&clip, dir.join(&rel))?;
            entries.push(ManifestEntry {
                speaker_id: speaker_id.clone(),
                utterance_id,
                path: rel,
                duration_seconds: clip.duration_seconds(),
            });
        }
    }
    let manifest = CorpusManifest::new(entries)?;
    manifest.write(dir.join("manifest.csv"))?;
    CorpusManifest::read(dir.join("manifest.csv"))
}
