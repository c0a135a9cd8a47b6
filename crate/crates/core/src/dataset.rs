//! Audio ingestion, corpus manifests and seeded speaker / utterance splits.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Working sample rate when a run does not configure one.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono utterance with samples normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        speaker_id: impl Into<String>,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("audio clip has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(v) = samples.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("sample {v} outside [-1, 1]")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            speaker_id: speaker_id.into(),
            utterance_id: utterance_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a 16-bit PCM mono WAV file.
///
/// Samples are the raw integers divided by 32768. The utterance id defaults
/// to the file stem and the speaker id is left empty; manifest-driven
/// ingestion overwrites both.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    read_wav(path).map_err(|e| e.at(path))
}

fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels, only mono is accepted",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}-bit {:?} samples, only 16-bit PCM is accepted",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    if samples.is_empty() {
        return Err(Error::Format("empty data chunk".into()));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, "", stem)
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Writes a clip as 16-bit PCM mono. Samples are scaled by 32768 and
/// saturated, so `load_wav` output round-trips exactly.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let write = || -> std::result::Result<(), hound::Error> {
        let mut w = hound::WavWriter::create(path, spec)?;
        for &s in &clip.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v)?;
        }
        w.finalize()
    };
    write().map_err(|e| map_hound(e).at(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub utterance_id: String,
    pub path: PathBuf,
    pub duration_seconds: f64,
}

/// The corpus listing: one row per utterance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
}

const MANIFEST_HEADER: [&str; 4] = ["speaker_id", "utterance_id", "path", "duration_s"];

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !(e.duration_seconds > 0.0) {
                return Err(Error::invalid(format!(
                    "utterance {}/{} has non-positive duration",
                    e.speaker_id, e.utterance_id
                )));
            }
            if !seen.insert((e.speaker_id.as_str(), e.utterance_id.as_str())) {
                return Err(Error::invalid(format!(
                    "duplicate utterance {}/{}",
                    e.speaker_id, e.utterance_id
                )));
            }
        }
        Ok(CorpusManifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Distinct speaker ids in order of first appearance.
    pub fn speakers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.speaker_id.as_str()))
            .map(|e| e.speaker_id.clone())
            .collect()
    }

    /// Reads a manifest CSV. Relative audio paths are resolved against the
    /// manifest's own directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_inner(path).map_err(|e| e.at(path))
    }

    fn read_inner(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(rdr.headers()?, &MANIFEST_HEADER)?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let duration_seconds = rec[3]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad duration {:?}", &rec[3])))?;
            let p = PathBuf::from(&rec[2]);
            entries.push(ManifestEntry {
                speaker_id: rec[0].to_string(),
                utterance_id: rec[1].to_string(),
                path: if p.is_absolute() { p } else { base.join(p) },
                duration_seconds,
            });
        }
        Self::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.speaker_id.as_str(),
                e.utterance_id.as_str(),
                &e.path.to_string_lossy(),
                &e.duration_seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Ubm,
    Impostor,
    Enrolled,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Ubm => "ubm",
            Role::Impostor => "impostor",
            Role::Enrolled => "enrolled",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ubm" => Ok(Role::Ubm),
            "impostor" => Ok(Role::Impostor),
            "enrolled" => Ok(Role::Enrolled),
            other => Err(Error::Format(format!("unknown role {other:?}"))),
        }
    }
}

/// Three disjoint speaker sets. Order is significant: population-size
/// sweeps enroll prefixes of `enrolled`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerPartition {
    ubm: Vec<String>,
    impostor: Vec<String>,
    enrolled: Vec<String>,
}

const PARTITION_HEADER: [&str; 2] = ["speaker_id", "role"];

impl SpeakerPartition {
    pub fn new(ubm: Vec<String>, impostor: Vec<String>, enrolled: Vec<String>) -> Result<Self> {
        if enrolled.is_empty() {
            return Err(Error::invalid("enrolled speaker set is empty"));
        }
        let mut seen = HashSet::new();
        for id in ubm.iter().chain(&impostor).chain(&enrolled) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!(
                    "speaker {id} appears more than once in the partition"
                )));
            }
        }
        Ok(SpeakerPartition {
            ubm,
            impostor,
            enrolled,
        })
    }

    pub fn ubm(&self) -> &[String] {
        &self.ubm
    }

    pub fn impostor(&self) -> &[String] {
        &self.impostor
    }

    pub fn enrolled(&self) -> &[String] {
        &self.enrolled
    }

    pub fn role_of(&self, speaker: &str) -> Option<Role> {
        let has = |set: &[String]| set.iter().any(|s| s == speaker);
        if has(&self.enrolled) {
            Some(Role::Enrolled)
        } else if has(&self.impostor) {
            Some(Role::Impostor)
        } else if has(&self.ubm) {
            Some(Role::Ubm)
        } else {
            None
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_inner(path).map_err(|e| e.at(path))
    }

    fn read_inner(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(rdr.headers()?, &PARTITION_HEADER)?;
        let (mut ubm, mut impostor, mut enrolled) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec[0].to_string();
            match rec[1].parse::<Role>()? {
                Role::Ubm => ubm.push(id),
                Role::Impostor => impostor.push(id),
                Role::Enrolled => enrolled.push(id),
            }
        }
        Self::new(ubm, impostor, enrolled)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(PARTITION_HEADER)?;
        for (role, set) in [
            (Role::Ubm, &self.ubm),
            (Role::Impostor, &self.impostor),
            (Role::Enrolled, &self.enrolled),
        ] {
            for id in set {
                w.write_record([id.as_str(), &role.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws three disjoint speaker sets of exactly the requested sizes.
///
/// The input is sorted and deduplicated first, so the result depends only on
/// the speaker set and the seed, not on input order.
pub fn split_speakers(
    all_speakers: &[String],
    ubm_count: usize,
    impostor_count: usize,
    enrolled_count: usize,
    seed: u64,
) -> Result<SpeakerPartition> {
    let mut pool = all_speakers.to_vec();
    pool.sort();
    pool.dedup();
    let needed = ubm_count + impostor_count + enrolled_count;
    if needed > pool.len() {
        return Err(Error::invalid(format!(
            "requested {needed} speakers but only {} are available",
            pool.len()
        )));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut it = pool.into_iter();
    let ubm = it.by_ref().take(ubm_count).collect();
    let impostor = it.by_ref().take(impostor_count).collect();
    let enrolled = it.take(enrolled_count).collect();
    SpeakerPartition::new(ubm, impostor, enrolled)
}

/// Splits one speaker's utterances into train and test parts.
///
/// The train part holds `round(train_fraction * n)` items; both parts keep
/// the input's relative order.
pub fn split_utterances<T: Clone>(
    utterances: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if utterances.is_empty() {
        return Err(Error::invalid("no utterances to split"));
    }
    let total = utterances.len();
    let train = (train_fraction * total as f64).round() as usize;
    if train == 0 || train == total {
        return Err(Error::DegenerateSplit { total, train });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; total];
    for &i in &order[..train] {
        in_train[i] = true;
    }
    let (mut tr, mut te) = (Vec::with_capacity(train), Vec::with_capacity(total - train));
    for (item, &t) in utterances.iter().zip(&in_train) {
        if t {
            tr.push(item.clone());
        } else {
            te.push(item.clone());
        }
    }
    Ok((tr, te))
}

/// Per-speaker seed for utterance splitting: the run seed mixed with a
/// stable FNV-1a hash of the speaker id.
pub fn speaker_seed(seed: u64, speaker_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in speaker_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("spk{i:04}")).collect()
    }

    #[test]
    fn wav_scaling_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for s in [0i16, 16384, -32768] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(clip.sample_rate(), 16000);
        assert_eq!(clip.utterance_id, "a");

        let one_second = AudioClip::new(vec![0.1; 16000], 16000, "s", "u").unwrap();
        let p2 = dir.path().join("b.wav");
        write_wav(&one_second, &p2).unwrap();
        assert_eq!(load_wav(&p2).unwrap().samples().len(), 16000);
    }

    #[test]
    fn wav_rejects_stereo_and_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = load_wav(&stereo).unwrap_err();
        assert!(
            matches!(err, Error::File { ref source, .. } if matches!(**source, Error::UnsupportedFormat(_)))
        );

        let deep = dir.path().join("d.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&deep, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        let err = load_wav(&deep).unwrap_err();
        assert!(
            matches!(err, Error::File { ref source, .. } if matches!(**source, Error::UnsupportedFormat(_)))
        );
    }

    #[test]
    fn wav_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"RIFX this is not a wave file").unwrap();
        let err = load_wav(&p).unwrap_err();
        assert!(
            matches!(err, Error::File { ref source, .. } if matches!(**source, Error::Format(_)))
        );
    }

    #[test]
    fn wav_data_chunk_round_trips_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&src, spec).unwrap();
        for i in 0..4000i32 {
            w.write_sample(((i * 7919) % 65536 - 32768) as i16).unwrap();
        }
        w.finalize().unwrap();
        let dst = dir.path().join("dst.wav");
        write_wav(&load_wav(&src).unwrap(), &dst).unwrap();
        let data = |p: &Path| {
            let b = std::fs::read(p).unwrap();
            let at = b.windows(4).position(|w| w == b"data").unwrap();
            b[at..].to_vec()
        };
        assert_eq!(data(&src), data(&dst));
    }

    #[test]
    fn clip_invariants() {
        assert!(AudioClip::new(vec![], 16000, "", "").is_err());
        assert!(AudioClip::new(vec![0.0], 0, "", "").is_err());
        assert!(AudioClip::new(vec![1.5], 16000, "", "").is_err());
    }

    #[test]
    fn full_scale_speaker_partition() {
        let all = ids(2483);
        let p = split_speakers(&all, 383, 1400, 700, 7).unwrap();
        assert_eq!(
            (p.ubm().len(), p.impostor().len(), p.enrolled().len()),
            (383, 1400, 700)
        );
        let mut union: Vec<_> = p
            .ubm()
            .iter()
            .chain(p.impostor())
            .chain(p.enrolled())
            .collect();
        union.sort();
        union.dedup();
        assert_eq!(union.len(), 2483);
        assert_eq!(p, split_speakers(&all, 383, 1400, 700, 7).unwrap());
    }

    #[test]
    fn exhaustive_tiny_partition() {
        let all = ids(3);
        for seed in 0..5 {
            let p = split_speakers(&all, 1, 1, 1, seed).unwrap();
            let mut union: Vec<_> = p
                .ubm()
                .iter()
                .chain(p.impostor())
                .chain(p.enrolled())
                .cloned()
                .collect();
            union.sort();
            assert_eq!(union, all);
        }
        assert!(split_speakers(&all, 2, 1, 1, 0).is_err());
    }

    #[test]
    fn utterance_split_sizes() {
        let u: Vec<u32> = (0..10).collect();
        let (tr, te) = split_utterances(&u, 0.7, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let (tr, te) = split_utterances(&u[..2], 0.5, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
        assert!(matches!(
            split_utterances(&u[..1], 0.7, 0),
            Err(Error::DegenerateSplit { total: 1, train: 1 })
        ));
        assert!(split_utterances(&u, 1.0, 0).is_err());
        assert!(split_utterances::<u32>(&[], 0.5, 0).is_err());
    }

    #[test]
    fn utterance_split_depends_on_seed() {
        let u: Vec<u32> = (0..100).collect();
        let (a, _) = split_utterances(&u, 0.7, 1).unwrap();
        let (b, _) = split_utterances(&u, 0.7, 2).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a, b);
        assert_eq!(a, split_utterances(&u, 0.7, 1).unwrap().0);
    }

    #[test]
    fn manifest_and_partition_csv() {
        let dir = tempfile::tempdir().unwrap();
        let m = CorpusManifest::new(vec![
            ManifestEntry {
                speaker_id: "a".into(),
                utterance_id: "1".into(),
                path: dir.path().join("a1.wav"),
                duration_seconds: 1.5,
            },
            ManifestEntry {
                speaker_id: "b".into(),
                utterance_id: "1".into(),
                path: dir.path().join("b1.wav"),
                duration_seconds: 2.0,
            },
        ])
        .unwrap();
        let mp = dir.path().join("manifest.csv");
        m.write(&mp).unwrap();
        assert_eq!(CorpusManifest::read(&mp).unwrap(), m);
        assert_eq!(m.speakers(), vec!["a", "b"]);

        let p = SpeakerPartition::new(
            vec!["u".into()],
            vec!["i".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let pp = dir.path().join("partition.csv");
        p.write(&pp).unwrap();
        let text = std::fs::read_to_string(&pp).unwrap();
        assert!(text.starts_with("speaker_id,role\n"));
        assert_eq!(SpeakerPartition::read(&pp).unwrap(), p);
        assert_eq!(p.role_of("i"), Some(Role::Impostor));
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_durations() {
        let e = ManifestEntry {
            speaker_id: "a".into(),
            utterance_id: "1".into(),
            path: "x.wav".into(),
            duration_seconds: 1.0,
        };
        assert!(CorpusManifest::new(vec![e.clone(), e.clone()]).is_err());
        assert!(CorpusManifest::new(vec![ManifestEntry {
            duration_seconds: 0.0,
            ..e
        }])
        .is_err());
        assert!(SpeakerPartition::new(vec!["a".into()], vec![], vec!["a".into()]).is_err());
        assert!(SpeakerPartition::new(vec![], vec![], vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partitions_are_disjoint(n in 3usize..60, a in 0usize..20, b in 0usize..20, c in 1usize..20, seed: u64) {
                prop_assume!(a + b + c <= n);
                let p = split_speakers(&ids(n), a, b, c, seed).unwrap();
                for x in p.ubm() {
                    prop_assert!(!p.impostor().contains(x) && !p.enrolled().contains(x));
                }
                for x in p.impostor() {
                    prop_assert!(!p.enrolled().contains(x));
                }
            }

            #[test]
            fn utterance_split_is_a_partition(n in 2usize..80, frac in 0.05f64..0.95, seed: u64) {
                let u: Vec<usize> = (0..n).collect();
                if let Ok((tr, te)) = split_utterances(&u, frac, seed) {
                    prop_assert_eq!(tr.len(), (frac * n as f64).round() as usize);
                    let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
                    all.sort();
                    prop_assert_eq!(all, u);
                }
            }
        }
    }
}
