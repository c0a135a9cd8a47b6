//! The end-to-end commands behind the `osid` binary.
//!
//! Everything lives under one output directory:
//!
//! ```text
//! out/
//!   features/index.csv, *.feat       extract
//!   ubm.gmm                          train-ubm
//!   bank/gmm/{manifest.csv, *.gmm, ubm.gmm}
//!   bank/subnn/{manifest.csv, *.mlp}
//!   bank/multiclass/K{K}/{multiclass.mlp, speakers.csv}
//!   eval/{arch}/{speakers.csv, trials_K{K}.csv, report.csv}
//!   report.csv                       report
//!   meta/{command}.conf              one per run
//! ```
//!
//! Each command reads only what earlier commands wrote, so a long run can
//! resume from any step. Metadata files are themselves valid config files
//! (the extra fields are `#` comments), so `--config out/meta/train-gmm.conf`
//! repeats a run.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::{concatenate, Axis};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{
    check_header, load_wav, speaker_seed, split_utterances, CorpusManifest, SpeakerPartition,
};
use crate::eval::{read_trials, write_report, write_trials, ReportRow, TrialScore};
use crate::features::{extract_features, FeatureSet};
use crate::gmm::{em_fit, DiagGmm, EmConfig};
use crate::mlp::MlpNetwork;
use crate::openset::{
    train_gmm_bank, train_multiclass, train_subnn_bank, Architecture, GmmBank, MulticlassSystem,
    SpeakerBank, SubnnBank, System,
};
use crate::{Error, Result};

pub const FEATURES_DIR: &str = "features";
pub const INDEX_FILE: &str = "index.csv";
pub const UBM_FILE: &str = "ubm.gmm";
pub const BANK_DIR: &str = "bank";
pub const BANK_MANIFEST: &str = "manifest.csv";
pub const SPEAKERS_FILE: &str = "speakers.csv";
pub const MULTICLASS_FILE: &str = "multiclass.mlp";
pub const EVAL_DIR: &str = "eval";
pub const REPORT_FILE: &str = "report.csv";
pub const META_DIR: &str = "meta";

pub const STATUS_OK: &str = "ok";

/// Bank directory of a per-speaker architecture, or the parent of the
/// per-size multiclass directories.
pub fn bank_dir(out: &Path, arch: Architecture) -> PathBuf {
    out.join(BANK_DIR).join(arch.as_str())
}

pub fn multiclass_dir(out: &Path, population: usize) -> PathBuf {
    bank_dir(out, Architecture::Multiclass).join(format!("K{population}"))
}

pub fn eval_dir(out: &Path, arch: Architecture) -> PathBuf {
    out.join(EVAL_DIR).join(arch.as_str())
}

pub fn trials_path(out: &Path, arch: Architecture, population: usize) -> PathBuf {
    eval_dir(out, arch).join(format!("trials_K{population}.csv"))
}

/// Makes an id safe to embed in a file name.
fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Short machine-readable tag for a per-file failure.
pub fn status_tag(err: &Error) -> &'static str {
    match err {
        Error::File { source, .. } => status_tag(source),
        Error::NoSpeech => "no_speech",
        Error::TooShort { .. } => "too_short",
        Error::UnsupportedFormat(_) => "unsupported_format",
        Error::Io(_) => "unreadable",
        Error::Format(_) => "malformed",
        _ => "error",
    }
}

/// Runs `f` on a pool of `threads` workers (0 picks the rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Writes `out/meta/{command}.conf`: comment lines for the command, tool
/// version, start time and duration, then the resolved config.
pub fn write_metadata(
    cfg: &RunConfig,
    command: &str,
    started: SystemTime,
    elapsed_seconds: f64,
    extra: &[(&str, String)],
) -> Result<PathBuf> {
    let mut snap = cfg.clone();
    snap.manifest = absolute(&cfg.manifest);
    snap.partition = absolute(&cfg.partition);
    snap.out = absolute(&cfg.out);
    let start = started
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = String::new();
    let _ = writeln!(text, "# command = {command}");
    let _ = writeln!(text, "# tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "# seed = {}", cfg.seed);
    let _ = writeln!(text, "# started_unix_seconds = {start}");
    let _ = writeln!(text, "# wall_clock_seconds = {elapsed_seconds:.3}");
    for (k, v) in extra {
        let _ = writeln!(text, "# {k} = {v}");
    }
    text.push_str(&snap.snapshot());
    let dir = cfg.out.join(META_DIR);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{command}.conf"));
    std::fs::write(&path, text).map_err(|e| Error::from(e).at(&path))?;
    Ok(path)
}

/// Validates, runs on the configured pool, and records metadata on success.
fn run<T: Send>(
    cfg: &RunConfig,
    command: &str,
    f: impl FnOnce() -> Result<(T, Vec<(&'static str, String)>)> + Send,
) -> Result<T> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::from(e).at(&cfg.out))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let (value, extra) = with_threads(cfg.threads, f)??;
    write_metadata(cfg, command, started, clock.elapsed().as_secs_f64(), &extra)?;
    Ok(value)
}

/// One row of the feature index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRow {
    pub speaker_id: String,
    pub utterance_id: String,
    /// Relative to the features directory; empty when extraction failed.
    pub cache_file: String,
    /// [`STATUS_OK`] or a [`status_tag`].
    pub status: String,
}

const INDEX_HEADER: [&str; 4] = ["speaker_id", "utterance_id", "cache_file", "status"];

pub fn write_index(path: &Path, rows: &[IndexRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INDEX_HEADER)?;
    for r in rows {
        w.write_record([&r.speaker_id, &r.utterance_id, &r.cache_file, &r.status])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let inner = || -> Result<Vec<IndexRow>> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(rdr.headers()?, &INDEX_HEADER)?;
        rdr.records()
            .map(|rec| {
                let rec = rec?;
                Ok(IndexRow {
                    speaker_id: rec[0].to_string(),
                    utterance_id: rec[1].to_string(),
                    cache_file: rec[2].to_string(),
                    status: rec[3].to_string(),
                })
            })
            .collect()
    };
    inner().map_err(|e| e.at(path))
}

/// Outcome of [`cmd_extract`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractSummary {
    pub rows: Vec<IndexRow>,
}

impl ExtractSummary {
    pub fn failures(&self) -> impl Iterator<Item = &IndexRow> {
        self.rows.iter().filter(|r| r.status != STATUS_OK)
    }

    pub fn all_ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Extracts and caches features for every manifest entry.
///
/// A failing file gets a status tag in the index and the run carries on;
/// only manifest or output-directory problems are fatal.
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    run(cfg, "extract", || {
        let manifest = CorpusManifest::read(&cfg.manifest)?;
        let dir = cfg.out.join(FEATURES_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::from(e).at(&dir))?;
        let rows: Vec<IndexRow> = manifest
            .entries()
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let name = format!(
                    "{i:06}_{}_{}.feat",
                    file_safe(&e.speaker_id),
                    file_safe(&e.utterance_id)
                );
                let target = dir.join(&name);
                let outcome = load_wav(&e.path).and_then(|clip| {
                    if clip.sample_rate() != cfg.sample_rate {
                        return Err(Error::UnsupportedFormat(format!(
                            "sample rate {} Hz, expected {} Hz",
                            clip.sample_rate(),
                            cfg.sample_rate
                        ))
                        .at(&e.path));
                    }
                    extract_features(&clip, &cfg.features)?.save(&target)
                });
                let (cache_file, status) = match outcome {
                    Ok(()) => (name, STATUS_OK.to_string()),
                    Err(err) => {
                        let _ = std::fs::remove_file(&target);
                        (String::new(), status_tag(&err).to_string())
                    }
                };
                IndexRow {
                    speaker_id: e.speaker_id.clone(),
                    utterance_id: e.utterance_id.clone(),
                    cache_file,
                    status,
                }
            })
            .collect();
        write_index(&dir.join(INDEX_FILE), &rows)?;
        let summary = ExtractSummary { rows };
        let failed = summary.failures().count();
        Ok((summary, vec![("failed_files", failed.to_string())]))
    })
}

/// A cached utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub features: FeatureSet,
}

/// Loads the successfully extracted utterances of `speakers`, in index
/// order. A speaker with none is a [`Error::MissingFeatures`].
pub fn load_features(out: &Path, speakers: &[String]) -> Result<HashMap<String, Vec<Utterance>>> {
    let dir = out.join(FEATURES_DIR);
    let wanted: HashSet<&str> = speakers.iter().map(String::as_str).collect();
    let rows: Vec<IndexRow> = read_index(&dir.join(INDEX_FILE))?
        .into_iter()
        .filter(|r| r.status == STATUS_OK && wanted.contains(r.speaker_id.as_str()))
        .collect();
    let loaded = rows
        .par_iter()
        .map(|r| FeatureSet::load(dir.join(&r.cache_file)))
        .collect::<Result<Vec<_>>>()?;
    let mut map: HashMap<String, Vec<Utterance>> = HashMap::new();
    for (r, features) in rows.into_iter().zip(loaded) {
        map.entry(r.speaker_id).or_default().push(Utterance {
            utterance_id: r.utterance_id,
            features,
        });
    }
    if let Some(s) = speakers.iter().find(|s| !map.contains_key(s.as_str())) {
        return Err(Error::MissingFeatures(s.clone()));
    }
    Ok(map)
}

/// The seeded train/test split of one speaker's utterances.
pub fn split_speaker(
    cfg: &RunConfig,
    speaker: &str,
    utts: &[Utterance],
) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    split_utterances(utts, cfg.train_fraction, speaker_seed(cfg.seed, speaker)).map_err(|e| {
        Error::Enrollment {
            speaker: speaker.to_string(),
            reason: e.to_string(),
        }
    })
}

/// All frames of several utterances stacked into one set.
pub fn stack(utts: &[Utterance]) -> Result<FeatureSet> {
    let views: Vec<_> = utts.iter().map(|u| u.features.vectors()).collect();
    let m = concatenate(Axis(0), &views)
        .map_err(|e| Error::invalid(format!("cannot stack features: {e}")))?;
    FeatureSet::from_matrix(m)
}

/// The first `max(population_sizes)` enrolled speakers.
pub fn enrolled_prefix(cfg: &RunConfig, partition: &SpeakerPartition) -> Result<Vec<String>> {
    let k_max = cfg.population_sizes.iter().copied().max().unwrap_or(0);
    if k_max > partition.enrolled().len() {
        return Err(Error::Configuration(format!(
            "population size {k_max} exceeds the {} enrolled speakers",
            partition.enrolled().len()
        )));
    }
    Ok(partition.enrolled()[..k_max].to_vec())
}

/// Fits the background model on every utterance of the UBM speakers.
pub fn cmd_train_ubm(cfg: &RunConfig) -> Result<DiagGmm> {
    run(cfg, "train-ubm", || {
        let partition = SpeakerPartition::read(&cfg.partition)?;
        if partition.ubm().is_empty() {
            return Err(Error::Configuration(
                "the partition has no UBM speakers".into(),
            ));
        }
        let store = load_features(&cfg.out, partition.ubm())?;
        let all: Vec<Utterance> = partition
            .ubm()
            .iter()
            .flat_map(|s| store[s].iter().cloned())
            .collect();
        let data = stack(&all)?;
        let em = EmConfig {
            seed: cfg.seed,
            ..cfg.em.clone()
        };
        let ubm = em_fit(data.vectors(), cfg.ubm_components, &em)?;
        ubm.save(cfg.out.join(UBM_FILE))?;
        Ok((ubm, vec![("ubm_frames", data.len().to_string())]))
    })
}

fn load_ubm(out: &Path) -> Result<DiagGmm> {
    let path = out.join(UBM_FILE);
    if !path.exists() {
        return Err(Error::Configuration(format!(
            "{} not found; run train-ubm first",
            path.display()
        )));
    }
    DiagGmm::load(path)
}

/// Trains the configured architecture on the enrolled prefix.
///
/// Per-speaker banks are trained once for the largest population; smaller
/// populations are prefixes. The multiclass network is retrained for each
/// population size.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let command = format!("train-{}", cfg.arch);
    run(cfg, &command, || {
        let partition = SpeakerPartition::read(&cfg.partition)?;
        let speakers = enrolled_prefix(cfg, &partition)?;
        let store = load_features(&cfg.out, &speakers)?;
        let train = speakers
            .iter()
            .map(|s| {
                let (tr, _) = split_speaker(cfg, s, &store[s])?;
                Ok((s.clone(), stack(&tr)?))
            })
            .collect::<Result<Vec<_>>>()?;
        match cfg.arch {
            Architecture::Gmm => {
                let ubm = load_ubm(&cfg.out)?;
                let bank = train_gmm_bank(&train, ubm, cfg.speaker_components, &cfg.em, cfg.seed)?;
                save_gmm_bank(&bank, &bank_dir(&cfg.out, Architecture::Gmm))?;
            }
            Architecture::Subnn => {
                let ubm = load_ubm(&cfg.out)?;
                let bank = train_subnn_bank(&train, &ubm, &cfg.subnn, cfg.seed)?;
                save_subnn_bank(&bank, &bank_dir(&cfg.out, Architecture::Subnn))?;
            }
            Architecture::Multiclass => {
                for k in cfg.sorted_population_sizes() {
                    let system = train_multiclass(&train[..k], &cfg.multiclass, cfg.seed)?;
                    save_multiclass(&system, &multiclass_dir(&cfg.out, k))?;
                }
            }
        }
        Ok(((), vec![("speakers", speakers.len().to_string())]))
    })
}

const BANK_HEADER: [&str; 2] = ["speaker_id", "model_file"];

fn save_models<M>(
    dir: &Path,
    ids: &[String],
    models: &[M],
    ext: &str,
    save: impl Fn(&M, &Path) -> Result<()>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    let mut w = csv::Writer::from_path(dir.join(BANK_MANIFEST))?;
    w.write_record(BANK_HEADER)?;
    for (k, (id, m)) in ids.iter().zip(models).enumerate() {
        let name = format!("{k:04}_{}.{ext}", file_safe(id));
        save(m, &dir.join(&name))?;
        w.write_record([id.as_str(), &name])?;
    }
    w.flush()?;
    Ok(())
}

fn load_models<M>(dir: &Path, load: impl Fn(&Path) -> Result<M>) -> Result<(Vec<String>, Vec<M>)> {
    let path = dir.join(BANK_MANIFEST);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::from(e).at(&path))?;
    check_header(rdr.headers()?, &BANK_HEADER).map_err(|e| e.at(&path))?;
    let (mut ids, mut models) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        models.push(load(&dir.join(&rec[1]))?);
    }
    Ok((ids, models))
}

pub fn save_gmm_bank(bank: &GmmBank, dir: &Path) -> Result<()> {
    save_models(dir, bank.speaker_ids(), bank.models(), "gmm", |m, p| {
        m.save(p)
    })?;
    match bank.ubm() {
        Some(ubm) => ubm.save(dir.join(UBM_FILE)),
        None => Err(Error::Configuration("GMM bank has no UBM".into())),
    }
}

pub fn load_gmm_bank(dir: &Path) -> Result<GmmBank> {
    let (ids, models) = load_models(dir, |p| DiagGmm::load(p))?;
    SpeakerBank::new(ids, models, Some(DiagGmm::load(dir.join(UBM_FILE))?))
}

pub fn save_subnn_bank(bank: &SubnnBank, dir: &Path) -> Result<()> {
    save_models(dir, bank.speaker_ids(), bank.models(), "mlp", |m, p| {
        m.save(p)
    })
}

pub fn load_subnn_bank(dir: &Path) -> Result<SubnnBank> {
    let (ids, models) = load_models(dir, |p| MlpNetwork::load(p))?;
    SpeakerBank::new(ids, models, None)
}

pub fn write_speakers(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["speaker_id"])?;
    for id in ids {
        w.write_record([id])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_speakers(path: &Path) -> Result<Vec<String>> {
    let inner = || -> Result<Vec<String>> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(rdr.headers()?, &["speaker_id"])?;
        rdr.records().map(|r| Ok(r?[0].to_string())).collect()
    };
    inner().map_err(|e| e.at(path))
}

pub fn save_multiclass(system: &MulticlassSystem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    system.net().save(dir.join(MULTICLASS_FILE))?;
    write_speakers(&dir.join(SPEAKERS_FILE), system.speaker_ids())
}

pub fn load_multiclass(dir: &Path) -> Result<MulticlassSystem> {
    let net = MlpNetwork::load(dir.join(MULTICLASS_FILE))?;
    MulticlassSystem::new(net, read_speakers(&dir.join(SPEAKERS_FILE))?).map_err(|e| e.at(dir))
}

/// One test utterance with its ground truth (`None` for impostors).
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub utterance_id: &'a str,
    pub true_index: Option<usize>,
    pub features: &'a FeatureSet,
}

/// Test trials for a population of the first `k` enrolled speakers plus
/// the fixed impostor set.
pub fn population_trials<'a>(
    enrolled: &'a [Vec<Utterance>],
    impostors: &'a [Utterance],
    k: usize,
) -> Vec<Trial<'a>> {
    let own = enrolled[..k].iter().enumerate().flat_map(|(i, utts)| {
        utts.iter().map(move |u| Trial {
            utterance_id: &u.utterance_id,
            true_index: Some(i),
            features: &u.features,
        })
    });
    let other = impostors.iter().map(|u| Trial {
        utterance_id: &u.utterance_id,
        true_index: None,
        features: &u.features,
    });
    own.chain(other).collect()
}

/// Scores trials in parallel; output order follows input order.
pub fn score_trials(system: &System, trials: &[Trial<'_>]) -> Result<Vec<TrialScore>> {
    trials
        .par_iter()
        .map(|t| {
            let s = system.score(t.features)?;
            Ok(TrialScore {
                utterance_id: t.utterance_id.to_string(),
                true_index: t.true_index,
                predicted_index: s.best_index,
                score: s.score,
            })
        })
        .collect()
}

fn check_ids(found: &[String], expected: &[String], what: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Configuration(format!(
            "{what} lists {} speakers that do not match the partition's first {} enrolled speakers",
            found.len(),
            expected.len()
        )));
    }
    Ok(())
}

/// The trained system for a population of `k`, checked against the
/// partition's enrolled order.
pub fn load_system(cfg: &RunConfig, speakers: &[String], k: usize) -> Result<System> {
    let out = &cfg.out;
    let expected = &speakers[..k];
    let per_speaker_prefix = |ids: &[String]| -> Result<()> {
        if ids.len() < k {
            return Err(Error::Configuration(format!(
                "bank holds {} speakers, population {k} requested",
                ids.len()
            )));
        }
        check_ids(&ids[..k], expected, "bank")
    };
    Ok(match cfg.arch {
        Architecture::Gmm => {
            let bank = load_gmm_bank(&bank_dir(out, Architecture::Gmm))?;
            per_speaker_prefix(bank.speaker_ids())?;
            System::Gmm(bank.prefix(k)?)
        }
        Architecture::Subnn => {
            let bank = load_subnn_bank(&bank_dir(out, Architecture::Subnn))?;
            per_speaker_prefix(bank.speaker_ids())?;
            System::Subnn(bank.prefix(k)?)
        }
        Architecture::Multiclass => {
            let system = load_multiclass(&multiclass_dir(out, k))?;
            check_ids(system.speaker_ids(), expected, "multiclass network")?;
            System::Multiclass(system)
        }
    })
}

/// Scores the held-out utterances of the enrolled prefix and the
/// impostors at every population size; writes trial files and the
/// architecture's report.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let command = format!("evaluate-{}", cfg.arch);
    run(cfg, &command, || {
        let partition = SpeakerPartition::read(&cfg.partition)?;
        let speakers = enrolled_prefix(cfg, &partition)?;
        let needed: Vec<String> = speakers
            .iter()
            .chain(partition.impostor())
            .cloned()
            .collect();
        let store = load_features(&cfg.out, &needed)?;
        let test_of = |s: &String| split_speaker(cfg, s, &store[s]).map(|(_, te)| te);
        let enrolled_tests = speakers.iter().map(test_of).collect::<Result<Vec<_>>>()?;
        let mut impostor_tests = Vec::new();
        for s in partition.impostor() {
            impostor_tests.extend(test_of(s)?);
        }
        let dir = eval_dir(&cfg.out, cfg.arch);
        std::fs::create_dir_all(&dir).map_err(|e| Error::from(e).at(&dir))?;
        write_speakers(&dir.join(SPEAKERS_FILE), &speakers)?;
        let mut rows = Vec::new();
        for k in cfg.sorted_population_sizes() {
            let system = load_system(cfg, &speakers, k)?;
            let trials = population_trials(&enrolled_tests, &impostor_tests, k);
            let scores = score_trials(&system, &trials)?;
            write_trials(
                trials_path(&cfg.out, cfg.arch, k),
                &scores,
                &speakers,
                cfg.arch,
            )?;
            rows.push(ReportRow::from_trials(cfg.arch, k, &scores)?);
        }
        write_report(dir.join(REPORT_FILE), &rows)?;
        Ok((rows, Vec::new()))
    })
}

/// Trial files present for one architecture, sorted by population size.
fn trial_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).at(dir))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(k) = name
            .strip_prefix("trials_K")
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|k| k.parse().ok())
        {
            found.push((k, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Recomputes every report row from the trial files alone and writes the
/// combined `out/report.csv`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    run(cfg, "report", || {
        let mut rows = Vec::new();
        for arch in Architecture::ALL {
            let dir = eval_dir(&cfg.out, arch);
            if !dir.is_dir() {
                continue;
            }
            let ids = read_speakers(&dir.join(SPEAKERS_FILE))?;
            for (k, path) in trial_files(&dir)? {
                let (trials, tagged) = read_trials(&path, &ids)?;
                if tagged != arch {
                    return Err(Error::Format(format!(
                        "trials tagged {tagged} in the {arch} directory"
                    ))
                    .at(&path));
                }
                rows.push(ReportRow::from_trials(arch, k, &trials)?);
            }
        }
        if rows.is_empty() {
            return Err(Error::Configuration(format!(
                "no trial files under {}; run evaluate first",
                cfg.out.join(EVAL_DIR).display()
            )));
        }
        write_report(cfg.out.join(REPORT_FILE), &rows)?;
        Ok((rows, Vec::new()))
    })
}
