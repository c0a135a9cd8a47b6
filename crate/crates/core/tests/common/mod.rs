#![allow(dead_code)]

use std::path::{Path, PathBuf};

use osid::config::RunConfig;
use osid::dataset::SpeakerPartition;
use osid::openset::Architecture;
use osid::pipeline;
use osid::synth::write_corpus;

/// A small synthetic audio corpus with a partition and a run config whose
/// model sizes suit a test run. Speakers are assigned UBM first, then
/// impostors, then enrolled.
pub fn small_corpus(
    root: &Path,
    ubm: usize,
    impostors: usize,
    enrolled: usize,
    utterances: usize,
) -> RunConfig {
    let data = root.join("data");
    let manifest = write_corpus(
        &data,
        ubm + impostors + enrolled,
        utterances,
        1.0,
        16_000,
        11,
    )
    .unwrap();
    let ids = manifest.speakers();
    let partition = SpeakerPartition::new(
        ids[..ubm].to_vec(),
        ids[ubm..ubm + impostors].to_vec(),
        ids[ubm + impostors..].to_vec(),
    )
    .unwrap();
    partition.write(data.join("partition.csv")).unwrap();
    let mut cfg = RunConfig::parse_str(
        "ubm_components = 8\n\
         speaker_components = 2\n\
         em_max_iterations = 15\n\
         subnn_hidden = 16,16\n\
         subnn_batch_size = 128\n\
         multiclass_hidden = 32,32\n\
         multiclass_batch_size = 256\n\
         learning_rate = 0.001\n",
    )
    .unwrap();
    cfg.manifest = data.join("manifest.csv");
    cfg.partition = data.join("partition.csv");
    cfg.out = root.join("out");
    cfg.population_sizes = vec![enrolled / 2, enrolled];
    cfg.seed = 5;
    cfg
}

/// extract, train-ubm, then train and evaluate every architecture, then report.
pub fn full_run(cfg: &RunConfig) {
    assert!(pipeline::cmd_extract(cfg).unwrap().all_ok());
    pipeline::cmd_train_ubm(cfg).unwrap();
    for arch in Architecture::ALL {
        let c = RunConfig {
            arch,
            ..cfg.clone()
        };
        pipeline::cmd_train(&c).unwrap();
        pipeline::cmd_evaluate(&c).unwrap();
    }
    pipeline::cmd_report(cfg).unwrap();
}

/// Every file below `dir` except run metadata, as (relative path, bytes).
pub fn artifacts(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            let rel = p.strip_prefix(base).unwrap().to_path_buf();
            if rel.starts_with(pipeline::META_DIR) {
                continue;
            }
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
