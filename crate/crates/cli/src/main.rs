use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use osid::config::{RunConfig, KEYS};
use osid::dataset::{split_speakers, DEFAULT_SAMPLE_RATE};
use osid::pipeline;

/// Exit status for a run whose only failures were individual input files.
const PARTIAL_FAILURE: u8 = 1;
const FATAL: u8 = 2;

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut cmd = Command::new("osid")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Open-set speaker identification with GMM-UBM, 2-class NN bank and multi-class NN systems")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .global(true)
                .help("Config file of `key = value` lines"),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .global(true)
                .help(format!("Override `{key}`"))
                .hide(!matches!(
                    *key,
                    "arch" | "seed" | "out" | "population_sizes" | "threads"
                )),
        );
    }
    cmd.subcommand(
        Command::new("extract").about("Extract and cache MFCC features for every manifest entry"),
    )
    .subcommand(Command::new("train-ubm").about("Fit the universal background model"))
    .subcommand(
        Command::new("train").about("Train the selected architecture on the enrolled speakers"),
    )
    .subcommand(Command::new("evaluate").about("Score held-out trials at every population size"))
    .subcommand(Command::new("report").about("Rebuild the combined report from trial files"))
    .subcommand(
        Command::new("synth")
            .about("Write a synthetic demo corpus, partition and config file")
            .arg(
                Arg::new("dir")
                    .required(true)
                    .value_parser(clap::value_parser!(PathBuf)),
            )
            .arg(num_arg("ubm-speakers", "8"))
            .arg(num_arg("impostors", "10"))
            .arg(num_arg("enrolled", "10"))
            .arg(num_arg("utterances", "6"))
            .arg(
                Arg::new("seconds")
                    .long("seconds")
                    .default_value("2")
                    .value_parser(clap::value_parser!(f64)),
            ),
    )
}

fn num_arg(name: &'static str, default: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .default_value(default)
        .value_parser(clap::value_parser!(usize))
        .action(ArgAction::Set)
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)
                .with_context(|| format!("--{}", flag(key)))?;
        }
    }
    Ok(cfg)
}

fn synth(m: &ArgMatches, seed: u64) -> Result<()> {
    let dir: &PathBuf = m.get_one("dir").expect("required");
    let n = |name: &str| *m.get_one::<usize>(name).expect("defaulted");
    let (ubm, impostors, enrolled) = (n("ubm-speakers"), n("impostors"), n("enrolled"));
    if enrolled < 2 {
        bail!("at least two enrolled speakers are needed");
    }
    let manifest = osid::synth::write_corpus(
        dir,
        ubm + impostors + enrolled,
        n("utterances"),
        *m.get_one::<f64>("seconds").expect("defaulted"),
        DEFAULT_SAMPLE_RATE,
        seed,
    )?;
    let partition = split_speakers(&manifest.speakers(), ubm, impostors, enrolled, seed)?;
    partition.write(dir.join("partition.csv"))?;
    let half = (enrolled / 2).max(1);
    let conf = format!(
        "# Demo run over a synthetic corpus.\n\
         manifest = manifest.csv\n\
         partition = partition.csv\n\
         out = out\n\
         seed = {seed}\n\
         population_sizes = {half},{enrolled}\n\
         ubm_components = 32\n\
         speaker_components = 8\n"
    );
    std::fs::write(dir.join("osid.conf"), conf)?;
    println!(
        "wrote {} utterances and {}",
        manifest.entries().len(),
        dir.join("osid.conf").display()
    );
    Ok(())
}

fn run(m: &ArgMatches) -> Result<u8> {
    let cfg = load_config(m)?;
    let (name, sub) = m.subcommand().expect("subcommand required");
    match name {
        "extract" => {
            let summary = pipeline::cmd_extract(&cfg)?;
            for r in summary.failures() {
                eprintln!("{}/{}: {}", r.speaker_id, r.utterance_id, r.status);
            }
            let failed = summary.failures().count();
            println!(
                "extracted {} of {} utterances",
                summary.rows.len() - failed,
                summary.rows.len()
            );
            return Ok(if failed == 0 { 0 } else { PARTIAL_FAILURE });
        }
        "train-ubm" => {
            let ubm = pipeline::cmd_train_ubm(&cfg)?;
            println!(
                "UBM with {} components written to {}",
                ubm.num_components(),
                cfg.out.join(pipeline::UBM_FILE).display()
            );
        }
        "train" => {
            pipeline::cmd_train(&cfg)?;
            println!(
                "{} models written under {}",
                cfg.arch,
                pipeline::bank_dir(&cfg.out, cfg.arch).display()
            );
        }
        "evaluate" | "report" => {
            let rows = if name == "evaluate" {
                pipeline::cmd_evaluate(&cfg)?
            } else {
                pipeline::cmd_report(&cfg)?
            };
            println!("architecture  K  CSRR  EER  theta*");
            for r in rows {
                println!(
                    "{:<12} {:>4} {:.4} {:.4} {:.6}",
                    r.architecture, r.population_size, r.csrr, r.eer, r.theta_star
                );
            }
        }
        "synth" => synth(sub, cfg.seed)?,
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(FATAL)
        }
    }
}
