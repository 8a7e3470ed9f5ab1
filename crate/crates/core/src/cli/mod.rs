//! Command-line front end.
//!
//! Every long flag is also a config key: `--config FILE` reads `key=value`
//! lines (underscores and dashes are interchangeable, `#` starts a comment)
//! and flags given on the command line win. Each run writes `config.txt`,
//! which replays the run when passed back through `--config`, and
//! `manifest.json` under `--out`.

mod bench;
mod commands;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};

pub use bench::{bench_forward, BenchRow};

/// Process exit status for a failed run.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "svnn", version, about = "Sparse covariance neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regression data set.
    Gen(GenArgs),
    /// Threshold or stochastically sparsify a covariance estimate.
    Sparsify(SparsifyArgs),
    /// Train a VNN on a data set archive.
    Train(TrainArgs),
    /// Sweep sample counts and sparsifiers, comparing against bounds.
    Stability(StabilityArgs),
    /// Time VNN layer forward passes for dense and sparsified covariances.
    Bench(BenchArgs),
    /// Tabulate a filter's frequency response.
    Freq(FreqArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// File of key=value lines; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub(crate) struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// sparsecov, largecov, smallcov or spiked.
    #[arg(long, default_value = "sparsecov")]
    preset: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    noise_var: f64,
    /// Off-diagonal density (sparsecov).
    #[arg(long)]
    density: Option<f64>,
    /// Row sparsity cap (sparsecov) or spike support size (spiked).
    #[arg(long)]
    c0: Option<usize>,
    /// Target correlation (largecov, smallcov).
    #[arg(long)]
    rho: Option<f64>,
    /// Number of spikes.
    #[arg(long, default_value_t = 2)]
    r: usize,
    /// Comma-separated spike strengths; defaults to 2r, 2(r-1), ..., 2.
    #[arg(long)]
    betas: Option<String>,
}

#[derive(Debug, Args)]
pub(crate) struct SparsifyArgs {
    #[command(flatten)]
    common: Common,
    /// Covariance estimate in matrix text format.
    #[arg(long, conflicts_with = "data")]
    input: Option<PathBuf>,
    /// Data set archive; the estimate is the training-split sample covariance.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sample count behind `--input` (sets the threshold scale tau / sqrt(t)).
    #[arg(long)]
    t: Option<usize>,
    /// hard, soft, acv or rcv.
    #[arg(long)]
    method: String,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub(crate) struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Data set archive written by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Covariance source: sample (training split) or true (archive's true_cov.txt).
    #[arg(long, default_value = "sample")]
    cov_source: String,
    /// dense, hard, soft, acv or rcv.
    #[arg(long, default_value = "dense")]
    method: String,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated layer widths.
    #[arg(long, default_value = "13,13")]
    layers: String,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 13)]
    hidden: usize,
    /// relu or tanh.
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.015)]
    lr: f64,
    #[arg(long, default_value_t = 800)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    weight_decay: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    standardize_targets: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub(crate) struct StabilityArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "sparsecov")]
    preset: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Seed of the true covariance.
    #[arg(long, default_value_t = 0)]
    cov_seed: u64,
    #[arg(long, default_value = "50,100,200,400,800,1600,3200,6400")]
    t_grid: String,
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// Comma-separated subset of dense, hard, soft, acv, rcv, pca.
    #[arg(long, default_value = "dense,hard")]
    methods: String,
    /// Threshold coefficient; defaults to sqrt(ln n).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 10)]
    pca_components: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    noise_var: f64,
    #[arg(long, default_value = "13,13")]
    layers: String,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 13)]
    hidden: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.015)]
    lr: f64,
    #[arg(long, default_value_t = 800)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    weight_decay: f64,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Debug, Args)]
pub(crate) struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 32)]
    features: usize,
    /// Comma-separated subset of dense, hard, soft, acv, rcv.
    #[arg(long, default_value = "dense,rcv")]
    methods: String,
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Nominal sample count for the threshold scale.
    #[arg(long, default_value_t = 1000)]
    t: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub(crate) struct FreqArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated taps h_0, ..., h_K.
    #[arg(long, allow_hyphen_values = true)]
    taps: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    lambda_max: f64,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// 1: h(lambda); 2: surface h(lambda1, lambda2, lambda2, ...).
    #[arg(long, default_value_t = 1)]
    dims: usize,
}

/// Files written by a command, relative to `--out`.
#[derive(Debug, Default)]
pub(crate) struct Artifacts(Vec<String>);

impl Artifacts {
    pub(crate) fn write(&mut self, out: &Path, name: &str, text: &str) -> Result<()> {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.add(name);
        Ok(())
    }

    pub(crate) fn add(&mut self, name: &str) {
        if !self.0.iter().any(|a| a == name) {
            self.0.push(name.to_string());
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a BTreeMap<String, String>,
    artifacts: Vec<String>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = match merge_config(&args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let resolved = resolved_config(name, sub);
    match execute(cli.command, name, &resolved) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn execute(command: Command, name: &str, resolved: &BTreeMap<String, String>) -> Result<()> {
    let out = match &command {
        Command::Gen(a) => &a.common.out,
        Command::Sparsify(a) => &a.common.out,
        Command::Train(a) => &a.common.out,
        Command::Stability(a) => &a.common.out,
        Command::Bench(a) => &a.common.out,
        Command::Freq(a) => &a.common.out,
    }
    .clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut artifacts = Artifacts::default();
    match command {
        Command::Gen(a) => commands::gen(&a, &out, &mut artifacts)?,
        Command::Sparsify(a) => commands::sparsify(&a, &out, &mut artifacts)?,
        Command::Train(a) => commands::train(&a, &out, &mut artifacts)?,
        Command::Stability(a) => commands::stability(&a, &out, &mut artifacts)?,
        Command::Bench(a) => commands::bench(&a, &out, &mut artifacts)?,
        Command::Freq(a) => commands::freq(&a, &out, &mut artifacts)?,
    }

    let mut config = format!("command={name}\n");
    for (k, v) in resolved {
        config.push_str(&format!("{k}={v}\n"));
    }
    artifacts.write(&out, "config.txt", &config)?;
    let mut files = artifacts.0.clone();
    files.push("manifest.json".into());
    files.sort();
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config: resolved,
        artifacts: files,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    let p = out.join("manifest.json");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Every option of the subcommand with its final value, keyed by long name.
fn resolved_config(name: &str, m: &ArgMatches) -> BTreeMap<String, String> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let mut out = BTreeMap::new();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if long == "config" || long == "help" {
            continue;
        }
        if let Ok(Some(raw)) = m.try_get_raw(arg.get_id().as_str()) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            out.insert(long.to_string(), vals.join(","));
        }
    }
    out
}

/// Splice `--config` file entries into the argument list ahead of the
/// command-line flags, skipping keys the command line already sets.
fn merge_config(args: &[OsString]) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut config_path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            config_path = strs.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            config_path = Some(v.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(args.to_vec());
    };
    let path = PathBuf::from(path);
    let entries = read_config(&path)?;

    // Subcommand: first known command name on the command line, else
    // `command=` in the file.
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let mut sub_pos = None;
    for (i, a) in strs.iter().enumerate().skip(1) {
        if strs[i - 1] == "--config" {
            continue;
        }
        if names.contains(&a.as_str()) {
            sub_pos = Some(i);
            break;
        }
    }
    let file_cmd = entries
        .iter()
        .find(|(k, _, _)| k == "command")
        .map(|(_, v, _)| v.clone());
    let (sub_name, mut argv) = match (sub_pos, &file_cmd) {
        (Some(i), Some(f)) if strs[i] != *f => {
            return Err(Error::invalid(format!(
                "{}: command={f} but the command line runs {}",
                path.display(),
                strs[i]
            )))
        }
        (Some(i), _) => (strs[i].clone(), strs[..=i].to_vec()),
        (None, Some(f)) => (f.clone(), vec![strs[0].clone(), f.clone()]),
        (None, None) => return Ok(args.to_vec()),
    };
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args.to_vec());
    };
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long())
        .map(str::to_string)
        .collect();
    let rest: Vec<String> = match sub_pos {
        Some(i) => strs[i + 1..].to_vec(),
        None => strs[1..].to_vec(),
    };
    let on_cli = |key: &str| {
        rest.iter().any(|a| {
            a.strip_prefix("--")
                .is_some_and(|f| f == key || f.starts_with(&format!("{key}=")))
        })
    };
    for (key, value, line) in &entries {
        if key == "command" {
            continue;
        }
        if key == "config" || !known.contains(key) {
            return Err(Error::Parse {
                path: path.clone(),
                line: *line,
                msg: format!("unknown key {key:?} for command {sub_name}"),
            });
        }
        if !on_cli(key) {
            argv.push(format!("--{key}={value}"));
        }
    }
    argv.extend(rest);
    Ok(argv.into_iter().map(OsString::from).collect())
}

fn read_config(path: &Path) -> Result<Vec<(String, String, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

/// Comma-separated list of values.
pub(crate) fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::invalid(format!("--{key}: cannot parse {s:?}")))
        })
        .collect()
}
