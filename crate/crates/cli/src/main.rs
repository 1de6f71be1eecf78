//! `ivex`: synthesize scenarios, run extraction, score and benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid flags or shapes,
//! 3 singular-matrix abort.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ivex_core::io::{load_scenario, read_steering, read_wav, write_json, write_scenario, write_wav};
use ivex_core::stft::{analyze, synthesize};
use ivex_core::{
    bench_run, make_scenario, match_and_score, run_extraction, Error, ExtractionConfig, MixingMode, ScenarioSpec,
    StftConfig, Variant,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "ivex", version, about = "Independent vector extraction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory.
    Synth(SynthArgs),
    /// Extract sources from a multichannel WAV file.
    Extract(ExtractArgs),
    /// Score estimated images against references.
    Eval(EvalArgs),
    /// Run several variants on a scenario and tabulate time and quality.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    sources: usize,
    #[arg(long, default_value_t = 4)]
    mics: usize,
    /// Defaults to M − K.
    #[arg(long)]
    noises: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, default_value_t = MixingMode::Inst)]
    mixing: MixingMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 4096)]
    frame: usize,
    #[arg(long, default_value_t = 1024)]
    hop: usize,
    #[serde(skip)]
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct ExtractArgs {
    #[arg(long, required_unless_present = "from_manifest")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = Variant::IveIp2New)]
    algo: Variant,
    #[arg(long, default_value_t = 1)]
    sources: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 4096)]
    frame: usize,
    #[arg(long, default_value_t = 1024)]
    hop: usize,
    #[arg(long, default_value_t = 30)]
    power_iters: usize,
    /// Use the full generalized eigendecomposition instead of the power method.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 1e-3)]
    trace_loading: f64,
    #[arg(long, default_value_t = 1e5)]
    phi_clip: f64,
    /// Steering vectors (semi-ive only).
    #[arg(long)]
    steering: Option<PathBuf>,
    /// How many steering columns to use; defaults to all of them, at most K.
    #[arg(long)]
    known: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Echoed for reproducibility; the initialization itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-run the extraction recorded in a manifest. `--out` may redirect it.
    #[serde(skip)]
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[serde(skip)]
    #[arg(long, required_unless_present = "from_manifest")]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct EvalArgs {
    /// Directory holding est_<i>.wav.
    #[arg(long)]
    est: PathBuf,
    /// Directory holding image_<i>.wav.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Directory for sdr.json and the manifest; the report always goes to stdout.
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ive-ip1,ive-ip2-old,ive-ip2-new")]
    algos: Vec<Variant>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 30)]
    power_iters: usize,
    /// Steering columns given to semi-ive.
    #[arg(long, default_value_t = 1)]
    known: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[serde(skip)]
    #[arg(long)]
    out: PathBuf,
}

/// Written next to every command's outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    tool_version: String,
    /// sha256 of every file read, keyed by the path as given.
    inputs: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    outputs: Vec<String>,
}

const MANIFEST: &str = "manifest.json";

enum Failure {
    Usage(String),
    Singular(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_singular() => Failure::Singular(msg),
            Error::InvalidConfig(_) | Error::Shape(_) | Error::ConfigMismatch(_) | Error::TooShort { .. } => {
                Failure::Usage(msg)
            }
            _ => Failure::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn sha256_file(path: &Path) -> Outcome<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &impl Serialize,
    seed: Option<u64>,
    inputs: &[&Path],
    mut outputs: Vec<String>,
) -> Outcome {
    let mut hashes = BTreeMap::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), sha256_file(p)?);
    }
    outputs.sort();
    let m = RunManifest {
        command: command.into(),
        config: serde_json::to_value(config)?,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        inputs: hashes,
        outputs,
    };
    write_json(dir.join(MANIFEST), &m)?;
    Ok(())
}

fn stft(frame: usize, hop: usize) -> Outcome<StftConfig> {
    Ok(StftConfig::new(frame, hop)?)
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    if a.sources >= a.mics {
        return usage(format!("K < M required (K = {}, M = {})", a.sources, a.mics));
    }
    if !(a.duration > 0.0) {
        return usage("duration must be positive");
    }
    let noises = a.noises.unwrap_or(a.mics - a.sources);
    let n = (a.duration * a.sample_rate as f64).round() as usize;
    let mut spec = ScenarioSpec::new(a.sources, a.mics, noises, a.snr_db, n, a.seed)
        .with_mixing(a.mixing)
        .with_stft(stft(a.frame, a.hop)?);
    spec.sample_rate = a.sample_rate;
    let sc = make_scenario(&spec)?;
    write_scenario(&a.out, &sc)?;
    let mut outputs = vec!["mixture.wav".to_string(), "steering.json".into(), "scenario.json".into()];
    outputs.extend((1..=a.sources).map(|i| format!("image_{i}.wav")));
    write_manifest(&a.out, "synth", a, Some(a.seed), &[], outputs)?;
    if sc.noise_rank_exceeded() {
        eprintln!("note: {noises} noise sources exceed the M − K = {} noise dimensions", a.mics - a.sources);
    }
    println!("wrote {} ({:.2} s, K = {}, M = {}, J = {noises})", a.out.display(), sc.duration(), a.sources, a.mics);
    Ok(())
}

fn extraction_config(a: &ExtractArgs) -> ExtractionConfig {
    ExtractionConfig {
        variant: a.algo,
        num_sources: a.sources,
        iterations: a.iters,
        power_iters: a.power_iters,
        exact_eigen: a.exact,
        trace_loading: a.trace_loading,
        phi_clip: a.phi_clip,
        beta: a.beta,
        threads: a.threads,
        ..Default::default()
    }
}

fn resolve_manifest(a: &ExtractArgs) -> Outcome<ExtractArgs> {
    let Some(path) = &a.from_manifest else {
        return Ok(a.clone());
    };
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if m.command != "extract" {
        return usage(format!("{} records a '{}' run, not extract", path.display(), m.command));
    }
    let mut rec: ExtractArgs = serde_json::from_value(m.config)?;
    // the recorded inputs must be the ones we are about to read
    for (file, hash) in &m.inputs {
        if sha256_file(Path::new(file))? != *hash {
            return Err(Failure::Runtime(format!("{file} changed since the manifest was written")));
        }
    }
    rec.out = a.out.clone().or_else(|| path.parent().map(Path::to_path_buf));
    Ok(rec)
}

fn cmd_extract(args: &ExtractArgs) -> Outcome {
    let a = resolve_manifest(args)?;
    let (Some(input), Some(out)) = (&a.input, &a.out) else {
        return usage("--input and --out are required");
    };
    if a.algo == Variant::SemiIve && a.steering.is_none() {
        return usage("semi-ive needs --steering");
    }
    if a.algo != Variant::SemiIve && (a.steering.is_some() || a.known.is_some()) {
        return usage("--steering and --known only apply to semi-ive");
    }
    let cfg_stft = stft(a.frame, a.hop)?;
    let wave = read_wav(input)?;
    let x = analyze(&wave, &cfg_stft)?;
    let steering = match &a.steering {
        Some(p) => {
            let full = read_steering(p)?;
            let l = a.known.unwrap_or(full.known().min(a.sources));
            if l == 0 || l > a.sources || l > full.known() {
                return usage(format!(
                    "--known must satisfy 1 <= L <= K = {} and L <= {} stored columns",
                    a.sources,
                    full.known()
                ));
            }
            Some(full.truncate(l)?)
        }
        None => None,
    };
    let cfg = extraction_config(&a);
    let result = run_extraction(&x, &cfg, steering.as_ref())?;

    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    for (i, img) in result.images.iter().enumerate() {
        let name = format!("est_{}.wav", i + 1);
        write_wav(out.join(&name), &synthesize(img, &cfg_stft, wave.sample_rate, Some(wave.len()))?)?;
        outputs.push(name);
    }
    result.trajectory.write_csv(fs::File::create(out.join("trajectory.csv"))?)?;
    outputs.push("trajectory.csv".into());

    let mut inputs = vec![input.as_path()];
    if let Some(p) = &a.steering {
        inputs.push(p);
    }
    write_manifest(out, "extract", &a, Some(a.seed), &inputs, outputs)?;
    let last = result.trajectory.records.last().expect("at least one iteration");
    println!(
        "{}: {} iterations, g0 {:.6e}, stationarity {:.2e}, {:.3} s",
        a.algo, last.iteration, last.nll, last.stationarity, last.wall_seconds
    );
    Ok(())
}

// Files named <prefix><i>.wav, in index order.
fn numbered_wavs(dir: &Path, prefix: &str) -> Outcome<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(idx) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".wav")) {
            if let Ok(i) = idx.parse::<usize>() {
                found.push((i, path));
            }
        }
    }
    if found.is_empty() {
        return usage(format!("no {prefix}<i>.wav files in {}", dir.display()));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn cmd_eval(a: &EvalArgs) -> Outcome {
    let est_paths = numbered_wavs(&a.est, "est_")?;
    let ref_paths = numbered_wavs(&a.reference, "image_")?;
    let est = est_paths.iter().map(read_wav).collect::<Result<Vec<_>, _>>()?;
    let refs = ref_paths.iter().map(read_wav).collect::<Result<Vec<_>, _>>()?;
    let report = match_and_score(&est, &refs)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("sdr.json"), &text)?;
        let inputs: Vec<&Path> = est_paths.iter().chain(&ref_paths).map(PathBuf::as_path).collect();
        write_manifest(out, "eval", a, None, &inputs, vec!["sdr.json".into()])?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Outcome {
    if a.algos.is_empty() {
        return usage("--algos is empty");
    }
    let sc = load_scenario(&a.scenario)?;
    let k = sc.spec.num_sources;
    let configs: Vec<ExtractionConfig> = a
        .algos
        .iter()
        .map(|&v| ExtractionConfig {
            power_iters: a.power_iters,
            threads: a.threads,
            ..ExtractionConfig::new(v, k, a.iters)
        })
        .collect();
    let steering = if a.algos.contains(&Variant::SemiIve) {
        if a.known == 0 || a.known > k {
            return usage(format!("--known must satisfy 1 <= L <= K = {k}"));
        }
        Some(sc.steering.truncate(a.known)?)
    } else {
        None
    };
    let table = bench_run(&sc, &configs, steering.as_ref())?;

    fs::create_dir_all(&a.out)?;
    table.write_csv(fs::File::create(a.out.join("bench.csv"))?)?;
    write_json(a.out.join("summary.json"), &table.summary)?;
    let inputs: Vec<PathBuf> = ["mixture.wav", "steering.json", "scenario.json"]
        .iter()
        .map(|f| a.scenario.join(f))
        .chain((1..=k).map(|i| a.scenario.join(format!("image_{i}.wav"))))
        .collect();
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&a.out, "bench", a, Some(sc.spec.seed), &inputs, vec!["bench.csv".into(), "summary.json".into()])?;

    println!("{:<12} {:>6} {:>12} {:>10} {:>8} {:>10}", "variant", "iters", "s/iter", "total s", "RTF", "SDR dB");
    for v in &a.algos {
        let s = &table.summary[v.name()];
        println!(
            "{:<12} {:>6} {:>12.6} {:>10.3} {:>8.4} {:>10.2}",
            v.name(),
            s.iterations,
            s.seconds_per_iteration,
            s.total_seconds,
            s.rtf,
            s.final_sdr_mean
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Singular(m)) => {
            eprintln!("error: singular matrix, aborting: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
