//! The `avse` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    format_manifest, load_wav, mix_scene, read_tensor, save_wav, synth_batch, write_tensor, ManifestEntry, MixOptions,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_pair, Aggregate, MetricReport};
use crate::model::{enhance, init_parameters, parameter_shapes, ModelConfig};
use crate::training::{grad_check, load_checkpoint, load_scenes, save_checkpoint, train, TrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Largest end-to-end gradient error `gradcheck` accepts.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "avse", version, about = "Audio-visual speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic scenes and a manifest to a directory.
    Synth(SynthArgs),
    /// Mix a target and an interferer at a given SNR.
    Mix(MixArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Enhance one noisy recording with a trained model.
    Enhance(EnhanceArgs),
    /// Score enhanced audio against clean references.
    Evaluate(EvaluateArgs),
    /// Print the parameter table of a model configuration.
    Info(InfoArgs),
    /// Check analytic gradients of the tiny model against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scene length in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
}

#[derive(Debug, Args)]
struct MixArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    interferer: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long)]
    out: PathBuf,
    /// Picks the offset when the interferer is longer than the target.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory holding `manifest.jsonl`, as written by `synth`.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    data: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON file with optional `model` and `training` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-epoch log here (it always goes to stdout).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// A WAV file, or a directory of them.
    #[arg(long)]
    clean: PathBuf,
    /// A WAV file, or a directory paired with `--clean` by file stem.
    #[arg(long)]
    enhanced: PathBuf,
    /// Output file for the report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub training: TrainOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Schema {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        config.model.validate()?;
        Ok(config)
    }
}

/// Failure of a command, with the exit code it maps to.
enum Failure {
    Error(Error),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Results go to `out`, diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if code == EXIT_USAGE && !text.contains("Usage:") {
                text.push_str(&format!("\n{}\n", Cli::command().render_usage()));
            }
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Mix(a) => mix(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Enhance(a) => enhance_cmd(a, out),
        Command::Evaluate(a) => evaluate(a, out, err),
        Command::Info(a) => info(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Error(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Numeric(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_NUMERIC
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

type CmdResult = std::result::Result<(), Failure>;

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CmdResult {
    let config = SynthConfig::default();
    let scenes = synth_batch(a.scenes, a.duration, a.seed, &config)?;
    for sub in ["clean", "interferer", "noisy", "frames"] {
        create_dir(&a.out.join(sub))?;
    }
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let id = &scene.id;
        let rel = |sub: &str, ext: &str| PathBuf::from(format!("{sub}/{id}.{ext}"));
        let opts = MixOptions {
            sample_rate_hz: config.sample_rate_hz,
            seed: i as u64,
        };
        let noisy = mix_scene(&scene.target, &scene.interferer, scene.snr_db, &opts)?;
        save_wav(a.out.join(rel("clean", "wav")), &scene.target, config.sample_rate_hz)?;
        save_wav(a.out.join(rel("interferer", "wav")), &scene.interferer, config.sample_rate_hz)?;
        save_wav(a.out.join(rel("noisy", "wav")), &noisy, config.sample_rate_hz)?;
        write_tensor(a.out.join(rel("frames", "avst")), &scene.frames)?;
        entries.push(ManifestEntry {
            id: id.clone(),
            target_path: rel("clean", "wav"),
            interferer_path: rel("interferer", "wav"),
            frames_path: rel("frames", "avst"),
            snr_db: scene.snr_db,
        });
    }
    let manifest = a.out.join("manifest.jsonl");
    fs::write(&manifest, format_manifest(&entries)).map_err(|e| Error::io(&manifest, e))?;
    write_out(out, &format!("wrote {} scenes to {}\n", entries.len(), a.out.display()))?;
    Ok(())
}

fn mix(a: MixArgs, out: &mut dyn Write) -> CmdResult {
    let (target, rate) = load_wav(&a.target)?;
    let (interferer, interferer_rate) = load_wav(&a.interferer)?;
    if rate != interferer_rate {
        return Err(Error::UnsupportedFormat {
            field: "sample rate",
            value: format!("target is {rate} Hz but interferer is {interferer_rate} Hz"),
        }
        .into());
    }
    let opts = MixOptions {
        sample_rate_hz: rate,
        seed: a.seed,
    };
    let mixture = mix_scene(&target, &interferer, a.snr, &opts)?;
    save_wav(&a.out, &mixture, rate)?;
    write_out(out, &format!("wrote {} ({} samples at {} dB)\n", a.out.display(), mixture.len(), a.snr))?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let mut config = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(epochs) = a.epochs {
        config.training.epochs = epochs;
    }
    if let Some(seed) = a.seed {
        config.training.seed = seed;
    }
    let manifest = match (&a.data, &a.manifest) {
        (_, Some(m)) => m.clone(),
        (Some(dir), None) => dir.join("manifest.jsonl"),
        (None, None) => unreachable!("clap requires --data or --manifest"),
    };
    let scenes = load_scenes(&manifest)?;
    let mut log_text = String::new();
    let mut io_error = None;
    let outcome = train(&config.model, &scenes, &config.training, |entry| {
        let line = serde_json::to_string(entry).expect("epoch logs always serialize") + "\n";
        if let Err(e) = write_out(out, &line) {
            io_error.get_or_insert(e);
        }
        log_text.push_str(&line);
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    if let Some(path) = &a.log {
        fs::write(path, &log_text).map_err(|e| Error::io(path, e))?;
    }
    save_checkpoint(&a.out, &outcome.checkpoint)?;
    Ok(())
}

fn enhance_cmd(a: EnhanceArgs, out: &mut dyn Write) -> CmdResult {
    let ckpt = load_checkpoint(&a.model)?;
    let (audio, rate) = load_wav(&a.audio)?;
    if rate != ckpt.config.sample_rate_hz {
        return Err(Error::UnsupportedFormat {
            field: "sample rate",
            value: format!("{} is {rate} Hz, the model expects {} Hz", a.audio.display(), ckpt.config.sample_rate_hz),
        }
        .into());
    }
    let frames = read_tensor(&a.frames)?;
    let enhanced = enhance(&audio, &frames, &ckpt.params, &ckpt.config)?;
    save_wav(&a.out, &enhanced, rate)?;
    write_out(out, &format!("wrote {} ({} samples)\n", a.out.display(), enhanced.len()))?;
    Ok(())
}

/// WAV files in `dir` keyed by stem.
fn wav_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if let (true, Some(stem)) = (is_wav, path.file_stem()) {
            files.insert(stem.to_string_lossy().into_owned(), path);
        }
    }
    Ok(files)
}

fn evaluate(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let pairs: Vec<(PathBuf, PathBuf)> = if a.clean.is_dir() && a.enhanced.is_dir() {
        let clean = wav_files(&a.clean)?;
        let enhanced = wav_files(&a.enhanced)?;
        for stem in clean.keys().filter(|k| !enhanced.contains_key(*k)) {
            let _ = writeln!(err, "warning: no enhanced file for `{stem}`, skipped");
        }
        for stem in enhanced.keys().filter(|k| !clean.contains_key(*k)) {
            let _ = writeln!(err, "warning: no clean file for `{stem}`, skipped");
        }
        clean
            .iter()
            .filter_map(|(stem, c)| enhanced.get(stem).map(|e| (c.clone(), e.clone())))
            .collect()
    } else if a.clean.is_dir() || a.enhanced.is_dir() {
        return Err(Error::config("--clean and --enhanced must both be files or both be directories").into());
    } else {
        vec![(a.clean.clone(), a.enhanced.clone())]
    };
    if pairs.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let mut reports = pairs
        .par_iter()
        .map(|(c, e)| evaluate_pair(c, e))
        .collect::<Result<Vec<MetricReport>>>()?;
    reports.sort_by(|x, y| x.id.cmp(&y.id));

    let mut text = String::new();
    for r in &reports {
        text.push_str(&serde_json::to_string(r).expect("reports always serialize"));
        text.push('\n');
    }
    #[derive(Serialize)]
    struct Summary {
        aggregate: Aggregate,
    }
    let summary = Summary {
        aggregate: Aggregate::of(&reports),
    };
    text.push_str(&serde_json::to_string(&summary).expect("aggregates always serialize"));
    text.push('\n');
    match &a.report {
        Some(path) => fs::write(path, &text).map_err(|e| Error::io(path, e))?,
        None => write_out(out, &text)?,
    }
    Ok(())
}

fn info(a: InfoArgs, out: &mut dyn Write) -> CmdResult {
    let config = match &a.config {
        Some(path) => RunConfig::load(path)?.model,
        None => ModelConfig::default(),
    };
    config.validate()?;
    let shapes = parameter_shapes(&config);
    let width = shapes.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut text = String::new();
    let mut total = 0;
    for (name, dims) in &shapes {
        let count: usize = dims.iter().product();
        total += count;
        text.push_str(&format!("{name:<width$}  {:<18}  {count:>9}\n", format!("{dims:?}")));
    }
    text.push_str(&format!("total parameters: {total}\n"));
    // Initialization must succeed for the configuration to be usable.
    init_parameters(&config, 0)?;
    write_out(out, &text)?;
    Ok(())
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    let report = grad_check(&ModelConfig::tiny(), a.seed)?;
    write_out(
        out,
        &format!(
            "max relative error: {:e} ({} entries over {} tensors; worst {})\n",
            report.max_rel_error,
            report.entries_checked,
            report.tensors.len(),
            report.worst_parameter
        ),
    )?;
    if !(report.max_rel_error < GRAD_CHECK_TOLERANCE) {
        return Err(Failure::Numeric(format!(
            "gradient check failed: {:e} exceeds {GRAD_CHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}
