//! `wristsonic` command-line entry point.
//!
//! Every run first writes an effective-config echo (JSON holding the argument
//! vector and the fully resolved configuration); `wristsonic replay <echo>`
//! re-runs it. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use wristsonic::cfmcw::{compute_echo_profile, differentiate, TransmitConfig};
use wristsonic::dataset::{load_windows, read_manifest, EchoWindow, Manifest};
use wristsonic::formats::{read_audio, read_wsep, write_wsep};
use wristsonic::model::{
    evaluate, fine_tune, log_csv, lopo_evaluate, train_model, Checkpoint, EvalReport, LopoMode, ModelConfig,
    TrainConfig,
};
use wristsonic::plot::write_pgm;
use wristsonic::sim::{synth_dataset, Environment, GestureLabel, LabelRegistry, SimConfig, SynthPlan};

const ECHO_NAME: &str = "effective_config.json";

#[derive(Parser, Debug)]
#[command(name = "wristsonic", version, about = "Wrist-worn ultrasonic echo sensing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a labelled dataset (audio, profiles, manifest).
    Simulate(SimulateArgs),
    /// Compute a differential (or raw) echo profile from two-microphone audio.
    Profile(ProfileArgs),
    /// Train a classifier on manifest records.
    Train(TrainArgs),
    /// Evaluate a checkpoint on manifest records.
    Eval(EvalArgs),
    /// Leave-one-participant-out evaluation.
    Lopo(LopoArgs),
    /// Fine-tune a checkpoint on one session of an unseen participant.
    Finetune(FinetuneArgs),
    /// Render one channel of a `.wsep` profile as a PGM image.
    Plot(PlotArgs),
    /// Re-run a command from its effective-config echo file.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Override a configuration value, e.g. `train.epochs=10` or
    /// `transmit.tx_a.f_start=18000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Where to write the effective-config echo.
    #[arg(long, value_name = "PATH")]
    echo: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelChoice {
    /// Model size preset; `desk` keeps the architecture at a smaller width.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    /// Label registry (id, name, category, family per line). Defaults to
    /// `labels.tsv` beside the manifest, then the built-in registry.
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Preset {
    Full,
    Desk,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 6)]
    participants: u32,
    #[arg(long, default_value_t = 3)]
    sessions: u32,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated environments cycled over sessions.
    #[arg(long, value_delimiter = ',', default_value = "lab")]
    env: Vec<String>,
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    /// `.f32x2` or `.wav` two-channel recording.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Write the echo profile instead of its frame-to-frame difference.
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Restrict training to these participant ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    participants: Vec<u32>,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Restrict evaluation to these participant ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    participants: Vec<u32>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct LopoArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Defaults to `lopo/` beside the manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Train separate gesture, activity and head-motion models.
    #[arg(long)]
    per_category: bool,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long)]
    participant: u32,
    /// Session used for fine-tuning; the participant's other sessions are
    /// evaluated before and after.
    #[arg(long, default_value_t = 0)]
    session: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    echo: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Effective {
    transmit: TransmitConfig,
    sim: SimConfig,
    model: ModelConfig,
    train: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Echo {
    command: String,
    argv: Vec<String>,
    effective: Effective,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

impl From<wristsonic::Error> for CliError {
    fn from(e: wristsonic::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Domain(format!("i/o error on {}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Set `path` (dot-separated) inside `root`; the key must already exist.
fn set_path(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not KEY=VALUE")))?;
    let mut node = &mut *root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::Usage(format!("unknown configuration key {key:?}")))?;
    }
    if node.is_object() {
        return Err(CliError::Usage(format!("{key:?} is a section, not a value")));
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

fn resolve(base: Effective, overrides: &[String]) -> CliResult<Effective> {
    let mut v = serde_json::to_value(&base).map_err(|e| CliError::Domain(e.to_string()))?;
    for o in overrides {
        set_path(&mut v, o)?;
    }
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("invalid override value: {e}")))
}

fn base_effective(preset: Preset) -> Effective {
    Effective {
        transmit: TransmitConfig::default(),
        sim: SimConfig::default(),
        model: match preset {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        },
        train: TrainConfig::default(),
    }
}

fn write_echo(path: &Path, command: &str, argv: &[String], effective: &Effective) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let echo = Echo {
        command: command.to_string(),
        argv: argv.to_vec(),
        effective: effective.clone(),
    };
    let text = serde_json::to_string_pretty(&echo).map_err(|e| CliError::Domain(e.to_string()))?;
    write_file(path, text + "\n")
}

fn echo_in_dir(o: &Overrides, dir: &Path) -> PathBuf {
    o.echo.clone().unwrap_or_else(|| dir.join(ECHO_NAME))
}

fn echo_beside(o: &Overrides, file: &Path) -> PathBuf {
    o.echo.clone().unwrap_or_else(|| {
        let mut s = file.as_os_str().to_owned();
        s.push(".config.json");
        PathBuf::from(s)
    })
}

fn load_registry(explicit: Option<&Path>, manifest_dir: Option<&Path>) -> CliResult<LabelRegistry> {
    if let Some(p) = explicit {
        return Ok(LabelRegistry::load(p)?);
    }
    if let Some(d) = manifest_dir {
        let p = d.join("labels.tsv");
        if p.is_file() {
            return Ok(LabelRegistry::load(p)?);
        }
    }
    Ok(LabelRegistry::default())
}

fn load_split(manifest: &Manifest, base: &Path, keep: impl Fn(u32, u32) -> bool) -> CliResult<Vec<EchoWindow>> {
    let subset = manifest.filter(|r| keep(r.participant_id, r.session_id));
    if subset.records.is_empty() {
        return Err(CliError::Domain("no manifest records match the selection".into()));
    }
    Ok(load_windows(&subset, base)?)
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    create_dir(dir)?;
    write_file(&dir.join("confusion.csv"), report.confusion_csv())?;
    write_file(&dir.join("confusion_normalized.csv"), report.normalized_confusion_csv())?;
    write_file(&dir.join("metrics.txt"), report.metrics_text())
}

fn parse_env(names: &[String]) -> CliResult<Vec<Environment>> {
    names
        .iter()
        .map(|n| n.parse().map_err(|e: wristsonic::Error| CliError::Usage(e.to_string())))
        .collect()
}

fn simulate(a: &SimulateArgs, argv: &[String]) -> CliResult<Effective> {
    let eff = resolve(base_effective(Preset::Full), &a.overrides.set)?;
    let environments = parse_env(&a.env)?;
    write_echo(&echo_in_dir(&a.overrides, &a.out), "simulate", argv, &eff)?;
    let registry = load_registry(a.labels.as_deref(), None)?;
    let mut plan = SynthPlan::new(a.participants, a.sessions, a.reps, environments, a.seed);
    plan.sim = eff.sim.clone();
    plan.transmit = eff.transmit;
    plan.registry = registry.clone();
    let manifest = synth_dataset(&plan, &a.out)?;
    write_file(&a.out.join("labels.tsv"), registry.to_tsv())?;
    println!("wrote {} records to {}", manifest.records.len(), a.out.display());
    Ok(eff)
}

fn profile(a: &ProfileArgs, argv: &[String]) -> CliResult<Effective> {
    let eff = resolve(base_effective(Preset::Full), &a.overrides.set)?;
    write_echo(&echo_beside(&a.overrides, &a.out), "profile", argv, &eff)?;
    let audio = read_audio(&a.input, eff.transmit.sample_rate)?;
    let echo = compute_echo_profile(&audio, &eff.transmit)?;
    let grid = if a.raw {
        echo.into_grid()
    } else {
        differentiate(&echo)?.into_grid()
    };
    write_wsep(&a.out, &grid)?;
    println!(
        "wrote {} ({} frames, {} channels, {} bins)",
        a.out.display(),
        grid.frames,
        grid.channels,
        grid.range_bins
    );
    Ok(eff)
}

fn labels_of(registry: &LabelRegistry) -> Vec<GestureLabel> {
    registry.labels().cloned().collect()
}

fn train(a: &TrainArgs, argv: &[String]) -> CliResult<Effective> {
    let mut eff = resolve(base_effective(a.model.preset), &a.overrides.set)?;
    eff.train.seed = a.seed;
    let (manifest, base) = read_manifest(&a.manifest)?;
    let registry = load_registry(a.model.labels.as_deref(), Some(&base))?;
    eff.model.n_classes = registry.len();
    write_echo(&echo_in_dir(&a.overrides, &a.out), "train", argv, &eff)?;
    manifest.check_labels(&registry)?;
    let windows = load_split(&manifest, &base, |p, _| a.participants.is_empty() || a.participants.contains(&p))?;
    let outcome = train_model(&windows, &labels_of(&registry), &eff.model, &eff.train)?;
    outcome.checkpoint.save(a.out.join("model.wsck"))?;
    write_file(&a.out.join("train_log.csv"), log_csv(&outcome.log))?;
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "trained on {} windows: final loss {:.4}, train macro F1 {:.4}",
        windows.len(),
        last.train_loss,
        last.train_macro_f1
    );
    Ok(eff)
}

fn eval(a: &EvalArgs, argv: &[String]) -> CliResult<Effective> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut eff = resolve(
        Effective {
            transmit: TransmitConfig::default(),
            sim: SimConfig::default(),
            model: ck.model_cfg.clone(),
            train: ck.train_cfg.clone(),
        },
        &a.overrides.set,
    )?;
    if eff.model != ck.model_cfg || eff.train != ck.train_cfg {
        return Err(CliError::Usage("model and train settings come from the checkpoint".into()));
    }
    eff.train.seed = ck.train_cfg.seed;
    write_echo(&echo_in_dir(&a.overrides, &a.out), "eval", argv, &eff)?;
    let (manifest, base) = read_manifest(&a.manifest)?;
    let windows = load_split(&manifest, &base, |p, _| a.participants.is_empty() || a.participants.contains(&p))?;
    let report = evaluate(&ck, &windows)?;
    write_report(&a.out, &report)?;
    println!("macro F1 {:.4} over {} windows", report.macro_f1, windows.len());
    Ok(eff)
}

fn lopo(a: &LopoArgs, argv: &[String]) -> CliResult<Effective> {
    let mut eff = resolve(base_effective(a.model.preset), &a.overrides.set)?;
    eff.train.seed = a.seed;
    let (manifest, base) = read_manifest(&a.manifest)?;
    let registry = load_registry(a.model.labels.as_deref(), Some(&base))?;
    eff.model.n_classes = registry.len();
    let out = a.out.clone().unwrap_or_else(|| base.join("lopo"));
    write_echo(&echo_in_dir(&a.overrides, &out), "lopo", argv, &eff)?;
    manifest.check_labels(&registry)?;
    let windows = load_split(&manifest, &base, |_, _| true)?;
    let mode = if a.per_category {
        LopoMode::PerCategory
    } else {
        LopoMode::Joint
    };
    let mut write_err = None;
    let report = lopo_evaluate(&windows, &labels_of(&registry), &eff.model, &eff.train, mode, |fold| {
        let name = match fold.category {
            Some(c) => format!("fold_p{:02}_{c}", fold.participant),
            None => format!("fold_p{:02}", fold.participant),
        };
        println!("{name}: macro F1 {:.4}", fold.report.macro_f1);
        if write_err.is_none() {
            write_err = write_report(&out.join(name), &fold.report).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    write_file(&out.join("summary.tsv"), report.summary_tsv())?;
    println!("mean macro F1 {:.4}", report.mean_macro_f1());
    Ok(eff)
}

fn finetune(a: &FinetuneArgs, argv: &[String]) -> CliResult<Effective> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let base_train = TrainConfig {
        seed: a.seed,
        ..ck.train_cfg.fine_tune()
    };
    let mut eff = resolve(
        Effective {
            transmit: TransmitConfig::default(),
            sim: SimConfig::default(),
            model: ck.model_cfg.clone(),
            train: base_train,
        },
        &a.overrides.set,
    )?;
    if eff.model != ck.model_cfg {
        return Err(CliError::Usage("model settings come from the checkpoint".into()));
    }
    eff.train.seed = a.seed;
    write_echo(&echo_in_dir(&a.overrides, &a.out), "finetune", argv, &eff)?;
    let (manifest, base) = read_manifest(&a.manifest)?;
    let tune = load_split(&manifest, &base, |p, s| p == a.participant && s == a.session)?;
    let held = load_split(&manifest, &base, |p, s| p == a.participant && s != a.session)?;
    let before = evaluate(&ck, &held)?;
    let outcome = fine_tune(&ck, &tune, &eff.train)?;
    let after = evaluate(&outcome.checkpoint, &held)?;
    outcome.checkpoint.save(a.out.join("model.wsck"))?;
    write_file(&a.out.join("train_log.csv"), log_csv(&outcome.log))?;
    write_report(&a.out.join("before"), &before)?;
    write_report(&a.out.join("after"), &after)?;
    let summary = format!(
        "macro_f1_before={:.6}\nmacro_f1_after={:.6}\ndelta={:.6}\n",
        before.macro_f1,
        after.macro_f1,
        after.macro_f1 - before.macro_f1
    );
    write_file(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(eff)
}

fn plot(a: &PlotArgs, argv: &[String]) -> CliResult<Effective> {
    let eff = resolve(base_effective(Preset::Full), &a.overrides.set)?;
    write_echo(&echo_beside(&a.overrides, &a.out), "plot", argv, &eff)?;
    let grid = read_wsep(&a.input)?;
    write_pgm(&grid, a.channel, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(eff)
}

fn replay(a: &ReplayArgs) -> CliResult<Effective> {
    let text = fs::read_to_string(&a.echo).map_err(|e| io_err(&a.echo, e))?;
    let echo: Echo =
        serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", a.echo.display())))?;
    let cli = Cli::try_parse_from(std::iter::once("wristsonic".to_string()).chain(echo.argv.iter().cloned()))
        .map_err(|e| CliError::Domain(format!("echo holds an invalid command line: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Domain("an echo file cannot replay another replay".into()));
    }
    let eff = dispatch(&cli.command, &echo.argv)?;
    if eff != echo.effective {
        return Err(CliError::Domain(
            "replayed configuration differs from the recorded one".into(),
        ));
    }
    Ok(eff)
}

fn dispatch(command: &Command, argv: &[String]) -> CliResult<Effective> {
    match command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Profile(a) => profile(a, argv),
        Command::Train(a) => train(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::Lopo(a) => lopo(a, argv),
        Command::Finetune(a) => finetune(a, argv),
        Command::Plot(a) => plot(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command, &argv) {
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
