//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 backend error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use multistrat_core::backend::{BackendError, BackendProfile, ChatBackend, ChatMessage};
use multistrat_core::corpus::{multi_strategy_fraction, strategy_count_table, Corpus, Split};
use multistrat_core::instances::{
    assemble_reasoned, build_aio, build_distillation_requests, build_obo, build_single, downsample_rl, to_jsonl,
    TrainingInstance, DEFAULT_RL_TOTAL,
};
use multistrat_core::metrics::{BleuLevel, BleuOptions};
use multistrat_core::orchestrate::{GenerationConfig, GenerationError, MAX_STEPS};
use multistrat_core::parse::{Mode, Regime};
use multistrat_core::reward::Method;
use multistrat_core::selfplay::SelfPlayConfig;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::backends::{Limiter, Profiles};
use crate::corpus_io::{load_corpus, parse_split_spec, LoadError};
use crate::dialogue::{run_dialogue_eval, Agents, DialogueError, DialogueEval};
use crate::eval::{echo_backend, run_utterance_eval, RunError, UtteranceEval};
use crate::report::{summarize, ReportError};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// Name of the built-in backend that answers with the gold reference.
pub const ECHO_PROFILE: &str = "echo";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::SplitSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Backend { .. } | RunError::Generation(GenerationError::Backend(_)) => CliError::Backend(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DialogueError> for CliError {
    fn from(e: DialogueError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "multistrat", version, about = "Multi-strategy emotional support conversation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Common {
    /// ESConv release (JSON list) or canonical corpus (JSONL)
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// TOML file with flat settings and [profiles.NAME] tables
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (for report, a directory or a .json file)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on in-flight backend calls for the whole process
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Backend profile name, or scripted:PATH / replay:PATH
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Split assignment: proportional, field, train|validation|test,
    /// contiguous:T,V or manifest:PATH
    #[arg(long, global = true)]
    splits: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Single,
    Aio,
    Obo,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Single => Regime::Single,
            RegimeArg::Aio => Regime::Aio,
            RegimeArg::Obo => Regime::Obo,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Supporter-utterance statistics by number of strategies
    Stats {
        /// Print JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Build training instances
    Build(BuildArgs),
    /// Utterance-level evaluation from gold history
    EvalUtterance(EvalUtteranceArgs),
    /// Dialogue-level self-play evaluation
    EvalDialogue(EvalDialogueArgs),
    /// Serve rule-based rewards over HTTP
    ServeReward {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Summarize finished runs
    Report {
        /// Run directories or records files
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Regimes to build
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["aio", "obo"])]
    regime: Vec<RegimeArg>,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    /// Also build reasoning-wrapped instances distilled from teacher profiles
    #[arg(long)]
    reasoning: bool,
    /// Teacher profiles for reasoning distillation (default: --profile)
    #[arg(long, value_delimiter = ',')]
    teacher: Vec<String>,
    /// Also build the RL subset of All-in-One instances
    #[arg(long)]
    rl: bool,
    #[arg(long, default_value_t = DEFAULT_RL_TOTAL)]
    rl_total: usize,
}

#[derive(Debug, Args)]
struct EvalUtteranceArgs {
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Expect a reasoning chain before the answer
    #[arg(long)]
    reasoning: bool,
    /// Reject salvageable output instead of repairing it
    #[arg(long)]
    strict: bool,
    /// Evaluate only the first N turns of the split
    #[arg(long)]
    limit: Option<usize>,
    /// Average sentence-level BLEU instead of corpus-level
    #[arg(long)]
    sentence_bleu: bool,
    /// Add-one smoothing for BLEU orders above 1
    #[arg(long)]
    smoothing: bool,
}

#[derive(Debug, Args)]
struct EvalDialogueArgs {
    #[arg(long)]
    supporter: Option<String>,
    #[arg(long)]
    seeker: Option<String>,
    #[arg(long)]
    critic: Option<String>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Number of dialogues to sample
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    reasoning: bool,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    critic_samples: Option<u32>,
    #[arg(long)]
    success_threshold: Option<f64>,
    /// Condition the seeker on a profile extracted from each dialogue
    #[arg(long)]
    simulated_seeker: bool,
    /// Profile used for profile extraction (default: the seeker)
    #[arg(long)]
    profiler: Option<String>,
}

/// Settings file. Flags take precedence over every key here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    concurrency: Option<usize>,
    profile: Option<String>,
    splits: Option<String>,
    regime: Option<String>,
    reasoning: Option<bool>,
    resample: Option<u32>,
    max_turns: Option<usize>,
    critic_samples: Option<u32>,
    success_threshold: Option<f64>,
    #[serde(default)]
    profiles: BTreeMap<String, BackendProfile>,
}

/// Effective settings after merging the config file and flags.
struct Settings {
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: u64,
    concurrency: usize,
    profile: Option<String>,
    splits: String,
    regime: Option<Regime>,
    reasoning: bool,
    resample: Option<u32>,
    file: FileConfig,
    profiles: Profiles,
    limiter: Arc<Limiter>,
}

impl Settings {
    fn load(common: Common) -> Result<Settings, CliError> {
        let (mut file, base_dir) = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let file: FileConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let regime = match &file.regime {
            Some(r) => Some(Regime::parse(r).ok_or_else(|| CliError::Usage(format!("unknown regime {r:?} in config")))?),
            None => None,
        };
        let concurrency = common.concurrency.or(file.concurrency).unwrap_or(4);
        if concurrency == 0 {
            return Err(CliError::Usage("--concurrency must be at least 1".into()));
        }
        let profiles = Profiles {
            profiles: std::mem::take(&mut file.profiles),
            base_dir,
        };
        Ok(Settings {
            corpus: common.corpus.or(file.corpus.take()),
            out: common.out.or(file.out.take()),
            seed: common.seed.or(file.seed).unwrap_or(0),
            concurrency,
            profile: common.profile.or(file.profile.take()),
            splits: common.splits.or(file.splits.take()).unwrap_or_else(|| "proportional".into()),
            regime,
            reasoning: file.reasoning.unwrap_or(false),
            resample: file.resample,
            file,
            profiles,
            limiter: Limiter::new(concurrency),
        })
    }

    fn corpus(&self) -> Result<Corpus, CliError> {
        let path = self
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Usage("--corpus is required".into()))?;
        let spec = parse_split_spec(&self.splits)?;
        Ok(load_corpus(path, &spec)?)
    }

    fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    fn named<'a>(&'a self, explicit: Option<&'a str>, role: &str) -> Result<&'a str, CliError> {
        explicit
            .or(self.profile.as_deref())
            .ok_or_else(|| CliError::Usage(format!("no backend for the {role}: pass --{role} or --profile")))
    }

    fn backend(&self, name: &str) -> Result<Box<dyn ChatBackend>, CliError> {
        Ok(self.profiles.build(name, &self.limiter)?)
    }

    fn generation(&self, profile: &str, reasoning: bool, strict: bool) -> GenerationConfig {
        GenerationConfig {
            reasoning: reasoning || self.reasoning,
            mode: if strict { Mode::Strict } else { Mode::Lenient },
            resample: self.resample.unwrap_or_else(|| self.profiles.resample_budget(profile)),
            max_steps: MAX_STEPS,
        }
    }

    fn describe(&self, name: &str) -> Value {
        match self.profiles.profiles.get(name) {
            Some(p) => json!({"name": name, "profile": p}),
            None => json!({"name": name}),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.common)?;
    match cli.command {
        Command::Stats { json } => cmd_stats(&settings, json),
        Command::Build(args) => cmd_build(&settings, args),
        Command::EvalUtterance(args) => cmd_eval_utterance(&settings, args),
        Command::EvalDialogue(args) => cmd_eval_dialogue(&settings, args),
        Command::ServeReward { bind } => cmd_serve(&settings, &bind),
        Command::Report { paths } => cmd_report(&settings, &paths),
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn cmd_stats(settings: &Settings, as_json: bool) -> Result<(), CliError> {
    let corpus = settings.corpus()?;
    let table = strategy_count_table(&corpus);
    let overall = multi_strategy_fraction(&corpus).map_err(|e| CliError::Data(e.to_string()))?;
    if as_json {
        let mut splits = serde_json::Map::new();
        for split in Split::ALL {
            splits.insert(
                split.as_str().into(),
                json!({
                    "buckets": multistrat_core::corpus::Bucket::ALL.map(|b| table.get(split, b)),
                    "total": table.split_total(split),
                    "multi_strategy_pct": pct(table.multi(split), table.split_total(split)),
                }),
            );
        }
        let body = json!({"dialogues": corpus.len(), "splits": splits, "multi_strategy_pct": 100.0 * overall});
        println!("{}", serde_json::to_string_pretty(&body).expect("serializable"));
        return Ok(());
    }
    print!("{table}");
    println!();
    for split in Split::ALL {
        println!(
            "multi-strategy {:<10} {:>6.1}%",
            split.as_str(),
            pct(table.multi(split), table.split_total(split))
        );
    }
    println!("multi-strategy {:<10} {:>6.1}%", "all", 100.0 * overall);
    Ok(())
}

/// Moves staged files into `out`, or removes the staging area on failure.
struct Staging {
    dir: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(out: &Path) -> Result<Staging, CliError> {
        let dir = out.join(".staging");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        Ok(Staging { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn commit(mut self) -> Result<(), CliError> {
        let out = self.dir.parent().expect("staging has a parent").to_path_buf();
        for name in std::mem::take(&mut self.files) {
            let (from, to) = (self.dir.join(&name), out.join(&name));
            fs::rename(&from, &to).map_err(|e| CliError::Data(format!("{}: {e}", to.display())))?;
        }
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn regime_name(regime: Regime, reasoning: bool) -> String {
    if reasoning {
        format!("{}-reasoning", regime.as_str())
    } else {
        regime.as_str().to_string()
    }
}

fn cmd_build(settings: &Settings, args: BuildArgs) -> Result<(), CliError> {
    let corpus = settings.corpus()?.subset(args.split.into());
    let out = settings.out()?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let mut regimes: Vec<Regime> = args.regime.iter().copied().map(Regime::from).collect();
    regimes.dedup();
    let reasoning = args.reasoning || settings.reasoning;
    if reasoning && regimes.contains(&Regime::Single) {
        return Err(CliError::Usage("reasoning instances exist only for aio and obo".into()));
    }
    let teachers: Vec<String> = if args.teacher.is_empty() {
        settings.profile.iter().cloned().collect()
    } else {
        args.teacher.clone()
    };
    if reasoning && teachers.is_empty() {
        return Err(CliError::Usage("--reasoning needs --teacher or --profile".into()));
    }

    let mut staging = Staging::new(out)?;
    let mut counts = serde_json::Map::new();
    let mut dropped = serde_json::Map::new();
    for &regime in &regimes {
        let instances = match regime {
            Regime::Single => build_single(&corpus),
            Regime::Aio => build_aio(&corpus),
            Regime::Obo => build_obo(&corpus),
        };
        info!("{}: {} instance(s)", regime.as_str(), instances.len());
        staging.write(&format!("{}.jsonl", regime.as_str()), &to_jsonl(&instances))?;
        counts.insert(regime.as_str().into(), instances.len().into());
        if reasoning {
            let method = if regime == Regime::Aio { Method::Aio } else { Method::Obo };
            let (wrapped, rejected) = distill(settings, &teachers, &corpus, method, &instances)?;
            let name = regime_name(regime, true);
            staging.write(&format!("{name}.jsonl"), &to_jsonl(&wrapped))?;
            counts.insert(name.clone(), wrapped.len().into());
            dropped.insert(name, rejected.into());
        }
    }
    if args.rl {
        let rl = downsample_rl(&build_aio(&corpus), args.rl_total, settings.seed).map_err(|e| CliError::Data(e.to_string()))?;
        staging.write("rl-aio.jsonl", &to_jsonl(&rl))?;
        counts.insert("rl-aio".into(), rl.len().into());
    }
    let manifest = json!({
        "split": Split::from(args.split).as_str(),
        "seed": settings.seed,
        "rl_total": args.rl.then_some(args.rl_total),
        "teachers": if reasoning { teachers } else { Vec::new() },
        "counts": counts,
        "dropped_chains": dropped,
    });
    staging.write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;
    staging.commit()?;
    println!("{}", serde_json::to_string_pretty(&manifest["counts"]).expect("serializable"));
    Ok(())
}

/// Asks every teacher for a reasoning chain per instance and wraps the
/// instances with the valid ones. Returns the wrapped instances and the
/// number of rejected chains.
fn distill(
    settings: &Settings,
    teachers: &[String],
    corpus: &Corpus,
    method: Method,
    instances: &[TrainingInstance],
) -> Result<(Vec<TrainingInstance>, usize), CliError> {
    let requests = build_distillation_requests(corpus, method);
    let backends = teachers.iter().map(|t| settings.backend(t)).collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.concurrency)
        .build()
        .expect("thread pool");
    let answers: Vec<(String, Vec<String>)> = pool.install(|| {
        requests
            .par_iter()
            .map(|req| {
                let messages = [ChatMessage::user(req.prompt.clone())];
                let texts = backends
                    .iter()
                    .map(|b| b.complete(&messages, 0))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((req.key.clone(), texts))
            })
            .collect::<Result<_, BackendError>>()
    })?;
    let assembled = assemble_reasoned(instances, &answers.into_iter().collect());
    for (key, err) in &assembled.dropped {
        info!("dropped teacher chain for {key}: {err}");
    }
    Ok((assembled.instances, assembled.dropped.len()))
}

fn bleu_options(sentence: bool, smoothing: bool) -> BleuOptions {
    BleuOptions {
        level: if sentence { BleuLevel::Sentence } else { BleuLevel::Corpus },
        smoothing,
    }
}

fn cmd_eval_utterance(settings: &Settings, args: EvalUtteranceArgs) -> Result<(), CliError> {
    let corpus = settings.corpus()?;
    let out = settings.out()?;
    let name = settings.named(None, "profile")?;
    let split = Split::from(args.split);
    let regime = args.regime.map(Regime::from).or(settings.regime).unwrap_or(Regime::Aio);
    let backend: Box<dyn ChatBackend> = if name == ECHO_PROFILE {
        if args.reasoning || settings.reasoning {
            return Err(CliError::Usage("the echo backend does not produce reasoning".into()));
        }
        Box::new(echo_backend(&corpus, split, regime))
    } else {
        settings.backend(name)?
    };
    let cfg = UtteranceEval {
        split,
        regime,
        generation: settings.generation(name, args.reasoning, args.strict),
        bleu: bleu_options(args.sentence_bleu, args.smoothing),
        limit: args.limit,
        workers: settings.concurrency,
    };
    let summary = run_utterance_eval(backend.as_ref(), &corpus, &cfg, out)?;
    println!("{}", serde_json::to_string_pretty(&summary.report).expect("serializable"));
    Ok(())
}

fn cmd_eval_dialogue(settings: &Settings, args: EvalDialogueArgs) -> Result<(), CliError> {
    let corpus = settings.corpus()?;
    let out = settings.out()?;
    let supporter_name = settings.named(args.supporter.as_deref(), "supporter")?;
    let seeker_name = settings.named(args.seeker.as_deref(), "seeker")?;
    let critic_name = if args.simulated_seeker {
        args.critic.as_deref()
    } else {
        Some(settings.named(args.critic.as_deref(), "critic")?)
    };
    let supporter = settings.backend(supporter_name)?;
    let seeker = settings.backend(seeker_name)?;
    let critic = critic_name.map(|n| settings.backend(n)).transpose()?;
    let profiler = args.profiler.as_deref().map(|n| settings.backend(n)).transpose()?;

    let file = &settings.file;
    let config = SelfPlayConfig {
        max_turns: args.max_turns.or(file.max_turns).unwrap_or(10),
        critic_samples: args.critic_samples.or(file.critic_samples).unwrap_or(10),
        success_threshold: args.success_threshold.or(file.success_threshold).unwrap_or(0.5),
        regime: args.regime.map(Regime::from).or(settings.regime).unwrap_or(Regime::Aio),
        generation: settings.generation(supporter_name, args.reasoning, false),
        seed: settings.seed,
        ..SelfPlayConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut profiles = BTreeMap::new();
    profiles.insert("supporter".to_string(), settings.describe(supporter_name));
    profiles.insert("seeker".to_string(), settings.describe(seeker_name));
    if let Some(n) = critic_name {
        profiles.insert("critic".to_string(), settings.describe(n));
    }
    if let Some(n) = &args.profiler {
        profiles.insert("profiler".to_string(), settings.describe(n));
    }
    let agents = Agents {
        supporter: supporter.as_ref(),
        seeker: seeker.as_ref(),
        critic: critic.as_deref(),
        profiler: profiler.as_deref(),
    };
    let cfg = DialogueEval {
        split: args.split.into(),
        n: args.n,
        config,
        simulated: args.simulated_seeker,
        workers: settings.concurrency,
    };
    let run = run_dialogue_eval(&agents, &corpus, &cfg, profiles, out)?;
    let aborted = run.records.iter().filter(|r| r.is_aborted()).count();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({"dialogues": run.records.len(), "aborted": aborted, "aggregate": run.manifest.aggregate}))
            .expect("serializable")
    );
    if aborted == run.records.len() {
        return Err(CliError::Backend(format!("all {aborted} dialogue(s) aborted; see {}", out.display())));
    }
    Ok(())
}

fn cmd_serve(settings: &Settings, bind: &str) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::Data(e.to_string()))?;
        eprintln!("reward service listening on http://{addr}");
        crate::server::serve(listener, settings.concurrency, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Data(e.to_string()))
    })
}

fn cmd_report(settings: &Settings, paths: &[PathBuf]) -> Result<(), CliError> {
    let summary = summarize(paths, BleuOptions::default())?;
    print!("{}", summary.render());
    if let Some(out) = &settings.out {
        let path = if out.extension().is_some_and(|e| e == "json") {
            out.clone()
        } else {
            fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
            out.join("summary.json")
        };
        fs::write(&path, summary.to_json()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["multistrat", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["multistrat", "stats"]), EXIT_USAGE);
        assert_eq!(run(["multistrat", "--help"]), 0);
    }

    #[test]
    fn missing_corpus_is_a_data_error() {
        assert_eq!(run(["multistrat", "stats", "--corpus", "/nonexistent/esconv.json"]), EXIT_DATA);
    }

    #[test]
    fn unknown_profile_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.json");
        fs::write(&corpus, "[]").unwrap();
        let out = dir.path().join("out");
        let code = run([
            "multistrat",
            "eval-utterance",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--profile",
            "missing",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn config_file_supplies_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(
            &cfg,
            "seed = 9\nconcurrency = 2\nregime = \"obo\"\n[profiles.fx]\nkind = \"scripted\"\nscript = \"fx.json\"\n",
        )
        .unwrap();
        let common = Common {
            config: Some(cfg),
            seed: Some(11),
            ..Common::default()
        };
        let s = Settings::load(common).unwrap();
        assert_eq!((s.seed, s.concurrency, s.regime), (11, 2, Some(Regime::Obo)));
        assert!(s.profiles.profiles.contains_key("fx"));
        assert_eq!(s.profiles.base_dir, dir.path());
    }

    #[test]
    fn bad_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "sed = 9\n").unwrap();
        let common = Common {
            config: Some(cfg),
            ..Common::default()
        };
        assert!(matches!(Settings::load(common), Err(CliError::Usage(_))));
    }
}
