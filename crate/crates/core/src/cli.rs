//! The `instrux` command line.
//!
//! Every subcommand writes a run manifest (config echo, derived seeds, tool
//! version) next to its outputs. Exit status is 0 on success, 1 when
//! `validate` finds violations and 2 on any error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    instruction_worth_with, perturb, robustness_gap, variant_contribution_series, EquivalenceInput,
    InterpolationMode, PerformanceCurve, Perturbation, Worth,
};
use crate::augmentation::{generate_variants, AugmentConfig, Lexicon, DEFAULT_MIN_SIMILARITY};
use crate::baseline::run_experiment;
use crate::evaluation::{score_predictions, PredictionSet, ScoreReport};
use crate::metrics::{dataset_statistics, family_stats, SimilarityBackend, WordVectors};
use crate::mixtures::{
    build_crosstask_mixture, build_eval_set, build_multitask_mixture, build_mvi_mixture,
    build_si_mixture, concat_eval_sets, EqualData, Mixture, MviOptions, Phrasing, Regime, Setting,
    SplitSpec,
};
use crate::seed;
use crate::task_schema::{
    decode_task_value, parse_instances, read_family_dir, read_family_file, read_task_file,
    serialize_family_file, serialize_task_file, validate_family, InstructionFamily, PromptOptions,
};

pub const DEFAULT_SEED: u64 = 42;

/// Seed label shared by every command that splits and samples instances, so
/// `mix` and `contribute` draw the same instances for the same global seed.
const MIXTURE_LABEL: &str = "mixture";

#[derive(Debug, Parser)]
#[command(
    name = "instrux",
    version,
    about = "Multi-variant instruction dataset toolkit"
)]
struct Cli {
    /// Global seed; every randomized step derives its own seed from it.
    #[arg(long, global = true, env = "INSTRUX_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads for per-family work. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Check a family (or single task) file against the schema invariants.
    Validate(ValidateArgs),
    /// Generate variant instructions for a task.
    Augment(AugmentArgs),
    /// Compute per-family diversity metrics and dataset averages.
    Stats(StatsArgs),
    /// Build a training mixture and its evaluation set.
    Mix(MixArgs),
    /// Score a prediction file against an evaluation mixture.
    Score(ScoreArgs),
    /// Estimate how many training instances one instruction variant is worth.
    Worth(WorthArgs),
    /// Apply an evaluation-time perturbation to a task file.
    Perturb(PerturbArgs),
    /// Build the MVI_1..MVI_k, MVI_All contribution series for a family.
    Contribute(ContributeArgs),
    /// Fit the nearest-neighbour baseline and score it.
    Run(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Augment(_) => "augment",
            Command::Stats(_) => "stats",
            Command::Mix(_) => "mix",
            Command::Score(_) => "score",
            Command::Worth(_) => "worth",
            Command::Perturb(_) => "perturb",
            Command::Contribute(_) => "contribute",
            Command::Run(_) => "run",
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "task", required_unless_present = "task")]
    family: Option<PathBuf>,
    #[arg(long)]
    task: Option<PathBuf>,
    /// Write the findings here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = 4)]
    variants: usize,
    #[arg(long, default_value = "0.3", value_parser = parse_unit)]
    rate: f64,
    #[arg(long = "min-sim", default_value_t = DEFAULT_MIN_SIMILARITY, value_parser = parse_unit)]
    min_sim: f64,
    /// JSON array of unused instances to resample variant instances from.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Word-vector file for the similarity guard (lexical cosine otherwise).
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    families: PathBuf,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SettingArg {
    Ts,
    Mt,
    Ct,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RegimeArg {
    Si,
    Mvi,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Si => Regime::Si,
            RegimeArg::Mvi => Regime::Mvi,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EqualDataArg {
    Off,
    WithOriginal,
    VariantsOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PhrasingArg {
    Original,
    Variants,
    P1,
    P2,
    P3,
}

impl From<PhrasingArg> for Phrasing {
    fn from(p: PhrasingArg) -> Self {
        match p {
            PhrasingArg::Original => Phrasing::Original,
            PhrasingArg::Variants => Phrasing::Variants,
            PhrasingArg::P1 => Phrasing::Perturbed(Perturbation::RemoveDefinition),
            PhrasingArg::P2 => Phrasing::Perturbed(Perturbation::PositivesFirst),
            PhrasingArg::P3 => Phrasing::Perturbed(Perturbation::RemoveExamples),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct PromptArgs {
    /// Keep at most this many positive examples per prompt.
    #[arg(long = "max-pos")]
    max_pos: Option<usize>,
    /// Keep at most this many negative examples per prompt.
    #[arg(long = "max-neg")]
    max_neg: Option<usize>,
    /// Leave example explanations out of prompts.
    #[arg(long = "no-explanations")]
    no_explanations: bool,
}

impl PromptArgs {
    fn options(&self) -> PromptOptions {
        PromptOptions {
            max_pos: self.max_pos.unwrap_or(usize::MAX),
            max_neg: self.max_neg.unwrap_or(usize::MAX),
            include_explanations: !self.no_explanations,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct MixArgs {
    #[arg(long, value_enum)]
    setting: SettingArg,
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// Instance fraction, as 0.05 or 5%.
    #[arg(long, value_parser = parse_fraction)]
    frac: f64,
    /// Family file (task-specific setting).
    #[arg(long)]
    family: Option<PathBuf>,
    /// Directory of family files (multi-task and cross-task training).
    #[arg(long)]
    families: Option<PathBuf>,
    /// Directory of held-out evaluation families (cross-task).
    #[arg(long = "eval-families")]
    eval_families: Option<PathBuf>,
    /// Fraction of training tasks to sample (cross-task).
    #[arg(long = "task-frac", default_value = "1.0", value_parser = parse_fraction)]
    task_frac: f64,
    #[arg(long = "equal-data", value_enum, default_value_t = EqualDataArg::Off)]
    equal_data: EqualDataArg,
    /// Serialize every instance under every member instruction.
    #[arg(long = "every-member")]
    every_member: bool,
    /// Instruction phrasing of the evaluation prompts.
    #[arg(long = "eval-phrasing", value_enum, default_value_t = PhrasingArg::Original)]
    eval_phrasing: PhrasingArg,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// A clean-condition report; adds the robustness gap (clean − this run).
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct WorthArgs {
    /// JSON array of {fraction, score}.
    #[arg(long = "si-curve")]
    si_curve: PathBuf,
    #[arg(long = "mvi-score")]
    mvi_score: f64,
    /// MVI anchor fraction, as 0.05 or 5%.
    #[arg(long, value_parser = parse_fraction)]
    base: f64,
    #[arg(long)]
    instances: usize,
    #[arg(long)]
    variants: usize,
    /// Interpolate on the running-maximum envelope of the SI curve.
    #[arg(long)]
    envelope: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    P1,
    P2,
    P3,
}

#[derive(Debug, Args, Serialize)]
struct PerturbArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ContributeArgs {
    #[arg(long)]
    family: PathBuf,
    #[arg(long, value_parser = parse_fraction)]
    frac: f64,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct RunArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write predictions; defaults to `<out stem>.preds.jsonl`.
    #[arg(long)]
    preds: Option<PathBuf>,
}

/// Accepts `0.05` or `5%`; must land in (0, 1].
fn parse_fraction(s: &str) -> Result<f64, String> {
    let v = parse_percent(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction {v} not in (0, 1]"))
    }
}

/// Accepts `0.3` or `30%`; must land in [0, 1].
fn parse_unit(s: &str) -> Result<f64, String> {
    let v = parse_percent(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("value {v} not in [0, 1]"))
    }
}

fn parse_percent(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s.strip_suffix('%') {
        Some(pct) => pct
            .trim()
            .parse::<f64>()
            .map(|v| v / 100.0)
            .map_err(|e| format!("`{s}`: {e}")),
        None => s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a Command,
    global_seed: u64,
    derived_seeds: BTreeMap<String, u64>,
    outputs: Vec<String>,
}

struct Ctx {
    seed: u64,
    derived: BTreeMap<String, u64>,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn seed_for(&mut self, label: &str) -> u64 {
        let s = seed::derive(self.seed, label);
        self.derived.insert(label.to_string(), s);
        s
    }

    fn write(&mut self, path: &Path, contents: &[u8]) -> anyhow::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    fn write_mixture(&mut self, path: &Path, mixture: &Mixture) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        mixture.write_jsonl(&mut buf)?;
        self.write(path, &buf)
    }
}

/// `report.json` -> `report.manifest.json`.
fn sidecar(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Parses `args` and runs the selected subcommand, returning the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<i32> {
    let mut ctx = Ctx {
        seed: cli.seed,
        derived: BTreeMap::new(),
        outputs: Vec::new(),
    };
    let (code, manifest_path) = match &cli.command {
        Command::Validate(a) => validate(&mut ctx, a)?,
        Command::Augment(a) => (augment(&mut ctx, a)?, Some(sidecar(&a.out))),
        Command::Stats(a) => (stats(&mut ctx, a)?, Some(sidecar(&a.out))),
        Command::Mix(a) => (mix(&mut ctx, a)?, Some(a.out_dir.join("manifest.json"))),
        Command::Score(a) => (score(&mut ctx, a)?, Some(sidecar(&a.out))),
        Command::Worth(a) => (worth(&mut ctx, a)?, a.out.as_deref().map(sidecar)),
        Command::Perturb(a) => (perturb_cmd(&mut ctx, a)?, Some(sidecar(&a.out))),
        Command::Contribute(a) => (
            contribute(&mut ctx, a)?,
            Some(a.out_dir.join("manifest.json")),
        ),
        Command::Run(a) => (run(&mut ctx, a)?, Some(sidecar(&a.out))),
    };
    if let Some(path) = manifest_path {
        let manifest = RunManifest {
            tool: "instrux",
            version: env!("CARGO_PKG_VERSION"),
            command: cli.command.name(),
            config: &cli.command,
            global_seed: cli.seed,
            derived_seeds: ctx.derived.clone(),
            outputs: ctx
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        };
        ctx.write_json(&path, &manifest)?;
    }
    Ok(code)
}

fn load_backend(vectors: Option<&Path>) -> anyhow::Result<SimilarityBackend> {
    Ok(match vectors {
        Some(p) => SimilarityBackend::Vector(WordVectors::read(p)?),
        None => SimilarityBackend::Lexical,
    })
}

fn validate(ctx: &mut Ctx, a: &ValidateArgs) -> anyhow::Result<(i32, Option<PathBuf>)> {
    let family = match (&a.family, &a.task) {
        (Some(f), _) => read_family_file(f)?,
        (None, Some(t)) => {
            let bytes = std::fs::read(t).with_context(|| format!("reading {}", t.display()))?;
            let value: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| crate::Error::from_json(&bytes, e))?;
            let (card, warnings) = decode_task_value(&value)?;
            for w in warnings {
                log::warn!("{w}");
            }
            InstructionFamily::new(card, vec![])
        }
        (None, None) => bail!("either --family or --task is required"),
    };
    let report = validate_family(&family);
    let code = if report.is_valid() { 0 } else { 1 };
    match &a.out {
        Some(out) => {
            ctx.write_json(out, &report)?;
            Ok((code, Some(sidecar(out))))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok((code, None))
        }
    }
}

fn augment(ctx: &mut Ctx, a: &AugmentArgs) -> anyhow::Result<i32> {
    let original = read_task_file(&a.task)?;
    let lexicon = Lexicon::read(&a.lexicon)?;
    let pool = match &a.pool {
        Some(p) => {
            parse_instances(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => Vec::new(),
    };
    let backend = load_backend(a.vectors.as_deref())?;
    let config = AugmentConfig {
        substitution_rate: a.rate,
        num_variants: a.variants,
        seed: ctx.seed_for("augment"),
        min_similarity: a.min_sim,
    };
    let family = generate_variants(&original, &lexicon, &pool, &config, &backend)?;
    let mut text = serialize_family_file(&family);
    text.push('\n');
    ctx.write(&a.out, text.as_bytes())?;
    log::info!(
        "{}: {} variants written",
        family.family_id,
        family.variants.len()
    );
    Ok(0)
}

#[derive(Serialize)]
struct StatsReport {
    backend: &'static str,
    families: Vec<crate::metrics::FamilyStats>,
    dataset: crate::metrics::DatasetStats,
}

fn stats(ctx: &mut Ctx, a: &StatsArgs) -> anyhow::Result<i32> {
    let families = read_family_dir(&a.families)?;
    if families.is_empty() {
        bail!("no family files found in {}", a.families.display());
    }
    let backend = load_backend(a.vectors.as_deref())?;
    let per_family = families
        .par_iter()
        .map(|f| family_stats(f, &backend))
        .collect::<crate::Result<Vec<_>>>()?;
    let report = StatsReport {
        backend: backend.mode(),
        families: per_family,
        dataset: dataset_statistics(&families)?,
    };
    ctx.write_json(&a.out, &report)?;
    Ok(0)
}

fn mix(ctx: &mut Ctx, a: &MixArgs) -> anyhow::Result<i32> {
    let spec = SplitSpec::new(ctx.seed_for(MIXTURE_LABEL));
    let opts = a.prompt.options();
    let regime: Regime = a.regime.into();
    let phrasing: Phrasing = a.eval_phrasing.into();
    let mvi = MviOptions {
        equal_data: match a.equal_data {
            EqualDataArg::Off => EqualData::Off,
            EqualDataArg::WithOriginal => EqualData::WithOriginal,
            EqualDataArg::VariantsOnly => EqualData::VariantsOnly,
        },
        every_member: a.every_member,
    };
    let (train, eval) = match a.setting {
        SettingArg::Ts => {
            let path = a
                .family
                .as_ref()
                .context("--family is required for --setting ts")?;
            let family = read_family_file(path)?;
            let train = match regime {
                Regime::Si => build_si_mixture(&family, a.frac, &spec, &opts)?,
                Regime::Mvi => build_mvi_mixture(&family, a.frac, &spec, &opts, &mvi)?,
            };
            let eval = build_eval_set(&family, &spec, &opts, phrasing, Setting::TaskSpecific)?;
            (train, eval)
        }
        SettingArg::Mt => {
            let dir = a
                .families
                .as_ref()
                .context("--families is required for --setting mt")?;
            let families = read_family_dir(dir)?;
            let train = build_multitask_mixture(&families, a.frac, regime, &spec, &opts, &mvi)?;
            let capped = PromptOptions {
                max_pos: opts.max_pos.min(2),
                max_neg: opts.max_neg.min(2),
                ..opts
            };
            let evals = families
                .par_iter()
                .map(|f| build_eval_set(f, &spec, &capped, phrasing, Setting::MultiTask))
                .collect::<crate::Result<Vec<_>>>()?;
            (train, concat_eval_sets(&evals))
        }
        SettingArg::Ct => {
            let dir = a
                .families
                .as_ref()
                .context("--families is required for --setting ct")?;
            let eval_dir = a
                .eval_families
                .as_ref()
                .context("--eval-families is required for --setting ct")?;
            let train_families = read_family_dir(dir)?;
            let eval_families = read_family_dir(eval_dir)?;
            let ct = build_crosstask_mixture(
                &train_families,
                a.task_frac,
                a.frac,
                regime,
                &spec,
                &eval_families,
                &opts,
                &mvi,
            )?;
            let evals = if matches!(phrasing, Phrasing::Original) {
                ct.eval_sets
            } else {
                eval_families
                    .par_iter()
                    .map(|f| build_eval_set(f, &spec, &opts, phrasing, Setting::CrossTask))
                    .collect::<crate::Result<Vec<_>>>()?
            };
            (ct.train, concat_eval_sets(&evals))
        }
    };
    train.check_invariants()?;
    ctx.write_mixture(&a.out_dir.join("train.jsonl"), &train)?;
    ctx.write_mixture(&a.out_dir.join("eval.jsonl"), &eval)?;
    ctx.write_json(
        &a.out_dir.join("train.mixture.json"),
        &MixtureInfo::of(&train),
    )?;
    ctx.write_json(
        &a.out_dir.join("eval.mixture.json"),
        &MixtureInfo::of(&eval),
    )?;
    Ok(0)
}

/// Mixture metadata without the items.
#[derive(Serialize)]
struct MixtureInfo<'a> {
    setting: Setting,
    regime: Regime,
    fraction: f64,
    items: usize,
    manifest: &'a crate::mixtures::MixtureManifest,
}

impl<'a> MixtureInfo<'a> {
    fn of(m: &'a Mixture) -> Self {
        MixtureInfo {
            setting: m.setting,
            regime: m.regime,
            fraction: m.fraction,
            items: m.len(),
            manifest: &m.manifest,
        }
    }
}

fn score(ctx: &mut Ctx, a: &ScoreArgs) -> anyhow::Result<i32> {
    let preds = PredictionSet::read(&a.preds)?;
    let eval = Mixture::read(&a.eval)?;
    let report = score_predictions(&preds, &eval);
    let mut value = serde_json::to_value(&report)?;
    if let Some(clean) = &a.clean {
        let clean = ScoreReport::read(clean)?;
        let gap = robustness_gap(&clean, &report)?;
        value
            .as_object_mut()
            .expect("reports serialize as objects")
            .insert("robustness_gap".into(), serde_json::to_value(gap)?);
    }
    ctx.write_json(&a.out, &value)?;
    println!(
        "macro {:.4} micro {:.4}",
        report.macro_score, report.micro_score
    );
    Ok(0)
}

#[derive(Serialize)]
struct WorthReport {
    mvi_score: f64,
    base_fraction: f64,
    total_instances: usize,
    num_variants: usize,
    interpolation: InterpolationMode,
    result: Worth,
}

fn worth(ctx: &mut Ctx, a: &WorthArgs) -> anyhow::Result<i32> {
    let curve = PerformanceCurve::read(&a.si_curve)?;
    let mode = if a.envelope {
        InterpolationMode::MonotoneEnvelope
    } else {
        InterpolationMode::FirstCrossing
    };
    let input = EquivalenceInput {
        si_curve: curve,
        mvi_score: a.mvi_score,
        base_fraction: a.base,
        total_instances: a.instances,
        num_variants: a.variants,
    };
    let result = instruction_worth_with(&input, mode)?;
    match result {
        Worth::Samples {
            matched_fraction,
            samples_per_instruction,
        } => {
            println!("matched SI fraction: {matched_fraction:.4}");
            println!("worth: {samples_per_instruction:.2} instances per instruction variant");
        }
        Worth::Saturated { max_fraction } => {
            println!("matched SI fraction: >{max_fraction}");
            println!("worth: saturated (MVI score exceeds every SI score)");
        }
    }
    if let Some(out) = &a.out {
        let report = WorthReport {
            mvi_score: a.mvi_score,
            base_fraction: a.base,
            total_instances: a.instances,
            num_variants: a.variants,
            interpolation: mode,
            result,
        };
        ctx.write_json(out, &report)?;
    }
    Ok(0)
}

fn perturb_cmd(ctx: &mut Ctx, a: &PerturbArgs) -> anyhow::Result<i32> {
    let card = read_task_file(&a.task)?;
    let kind = match a.kind {
        KindArg::P1 => Perturbation::RemoveDefinition,
        KindArg::P2 => Perturbation::PositivesFirst,
        KindArg::P3 => Perturbation::RemoveExamples,
    };
    let mut text = serialize_task_file(&perturb(&card, kind));
    text.push('\n');
    ctx.write(&a.out, text.as_bytes())?;
    Ok(0)
}

fn contribute(ctx: &mut Ctx, a: &ContributeArgs) -> anyhow::Result<i32> {
    let family = read_family_file(&a.family)?;
    let spec = SplitSpec::new(ctx.seed_for(MIXTURE_LABEL));
    let steps = variant_contribution_series(&family, a.frac, &spec, &a.prompt.options())?;
    for step in &steps {
        ctx.write_mixture(
            &a.out_dir.join(format!("{}.jsonl", step.label)),
            &step.mixture,
        )?;
    }
    let eval = build_eval_set(
        &family,
        &spec,
        &a.prompt.options(),
        Phrasing::Original,
        Setting::TaskSpecific,
    )?;
    ctx.write_mixture(&a.out_dir.join("eval.jsonl"), &eval)?;
    Ok(0)
}

fn run(ctx: &mut Ctx, a: &RunArgs) -> anyhow::Result<i32> {
    let train = Mixture::read(&a.train)?;
    let eval = Mixture::read(&a.eval)?;
    let (preds, report) = run_experiment(&train, &eval)?;
    let preds_path = a.preds.clone().unwrap_or_else(|| {
        let stem = a
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        a.out.with_file_name(format!("{stem}.preds.jsonl"))
    });
    let mut buf = Vec::new();
    preds.write_jsonl(&mut buf)?;
    ctx.write(&preds_path, &buf)?;
    ctx.write_json(&a.out, &report)?;
    println!(
        "macro {:.4} micro {:.4}",
        report.macro_score, report.micro_score
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_percentages() {
        assert_eq!(parse_fraction("0.05"), Ok(0.05));
        assert_eq!(parse_fraction("5%"), Ok(0.05));
        assert_eq!(parse_fraction("100%"), Ok(1.0));
        assert!(parse_fraction("0").is_err());
        assert!(parse_fraction("150%").is_err());
        assert!(parse_fraction("abc").is_err());
        assert_eq!(parse_unit("0"), Ok(0.0));
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(
            sidecar(Path::new("out/report.json")),
            PathBuf::from("out/report.manifest.json")
        );
    }

    #[test]
    fn unknown_subcommand_exits_2() {
        assert_eq!(dispatch(["instrux", "frobnicate"]), 2);
        assert_eq!(dispatch(["instrux", "worth", "--bogus"]), 2);
        assert_eq!(dispatch(["instrux", "--help"]), 0);
    }
}
