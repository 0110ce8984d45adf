mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use landcover::bands::{nbr, rdvi, sar_derived};
use landcover::cart::SplitCriterion;
use landcover::forest::{default_tree_counts, tune_trees};
use landcover::fusion::{self, fit_fusion, Kernel};
use landcover::pipeline::{
    classify_raster, evaluate_labels, evaluate_maps, read_label_csv, run_experiment,
    train_model, ExperimentRecipe, Model, ModelKind, ModelSpec,
};
use landcover::raster::{
    extract_samples, read_class_map, read_raster, read_samples_csv, stack_bands, stratified_split,
    write_class_map, write_raster, write_samples_csv, Raster, SampleSet,
};
use landcover::rotation::{default_forest_counts, tune_forests, WeightSource};
use landcover::synthetic::{texture_scene, SceneConfig};
use landcover::texture::{texture_band, Direction, GlcmConfig};
use landcover::{Error, Result};

#[derive(Parser)]
#[command(name = "landcover", version, about = "Land-cover classification toolkit")]
#[command(after_help = "Any subcommand accepts --config <file.json>: an object of long flag names \
                        to values, applied before the explicit flags.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// GLCM homogeneity band from one band of a raster.
    Texture(TextureArgs),
    /// Derived bands (SAR average/difference/ratio, RDVI, NBR).
    Derive(DeriveArgs),
    /// Bayesian fusion of an auxiliary band into multispectral bands.
    Fuse(FuseArgs),
    /// Train a random forest or rotation ensemble.
    Train(TrainArgs),
    /// Classify every pixel of a raster.
    Classify(ClassifyArgs),
    /// Confusion matrix, accuracies and kappa statistics.
    Evaluate(EvaluateArgs),
    /// Mean kappa per forest size, with the Z-selected optimum.
    TuneTrees(TuneTreesArgs),
    /// Mean kappa per ensemble size, with the Z-selected optimum.
    TuneForests(TuneForestsArgs),
    /// Time the reference and fast fusion kernels.
    BenchFusion(BenchArgs),
    /// Repeated-split comparison of models across datasets and fractions.
    Experiment(ExperimentArgs),
    /// Write a synthetic tiled scene and its class map.
    Synth(SynthArgs),
}

// Aliases keep clap from treating comma-list values as repeated flags.
type Counts = Vec<usize>;
type Names = Vec<String>;
type Fractions = Vec<f64>;
type Directions = Vec<Direction>;

/// Parses `a,b,c` and `lo..hi` (inclusive) lists of counts.
fn parse_counts(s: &str) -> std::result::Result<Counts, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.parse().map_err(|_| format!("bad range start `{lo}`"))?;
            let hi: usize = hi.trim_start_matches('=').parse().map_err(|_| format!("bad range end `{hi}`"))?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("bad count `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_fractions(s: &str) -> std::result::Result<Fractions, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad fraction `{p}`")))
        .collect()
}

fn parse_names(s: &str) -> std::result::Result<Names, String> {
    let v: Vec<String> = s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
    if v.is_empty() {
        Err("empty list".into())
    } else {
        Ok(v)
    }
}

fn parse_directions(s: &str) -> std::result::Result<Directions, String> {
    Direction::parse_list(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kernel(s: &str) -> std::result::Result<Kernel, String> {
    match s {
        "fast" => Ok(Kernel::Fast),
        "reference" => Ok(Kernel::Reference),
        _ => Err(format!("unknown kernel `{s}` (fast, reference)")),
    }
}

fn parse_criterion(s: &str) -> std::result::Result<SplitCriterion, String> {
    match s {
        "gini" => Ok(SplitCriterion::Gini),
        "info_gain" | "info-gain" => Ok(SplitCriterion::InfoGain),
        _ => Err(format!("unknown criterion `{s}` (gini, info_gain)")),
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TextureArgs {
    #[arg(long)]
    input: PathBuf,
    /// Band to texture (defaults to the only band).
    #[arg(long)]
    band: Option<String>,
    #[arg(long, default_value_t = 32)]
    levels: usize,
    #[arg(long, default_value_t = 9)]
    window: usize,
    #[arg(long, default_value = "all", value_parser = parse_directions)]
    directions: Directions,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    symmetric: bool,
    /// Write the input bands followed by the texture band.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = ArgAction::Set)]
    append: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DeriveOp {
    Sar,
    Rdvi,
    Nbr,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct DeriveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    op: DeriveOp,
    /// Source bands: `vv,vh` for sar, `nir,red` for rdvi, `nir,swir` for nbr.
    #[arg(long, value_parser = parse_names)]
    inputs: Names,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = ArgAction::Set)]
    append: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct FuseArgs {
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    aux: PathBuf,
    /// Band of the auxiliary raster (defaults to the only band).
    #[arg(long)]
    aux_band: Option<String>,
    #[arg(long, default_value_t = fusion::DEFAULT_WEIGHT)]
    w: f64,
    #[arg(long, default_value = "fast", value_parser = parse_kernel)]
    kernel: Kernel,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fitted fusion model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

/// Where samples come from: a CSV sample file, or every labeled pixel of a
/// raster and class map.
#[derive(Args)]
struct DataArgs {
    #[arg(long, conflicts_with_all = ["raster", "truth"])]
    samples: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    raster: Option<PathBuf>,
    #[arg(long, requires = "raster")]
    truth: Option<PathBuf>,
    /// Separate evaluation samples (CSV).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Split the samples into train/test with this training fraction.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Class names for CSV inputs (default class_0, class_1, ...).
    #[arg(long, value_parser = parse_names)]
    classes: Option<Names>,
}

impl DataArgs {
    fn load_all(&self) -> Result<SampleSet> {
        match (&self.samples, &self.raster, &self.truth) {
            (Some(p), _, _) => read_samples_csv(p, self.classes.clone()),
            (None, Some(r), Some(t)) => extract_samples(&read_raster(r)?, &read_class_map(t)?),
            _ => Err(Error::InvalidArgument("give --samples, or --raster with --truth".into())),
        }
    }

    /// Training set and optional evaluation set.
    fn load(&self, seed: u64) -> Result<(SampleSet, Option<SampleSet>)> {
        let all = self.load_all()?;
        let (train, split_test) = match self.train_fraction {
            Some(f) => {
                let (a, b) = stratified_split(&all, f, seed)?;
                (a, Some(b))
            }
            None => (all, None),
        };
        let test = match &self.test {
            Some(p) => Some(read_samples_csv(p, Some(train.class_names().to_vec()))?),
            None => split_test,
        };
        Ok((train, test))
    }

    fn load_pair(&self, seed: u64) -> Result<(SampleSet, SampleSet)> {
        match self.load(seed)? {
            (train, Some(test)) => Ok((train, test)),
            _ => Err(Error::InvalidArgument("needs an evaluation set: --test or --train-fraction".into())),
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "rf", value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = landcover::forest::DEFAULT_TREES)]
    trees: usize,
    #[arg(long, default_value_t = 20)]
    forests: usize,
    #[arg(long, default_value_t = 3)]
    subset: usize,
    #[arg(long, default_value = "gini", value_parser = parse_criterion)]
    criterion: SplitCriterion,
    #[arg(long)]
    mtry: Option<usize>,
    /// Weight ensemble members by their kappa on the evaluation set instead
    /// of an internal hold-out.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = ArgAction::Set)]
    test_set_weighting: bool,
}

impl ModelArgs {
    fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            trees: self.trees,
            forests: self.forests,
            subset: self.subset,
            criterion: self.criterion,
            mtry: self.mtry,
            test_set_weighting: self.test_set_weighting,
        }
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    raster: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    /// Predicted labels: a class map, or a CSV with a `label` column.
    #[arg(long)]
    pred: PathBuf,
    /// Reference labels, same forms as --pred.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_parser = parse_names)]
    classes: Option<Names>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TuneTreesArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Tree counts, e.g. `1..30` or `1,5,10`.
    #[arg(long, value_parser = parse_counts)]
    counts: Option<Counts>,
    #[arg(long, default_value_t = 25)]
    reps: usize,
    #[arg(long, default_value = "gini", value_parser = parse_criterion)]
    criterion: SplitCriterion,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TuneForestsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Ensemble sizes (default 1..10,12,14,16,18,20,25,30,40,50).
    #[arg(long, value_parser = parse_counts)]
    counts: Option<Counts>,
    #[arg(long, default_value_t = 25)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct BenchArgs {
    #[arg(long, default_value = "100,200,400", value_parser = parse_counts)]
    sizes: Counts,
    #[arg(long, default_value = "2,6,11", value_parser = parse_counts)]
    bands: Counts,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = fusion::DEFAULT_WEIGHT)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ExperimentArgs {
    /// JSON recipe listing datasets, models, fractions, repetitions and seed.
    #[arg(long)]
    recipe: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_fractions)]
    fractions: Option<Fractions>,
    /// Summary CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-class producer/user kappa CSV.
    #[arg(long)]
    class_out: Option<PathBuf>,
    /// Include the mean runtime column.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    timing: bool,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[arg(long, default_value_t = 72)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output raster; the class map goes to --truth.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also write every labeled pixel as a sample CSV.
    #[arg(long)]
    samples: Option<PathBuf>,
}

fn pick_band(r: &Raster, name: Option<&str>, what: &str) -> Result<Raster> {
    match name {
        Some(n) => r.select_band_by_name(n),
        None if r.bands() == 1 => Ok(r.clone()),
        None => Err(Error::InvalidArgument(format!(
            "{what} has {} bands; choose one by name",
            r.bands()
        ))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_out(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn run_texture(a: TextureArgs) -> Result<()> {
    let input = read_raster(&a.input)?;
    let band = pick_band(&input, a.band.as_deref(), "input")?;
    let cfg = GlcmConfig {
        levels: a.levels,
        window: a.window,
        directions: a.directions,
        symmetric: a.symmetric,
    };
    let tex = texture_band(&band, &cfg)?;
    let out = if a.append { stack_bands(&[input, tex])? } else { tex };
    write_raster(&out, &a.out)
}

fn run_derive(a: DeriveArgs) -> Result<()> {
    let input = read_raster(&a.input)?;
    if a.inputs.len() != 2 {
        return Err(Error::InvalidArgument(format!("--inputs needs 2 band names, got {}", a.inputs.len())));
    }
    let x = input.select_band_by_name(&a.inputs[0])?;
    let y = input.select_band_by_name(&a.inputs[1])?;
    let mut derived = match a.op {
        DeriveOp::Sar => {
            let (avg, diff, ratio) = sar_derived(&x, &y)?;
            vec![avg, diff, ratio]
        }
        DeriveOp::Rdvi => vec![rdvi(&x, &y)?],
        DeriveOp::Nbr => vec![nbr(&x, &y)?],
    };
    if a.append {
        derived.insert(0, input);
    }
    write_raster(&stack_bands(&derived)?, &a.out)
}

fn run_fuse(a: FuseArgs) -> Result<()> {
    let ms = read_raster(&a.ms)?;
    let aux_all = read_raster(&a.aux)?;
    let aux = pick_band(&aux_all, a.aux_band.as_deref(), "aux")?;
    let model = fit_fusion(&ms, &aux, a.w)?;
    let fused = fusion::fuse(&model, &ms, &aux, a.kernel)?;
    if let Some(p) = &a.model_out {
        write_json(p, &model)?;
    }
    write_raster(&fused, &a.out)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let (train, test) = a.data.load(a.seed)?;
    let model = train_model(&a.model.spec(), &train, test.as_ref(), a.seed)?;
    model.save(&a.out)
}

fn run_classify(a: ClassifyArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let raster = read_raster(&a.raster)?;
    write_class_map(&classify_raster(&model, &raster)?, &a.out)
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let report = match (is_csv(&a.pred), is_csv(&a.reference)) {
        (false, false) => {
            let mut r = evaluate_maps(&read_class_map(&a.pred)?, &read_class_map(&a.reference)?)?;
            if let Some(names) = a.classes {
                if names.len() != r.class_names.len() {
                    return Err(Error::InvalidArgument("--classes does not match the class count".into()));
                }
                r.class_names = names;
            }
            r
        }
        (true, true) => {
            let p = read_label_csv(&a.pred)?;
            let r = read_label_csv(&a.reference)?;
            let k = p.iter().chain(&r).max().map_or(0, |m| m + 1);
            let names = match a.classes {
                Some(n) => n,
                None => (0..k).map(|c| format!("class_{c}")).collect(),
            };
            evaluate_labels(&p, &r, names)?
        }
        _ => return Err(Error::InvalidArgument("--pred and --ref must both be class maps or both CSV".into())),
    };
    write_json(&a.out, &report)
}

fn run_tune_trees(a: TuneTreesArgs) -> Result<()> {
    let (train, test) = a.data.load_pair(a.seed)?;
    let counts = a.counts.unwrap_or_else(default_tree_counts);
    let base = ModelSpec { criterion: a.criterion, ..Default::default() }.forest_config(a.seed);
    let result = tune_trees(&train, &test, &counts, a.reps, &base)?;
    write_out(&a.out, |w| result.write_csv(w))?;
    println!("optimum trees: {}", result.optimum);
    Ok(())
}

fn run_tune_forests(a: TuneForestsArgs) -> Result<()> {
    let (train, test) = a.data.load_pair(a.seed)?;
    let spec = a.model.spec();
    let base = spec
        .ensemble_config(a.seed)
        .ok_or_else(|| Error::InvalidArgument("tune-forests needs an ensemble model (pca-rfe, srp-rfe, crp-rfe)".into()))?;
    let source = if spec.test_set_weighting { WeightSource::TestSet } else { WeightSource::Holdout };
    let counts = a.counts.unwrap_or_else(default_forest_counts);
    let result = tune_forests(&train, &test, &counts, a.reps, &base, source)?;
    write_out(&a.out, |w| result.write_csv(w))?;
    println!("optimum forests: {}", result.optimum);
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let rows = fusion::bench_fusion(&a.sizes, &a.bands, a.w, a.reps, a.seed)?;
    write_out(&a.out, |w| fusion::write_bench_csv(&rows, w))?;
    for r in &rows {
        println!("{}x{} bands={} factor={:.1}", r.size, r.size, r.bands, r.factor);
    }
    Ok(())
}

fn run_experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let (recipe, base) = ExperimentRecipe::load(&a.recipe)?;
    let mut cfg = recipe.config();
    if let Some(r) = a.reps {
        cfg.repetitions = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.fractions {
        cfg.fractions = f;
    }
    cfg.validate()?;
    let datasets = recipe.load_datasets(&base)?;
    let result = run_experiment(&datasets, &cfg)?;
    write_out(&a.out, |w| result.write_summary_csv(w, a.timing))?;
    if let Some(p) = &a.class_out {
        write_out(p, |w| result.write_class_csv(w))?;
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let cfg = SceneConfig { rows: a.size, cols: a.size, ..Default::default() };
    let scene = texture_scene(&cfg, a.seed)?;
    write_raster(&scene.stack, &a.out)?;
    write_class_map(&scene.truth, &a.truth)?;
    if let Some(p) = &a.samples {
        write_samples_csv(&extract_samples(&scene.stack, &scene.truth)?, p)?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Texture(a) => run_texture(a),
        Command::Derive(a) => run_derive(a),
        Command::Fuse(a) => run_fuse(a),
        Command::Train(a) => run_train(a),
        Command::Classify(a) => run_classify(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::TuneTrees(a) => run_tune_trees(a),
        Command::TuneForests(a) => run_tune_forests(a),
        Command::BenchFusion(a) => run_bench(a),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                eprint!("error[invalid_argument]: {e}");
            } else {
                print!("{e}");
            }
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
