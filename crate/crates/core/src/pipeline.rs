//! Model envelopes, raster classification, evaluation reports and the
//! repeated-split experiment driver.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy::{confusion, kappa_stats, naive_stats, KappaReport, NaiveReport};
use crate::cart::{self, SplitCriterion, TreeConfig};
use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestConfig, ForestModel, DEFAULT_TREES};
use crate::raster::{
    extract_samples, read_class_map, read_raster, stack_bands, stratified_split, ClassMap, Raster, SampleSet,
    UNLABELED,
};
use crate::rotation::{fit_ensemble, EnsembleConfig, EnsembleModel, RotationConfig, RotationKind, WeightSource};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rf,
    PcaRfe,
    SrpRfe,
    CrpRfe,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rf, ModelKind::PcaRfe, ModelKind::SrpRfe, ModelKind::CrpRfe];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::PcaRfe => "pca-rfe",
            ModelKind::SrpRfe => "srp-rfe",
            ModelKind::CrpRfe => "crp-rfe",
        }
    }

    fn rotation(self) -> Option<RotationKind> {
        match self {
            ModelKind::Rf => None,
            ModelKind::PcaRfe => Some(RotationKind::Pca),
            ModelKind::SrpRfe => Some(RotationKind::Srp),
            ModelKind::CrpRfe => Some(RotationKind::Crp),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}` (rf, pca-rfe, srp-rfe, crp-rfe)")))
    }
}

/// Everything needed to train one classifier except data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub trees: usize,
    pub forests: usize,
    pub subset: usize,
    pub criterion: SplitCriterion,
    pub mtry: Option<usize>,
    /// Weight ensemble members by their kappa on the evaluation set.
    pub test_set_weighting: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Rf,
            trees: DEFAULT_TREES,
            forests: 20,
            subset: 3,
            criterion: SplitCriterion::Gini,
            mtry: None,
            test_set_weighting: false,
        }
    }
}

impl ModelSpec {
    pub fn forest_config(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            tree: TreeConfig {
                criterion: self.criterion,
                mtry: self.mtry,
                ..Default::default()
            },
            bootstrap: true,
            seed,
        }
    }

    pub fn ensemble_config(&self, seed: u64) -> Option<EnsembleConfig> {
        self.kind.rotation().map(|kind| EnsembleConfig {
            n_forests: self.forests,
            forest: self.forest_config(seed),
            rotation: RotationConfig {
                kind,
                subset_size: self.subset,
                ..Default::default()
            },
            seed,
        })
    }
}

/// Serialized model file: `{"model": "rf", config, class_names, m, trees}`
/// or `{"model": "rotation-ensemble", config, class_names, m,
/// normalization, members}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    Rf(ForestModel),
    RotationEnsemble(EnsembleModel),
}

impl Model {
    pub fn m(&self) -> usize {
        match self {
            Model::Rf(f) => f.m,
            Model::RotationEnsemble(e) => e.m,
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            Model::Rf(f) => &f.class_names,
            Model::RotationEnsemble(e) => &e.class_names,
        }
    }

    pub fn predict_samples(&self, s: &SampleSet) -> Result<Vec<usize>> {
        match self {
            Model::Rf(f) => f.predict_samples(s),
            Model::RotationEnsemble(e) => e.predict_samples(s),
        }
    }

    fn predict_unchecked(&self, x: &[f32]) -> usize {
        match self {
            Model::Rf(f) => f.vote_label(x),
            Model::RotationEnsemble(e) => crate::rotation::argmax_weights(&e.tallies(x)),
        }
    }

    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        cart::validate_features(x, self.m())?;
        Ok(self.predict_unchecked(x))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let model = Model::deserialize(&mut de).map_err(|e| Error::Model(e.to_string()))?;
        de.end().map_err(|e| Error::Model(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }
}

/// Trains the model described by `spec`. `evaluation` is required only when
/// `spec.test_set_weighting` is set on an ensemble.
pub fn train_model(spec: &ModelSpec, train: &SampleSet, evaluation: Option<&SampleSet>, seed: u64) -> Result<Model> {
    match spec.ensemble_config(seed) {
        None => Ok(Model::Rf(train_forest(train, &spec.forest_config(seed))?)),
        Some(cfg) => {
            let model = if spec.test_set_weighting {
                let eval = evaluation.ok_or_else(|| {
                    Error::InvalidArgument("evaluation-set weighting needs an evaluation sample set".into())
                })?;
                fit_ensemble(train, eval, &cfg, WeightSource::TestSet)?
            } else {
                fit_ensemble(train, train, &cfg, WeightSource::Holdout)?
            };
            Ok(Model::RotationEnsemble(model))
        }
    }
}

/// Classifies every pixel; pixels with any invalid band become
/// [`UNLABELED`].
pub fn classify_raster(model: &Model, raster: &Raster) -> Result<ClassMap> {
    if raster.bands() != model.m() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} bands, raster has {}",
            model.m(),
            raster.bands()
        )));
    }
    if model.class_names().len() >= UNLABELED as usize {
        return Err(Error::InvalidArgument("class maps hold at most 255 classes".into()));
    }
    let labels: Vec<u8> = (0..raster.pixels())
        .into_par_iter()
        .map(|i| {
            if raster.pixel_valid(i) {
                model.predict_unchecked(&raster.pixel(i)) as u8
            } else {
                UNLABELED
            }
        })
        .collect();
    ClassMap::new(raster.rows(), raster.cols(), labels, model.class_names().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub class_names: Vec<String>,
    /// `confusion[i][j]`: predicted `i`, reference `j`.
    pub confusion: Vec<Vec<u64>>,
    pub total: u64,
    /// Pairs dropped because either side was unlabeled.
    pub skipped: usize,
    pub naive: NaiveReport,
    pub kappa: KappaReport,
}

pub fn evaluate_labels(predicted: &[usize], reference: &[usize], class_names: Vec<String>) -> Result<EvaluationReport> {
    let k = class_names.len();
    let cm = confusion(predicted, reference, k)?;
    Ok(EvaluationReport {
        confusion: (0..k).map(|i| (0..k).map(|j| cm.get(i, j)).collect()).collect(),
        total: cm.total(),
        skipped: 0,
        naive: naive_stats(&cm),
        kappa: kappa_stats(&cm),
        class_names,
    })
}

/// Compares two class maps over pixels labeled in both. The reference
/// legend names the classes.
pub fn evaluate_maps(predicted: &ClassMap, reference: &ClassMap) -> Result<EvaluationReport> {
    if predicted.rows() != reference.rows() || predicted.cols() != reference.cols() {
        return Err(Error::DimensionMismatch("class maps differ in shape".into()));
    }
    let k = predicted.legend().len().max(reference.legend().len());
    let mut names = reference.legend().to_vec();
    names.extend((names.len()..k).map(|c| format!("class_{c}")));
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for (&a, &b) in predicted.labels().iter().zip(reference.labels()) {
        if a != UNLABELED && b != UNLABELED {
            p.push(a as usize);
            r.push(b as usize);
        }
    }
    let mut report = evaluate_labels(&p, &r, names)?;
    report.skipped = predicted.labels().len() - p.len();
    Ok(report)
}

/// Reads the `label` column of a CSV file (other columns are ignored).
pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Header(format!("{}: no `label` column", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = &rec[col];
        out.push(
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidData(format!("{}: bad label `{v}`", path.display())))?,
        );
    }
    Ok(out)
}

/// A labeled raster used by the experiment driver.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub raster: Raster,
    pub truth: ClassMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelSpec>,
    pub fractions: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

/// Training fractions 2%, 4%, ..., 20%.
pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.02).collect()
}

pub const DEFAULT_REPETITIONS: usize = 25;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: ModelKind::ALL
                .into_iter()
                .map(|kind| ModelSpec { kind, ..Default::default() })
                .collect(),
            fractions: default_fractions(),
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.fractions.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one model and one fraction".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::InvalidArgument(format!("training fraction {f} not in (0, 1)")));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub dataset: String,
    pub model: String,
    pub fraction: f64,
    pub mean_kappa: f64,
    pub mean_kappa_se: f64,
    pub mean_runtime_s: f64,
}

/// Per-class conditional kappas averaged over the repetitions in which they
/// are defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub dataset: String,
    pub model: String,
    pub fraction: f64,
    pub class: String,
    pub producer_kappa: Option<f64>,
    pub producer_se: Option<f64>,
    pub user_kappa: Option<f64>,
    pub user_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub class_rows: Vec<ClassRow>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    /// Header `dataset,model,fraction,mean_kappa,mean_kappa_se[,mean_runtime_s]`.
    pub fn write_summary_csv(&self, mut out: impl Write, timing: bool) -> std::io::Result<()> {
        write!(out, "dataset,model,fraction,mean_kappa,mean_kappa_se")?;
        writeln!(out, "{}", if timing { ",mean_runtime_s" } else { "" })?;
        for r in &self.rows {
            write!(out, "{},{},{},{},{}", r.dataset, r.model, r.fraction, r.mean_kappa, r.mean_kappa_se)?;
            if timing {
                write!(out, ",{}", r.mean_runtime_s)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Header `dataset,model,fraction,class,producer_kappa,producer_se,user_kappa,user_se`;
    /// undefined values are empty cells.
    pub fn write_class_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "dataset,model,fraction,class,producer_kappa,producer_se,user_kappa,user_se")?;
        for r in &self.class_rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dataset,
                r.model,
                r.fraction,
                r.class,
                opt_cell(r.producer_kappa),
                opt_cell(r.producer_se),
                opt_cell(r.user_kappa),
                opt_cell(r.user_se)
            )?;
        }
        Ok(())
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

const SPLIT_DOMAIN: u64 = 0x5B17;
const MODEL_DOMAIN: u64 = 0x30DE;

/// Runs every (dataset, model, fraction) cell `repetitions` times. Splits
/// depend only on (dataset, fraction, repetition), so all models in a cell
/// see the same partitions. Repetitions run sequentially so runtimes are not
/// inflated by sibling work; each training run parallelizes internally.
pub fn run_experiment(datasets: &[Dataset], cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("experiment needs at least one dataset".into()));
    }
    let mut result = ExperimentResult::default();
    for (d, ds) in datasets.iter().enumerate() {
        let samples = extract_samples(&ds.raster, &ds.truth)?;
        for (j, spec) in cfg.models.iter().enumerate() {
            for (f, &fraction) in cfg.fractions.iter().enumerate() {
                let mut runs = Vec::with_capacity(cfg.repetitions);
                for rep in 0..cfg.repetitions {
                    let path = [d as u64, f as u64, rep as u64];
                    let (train, test) = stratified_split(&samples, fraction, seed::derive(cfg.seed, SPLIT_DOMAIN, &path))?;
                    let model_seed = seed::derive(cfg.seed, MODEL_DOMAIN, &[d as u64, j as u64, f as u64, rep as u64]);
                    let start = Instant::now();
                    let model = train_model(spec, &train, Some(&test), model_seed)?;
                    let pred = model.predict_samples(&test)?;
                    let elapsed = start.elapsed().as_secs_f64();
                    let cm = confusion(&pred, test.labels(), test.k())?;
                    runs.push((kappa_stats(&cm), elapsed));
                }
                let reps = cfg.repetitions as f64;
                result.rows.push(ExperimentRow {
                    dataset: ds.name.clone(),
                    model: spec.kind.name().into(),
                    fraction,
                    mean_kappa: runs.iter().map(|r| r.0.kappa.unwrap_or(0.0)).sum::<f64>() / reps,
                    mean_kappa_se: runs.iter().map(|r| r.0.kappa_se.unwrap_or(0.0)).sum::<f64>() / reps,
                    mean_runtime_s: runs.iter().map(|r| r.1).sum::<f64>() / reps,
                });
                for (c, class) in samples.class_names().iter().enumerate() {
                    result.class_rows.push(ClassRow {
                        dataset: ds.name.clone(),
                        model: spec.kind.name().into(),
                        fraction,
                        class: class.clone(),
                        producer_kappa: mean_defined(runs.iter().map(|r| r.0.producer[c].kappa)),
                        producer_se: mean_defined(runs.iter().map(|r| r.0.producer[c].se)),
                        user_kappa: mean_defined(runs.iter().map(|r| r.0.user[c].kappa)),
                        user_se: mean_defined(runs.iter().map(|r| r.0.user[c].se)),
                    });
                }
            }
        }
    }
    Ok(result)
}

/// One dataset in an experiment recipe: rasters stacked in order, an
/// optional band selection, and the ground-truth class map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecipe {
    pub name: String,
    pub rasters: Vec<PathBuf>,
    #[serde(default)]
    pub bands: Option<Vec<String>>,
    pub truth: PathBuf,
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_reps() -> usize {
    DEFAULT_REPETITIONS
}

/// Experiment recipe file. Relative paths resolve against the recipe's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecipe {
    pub datasets: Vec<DatasetRecipe>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSpec,
}

impl ExperimentRecipe {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let recipe: ExperimentRecipe = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((recipe, base))
    }

    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            models: self
                .models
                .iter()
                .map(|&kind| ModelSpec { kind, ..self.model.clone() })
                .collect(),
            fractions: self.fractions.clone(),
            repetitions: self.repetitions,
            seed: self.seed,
        }
    }

    pub fn load_datasets(&self, base: &Path) -> Result<Vec<Dataset>> {
        self.datasets
            .iter()
            .map(|d| {
                if d.rasters.is_empty() {
                    return Err(Error::InvalidArgument(format!("dataset `{}` lists no rasters", d.name)));
                }
                let rasters = d
                    .rasters
                    .iter()
                    .map(|p| read_raster(base.join(p)))
                    .collect::<Result<Vec<_>>>()?;
                let mut raster = stack_bands(&rasters)?;
                if let Some(names) = &d.bands {
                    let picked = names
                        .iter()
                        .map(|n| raster.select_band_by_name(n))
                        .collect::<Result<Vec<_>>>()?;
                    raster = stack_bands(&picked)?;
                }
                Ok(Dataset {
                    name: d.name.clone(),
                    raster,
                    truth: read_class_map(base.join(&d.truth))?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{texture_scene, SceneConfig};

    fn small_dataset() -> Dataset {
        let cfg = SceneConfig { rows: 24, cols: 24, tile: 6, ..Default::default() };
        let scene = texture_scene(&cfg, 3).unwrap();
        Dataset { name: "scene".into(), raster: scene.stack, truth: scene.truth }
    }

    #[test]
    fn model_kind_names_roundtrip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn classify_recovers_training_pixels() {
        let ds = small_dataset();
        let s = extract_samples(&ds.raster, &ds.truth).unwrap();
        let spec = ModelSpec { trees: 1, ..Default::default() };
        let mut cfg = spec.forest_config(1);
        cfg.bootstrap = false;
        cfg.tree.mtry = Some(s.m());
        let model = Model::Rf(train_forest(&s, &cfg).unwrap());
        let map = classify_raster(&model, &ds.raster).unwrap();
        assert_eq!(map.labels(), ds.truth.labels());
    }

    #[test]
    fn classify_nodata_and_mismatch() {
        let ds = small_dataset();
        let s = extract_samples(&ds.raster, &ds.truth).unwrap();
        let model = train_model(&ModelSpec { trees: 3, ..Default::default() }, &s, None, 1).unwrap();
        let blank = Raster::new(
            2,
            2,
            ds.raster.band_names().to_vec(),
            vec![-9999.0; 4 * ds.raster.bands()],
            Some(-9999.0),
        )
        .unwrap();
        assert!(classify_raster(&model, &blank).unwrap().labels().iter().all(|&l| l == UNLABELED));
        let narrow = ds.raster.select_band(0);
        assert_eq!(classify_raster(&model, &narrow).unwrap_err().category(), "dimension_mismatch");
    }

    #[test]
    fn model_json_roundtrip() {
        let ds = small_dataset();
        let s = extract_samples(&ds.raster, &ds.truth).unwrap();
        for kind in ModelKind::ALL {
            let spec = ModelSpec { kind, trees: 3, forests: 2, ..Default::default() };
            let m = train_model(&spec, &s, None, 5).unwrap();
            let json = m.to_json().unwrap();
            let back = Model::from_json(&json).unwrap();
            assert_eq!(back.to_json().unwrap(), json);
            assert_eq!(back.predict_samples(&s).unwrap(), m.predict_samples(&s).unwrap());
        }
        assert_eq!(Model::from_json("{\"model\":\"svm\"}").unwrap_err().category(), "model");
    }

    #[test]
    fn test_set_weighting_needs_evaluation_set() {
        let ds = small_dataset();
        let s = extract_samples(&ds.raster, &ds.truth).unwrap();
        let spec = ModelSpec { kind: ModelKind::SrpRfe, trees: 2, forests: 2, test_set_weighting: true, ..Default::default() };
        assert!(train_model(&spec, &s, None, 1).is_err());
        assert!(train_model(&spec, &s, Some(&s), 1).is_ok());
    }

    #[test]
    fn experiment_single_cell() {
        let cfg = ExperimentConfig {
            models: vec![ModelSpec { trees: 5, ..Default::default() }],
            fractions: vec![0.2],
            repetitions: 2,
            seed: 9,
        };
        let ds = small_dataset();
        let a = run_experiment(std::slice::from_ref(&ds), &cfg).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.class_rows.len(), 5);
        let b = run_experiment(&[ds], &cfg).unwrap();
        let csv = |r: &ExperimentResult| {
            let mut v = Vec::new();
            r.write_summary_csv(&mut v, false).unwrap();
            r.write_class_csv(&mut v).unwrap();
            v
        };
        assert_eq!(csv(&a), csv(&b));
        assert!(String::from_utf8(csv(&a)).unwrap().starts_with("dataset,model,fraction,mean_kappa,mean_kappa_se\n"));
    }

    #[test]
    fn evaluate_skips_unlabeled() {
        let legend = vec!["a".to_string(), "b".to_string()];
        let p = ClassMap::new(1, 4, vec![0, 1, 1, UNLABELED], legend.clone()).unwrap();
        let r = ClassMap::new(1, 4, vec![0, 1, 0, 1], legend).unwrap();
        let rep = evaluate_maps(&p, &r).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.total, 3);
        assert_eq!(rep.confusion, vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn recipe_rejects_unknown_keys() {
        let ok = r#"{"datasets":[{"name":"d","rasters":["a.raw"],"truth":"t.raw"}],"models":["rf"],"seed":3}"#;
        let r: ExperimentRecipe = serde_json::from_str(ok).unwrap();
        assert_eq!(r.repetitions, 25);
        assert_eq!(r.config().models[0].kind, ModelKind::Rf);
        let bad = r#"{"datasets":[],"colour":1}"#;
        assert!(serde_json::from_str::<ExperimentRecipe>(bad).is_err());
        let bad_model = r#"{"datasets":[],"model":{"tress":3}}"#;
        assert!(serde_json::from_str::<ExperimentRecipe>(bad_model).is_err());
    }
}
