//! Bagged random forests with hard majority voting, and the tree-count
//! tuning harness.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy::{confusion, kappa_stats, select_optimum};
use crate::cart::{self, TreeConfig, TreeNode};
use crate::error::{Error, Result};
use crate::raster::SampleSet;
use crate::seed;

pub const DEFAULT_TREES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    /// Draw `n` samples with replacement per tree; off trains every tree on
    /// the full set.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            tree: TreeConfig::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Serialized as `{config, class_names, m, trees}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub class_names: Vec<String>,
    pub m: usize,
    pub trees: Vec<TreeNode>,
}

/// Trains `cfg.n_trees` trees. Tree `i` draws its bootstrap and feature
/// subsets from stream `i` of `cfg.seed`, so the model is identical under
/// any thread count.
pub fn train_forest(train: &SampleSet, cfg: &ForestConfig) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty sample set".into()));
    }
    cfg.tree.resolved_mtry(train.m())?;
    let n = train.n();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream_rng(cfg.seed, i as u64);
            let indices: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            cart::grow_tree_on(train, &indices, &cfg.tree, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        config: cfg.clone(),
        class_names: train.class_names().to_vec(),
        m: train.m(),
        trees,
    })
}

impl ForestModel {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class vote counts; unchecked input.
    pub(crate) fn votes(&self, x: &[f32]) -> Vec<usize> {
        let mut votes = vec![0usize; self.k()];
        for t in &self.trees {
            votes[cart::tree_vote(t, x)] += 1;
        }
        votes
    }

    pub(crate) fn vote_label(&self, x: &[f32]) -> usize {
        cart::argmax_counts(&self.votes(x))
    }

    /// Labels for every sample, computed in parallel.
    pub fn predict_samples(&self, s: &SampleSet) -> Result<Vec<usize>> {
        if s.m() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, samples have {}",
                self.m,
                s.m()
            )));
        }
        Ok((0..s.n()).into_par_iter().map(|i| self.vote_label(s.row(i))).collect())
    }
}

/// Plurality class and the vote vector; ties go to the lowest class index.
pub fn predict_forest(model: &ForestModel, x: &[f32]) -> Result<(usize, Vec<usize>)> {
    cart::validate_features(x, model.m)?;
    let votes = model.votes(x);
    Ok((cart::argmax_counts(&votes), votes))
}

/// Overall kappa and its standard error of `predicted` against `reference`.
/// A degenerate matrix (single class) counts as kappa 0 with SE 0.
pub fn kappa_of(predicted: &[usize], reference: &[usize], k: usize) -> Result<(f64, f64)> {
    let cm = confusion(predicted, reference, k)?;
    let r = kappa_stats(&cm);
    Ok((r.kappa.unwrap_or(0.0), r.kappa_se.unwrap_or(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneRow {
    pub param: usize,
    pub mean_kappa: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub rows: Vec<TuneRow>,
    pub optimum: usize,
}

impl TuneResult {
    pub fn row(&self, param: usize) -> Option<&TuneRow> {
        self.rows.iter().find(|r| r.param == param)
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "param,mean_kappa,mean_kappa_se,optimum")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.6},{:.6},{}",
                r.param,
                r.mean_kappa,
                r.mean_se,
                u8::from(r.param == self.optimum)
            )?;
        }
        Ok(())
    }
}

/// Runs `evaluate(param, repetition)` for every pair, averages kappa and SE
/// per param and selects the optimum by Z against the first param.
pub(crate) fn tune_with(
    params: &[usize],
    repetitions: usize,
    evaluate: impl Fn(usize, usize) -> Result<(f64, f64)> + Sync,
) -> Result<TuneResult> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("nothing to tune over".into()));
    }
    if repetitions < 2 {
        return Err(Error::InvalidArgument(format!(
            "tuning needs at least 2 repetitions, got {repetitions}"
        )));
    }
    let rows = params
        .iter()
        .map(|&p| {
            let runs = (0..repetitions)
                .into_par_iter()
                .map(|r| evaluate(p, r))
                .collect::<Result<Vec<_>>>()?;
            let reps = repetitions as f64;
            Ok(TuneRow {
                param: p,
                mean_kappa: runs.iter().map(|r| r.0).sum::<f64>() / reps,
                mean_se: runs.iter().map(|r| r.1).sum::<f64>() / reps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<(usize, f64, f64)> = rows.iter().map(|r| (r.param, r.mean_kappa, r.mean_se)).collect();
    let optimum = select_optimum(&stats).expect("params non-empty");
    Ok(TuneResult { rows, optimum })
}

/// Default candidate tree counts `1..=30`.
pub fn default_tree_counts() -> Vec<usize> {
    (1..=30).collect()
}

/// Trains and scores a forest `repetitions` times per tree count, each run
/// with its own derived seed.
pub fn tune_trees(
    train: &SampleSet,
    test: &SampleSet,
    tree_counts: &[usize],
    repetitions: usize,
    base: &ForestConfig,
) -> Result<TuneResult> {
    tune_with(tree_counts, repetitions, |n_trees, rep| {
        let cfg = ForestConfig {
            n_trees,
            seed: seed::derive(base.seed, 0x7EE5, &[n_trees as u64, rep as u64]),
            ..base.clone()
        };
        let model = train_forest(train, &cfg)?;
        let pred = model.predict_samples(test)?;
        kappa_of(&pred, test.labels(), test.k())
    })
}
