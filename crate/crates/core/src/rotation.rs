//! Rotation ensembles of random forests.
//!
//! Each member draws a rotation `R` (block PCA, sparse Gaussian blocks, or a
//! dense Gaussian matrix), trains a forest on rotated samples `R^T x`, and
//! votes with a weight equal to its validation kappa.
//!
//! Block rotations permute the feature indices, cut them into consecutive
//! subsets of `q` features (the last takes the remainder) and fill one
//! `q x q` block per subset. The permutation is folded into `R`, so `R` acts
//! directly on features in their original order.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart;
use crate::error::{Error, Result};
use crate::forest::{self, kappa_of, train_forest, ForestConfig, ForestModel, TuneResult};
use crate::raster::{holdout_split, SampleSet};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationKind {
    Identity,
    Pca,
    Srp,
    Crp,
}

/// Square rotation applied as `R^T x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix {
    pub kind: RotationKind,
    pub m: usize,
    /// Row-major `m x m`.
    pub r: Vec<f64>,
    /// Feature order used to form subsets (block kinds only).
    pub permutation: Vec<usize>,
    /// Subset sizes in permuted order (block kinds only).
    pub blocks: Vec<usize>,
    /// Descending eigenvalues per block (PCA only).
    pub eigenvalues: Vec<Vec<f64>>,
}

impl RotationMatrix {
    pub fn identity(m: usize) -> Self {
        let mut r = vec![0.0; m * m];
        for i in 0..m {
            r[i * m + i] = 1.0;
        }
        RotationMatrix {
            kind: RotationKind::Identity,
            m,
            r,
            permutation: Vec::new(),
            blocks: Vec::new(),
            eigenvalues: Vec::new(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.m + j]
    }

    /// `R^T x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.r[i * m..(i + 1) * m];
            for (o, &rij) in out.iter_mut().zip(row) {
                *o += rij * xi;
            }
        }
        out
    }

    /// `R x`, the inverse of [`apply`](Self::apply) for orthonormal `R`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| (0..m).map(|j| self.r[i * m + j] * y[j]).sum())
            .collect()
    }

    /// `max |R^T R - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let dot: f64 = (0..m).map(|i| self.get(i, a) * self.get(i, b)).sum();
                let id = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - id).abs());
            }
        }
        worst
    }

    pub fn nonzero_count(&self) -> usize {
        self.r.iter().filter(|&&v| v != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationConfig {
    pub kind: RotationKind,
    /// Features per subset for block kinds.
    pub subset_size: usize,
    /// Bootstrap fraction range for PCA fitting.
    pub bootstrap_min: f64,
    pub bootstrap_max: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            kind: RotationKind::Pca,
            subset_size: 3,
            bootstrap_min: 0.50,
            bootstrap_max: 0.75,
        }
    }
}

impl RotationConfig {
    /// Subset size actually used for `m` features. Shrinks `q` when it would
    /// leave a single subset, so there are always at least two.
    pub fn effective_subset(&self, m: usize) -> Result<usize> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "block rotations need at least 2 features, got {m}"
            )));
        }
        if self.subset_size == 0 {
            return Err(Error::InvalidArgument("subset size must be positive".into()));
        }
        Ok(self.subset_size.min(m.div_ceil(2)))
    }
}

/// Random permutation and subset sizes.
fn partition(m: usize, q: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let mut blocks = vec![q; m / q];
    if !m.is_multiple_of(q) {
        blocks.push(m % q);
    }
    (perm, blocks)
}

/// Writes block `values` (row-major `size x size`) into `r` at permuted
/// positions starting at `offset`.
fn place_block(r: &mut [f64], m: usize, perm: &[usize], offset: usize, size: usize, values: &[f64]) {
    for a in 0..size {
        for b in 0..size {
            r[perm[offset + a] * m + (offset + b)] = values[a * size + b];
        }
    }
}

/// Eigenvalues (descending) and unit eigenvectors (columns) of a symmetric
/// matrix. Equal eigenvalues keep solver order; each eigenvector's
/// largest-magnitude component is made positive.
pub fn principal_axes(cov: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = cov.nrows();
    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let mut lead = 0;
        for i in 1..n {
            if v[i].abs() > v[lead].abs() + 1e-12 {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[i];
        }
    }
    (values, vectors)
}

/// Covariance (divisor `n`) of z-normalized columns; columns with zero
/// spread keep a unit divisor.
pub fn normalized_covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let q = rows.first().map_or(0, Vec::len);
    let nf = n as f64;
    let mean: Vec<f64> = (0..q).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let std: Vec<f64> = (0..q)
        .map(|j| {
            let s = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nf).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut cov = DMatrix::zeros(q, q);
    for r in rows {
        for a in 0..q {
            let za = (r[a] - mean[a]) / std[a];
            for b in 0..=a {
                cov[(a, b)] += za * (r[b] - mean[b]) / std[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..=a {
            cov[(a, b)] /= nf;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Block PCA rotation fitted on a fresh bootstrap per subset.
pub fn make_pca_rotation(train: &SampleSet, cfg: &RotationConfig, rng: &mut impl Rng) -> Result<RotationMatrix> {
    let m = train.m();
    let q = cfg.effective_subset(m)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("PCA rotation needs samples".into()));
    }
    if !(0.0 < cfg.bootstrap_min && cfg.bootstrap_min <= cfg.bootstrap_max && cfg.bootstrap_max <= 1.0) {
        return Err(Error::InvalidArgument("bootstrap range must satisfy 0 < min <= max <= 1".into()));
    }
    let (perm, blocks) = partition(m, q, rng);
    let n = train.n();
    let mut r = vec![0.0; m * m];
    let mut eigenvalues = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for &size in &blocks {
        let fraction = rng.gen_range(cfg.bootstrap_min..=cfg.bootstrap_max);
        let draws = ((fraction * n as f64).round() as usize).max(2);
        let rows: Vec<Vec<f64>> = (0..draws)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let row = train.row(i);
                (0..size).map(|a| row[perm[offset + a]] as f64).collect()
            })
            .collect();
        let cov = normalized_covariance(&rows);
        let (values, vectors) = principal_axes(&cov);
        let flat: Vec<f64> = (0..size)
            .flat_map(|a| (0..size).map(move |b| (a, b)))
            .map(|(a, b)| vectors[(a, b)])
            .collect();
        place_block(&mut r, m, &perm, offset, size, &flat);
        eigenvalues.push(values);
        offset += size;
    }
    Ok(RotationMatrix {
        kind: RotationKind::Pca,
        m,
        r,
        permutation: perm,
        blocks,
        eigenvalues,
    })
}

/// Block-diagonal (in permuted coordinates) matrix of standard normals.
pub fn make_srp_rotation(m: usize, cfg: &RotationConfig, rng: &mut impl Rng) -> Result<RotationMatrix> {
    let q = cfg.effective_subset(m)?;
    let (perm, blocks) = partition(m, q, rng);
    let mut r = vec![0.0; m * m];
    let mut offset = 0;
    for &size in &blocks {
        let values: Vec<f64> = (0..size * size).map(|_| rng.sample(StandardNormal)).collect();
        place_block(&mut r, m, &perm, offset, size, &values);
        offset += size;
    }
    Ok(RotationMatrix {
        kind: RotationKind::Srp,
        m,
        r,
        permutation: perm,
        blocks,
        eigenvalues: Vec::new(),
    })
}

/// Dense `m x m` matrix of standard normals.
pub fn make_crp_rotation(m: usize, rng: &mut impl Rng) -> Result<RotationMatrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("rotation needs at least one feature".into()));
    }
    Ok(RotationMatrix {
        kind: RotationKind::Crp,
        m,
        r: (0..m * m).map(|_| rng.sample(StandardNormal)).collect(),
        permutation: Vec::new(),
        blocks: Vec::new(),
        eigenvalues: Vec::new(),
    })
}

/// Per-feature z-normalization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(s: &SampleSet) -> Self {
        let (n, m) = (s.n() as f64, s.m());
        let mut mean = vec![0.0; m];
        for i in 0..s.n() {
            for (acc, &v) in mean.iter_mut().zip(s.row(i)) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for i in 0..s.n() {
            for (j, &v) in s.row(i).iter().enumerate() {
                var[j] += (v as f64 - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalization { mean, std }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (m, s))| (v as f64 - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_forests: usize,
    pub forest: ForestConfig,
    pub rotation: RotationConfig,
    /// Member `i` uses forest seed `child(seed, i)` and rotation stream `i`.
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_forests: 20,
            forest: ForestConfig::default(),
            rotation: RotationConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub rotation: RotationMatrix,
    pub forest: ForestModel,
    pub validation_kappa: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub class_names: Vec<String>,
    pub m: usize,
    pub normalization: Option<Normalization>,
    pub members: Vec<Member>,
}

fn rotate_features(x: &[f32], norm: Option<&Normalization>, rot: &RotationMatrix) -> Vec<f32> {
    let v: Vec<f64> = match norm {
        Some(n) => n.apply(x),
        None => x.iter().map(|&v| v as f64).collect(),
    };
    rot.apply(&v).into_iter().map(|v| v as f32).collect()
}

/// Rotated copy of a sample set; labels are untouched.
pub fn rotate_samples(s: &SampleSet, norm: Option<&Normalization>, rot: &RotationMatrix) -> Result<SampleSet> {
    let mut features = Vec::with_capacity(s.n() * s.m());
    for i in 0..s.n() {
        features.extend(rotate_features(s.row(i), norm, rot));
    }
    let names = (0..rot.m).map(|j| format!("r{j}")).collect();
    s.with_features(features, names)
}

const ROTATION_DOMAIN: u64 = 0x0B71_0E5E;

/// Trains every member on `train`, weighting each by its kappa on
/// `validation` (negative kappa clamps to 0; all-zero falls back to equal
/// weights).
pub fn train_ensemble(train: &SampleSet, validation: &SampleSet, cfg: &EnsembleConfig) -> Result<EnsembleModel> {
    if cfg.n_forests == 0 {
        return Err(Error::InvalidArgument("an ensemble needs at least one forest".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty sample set".into()));
    }
    if validation.m() != train.m() || validation.class_names() != train.class_names() {
        return Err(Error::DimensionMismatch("validation set is not compatible with the training set".into()));
    }
    let m = train.m();
    let normalization = (cfg.rotation.kind == RotationKind::Pca).then(|| Normalization::fit(train));
    let rot_seed = seed::derive(cfg.seed, ROTATION_DOMAIN, &[]);

    let mut members = (0..cfg.n_forests)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream_rng(rot_seed, i as u64);
            let rotation = match cfg.rotation.kind {
                RotationKind::Identity => RotationMatrix::identity(m),
                RotationKind::Pca => {
                    let normalized = match &normalization {
                        Some(n) => rotate_samples(train, Some(n), &RotationMatrix::identity(m))?,
                        None => train.clone(),
                    };
                    make_pca_rotation(&normalized, &cfg.rotation, &mut rng)?
                }
                RotationKind::Srp => make_srp_rotation(m, &cfg.rotation, &mut rng)?,
                RotationKind::Crp => make_crp_rotation(m, &mut rng)?,
            };
            let rotated = rotate_samples(train, normalization.as_ref(), &rotation)?;
            let forest_cfg = ForestConfig {
                seed: seed::child(cfg.seed, i as u64),
                ..cfg.forest.clone()
            };
            let forest = train_forest(&rotated, &forest_cfg)?;
            let rotated_val = rotate_samples(validation, normalization.as_ref(), &rotation)?;
            let pred = forest.predict_samples(&rotated_val)?;
            let (kappa, _) = kappa_of(&pred, rotated_val.labels(), rotated_val.k())?;
            Ok(Member {
                rotation,
                forest,
                validation_kappa: kappa,
                weight: kappa.max(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if members.iter().all(|mb| mb.weight == 0.0) {
        members.iter_mut().for_each(|mb| mb.weight = 1.0);
    }
    Ok(EnsembleModel {
        config: cfg.clone(),
        class_names: train.class_names().to_vec(),
        m,
        normalization,
        members,
    })
}

impl EnsembleModel {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub(crate) fn tallies(&self, x: &[f32]) -> Vec<f64> {
        let mut tally = vec![0.0; self.k()];
        for mb in &self.members {
            let rx = rotate_features(x, self.normalization.as_ref(), &mb.rotation);
            tally[mb.forest.vote_label(&rx)] += mb.weight;
        }
        tally
    }

    pub fn predict_samples(&self, s: &SampleSet) -> Result<Vec<usize>> {
        if s.m() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, samples have {}",
                self.m,
                s.m()
            )));
        }
        Ok((0..s.n())
            .into_par_iter()
            .map(|i| argmax_weights(&self.tallies(s.row(i))))
            .collect())
    }
}

/// Index of the largest tally; ties go to the lowest index.
pub fn argmax_weights(tally: &[f64]) -> usize {
    let mut best = 0;
    for (i, &t) in tally.iter().enumerate() {
        if t > tally[best] {
            best = i;
        }
    }
    best
}

/// Weighted majority vote over members.
pub fn predict_ensemble(model: &EnsembleModel, x: &[f32]) -> Result<(usize, Vec<f64>)> {
    cart::validate_features(x, model.m)?;
    let tally = model.tallies(x);
    Ok((argmax_weights(&tally), tally))
}

/// Where member weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    /// A stratified 75/25 hold-out carved from the training set.
    #[default]
    Holdout,
    /// The evaluation set itself.
    TestSet,
}

pub const HOLDOUT_FRACTION: f64 = 0.75;

/// Trains an ensemble, choosing the weighting set per `source`. With
/// `Holdout`, members train on 75% of `train` and are weighted on the rest;
/// if the hold-out comes out empty the training set is used for weights.
pub fn fit_ensemble(
    train: &SampleSet,
    test: &SampleSet,
    cfg: &EnsembleConfig,
    source: WeightSource,
) -> Result<EnsembleModel> {
    match source {
        WeightSource::TestSet => train_ensemble(train, test, cfg),
        WeightSource::Holdout => {
            let (fit, val) = holdout_split(train, HOLDOUT_FRACTION, seed::derive(cfg.seed, 0x4071, &[]))?;
            if val.is_empty() {
                train_ensemble(train, train, cfg)
            } else {
                train_ensemble(&fit, &val, cfg)
            }
        }
    }
}

/// Default candidate ensemble sizes.
pub fn default_forest_counts() -> Vec<usize> {
    let mut v: Vec<usize> = (1..=10).collect();
    v.extend([12, 14, 16, 18, 20, 25, 30, 40, 50]);
    v
}

/// Trains and scores an ensemble `repetitions` times per ensemble size.
pub fn tune_forests(
    train: &SampleSet,
    test: &SampleSet,
    forest_counts: &[usize],
    repetitions: usize,
    base: &EnsembleConfig,
    source: WeightSource,
) -> Result<TuneResult> {
    forest::tune_with(forest_counts, repetitions, |n_forests, rep| {
        let cfg = EnsembleConfig {
            n_forests,
            seed: seed::derive(base.seed, 0xF0E5, &[n_forests as u64, rep as u64]),
            ..base.clone()
        };
        let model = fit_ensemble(train, test, &cfg, source)?;
        let pred = model.predict_samples(test)?;
        kappa_of(&pred, test.labels(), test.k())
    })
}
