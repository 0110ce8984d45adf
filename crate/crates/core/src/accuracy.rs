//! Confusion matrices, naive accuracy, kappa statistics and the one-tailed
//! Z test used to compare classifiers.
//!
//! Rows of a confusion matrix are predicted classes and columns are
//! reference classes. Statistics that divide by an empty marginal are
//! reported as `None` rather than zero.

use serde::Serialize;

use crate::error::{Error, Result};

/// One-tailed critical value at 95% confidence.
pub const Z_CRITICAL: f64 = 1.645;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    /// Row-major `k x k`; `counts[i * k + j]` = predicted `i`, reference `j`.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "{k}x{k} confusion matrix needs {} cells, got {}",
                k * k,
                counts.len()
            )));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Degenerate("confusion matrix is empty".into()));
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    /// `a_{i+}`.
    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    /// `a_{+j}`.
    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    /// `a`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || self.get(i, j) == 0))
    }
}

/// Builds the confusion matrix of `predicted` against `reference`.
pub fn confusion(predicted: &[usize], reference: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} reference labels",
            predicted.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &r) in predicted.iter().zip(reference) {
        if p >= k || r >= k {
            return Err(Error::InvalidArgument(format!("label out of range for {k} classes")));
        }
        counts[p * k + r] += 1;
    }
    ConfusionMatrix::from_counts(k, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveReport {
    pub overall_accuracy: f64,
    pub user_accuracy: Vec<Option<f64>>,
    pub user_se: Vec<Option<f64>>,
    pub producer_accuracy: Vec<Option<f64>>,
    pub producer_se: Vec<Option<f64>>,
}

fn binomial(hits: u64, n: u64) -> (Option<f64>, Option<f64>) {
    if n == 0 {
        return (None, None);
    }
    let p = hits as f64 / n as f64;
    (Some(p), Some((p * (1.0 - p) / n as f64).sqrt()))
}

pub fn naive_stats(cm: &ConfusionMatrix) -> NaiveReport {
    let k = cm.k;
    let diag: u64 = (0..k).map(|i| cm.get(i, i)).sum();
    let (user_accuracy, user_se) = (0..k).map(|i| binomial(cm.get(i, i), cm.row_sum(i))).unzip();
    let (producer_accuracy, producer_se) = (0..k).map(|j| binomial(cm.get(j, j), cm.col_sum(j))).unzip();
    NaiveReport {
        overall_accuracy: diag as f64 / cm.total() as f64,
        user_accuracy,
        user_se,
        producer_accuracy,
        producer_se,
    }
}

/// Leading factor of the per-class kappa variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalSe {
    /// `1 / a`, the standard conditional-kappa variance.
    #[default]
    Standard,
    /// The printed `1/2` factor, with the producer expression evaluated
    /// exactly as the user expression indexed by `j`. Kept for audits.
    Table8Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassKappa {
    pub kappa: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub kappa: Option<f64>,
    pub kappa_se: Option<f64>,
    pub user: Vec<ClassKappa>,
    pub producer: Vec<ClassKappa>,
}

fn sqrt_nonneg(v: f64) -> Option<f64> {
    if v.is_nan() || v < -1e-15 {
        None
    } else {
        Some(v.max(0.0).sqrt())
    }
}

/// Conditional kappa for a class whose "own" marginal is `own` and whose
/// opposite marginal is `other`, with diagonal proportion `pii`.
fn conditional(pii: f64, own: f64, other: f64, factor: f64) -> ClassKappa {
    let denom = own - own * other;
    let kappa = (denom > 0.0).then(|| (pii - own * other) / denom);
    let se = if own > 0.0 && other < 1.0 {
        let lead = (own - pii) / (own.powi(3) * (1.0 - other).powi(3));
        let bracket = (own - pii) * (own * other - pii) + pii * (1.0 - own - other + pii);
        sqrt_nonneg(factor * lead * bracket)
    } else {
        None
    };
    ClassKappa { kappa, se }
}

pub fn kappa_stats(cm: &ConfusionMatrix) -> KappaReport {
    kappa_stats_with(cm, ConditionalSe::Standard)
}

pub fn kappa_stats_with(cm: &ConfusionMatrix, form: ConditionalSe) -> KappaReport {
    let k = cm.k;
    let a = cm.total() as f64;
    let rows: Vec<f64> = (0..k).map(|i| cm.row_sum(i) as f64).collect();
    let cols: Vec<f64> = (0..k).map(|j| cm.col_sum(j) as f64).collect();

    let theta1 = (0..k).map(|i| cm.get(i, i) as f64).sum::<f64>() / a;
    let theta2 = (0..k).map(|i| rows[i] * cols[i]).sum::<f64>() / (a * a);
    let theta3 = (0..k).map(|i| cm.get(i, i) as f64 * (rows[i] + cols[i])).sum::<f64>() / (a * a);
    let mut t4 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let c = cm.get(i, j);
            if c != 0 {
                t4 += c as f64 * (rows[j] + cols[i]).powi(2);
            }
        }
    }
    let theta4 = t4 / (a * a * a);

    let (kappa, kappa_se) = if theta2 < 1.0 {
        let d = 1.0 - theta2;
        let e = 1.0 - theta1;
        let var = (theta1 * (1.0 - theta1) / (d * d)
            + 2.0 * e * (2.0 * theta1 * theta2 - theta3) / d.powi(3)
            + e * e * (theta4 - 4.0 * theta2 * theta2) / d.powi(4))
            / a;
        (Some((theta1 - theta2) / d), sqrt_nonneg(var))
    } else {
        (None, None)
    };

    let (factor, literal) = match form {
        ConditionalSe::Standard => (1.0 / a, false),
        ConditionalSe::Table8Literal => (0.5, true),
    };
    let user = (0..k)
        .map(|i| conditional(cm.get(i, i) as f64 / a, rows[i] / a, cols[i] / a, factor))
        .collect();
    let producer = (0..k)
        .map(|j| {
            let pjj = cm.get(j, j) as f64 / a;
            if literal {
                conditional(pjj, rows[j] / a, cols[j] / a, factor)
            } else {
                conditional(pjj, cols[j] / a, rows[j] / a, factor)
            }
        })
        .collect();

    KappaReport {
        theta1,
        theta2,
        theta3,
        theta4,
        kappa,
        kappa_se,
        user,
        producer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FirstBetter,
    NotDistinguishable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTestResult {
    pub z: f64,
    pub critical: f64,
    pub verdict: Verdict,
}

/// `Z = (k1 - k2) / sqrt(s1^2 + s2^2)`, one-tailed at 95%.
pub fn z_test(k1: f64, s1: f64, k2: f64, s2: f64) -> Result<ZTestResult> {
    let var = s1 * s1 + s2 * s2;
    if !(var > 0.0) {
        return Err(Error::Degenerate("both kappa standard errors are zero".into()));
    }
    let z = (k1 - k2) / var.sqrt();
    Ok(ZTestResult {
        z,
        critical: Z_CRITICAL,
        verdict: if z > Z_CRITICAL {
            Verdict::FirstBetter
        } else {
            Verdict::NotDistinguishable
        },
    })
}

/// Z of `entry` against `baseline`; zero joint variance gives `+-inf` or 0
/// by the sign of the kappa difference.
fn z_against(entry: (f64, f64), baseline: (f64, f64)) -> f64 {
    match z_test(entry.0, entry.1, baseline.0, baseline.1) {
        Ok(r) => r.z,
        Err(_) => {
            let diff = entry.0 - baseline.0;
            if diff > 0.0 {
                f64::INFINITY
            } else if diff < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        }
    }
}

/// Picks the parameter whose `(mean kappa, mean SE)` has the largest Z
/// against the first (baseline) entry. Returns the baseline when no entry
/// has positive Z; ties go to the smaller parameter.
pub fn select_optimum<P: Copy + PartialOrd>(stats: &[(P, f64, f64)]) -> Option<P> {
    let (base_param, bk, bs) = *stats.first()?;
    let mut best = (base_param, 0.0);
    for &(param, kappa, se) in &stats[1..] {
        let z = z_against((kappa, se), (bk, bs));
        if z > best.1 || (z == best.1 && z > 0.0 && param < best.0) {
            best = (param, z);
        }
    }
    Some(best.0)
}
