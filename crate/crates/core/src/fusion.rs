//! Bayesian fusion of one auxiliary band into a multispectral raster.
//!
//! The auxiliary band is linked to the multispectral pixel vector by a
//! linear regression `y_S = alpha + beta^T y_M + e_S`, multispectral errors
//! are Gaussian with covariance `Sigma_M`, and the prior is flat. The fused
//! pixel is the weighted posterior mean
//!
//! ```text
//! Sigma_w^-1 = 2(1-w) Sigma_M^-1 + (2w / sigma_s^2) beta beta^T
//! mu_w       = Sigma_w (2(1-w) Sigma_M^-1 y_M + (2w / sigma_s^2)(y_S - alpha) beta)
//! ```
//!
//! Nothing inside `Sigma_w` depends on the pixel, so `mu_w` is an affine map
//! `A y_M + (y_S - alpha) c` with `A = Sigma_w 2(1-w) Sigma_M^-1` and
//! `c = Sigma_w (2w / sigma_s^2) beta`. [`fuse_fast`] applies that map;
//! [`fuse_reference`] re-derives everything per pixel and serves as the
//! baseline for equivalence checks and timing.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, DEFAULT_NODATA};
use crate::seed;

/// Default weight of the auxiliary band.
pub const DEFAULT_WEIGHT: f64 = 0.6;

/// Fitted fusion parameters plus the precomputed affine operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub n: usize,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub sigma_s2: f64,
    /// Row-major `n x n` multispectral covariance.
    pub sigma_m: Vec<f64>,
    pub w: f64,
    /// Row-major `n x n` operator applied to `y_M`.
    pub a: Vec<f64>,
    /// Operator applied to `y_S - alpha`.
    pub c: Vec<f64>,
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("weight must lie in [0, 1), got {w}")));
    }
    Ok(())
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.inverse());
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("{what} is singular")))
}

impl FusionModel {
    /// Builds a model from its parameters and precomputes `A` and `c`.
    pub fn from_parts(alpha: f64, beta: Vec<f64>, sigma_s2: f64, sigma_m: Vec<f64>, w: f64) -> Result<Self> {
        check_weight(w)?;
        let n = beta.len();
        if n == 0 || sigma_m.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "beta has {n} entries, covariance has {} (needs {})",
                sigma_m.len(),
                n * n
            )));
        }
        if !(sigma_s2 > 0.0) || !sigma_s2.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma_s^2 must be positive, got {sigma_s2}")));
        }
        let sm = DMatrix::from_row_slice(n, n, &sigma_m);
        let b = DVector::from_column_slice(&beta);
        let sm_inv = spd_inverse(&sm, "multispectral covariance")?;
        let spectral = sm_inv * (2.0 * (1.0 - w));
        let k = 2.0 * w / sigma_s2;
        let precision = &spectral + (&b * b.transpose()) * k;
        let sigma_w = spd_inverse(&precision, "posterior precision")?;
        let a = &sigma_w * &spectral;
        let c = &sigma_w * &b * k;
        Ok(FusionModel {
            n,
            alpha,
            beta,
            sigma_s2,
            sigma_m,
            w,
            a: row_major(&a),
            c: c.iter().copied().collect(),
        })
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }

    /// Largest entry of `|A + c beta^T - I|`.
    pub fn identity_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                let v = self.a[i * n + j] + self.c[i] * self.beta[j] - id;
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn check_inputs(ms: &Raster, aux: &Raster, n: Option<usize>) -> Result<()> {
    if aux.bands() != 1 {
        return Err(Error::InvalidArgument("auxiliary raster must have one band".into()));
    }
    if !ms.same_shape(aux) {
        return Err(Error::DimensionMismatch(format!(
            "multispectral {}x{} vs auxiliary {}x{}",
            ms.rows(),
            ms.cols(),
            aux.rows(),
            aux.cols()
        )));
    }
    if let Some(n) = n {
        if ms.bands() != n {
            return Err(Error::DimensionMismatch(format!(
                "model expects {n} bands, raster has {}",
                ms.bands()
            )));
        }
    }
    Ok(())
}

/// Fits regression, residual variance and multispectral covariance over
/// all pixels valid in both inputs.
pub fn fit_fusion(ms: &Raster, aux: &Raster, w: f64) -> Result<FusionModel> {
    check_weight(w)?;
    check_inputs(ms, aux, None)?;
    let n = ms.bands();
    let npx = ms.pixels();
    let valid: Vec<usize> = (0..npx)
        .filter(|&i| ms.pixel_valid(i) && aux.is_valid_value(aux.band(0)[i]))
        .collect();
    let count = valid.len();
    if count < n + 2 {
        return Err(Error::Degenerate(format!(
            "{count} valid pixels; fitting {n} bands needs at least {}",
            n + 2
        )));
    }
    let nf = count as f64;
    let y = aux.band(0);
    let mut mean_x = vec![0.0; n];
    let mut mean_y = 0.0;
    for &i in &valid {
        for (b, m) in mean_x.iter_mut().enumerate() {
            *m += ms.band(b)[i] as f64;
        }
        mean_y += y[i] as f64;
    }
    mean_x.iter_mut().for_each(|m| *m /= nf);
    mean_y /= nf;

    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut cross = DVector::<f64>::zeros(n);
    let mut var_y = 0.0;
    let mut dx = vec![0.0; n];
    for &i in &valid {
        for b in 0..n {
            dx[b] = ms.band(b)[i] as f64 - mean_x[b];
        }
        let dy = y[i] as f64 - mean_y;
        var_y += dy * dy;
        for r in 0..n {
            cross[r] += dx[r] * dy;
            for c in 0..=r {
                cov[(r, c)] += dx[r] * dx[c];
            }
        }
    }
    for r in 0..n {
        for c in 0..r {
            cov[(c, r)] = cov[(r, c)];
        }
    }
    let denom = nf - 1.0;
    cov /= denom;
    cross /= denom;
    var_y /= denom;
    if var_y <= 0.0 {
        return Err(Error::Degenerate("auxiliary band is constant".into()));
    }

    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) {
        return Err(Error::Degenerate("multispectral bands are constant".into()));
    }
    if min_eig <= 1e-12 * max_eig {
        let ridge = 1e-8 * cov.trace() / n as f64;
        for d in 0..n {
            cov[(d, d)] += ridge;
        }
    }

    let cov_inv = spd_inverse(&cov, "multispectral covariance")?;
    let beta = &cov_inv * &cross;
    let alpha = mean_y - beta.iter().zip(&mean_x).map(|(b, m)| b * m).sum::<f64>();

    let mut sse = 0.0;
    for &i in &valid {
        let pred = alpha + (0..n).map(|b| beta[b] * ms.band(b)[i] as f64).sum::<f64>();
        let r = y[i] as f64 - pred;
        sse += r * r;
    }
    let sigma_s2 = (sse / nf).max(1e-12 * var_y);

    FusionModel::from_parts(alpha, beta.iter().copied().collect(), sigma_s2, row_major(&cov), w)
}

fn output_nodata(ms: &Raster) -> f32 {
    ms.nodata().unwrap_or(DEFAULT_NODATA)
}

fn assemble(ms: &Raster, data: Vec<f32>) -> Result<Raster> {
    Raster::new(
        ms.rows(),
        ms.cols(),
        ms.band_names().to_vec(),
        data,
        Some(output_nodata(ms)),
    )
}

/// Per-pixel posterior mean with both inversions redone at every pixel.
pub fn fuse_reference(model: &FusionModel, ms: &Raster, aux: &Raster) -> Result<Raster> {
    check_inputs(ms, aux, Some(model.n))?;
    let n = model.n;
    let npx = ms.pixels();
    let nodata = output_nodata(ms);
    let mut out = vec![nodata; n * npx];
    let sm = DMatrix::from_row_slice(n, n, &model.sigma_m);
    let beta = DVector::from_column_slice(&model.beta);
    let k = 2.0 * model.w / model.sigma_s2;
    let ys = aux.band(0);
    for i in 0..npx {
        if !ms.pixel_valid(i) || !aux.is_valid_value(ys[i]) {
            continue;
        }
        let Some(sm_inv) = sm.clone().try_inverse() else {
            continue;
        };
        let spectral = sm_inv * (2.0 * (1.0 - model.w));
        let precision = &spectral + (&beta * beta.transpose()) * k;
        let Some(sigma_w) = precision.try_inverse() else {
            continue;
        };
        let ym = DVector::from_iterator(n, (0..n).map(|b| ms.band(b)[i] as f64));
        let rhs = spectral * ym + &beta * (k * (ys[i] as f64 - model.alpha));
        let mu = sigma_w * rhs;
        for b in 0..n {
            out[b * npx + i] = mu[b] as f32;
        }
    }
    assemble(ms, out)
}

/// Posterior mean through the precomputed affine map `A y_M + (y_S - alpha) c`.
pub fn fuse_fast(model: &FusionModel, ms: &Raster, aux: &Raster) -> Result<Raster> {
    check_inputs(ms, aux, Some(model.n))?;
    let n = model.n;
    let npx = ms.pixels();
    let nodata = output_nodata(ms);
    let mut out = vec![nodata; n * npx];
    let ys = aux.band(0);
    let src = ms.data();
    let mut ym = vec![0.0f64; n];
    for i in 0..npx {
        if !ms.pixel_valid(i) || !aux.is_valid_value(ys[i]) {
            continue;
        }
        for (b, v) in ym.iter_mut().enumerate() {
            *v = src[b * npx + i] as f64;
        }
        let shift = ys[i] as f64 - model.alpha;
        for b in 0..n {
            let row = &model.a[b * n..(b + 1) * n];
            let mut acc = shift * model.c[b];
            for (a, y) in row.iter().zip(&ym) {
                acc += a * y;
            }
            out[b * npx + i] = acc as f32;
        }
    }
    assemble(ms, out)
}

/// Which kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Fast,
    Reference,
}

pub fn fuse(model: &FusionModel, ms: &Raster, aux: &Raster, kernel: Kernel) -> Result<Raster> {
    match kernel {
        Kernel::Fast => fuse_fast(model, ms, aux),
        Kernel::Reference => fuse_reference(model, ms, aux),
    }
}

/// Random multispectral raster with correlated bands and an auxiliary
/// band that depends linearly on them plus noise.
pub fn synthetic_scene(size: usize, bands: usize, seed_value: u64) -> Result<(Raster, Raster)> {
    let mut rng = seed::stream_rng(seed_value, 0);
    let npx = size * size;
    let latent_count = 3;
    let latent: Vec<Vec<f64>> = (0..latent_count)
        .map(|_| (0..npx).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(bands * npx);
    for _ in 0..bands {
        let offset: f64 = rng.gen_range(0.1..0.5);
        let loads: Vec<f64> = (0..latent_count).map(|_| rng.gen_range(0.02..0.1)).collect();
        for p in 0..npx {
            let mut v = offset + 0.01 * rng.sample::<f64, _>(StandardNormal);
            for (l, f) in loads.iter().zip(&latent) {
                v += l * f[p];
            }
            data.push(v as f32);
        }
    }
    let names = (0..bands).map(|b| format!("B{}", b + 1)).collect();
    let ms = Raster::new(size, size, names, data, None)?;
    let coef: Vec<f64> = (0..bands).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let aux: Vec<f32> = (0..npx)
        .map(|p| {
            let mut v = 0.2 + 0.05 * rng.sample::<f64, _>(StandardNormal);
            for (b, c) in coef.iter().enumerate() {
                v += c * ms.band(b)[p] as f64;
            }
            v as f32
        })
        .collect();
    Ok((ms, Raster::single(size, size, "aux", aux, None)?))
}

/// One benchmark configuration's timings (seconds, mean over repetitions).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub bands: usize,
    pub t_reference: f64,
    pub t_fast: f64,
    pub factor: f64,
}

/// Times both kernels on a synthetic scene per `(size, bands)` pair. Each
/// kernel runs once untimed before `repetitions` timed runs.
pub fn bench_config(size: usize, bands: usize, w: f64, repetitions: usize, seed_value: u64) -> Result<BenchRow> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!("benchmark size must be >= 16, got {size}")));
    }
    if repetitions < 3 {
        return Err(Error::InvalidArgument(format!(
            "benchmark needs at least 3 repetitions, got {repetitions}"
        )));
    }
    let (ms, aux) = synthetic_scene(size, bands, seed::derive(seed_value, 0xF05E, &[size as u64, bands as u64]))?;
    let model = fit_fusion(&ms, &aux, w)?;
    let time = |kernel: Kernel| -> Result<f64> {
        std::hint::black_box(fuse(&model, &ms, &aux, kernel)?);
        let mut total = 0.0;
        for _ in 0..repetitions {
            let start = Instant::now();
            std::hint::black_box(fuse(&model, &ms, &aux, kernel)?);
            total += start.elapsed().as_secs_f64();
        }
        Ok(total / repetitions as f64)
    };
    let t_reference = time(Kernel::Reference)?;
    let t_fast = time(Kernel::Fast)?;
    Ok(BenchRow {
        size,
        bands,
        t_reference,
        t_fast,
        factor: t_reference / t_fast,
    })
}

/// Runs every `(size, bands)` combination.
pub fn bench_fusion(
    sizes: &[usize],
    band_counts: &[usize],
    w: f64,
    repetitions: usize,
    seed_value: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        for &bands in band_counts {
            rows.push(bench_config(size, bands, w, repetitions, seed_value)?);
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "size,bands,t_reference,t_fast,factor")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.3}",
            r.size, r.bands, r.t_reference, r.t_fast, r.factor
        )?;
    }
    Ok(())
}
