//! Generated data with known structure: Gaussian class blobs and a tiled
//! scene whose classes differ in spatial texture as well as spectrum.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::raster::{ClassMap, Raster, SampleSet};
use crate::seed;

/// `n` samples in `k` isotropic unit-variance blobs in `m` dimensions.
/// Class centers are `separation * N(0, I)`; class sizes differ by at most
/// one and samples are interleaved by class.
pub fn gaussian_blobs(n: usize, k: usize, m: usize, separation: f64, seed: u64) -> Result<SampleSet> {
    if k == 0 || m == 0 || n < k {
        return Err(Error::InvalidArgument(format!(
            "need k >= 1, m >= 1 and n >= k (n={n}, k={k}, m={m})"
        )));
    }
    let mut rng = seed::stream_rng(seed, 0);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut features = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        labels.push(c);
        for &mu in &centers[c] {
            features.push((mu + rng.sample::<f64, _>(StandardNormal)) as f32);
        }
    }
    SampleSet::new(
        features,
        labels,
        (0..m).map(|j| format!("f_{j}")).collect(),
        (0..k).map(|c| format!("class_{c}")).collect(),
    )
}

/// `per_class` samples for each of `k` blobs.
pub fn blobs(k: usize, per_class: usize, m: usize, separation: f64, seed: u64) -> SampleSet {
    gaussian_blobs(k * per_class, k, m, separation, seed).expect("valid blob parameters")
}

/// Spatial texture of a class in [`texture_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    /// Piecewise constant over `grain x grain` cells.
    Smooth,
    /// Independent per pixel.
    Rough,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    /// Side of the square class tiles.
    pub tile: usize,
    /// Spectral bands (a textured band named `texture_source` is appended).
    pub spectral_bands: usize,
    /// Per-class spectral mean index and texture. Classes sharing a mean
    /// index are spectrally identical.
    pub classes: Vec<(usize, Texture)>,
    /// Per-band noise standard deviation (reflectance units).
    pub noise: f64,
    /// Standard deviation of the per-pixel brightness factor shared by all
    /// spectral bands.
    pub illumination: f64,
    pub grain: usize,
}

impl Default for SceneConfig {
    /// Five classes: three spectrally distinct, plus a pair sharing one
    /// spectral mean that differ only in texture.
    fn default() -> Self {
        SceneConfig {
            rows: 72,
            cols: 72,
            tile: 12,
            spectral_bands: 4,
            classes: vec![
                (0, Texture::Smooth),
                (1, Texture::Rough),
                (2, Texture::Smooth),
                (3, Texture::Smooth),
                (3, Texture::Rough),
            ],
            noise: 0.03,
            illumination: 0.25,
            grain: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Spectral bands `b_0..` followed by `texture_source`.
    pub stack: Raster,
    pub truth: ClassMap,
}

pub const TEXTURE_SOURCE: &str = "texture_source";

/// Tiled scene: tiles get classes in balanced random order. Spectral band
/// `b` of a pixel is `g * mean[b] + noise`, with class means drawn from
/// `U(0.05, 0.45)` and a per-pixel brightness `g = 1 + illumination * N(0,1)`
/// that correlates the bands. The textured band is `0.2 + 0.05 * N(0,1)`,
/// with the normal draw shared across `grain x grain` cells for smooth
/// classes and independent for rough ones, so its per-pixel distribution is
/// the same for every class.
pub fn texture_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    let k = cfg.classes.len();
    if k == 0 || k > 255 || cfg.tile == 0 || cfg.grain == 0 || cfg.spectral_bands == 0 {
        return Err(Error::InvalidArgument("invalid scene configuration".into()));
    }
    if cfg.rows < cfg.tile || cfg.cols < cfg.tile {
        return Err(Error::InvalidArgument("scene smaller than one tile".into()));
    }
    let mut rng = seed::stream_rng(seed, 0);
    let n_means = cfg.classes.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let means: Vec<Vec<f64>> = (0..n_means)
        .map(|_| {
            (0..cfg.spectral_bands)
                .map(|_| rng.gen_range(0.05..0.45))
                .collect()
        })
        .collect();

    let tr = cfg.rows.div_ceil(cfg.tile);
    let tc = cfg.cols.div_ceil(cfg.tile);
    let mut tile_class: Vec<usize> = (0..tr * tc).map(|t| t % k).collect();
    tile_class.shuffle(&mut rng);

    let (rows, cols) = (cfg.rows, cfg.cols);
    let npx = rows * cols;
    let labels: Vec<usize> = (0..npx)
        .map(|i| tile_class[(i / cols / cfg.tile) * tc + (i % cols) / cfg.tile])
        .collect();

    let b = cfg.spectral_bands;
    let mut data = vec![0f32; (b + 1) * npx];
    for (i, &c) in labels.iter().enumerate() {
        let g = 1.0 + cfg.illumination * rng.sample::<f64, _>(StandardNormal);
        for band in 0..b {
            let mu = means[cfg.classes[c].0][band];
            data[band * npx + i] = (g * mu + cfg.noise * rng.sample::<f64, _>(StandardNormal)) as f32;
        }
    }
    let gr = rows.div_ceil(cfg.grain);
    let gc = cols.div_ceil(cfg.grain);
    let cells: Vec<f64> = (0..gr * gc).map(|_| rng.sample(StandardNormal)).collect();
    for (i, &c) in labels.iter().enumerate() {
        let noise = match cfg.classes[c].1 {
            Texture::Smooth => cells[(i / cols / cfg.grain) * gc + (i % cols) / cfg.grain],
            Texture::Rough => rng.sample(StandardNormal),
        };
        data[b * npx + i] = (0.2 + 0.05 * noise) as f32;
    }

    let mut names: Vec<String> = (0..b).map(|j| format!("b_{j}")).collect();
    names.push(TEXTURE_SOURCE.into());
    let stack = Raster::new(rows, cols, names, data, None)?;
    let truth = ClassMap::new(
        rows,
        cols,
        labels.iter().map(|&c| c as u8).collect(),
        (0..k).map(|c| format!("class_{c}")).collect(),
    )?;
    Ok(Scene { stack, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_shapes() {
        let s = gaussian_blobs(1000, 7, 12, 3.0, 1).unwrap();
        assert_eq!((s.n(), s.m(), s.k()), (1000, 12, 7));
        let counts = s.class_counts();
        assert!(counts.iter().all(|&c| c == 142 || c == 143));
        assert_eq!(s, gaussian_blobs(1000, 7, 12, 3.0, 1).unwrap());
        assert!(gaussian_blobs(3, 7, 2, 1.0, 1).is_err());
    }

    #[test]
    fn scene_is_deterministic_and_balanced() {
        let cfg = SceneConfig::default();
        let a = texture_scene(&cfg, 4).unwrap();
        let b = texture_scene(&cfg, 4).unwrap();
        assert_eq!(a.stack, b.stack);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.stack.bands(), 5);
        let mut counts = [0usize; 5];
        a.truth.labels().iter().for_each(|&l| counts[l as usize] += 1);
        assert!(counts.iter().all(|&c| c > 0));
    }
}
