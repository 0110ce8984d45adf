//! Derived bands: SAR combinations and spectral indices.
//!
//! Zero or negative denominators produce nodata instead of infinities so
//! derived bands can feed straight into sample extraction.

use crate::error::{Error, Result};
use crate::raster::{Raster, DEFAULT_NODATA};

fn check_pair(a: &Raster, b: &Raster) -> Result<()> {
    if a.bands() != 1 || b.bands() != 1 {
        return Err(Error::InvalidArgument("derived bands take single-band inputs".into()));
    }
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn nodata_of(a: &Raster, b: &Raster) -> f32 {
    a.nodata().or(b.nodata()).unwrap_or(DEFAULT_NODATA)
}

/// Applies `f` pixelwise; pixels where either input is invalid or `f`
/// returns `None` become nodata.
fn combine(
    a: &Raster,
    b: &Raster,
    name: &str,
    f: impl Fn(f64, f64) -> Option<f64>,
) -> Result<Raster> {
    check_pair(a, b)?;
    let nodata = nodata_of(a, b);
    let data = a
        .band(0)
        .iter()
        .zip(b.band(0))
        .map(|(&x, &y)| {
            if !a.is_valid_value(x) || !b.is_valid_value(y) {
                return nodata;
            }
            match f(x as f64, y as f64) {
                Some(v) if v.is_finite() => v as f32,
                _ => nodata,
            }
        })
        .collect();
    Raster::single(a.rows(), a.cols(), name, data, Some(nodata))
}

/// `(VV + VH) / 2`, `VV - VH` and `VV / VH`.
pub fn sar_derived(vv: &Raster, vh: &Raster) -> Result<(Raster, Raster, Raster)> {
    let avg = combine(vv, vh, "sar_average", |a, b| Some((a + b) / 2.0))?;
    let diff = combine(vv, vh, "sar_difference", |a, b| Some(a - b))?;
    let ratio = combine(vv, vh, "sar_ratio", |a, b| (b != 0.0).then(|| a / b))?;
    Ok((avg, diff, ratio))
}

/// Renormalized difference vegetation index `(NIR - Red) / sqrt(NIR + Red)`.
pub fn rdvi(nir: &Raster, red: &Raster) -> Result<Raster> {
    combine(nir, red, "rdvi", |n, r| (n + r > 0.0).then(|| (n - r) / (n + r).sqrt()))
}

/// Normalized burn ratio `(NIR - SWIR) / (NIR + SWIR)`.
pub fn nbr(nir: &Raster, swir: &Raster) -> Result<Raster> {
    combine(nir, swir, "nbr", |n, s| (n + s != 0.0).then(|| (n - s) / (n + s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(v: f32) -> Raster {
        Raster::single(1, 1, "b", vec![v], None).unwrap()
    }

    #[test]
    fn sar_examples() {
        let (a, d, r) = sar_derived(&px(4.0), &px(2.0)).unwrap();
        assert_eq!((a.data()[0], d.data()[0], r.data()[0]), (3.0, 2.0, 2.0));
        let (_, d, r) = sar_derived(&px(0.3), &px(0.3)).unwrap();
        assert_eq!((d.data()[0], r.data()[0]), (0.0, 1.0));
        let (_, _, r) = sar_derived(&px(1.0), &px(0.0)).unwrap();
        assert_eq!(r.data()[0], DEFAULT_NODATA);
    }

    #[test]
    fn rdvi_examples() {
        assert_eq!(rdvi(&px(0.3), &px(0.3)).unwrap().data()[0], 0.0);
        let v = rdvi(&px(0.5), &px(0.1)).unwrap().data()[0] as f64;
        assert!((v - 0.4 / 0.6f64.sqrt()).abs() < 1e-6);
        assert!((v - 0.5164).abs() < 1e-4);
        assert_eq!(rdvi(&px(0.0), &px(0.0)).unwrap().data()[0], DEFAULT_NODATA);
    }

    #[test]
    fn nbr_examples() {
        assert_eq!(nbr(&px(0.4), &px(0.4)).unwrap().data()[0], 0.0);
        assert!((nbr(&px(0.6), &px(0.2)).unwrap().data()[0] - 0.5).abs() < 1e-7);
        assert_eq!(nbr(&px(0.0), &px(0.0)).unwrap().data()[0], DEFAULT_NODATA);
    }

    #[test]
    fn shape_mismatch() {
        let big = Raster::single(2, 1, "b", vec![1.0, 2.0], None).unwrap();
        assert_eq!(nbr(&px(1.0), &big).unwrap_err().category(), "dimension_mismatch");
    }

    proptest! {
        #[test]
        fn sar_of_equal_inputs(x in -1e3f32..1e3) {
            prop_assume!(x != 0.0);
            let (a, d, r) = sar_derived(&px(x), &px(x)).unwrap();
            prop_assert_eq!(a.data()[0], x);
            prop_assert_eq!(d.data()[0], 0.0);
            prop_assert_eq!(r.data()[0], 1.0);
        }

        #[test]
        fn nbr_bounded(n in 0f32..1e4, s in 0f32..1e4) {
            prop_assume!(n + s > 0.0);
            let v = nbr(&px(n), &px(s)).unwrap().data()[0];
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert!(rdvi(&px(n), &px(s)).unwrap().data()[0].is_finite());
        }
    }
}
