use landcover::bands::rdvi;
use landcover::fusion::{fit_fusion, fuse, Kernel};
use landcover::pipeline::{classify_raster, evaluate_maps, train_model, Model, ModelKind, ModelSpec};
use landcover::raster::{
    extract_samples, read_class_map, read_raster, read_samples_csv, stack_bands, stratified_split, write_class_map,
    write_raster, write_samples_csv, UNLABELED,
};
use landcover::rotation::{tune_forests, EnsembleConfig, RotationConfig, RotationKind, WeightSource};
use landcover::synthetic::{texture_scene, SceneConfig, TEXTURE_SOURCE};
use landcover::texture::{texture_band, GlcmConfig};

fn scene() -> landcover::synthetic::Scene {
    texture_scene(&SceneConfig { rows: 48, cols: 48, ..Default::default() }, 21).unwrap()
}

#[test]
fn files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene();
    let raster_path = dir.path().join("scene.raw");
    let truth_path = dir.path().join("truth.raw");
    write_raster(&sc.stack, &raster_path).unwrap();
    write_class_map(&sc.truth, &truth_path).unwrap();
    let stack = read_raster(&raster_path).unwrap();
    let truth = read_class_map(&truth_path).unwrap();
    assert_eq!(stack, sc.stack);
    assert_eq!(truth, sc.truth);

    let tex = texture_band(&stack.select_band_by_name(TEXTURE_SOURCE).unwrap(), &GlcmConfig::default()).unwrap();
    let veg = rdvi(&stack.select_band(0), &stack.select_band(1)).unwrap();
    let full = stack_bands(&[stack, veg, tex]).unwrap();
    let samples = extract_samples(&full, &truth).unwrap();
    // The 9x9 texture window leaves a 4-pixel nodata border.
    assert_eq!(samples.n(), 40 * 40);

    let csv = dir.path().join("samples.csv");
    write_samples_csv(&samples, &csv).unwrap();
    let back = read_samples_csv(&csv, Some(samples.class_names().to_vec())).unwrap();
    assert_eq!(back, samples.with_features(samples.features().to_vec(), back.feature_names().to_vec()).unwrap());

    let (train, _) = stratified_split(&samples, 0.2, 1).unwrap();
    let model = train_model(&ModelSpec { kind: ModelKind::PcaRfe, forests: 5, trees: 10, ..Default::default() }, &train, None, 3)
        .unwrap();
    let model_path = dir.path().join("model.json");
    model.save(&model_path).unwrap();
    let loaded = Model::load(&model_path).unwrap();
    assert_eq!(loaded, model);

    let map = classify_raster(&loaded, &full).unwrap();
    let border = map.labels().iter().filter(|&&l| l == UNLABELED).count();
    assert_eq!(border, 48 * 48 - 40 * 40);
    let report = evaluate_maps(&map, &truth).unwrap();
    assert_eq!(report.total, 1600);
    assert!(report.kappa.kappa.unwrap() > 0.8, "{:?}", report.kappa.kappa);
}

#[test]
fn fused_bands_feed_classification() {
    let sc = scene();
    let spectral = stack_bands(&(0..4).map(|b| sc.stack.select_band(b)).collect::<Vec<_>>()).unwrap();
    let tex = texture_band(&sc.stack.select_band_by_name(TEXTURE_SOURCE).unwrap(), &GlcmConfig::default()).unwrap();
    let model = fit_fusion(&spectral, &tex, 0.6).unwrap();
    let fast = fuse(&model, &spectral, &tex, Kernel::Fast).unwrap();
    let reference = fuse(&model, &spectral, &tex, Kernel::Reference).unwrap();
    let diff = fast
        .data()
        .iter()
        .zip(reference.data())
        .filter(|(a, _)| fast.is_valid_value(**a))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(diff <= 1e-5);
    // Pixels where the texture band is nodata are nodata in every fused band.
    for i in 0..fast.pixels() {
        assert_eq!(fast.pixel_valid(i), tex.pixel_valid(i));
    }
    let samples = extract_samples(&fast, &sc.truth).unwrap();
    let (train, test) = stratified_split(&samples, 0.3, 2).unwrap();
    let m = train_model(&ModelSpec { trees: 20, ..Default::default() }, &train, None, 1).unwrap();
    let pred = m.predict_samples(&test).unwrap();
    let acc = pred.iter().zip(test.labels()).filter(|(a, b)| a == b).count() as f64 / test.n() as f64;
    assert!(acc > 0.5, "{acc}");
}

#[test]
fn tune_forests_reports_every_size() {
    let sc = scene();
    let samples = extract_samples(&sc.stack, &sc.truth).unwrap();
    let (train, test) = stratified_split(&samples, 0.1, 4).unwrap();
    let base = EnsembleConfig {
        forest: landcover::forest::ForestConfig { n_trees: 5, ..Default::default() },
        rotation: RotationConfig { kind: RotationKind::Srp, ..Default::default() },
        ..Default::default()
    };
    let r = tune_forests(&train, &test, &[1, 3], 2, &base, WeightSource::Holdout).unwrap();
    assert_eq!(r.rows.iter().map(|r| r.param).collect::<Vec<_>>(), vec![1, 3]);
    assert!([1, 3].contains(&r.optimum));
    let single = tune_forests(&train, &test, &[4], 2, &base, WeightSource::TestSet).unwrap();
    assert_eq!(single.optimum, 4);
}
