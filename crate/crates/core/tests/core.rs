mod common;

use pathbone::{
    normalize_hu, normalized_bone_threshold, seeded_rng, ArchConfig, ContourMode, Error,
    HuCalibration, Image2D, IntensitySpace, LossWeights, Setting, TrainConfig,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn hu_examples() {
    let cal = HuCalibration::default();
    let img = normalize_hu(1, 3, &[-1000.0, 2000.0, 300.0], &cal).unwrap();
    assert_eq!(img.data()[0], -1.0);
    assert_eq!(img.data()[1], 1.0);
    assert!((img.data()[2] as f64 - (2.0 * 1300.0 / 3000.0 - 1.0)).abs() < 1e-7);
    assert!((normalized_bone_threshold(&cal) + 0.4 / 3.0).abs() < 1e-12);
    assert!(matches!(
        normalize_hu(1, 1, &[f32::NAN], &cal),
        Err(Error::NonFinite { .. })
    ));
    assert!(HuCalibration::new(0.0, 100.0, 150.0).is_err());
    assert!(HuCalibration::new(100.0, 100.0, 100.0).is_err());
}

#[test]
fn rng_streams_separate_by_seed_and_label() {
    let draws = |seed, label| {
        let mut r = seeded_rng(seed, label);
        (0..100).map(|_| r.random::<u64>()).collect::<Vec<_>>()
    };
    assert_eq!(draws(0, "data"), draws(0, "data"));
    assert_ne!(draws(0, "data"), draws(0, "theta"));
    assert_ne!(draws(1, "data"), draws(2, "data"));
}

#[test]
fn defaults_match_the_training_recipe() {
    let c = TrainConfig::default();
    assert_eq!(c.learning_rate, 2.0e-4);
    assert_eq!((c.adam_beta1, c.adam_beta2), (0.5, 0.9));
    assert_eq!((c.h_min, c.h_max), (0.1, 0.2));
    assert_eq!(c.setting, Setting::C);
    assert_eq!(c.contour_mode, ContourMode::Learned);
    assert!(c.multiscale && c.use_attention_map);
    let w = LossWeights::default();
    assert_eq!(
        (
            w.lambda_rec,
            w.lambda_gan,
            w.lambda_path,
            w.lambda_bone,
            w.lambda_kl,
            w.alpha
        ),
        (5.0, 1.0, 0.1, 5.0, 0.05, 1.0)
    );
    assert_eq!(c.arch, ArchConfig::standard());
}

#[test]
fn key_value_file_with_comments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(
        &path,
        "# small run\nsteps = 25\nsetting = B   # path only\n\narch = compact\nlambda_path=0.5\nmultiscale = off\n",
    )
    .unwrap();
    let c = TrainConfig::from_kv_file(&path).unwrap();
    assert_eq!(c.steps, 25);
    assert_eq!(c.setting, Setting::B);
    assert_eq!(c.arch, ArchConfig::compact());
    assert_eq!(c.weights.lambda_path, 0.5);
    assert!(!c.multiscale);
    assert_eq!(c.learning_rate, TrainConfig::default().learning_rate);
}

#[test]
fn key_value_errors_name_the_line() {
    let mut c = TrainConfig::default();
    let msg = c
        .apply_kv("steps = 3\nbogus = 1\n")
        .unwrap_err()
        .to_string();
    assert!(msg.contains("line 2") && msg.contains("bogus"), "{msg}");
    let msg = c.apply_kv("steps three\n").unwrap_err().to_string();
    assert!(msg.contains("line 1"), "{msg}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "h_min = 0.3\nh_max = 0.2\n").unwrap();
    assert!(TrainConfig::from_kv_file(&path).is_err());
}

#[test]
fn image_bounds_are_checked_on_construction() {
    assert!(Image2D::new(1, 2, vec![0.0, 1.5], IntensitySpace::Unit).is_err());
    assert!(Image2D::new(1, 2, vec![-1.0, 1.0], IntensitySpace::Normalized).is_ok());
    assert!(Image2D::new(1, 2, vec![f32::INFINITY, 0.0], IntensitySpace::Normalized).is_err());
    assert!(Image2D::new(2, 2, vec![0.0; 3], IntensitySpace::Unit).is_err());
}

proptest! {
    #[test]
    fn normalize_hu_is_monotone_and_bounded(a in -5000.0f32..5000.0, b in -5000.0f32..5000.0) {
        let cal = HuCalibration::default();
        let img = normalize_hu(1, 2, &[a.min(b), a.max(b)], &cal).unwrap();
        prop_assert!(img.data()[0] <= img.data()[1]);
        prop_assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn hu_round_trip_inside_window(hu in -1000.0f64..2000.0) {
        let cal = HuCalibration::default();
        prop_assert!((cal.denormalize(cal.normalize(hu)) - hu).abs() < 1e-9);
    }

    #[test]
    fn space_conversion_round_trips(seed in 0u64..1000) {
        let img = common::random_image(5, 5, seed, IntensitySpace::Unit);
        let back = img.to_normalized().to_unit();
        for (x, y) in img.data().iter().zip(back.data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}
