use super::*;
use crate::eval::fbd;
use crate::patchgen::{build_training_set, Balance, EdgeClass};

fn one_leaf_spec(seed: u64) -> PlantSpec {
    PlantSpec {
        seed,
        leaf_count: 1,
        leaf_length: (30.0, 40.0),
        leaf_width: (10.0, 14.0),
        angular_jitter: 0.05,
        overlap: 0.0,
        background_amplitude: 0.15,
    }
}

#[test]
fn single_leaf_plant_has_one_label_and_rerenders_identically() {
    let spec = one_leaf_spec(3);
    let (img, gt) = generate_plant(&spec, 96).unwrap();
    assert_eq!(gt.leaf_labels(), vec![1]);

    let (img2, gt2) = generate_plant(&spec, 96).unwrap();
    assert_eq!(img, img2);
    assert_eq!(gt, gt2);
    assert_eq!(fbd(&gt, &gt2).unwrap(), 1.0);
}

#[test]
fn canvas_too_small_is_an_error() {
    let spec = one_leaf_spec(4);
    assert!(matches!(
        generate_plant(&spec, 32),
        Err(SynthError::CanvasTooSmall { .. })
    ));
}

#[test]
fn overlap_factor_increases_leaf_boundary_contact() {
    // Oracle: count adjacent pixel pairs with differing nonzero labels.
    let base = PlantSpec {
        seed: 11,
        leaf_count: 8,
        leaf_length: (40.0, 55.0),
        leaf_width: (12.0, 16.0),
        angular_jitter: 0.02,
        overlap: 0.0,
        background_amplitude: 0.15,
    };
    let tight = PlantSpec {
        overlap: 0.8,
        ..base.clone()
    };
    let (_, gt_loose) = generate_plant(&base, 128).unwrap();
    let (_, gt_tight) = generate_plant(&tight, 128).unwrap();
    let loose_pairs = leaf_boundary_pairs(&gt_loose);
    let tight_pairs = leaf_boundary_pairs(&gt_tight);
    assert!(
        tight_pairs > loose_pairs,
        "expected more contact at overlap 0.8: {loose_pairs} vs {tight_pairs}"
    );
}

#[test]
fn labels_never_exceed_leaf_count() {
    for seed in 0..5 {
        let spec = PlantSpec {
            seed,
            leaf_count: 9,
            leaf_length: (30.0, 42.0),
            leaf_width: (10.0, 16.0),
            angular_jitter: 0.1,
            overlap: 0.5,
            background_amplitude: 0.2,
        };
        let (_, gt) = generate_plant(&spec, 96).unwrap();
        let labels = gt.leaf_labels();
        assert!(!labels.is_empty());
        assert!(labels.iter().all(|&l| l >= 1 && l <= 9));
    }
}

#[test]
fn dataset_manifest_regenerates_identically() {
    let ranges = DatasetSpec {
        canvas: 96,
        leaf_count: (4, 7),
        leaf_length: (28.0, 40.0),
        leaf_width: (9.0, 14.0),
        ..DatasetSpec::default()
    };
    let (plants, manifest) = generate_dataset(3, &ranges, 77).unwrap();
    assert_eq!(plants.len(), 3);

    let (canvas, specs) = parse_manifest(&manifest).unwrap();
    assert_eq!(canvas, 96);
    assert_eq!(specs.len(), 3);
    for (plant, (name, spec)) in plants.iter().zip(&specs) {
        assert_eq!(&plant.name, name);
        assert_eq!(&plant.spec, spec);
        let (img, gt) = generate_plant(spec, canvas).unwrap();
        assert_eq!(img, plant.image);
        assert_eq!(gt, plant.gt);
    }

    // Same master seed gives an identical manifest.
    let (_, manifest2) = generate_dataset(3, &ranges, 77).unwrap();
    assert_eq!(manifest, manifest2);
}

#[test]
fn single_plant_dataset() {
    let ranges = DatasetSpec {
        canvas: 96,
        leaf_count: (4, 4),
        leaf_length: (28.0, 36.0),
        leaf_width: (9.0, 13.0),
        ..DatasetSpec::default()
    };
    let (plants, manifest) = generate_dataset(1, &ranges, 5).unwrap();
    assert_eq!(plants.len(), 1);
    assert_eq!(parse_manifest(&manifest).unwrap().1.len(), 1);
}

#[test]
fn generated_edges_cover_all_four_classes() {
    // Oracle: run edge labeling over the generated set and check the
    // class histogram.
    let ranges = DatasetSpec {
        canvas: 96,
        leaf_count: (6, 9),
        leaf_length: (26.0, 38.0),
        leaf_width: (9.0, 14.0),
        overlap: 0.5,
        ..DatasetSpec::default()
    };
    let (plants, _) = generate_dataset(20, &ranges, 13).unwrap();
    let pairs: Vec<_> = plants.into_iter().map(|p| (p.image, p.gt)).collect();
    let ds = build_training_set(
        &pairs,
        &crate::edges::CannyParams::default(),
        8,
        2,
        Balance::None,
    )
    .unwrap();
    let hist = ds.histogram();
    for class in EdgeClass::ALL {
        assert!(
            hist[class.index()] > 0,
            "missing class {class:?} in {hist:?}"
        );
    }
}

#[test]
fn jittered_frames_end_with_the_original() {
    let (img, _) = generate_plant(&one_leaf_spec(9), 96).unwrap();
    let frames = brightness_jittered_frames(&img, 6, 0.08, 21);
    assert_eq!(frames.len(), 6);
    assert_eq!(frames.last().unwrap(), &img);
    // Jitter actually changes earlier frames.
    assert_ne!(frames[0], img);
    // Deterministic.
    let again = brightness_jittered_frames(&img, 6, 0.08, 21);
    assert_eq!(frames, again);
}
