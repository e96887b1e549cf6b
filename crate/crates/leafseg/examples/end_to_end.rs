//! End-to-end library walkthrough on synthetic data: generate plants,
//! train tree-mode classifiers on most of them, segment the rest, and
//! print the metrics.
//!
//! Run with `cargo run --release -p leafseg --example end_to_end`.

use std::time::Instant;

use leafseg::cnn::dataset_accuracy;
use leafseg::eval::{aggregate, evaluate_plant};
use leafseg::patchgen::{build_training_set, Balance, EdgeClass};
use leafseg::pipeline::{segment_image, train_model, PipelineConfig};
use leafseg::synth::{generate_dataset, DatasetSpec};

fn main() {
    let t0 = Instant::now();
    let ranges = DatasetSpec {
        overlap: 0.3,
        ..DatasetSpec::default()
    };
    let (plants, _) = generate_dataset(20, &ranges, 4242).unwrap();
    println!("generated 20 plants in {:.1?}", t0.elapsed());

    let mut cfg = PipelineConfig::default();
    cfg.canny = leafseg::edges::CannyParams::new(1.2, 0.02, 0.05).unwrap();
    cfg.train.epochs = 16;
    cfg.max_per_class = Some(2500);
    cfg.train.seed = 7;

    let pairs: Vec<_> = plants[..15]
        .iter()
        .map(|p| (p.image.clone(), p.gt.clone()))
        .collect();

    // Peek at the class balance before training.
    let ds = build_training_set(&pairs, &cfg.canny, cfg.patch_side, cfg.label_radius, Balance::None)
        .unwrap();
    println!(
        "raw training patches: {} {:?} in {:.1?}",
        ds.len(),
        ds.histogram(),
        t0.elapsed()
    );

    let t_train = Instant::now();
    let (model, logs) = train_model(&pairs, &cfg).unwrap();
    println!("trained in {:.1?}", t_train.elapsed());
    for (i, log) in logs.iter().enumerate() {
        println!(
            "net {i}: first loss {:.4}, last loss {:.4}",
            log.epoch_losses.first().unwrap(),
            log.epoch_losses.last().unwrap()
        );
    }
    if let leafseg::cnn::Model::Tree(tree) = &model {
        let caps = Balance::Undersample {
            max_ratio: 4.0,
            cap: Some(2000),
            seed: 7,
        };
        let mut train_ds =
            build_training_set(&pairs, &cfg.canny, cfg.patch_side, cfg.label_radius, caps).unwrap();
        leafseg::patchgen::rebalance(&mut train_ds, Balance::None);
        let split_acc = dataset_accuracy(&tree.split, &train_ds, &|c| {
            Some(match c {
                EdgeClass::Background | EdgeClass::PlantEdge => 0,
                _ => 1,
            })
        })
        .unwrap();
        println!("split train accuracy {split_acc:.3}");
    }

    let t_seg = Instant::now();
    let mut records = Vec::new();
    for plant in &plants[15..] {
        let (_, labels) = segment_image(&plant.image, &model, &cfg).unwrap();
        let record = evaluate_plant(&plant.name, &labels, &plant.gt).unwrap();
        println!(
            "{}: DiC {} |DiC| {} FBD {:.3} SBD {:.3} SMJ {:.3}",
            record.plant_id, record.dic, record.abs_dic, record.fbd, record.sbd, record.smj
        );
        records.push(record);
    }
    println!("segmented 5 plants in {:.1?}", t_seg.elapsed());

    let agg = aggregate(&records).unwrap();
    println!(
        "mean |DiC| {:.2}  mean SBD {:.3}  mean FBD {:.3}  (total {:.1?})",
        agg.mean_abs_dic,
        agg.mean_sbd,
        agg.mean_fbd,
        t0.elapsed()
    );
}
