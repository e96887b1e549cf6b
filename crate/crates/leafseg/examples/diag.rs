//! Diagnostic: dump pipeline stages as PNGs for visual inspection.
use leafseg::edges::canny;
use leafseg::imagecore::{save_label_png, save_png, to_grayscale};
use leafseg::pipeline::{classify_image, classmap_to_image, labels_to_image, train_model, PipelineConfig};
use leafseg::regionize::*;
use leafseg::synth::{generate_dataset, DatasetSpec};
use std::path::Path;

fn main() {
    let ranges = DatasetSpec { overlap: 0.3, ..DatasetSpec::default() };
    let (plants, _) = generate_dataset(20, &ranges, 4242).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.canny = leafseg::edges::CannyParams::new(1.2, 0.02, 0.05).unwrap();
    cfg.train.epochs = 16;
    cfg.max_per_class = Some(2500);
    cfg.train.seed = 7;
    let pairs: Vec<_> = plants[..15].iter().map(|p| (p.image.clone(), p.gt.clone())).collect();
    let (model, _) = train_model(&pairs, &cfg).unwrap();

    let out = Path::new("/tmp/diag");
    std::fs::create_dir_all(out).unwrap();
    let plant = &plants[19];
    let edge_map = canny(&to_grayscale(&plant.image), &cfg.canny).unwrap();
    let map = classify_image(&plant.image, &edge_map, &model, &cfg).unwrap();

    save_png(&plant.image, &out.join("image.png")).unwrap();
    save_png(&classmap_to_image(&map), &out.join("classmap.png")).unwrap();

    // Ground-truth-derived ideal classmap for comparison.
    let mut ideal = ClassMap::new(map.width(), map.height());
    for (x, y, _) in edge_map.edge_pixels() {
        let class = leafseg::patchgen::label_edge_pixel(&plant.gt, (x, y), cfg.label_radius).unwrap();
        ideal.set(x, y, Some(class));
    }
    save_png(&classmap_to_image(&ideal), &out.join("classmap_ideal.png")).unwrap();

    let cleaned = remove_background_edges(&dilate_leaf_edges(&remove_isolated_spots(&map)));
    save_png(&classmap_to_image(&cleaned), &out.join("cleaned.png")).unwrap();
    let filled = flood_fill_leaves(&cleaned);
    save_label_png(&filled.to_label_image(), &out.join("filled.png")).unwrap();
    let final_labels = regionize(&map);
    save_png(&labels_to_image(&final_labels), &out.join("final.png")).unwrap();
    save_png(&labels_to_image(&plant.gt), &out.join("gt.png")).unwrap();

    // Also regionize the IDEAL classmap: upper bound of the regionizer.
    let ideal_labels = regionize(&ideal);
    save_png(&labels_to_image(&ideal_labels), &out.join("final_ideal.png")).unwrap();
    let rec = leafseg::eval::evaluate_plant("ideal", &ideal_labels, &plant.gt).unwrap();
    println!("ideal-classmap regionize: DiC {} SBD {:.3} FBD {:.3}", rec.dic, rec.sbd, rec.fbd);
    let rec = leafseg::eval::evaluate_plant("real", &final_labels, &plant.gt).unwrap();
    println!("real pipeline:            DiC {} SBD {:.3} FBD {:.3}", rec.dic, rec.sbd, rec.fbd);
}
