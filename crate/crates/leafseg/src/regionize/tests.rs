use super::*;
use crate::patchgen::EdgeClass::{Background, InternalNoise, LeafEdge, PlantEdge};
use crate::rng::Stream;

fn random_classmap(w: usize, h: usize, seed: u64) -> ClassMap {
    let mut s = Stream::new(seed);
    let cells = (0..w * h)
        .map(|_| match s.below(10) {
            0 => Some(Background),
            1 => Some(PlantEdge),
            2 => Some(LeafEdge),
            3 => Some(InternalNoise),
            _ => None,
        })
        .collect();
    ClassMap::from_cells(w, h, cells)
}

/// Stamp a circle outline of the given class, brush radius 1.
fn stamp_circle(m: &mut ClassMap, cx: f64, cy: f64, r: f64, class: crate::patchgen::EdgeClass) {
    let steps = (r * 40.0) as usize;
    for i in 0..steps {
        let a = i as f64 / steps as f64 * std::f64::consts::TAU;
        let x = cx + r * a.cos();
        let y = cy + r * a.sin();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let px = (x.round() as i64 + dx) as usize;
                let py = (y.round() as i64 + dy) as usize;
                if px < m.width() && py < m.height() {
                    m.set(px, py, Some(class));
                }
            }
        }
    }
}

#[test]
fn single_leaf_edge_spot_is_removed() {
    let mut m = ClassMap::new(16, 16);
    m.set(8, 8, Some(LeafEdge));
    let out = remove_isolated_spots(&m);
    assert_eq!(out.get(8, 8), None);
    assert_eq!(out.count_class(LeafEdge), 0);
}

#[test]
fn spot_inside_noise_region_takes_the_noise_class() {
    let mut m = ClassMap::new(16, 16);
    for y in 4..13 {
        for x in 4..13 {
            m.set(x, y, Some(InternalNoise));
        }
    }
    // Plus-shaped 5-pixel leaf-edge blob in the middle.
    for (x, y) in [(8, 8), (7, 8), (9, 8), (8, 7), (8, 9)] {
        m.set(x, y, Some(LeafEdge));
    }
    let out = remove_isolated_spots(&m);
    assert_eq!(out.count_class(LeafEdge), 0);
    for (x, y) in [(8, 8), (7, 8), (9, 8), (8, 7), (8, 9)] {
        assert_eq!(out.get(x, y), Some(InternalNoise));
    }
}

#[test]
fn long_contours_are_untouched() {
    // Oracle: any plant/leaf-edge component with a bounding box larger
    // than 5x5 must survive the spot removal unchanged.
    for seed in 0..6 {
        let mut m = ClassMap::new(32, 32);
        stamp_circle(&mut m, 16.0, 16.0, 10.0, PlantEdge);
        // Sprinkle isolated single pixels.
        let mut s = Stream::new(seed);
        for _ in 0..5 {
            let x = s.below(32) as usize;
            let y = s.below(32) as usize;
            if m.get(x, y).is_none() && !near_class(&m, x, y, 3) {
                m.set(x, y, Some(LeafEdge));
            }
        }
        let out = remove_isolated_spots(&m);
        for y in 0..32 {
            for x in 0..32 {
                if m.get(x, y) == Some(PlantEdge) {
                    assert_eq!(out.get(x, y), Some(PlantEdge), "({x},{y})");
                }
            }
        }
        assert_eq!(out.count_class(LeafEdge), 0);
    }
}

fn near_class(m: &ClassMap, x: usize, y: usize, radius: isize) -> bool {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx >= 0
                && ny >= 0
                && nx < m.width() as isize
                && ny < m.height() as isize
                && m.get(nx as usize, ny as usize).is_some()
            {
                return true;
            }
        }
    }
    false
}

#[test]
fn dilate_on_empty_map_is_identity() {
    let m = ClassMap::new(8, 8);
    assert_eq!(dilate_leaf_edges(&m), m);
}

#[test]
fn dilate_single_pixel_makes_5x5_block() {
    let mut m = ClassMap::new(16, 16);
    m.set(8, 8, Some(LeafEdge));
    let out = dilate_leaf_edges(&m);
    assert_eq!(out.count_class(LeafEdge), 25);
    for y in 6..=10 {
        for x in 6..=10 {
            assert_eq!(out.get(x, y), Some(LeafEdge));
        }
    }
}

#[test]
fn dilate_closes_single_pixel_gaps() {
    // Oracle: 8-connectivity of the leaf-edge set after dilation.
    let mut m = ClassMap::new(24, 24);
    for x in 4..20 {
        if x != 11 {
            m.set(x, 12, Some(LeafEdge));
        }
    }
    let out = dilate_leaf_edges(&m);

    // Collect leaf-edge pixels and check they form one 8-connected blob.
    let pixels: Vec<(usize, usize)> = (0..24 * 24)
        .filter(|&i| out.get(i % 24, i / 24) == Some(LeafEdge))
        .map(|i| (i % 24, i / 24))
        .collect();
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![pixels[0]];
    seen.insert(pixels[0]);
    while let Some((x, y)) = stack.pop() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let n = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                if pixels.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
    }
    assert_eq!(seen.len(), pixels.len(), "leaf edge is disconnected");
}

#[test]
fn remove_background_edges_behaviour() {
    let mut m = ClassMap::new(8, 8);
    m.set(1, 1, Some(Background));
    m.set(2, 2, Some(PlantEdge));
    m.set(3, 3, Some(LeafEdge));
    m.set(4, 4, Some(InternalNoise));
    let out = remove_background_edges(&m);
    assert_eq!(out.count_class(Background), 0);
    assert_eq!(out.get(1, 1), None);
    assert_eq!(out.get(2, 2), Some(PlantEdge));
    assert_eq!(out.get(3, 3), Some(LeafEdge));
    assert_eq!(out.get(4, 4), Some(InternalNoise));

    // Identity when no background pixels exist.
    let again = remove_background_edges(&out);
    assert_eq!(again, out);
}

#[test]
fn closed_circle_fills_exactly_one_leaf() {
    let mut m = ClassMap::new(48, 48);
    stamp_circle(&mut m, 24.0, 24.0, 16.0, PlantEdge);
    let state = flood_fill_leaves(&m);
    assert_eq!(state.leaf_labels(), vec![1]);
    // The center is inside the single leaf.
    assert_eq!(state.get(24, 24), RegionCell::Leaf(1));
    // Far corner is background, not a leaf.
    assert_eq!(state.get(1, 1), RegionCell::Background);
}

#[test]
fn empty_map_fills_nothing() {
    let m = ClassMap::new(32, 32);
    let state = flood_fill_leaves(&m);
    assert!(state.leaf_labels().is_empty());
}

#[test]
fn two_lobes_get_two_labels() {
    // A plant contour with a leaf-edge wall through the middle. Oracle:
    // independent connected-component count of interior non-barrier
    // pixels under the same 5x5 barrier rule.
    let mut m = ClassMap::new(64, 64);
    stamp_circle(&mut m, 32.0, 32.0, 24.0, PlantEdge);
    for y in 8..56 {
        m.set(32, y, Some(LeafEdge));
        m.set(33, y, Some(LeafEdge));
    }
    let state = flood_fill_leaves(&m);
    assert_eq!(state.leaf_labels().len(), 2, "expected two lobes");

    // Oracle: recompute expected region count with an independent pass.
    let expected = oracle_interior_regions(&m);
    assert_eq!(state.leaf_labels().len(), expected);
}

/// Independent implementation: count 4-connected components of
/// non-barrier pixels not reachable from the border.
fn oracle_interior_regions(m: &ClassMap) -> usize {
    let (w, h) = (m.width(), m.height());
    let mut barrier = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            'scan: for dy in -2isize..=2 {
                for dx in -2isize..=2 {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        if matches!(
                            m.get(nx as usize, ny as usize),
                            Some(LeafEdge) | Some(PlantEdge)
                        ) {
                            barrier[y * w + x] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    let mut comp = vec![usize::MAX; w * h];
    let mut count = 0;
    let mut border_components = std::collections::HashSet::new();
    for start in 0..w * h {
        if barrier[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = count;
        count += 1;
        let mut stack = vec![start];
        comp[start] = id;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                border_components.insert(id);
            }
            for (nx, ny) in [(x + 1, y), (x.wrapping_sub(1), y), (x, y + 1), (x, y.wrapping_sub(1))]
            {
                if nx < w && ny < h {
                    let n = ny * w + nx;
                    if !barrier[n] && comp[n] == usize::MAX {
                        comp[n] = id;
                        stack.push(n);
                    }
                }
            }
        }
    }
    count - border_components.len()
}

#[test]
fn inflation_absorbs_a_leaf_edge_ring() {
    let mut m = ClassMap::new(32, 32);
    stamp_circle(&mut m, 16.0, 16.0, 10.0, PlantEdge);
    let mut state = flood_fill_leaves(&m);
    // Hand-place a leaf-edge ring right around the filled area.
    let filled_before = state.count(RegionCell::Leaf(1));
    assert!(filled_before > 0);
    for i in 0..state.cells.len() {
        if state.cells[i] == RegionCell::PlantEdgeMark {
            state.cells[i] = RegionCell::LeafEdgeMark;
        }
    }
    let out = inflate_leaves(&state);
    assert_eq!(out.count(RegionCell::LeafEdgeMark), 0);
    assert!(out.count(RegionCell::Leaf(1)) > filled_before);
}

#[test]
fn inflation_splits_band_with_ties_to_lower_label() {
    // Leaf 1 on the left, leaf 2 on the right, a leaf-edge band between.
    // Oracle: multi-source BFS distance; equidistant pixels go to leaf 1.
    let (w, h) = (21usize, 7usize);
    let mut cells = vec![RegionCell::Background; w * h];
    for y in 0..h {
        for x in 0..3 {
            cells[y * w + x] = RegionCell::Leaf(1);
        }
        for x in 18..21 {
            cells[y * w + x] = RegionCell::Leaf(2);
        }
        for x in 3..18 {
            cells[y * w + x] = RegionCell::LeafEdgeMark;
        }
    }
    let state = RegionState {
        width: w,
        height: h,
        cells,
    };
    let out = inflate_leaves(&state);
    assert_eq!(out.count(RegionCell::LeafEdgeMark), 0);

    // Independent multi-source BFS with the tie rule.
    for y in 0..h {
        for x in 3..18 {
            let d1 = x - 2; // distance to leaf 1's right column
            let d2 = 18 - x; // distance to leaf 2's left column
            let expect = if d1 <= d2 { 1 } else { 2 };
            assert_eq!(
                out.get(x, y),
                RegionCell::Leaf(expect),
                "({x},{y}) d1={d1} d2={d2}"
            );
        }
    }
}

#[test]
fn inflation_without_marks_only_runs_phase_two() {
    let (w, h) = (9usize, 9usize);
    let mut cells = vec![RegionCell::Background; w * h];
    cells[4 * w + 4] = RegionCell::Leaf(3);
    let state = RegionState {
        width: w,
        height: h,
        cells,
    };
    let out = inflate_leaves(&state);
    // Phase 2 grows the leaf by exactly one ring.
    assert_eq!(out.count(RegionCell::Leaf(3)), 9);
}

#[test]
fn orphan_leaf_edge_marks_become_background() {
    let (w, h) = (9usize, 9usize);
    let mut cells = vec![RegionCell::Background; w * h];
    cells[2 * w + 2] = RegionCell::LeafEdgeMark;
    cells[6 * w + 6] = RegionCell::LeafEdgeMark;
    let state = RegionState {
        width: w,
        height: h,
        cells,
    };
    let out = inflate_leaves(&state);
    assert_eq!(out.count(RegionCell::LeafEdgeMark), 0);
    assert_eq!(out.get(2, 2), RegionCell::Background);
    assert_eq!(out.get(6, 6), RegionCell::Background);
}

#[test]
fn plant_edge_resolution_rules() {
    let (w, h) = (5usize, 5usize);

    // Three neighbors of leaf 5: adopted.
    let mut cells = vec![RegionCell::Background; w * h];
    cells[2 * w + 2] = RegionCell::PlantEdgeMark;
    cells[w + 1] = RegionCell::Leaf(5);
    cells[w + 2] = RegionCell::Leaf(5);
    cells[w + 3] = RegionCell::Leaf(5);
    let out = resolve_plant_edges(&RegionState {
        width: w,
        height: h,
        cells: cells.clone(),
    });
    assert_eq!(out.get(2, 2), RegionCell::Leaf(5));

    // All-background neighborhood: becomes background.
    let mut cells = vec![RegionCell::Background; w * h];
    cells[2 * w + 2] = RegionCell::PlantEdgeMark;
    let out = resolve_plant_edges(&RegionState {
        width: w,
        height: h,
        cells,
    });
    assert_eq!(out.get(2, 2), RegionCell::Background);

    // Single leaf neighbor is not enough (needs two sharing a color).
    let mut cells = vec![RegionCell::Background; w * h];
    cells[2 * w + 2] = RegionCell::PlantEdgeMark;
    cells[w + 1] = RegionCell::Leaf(4);
    let out = resolve_plant_edges(&RegionState {
        width: w,
        height: h,
        cells,
    });
    assert_eq!(out.get(2, 2), RegionCell::Background);

    // Count ties resolve to the lower label.
    let mut cells = vec![RegionCell::Background; w * h];
    cells[2 * w + 2] = RegionCell::PlantEdgeMark;
    cells[w + 1] = RegionCell::Leaf(9);
    cells[w + 2] = RegionCell::Leaf(9);
    cells[3 * w + 1] = RegionCell::Leaf(2);
    cells[3 * w + 2] = RegionCell::Leaf(2);
    let out = resolve_plant_edges(&RegionState {
        width: w,
        height: h,
        cells,
    });
    assert_eq!(out.get(2, 2), RegionCell::Leaf(2));
}

#[test]
fn no_plant_edge_marks_survive_resolution() {
    for seed in 0..10 {
        let m = random_classmap(24, 24, seed);
        let state = resolve_plant_edges(&inflate_leaves(&flood_fill_leaves(
            &remove_background_edges(&m),
        )));
        assert_eq!(state.count(RegionCell::PlantEdgeMark), 0, "seed {seed}");
        assert_eq!(state.count(RegionCell::LeafEdgeMark), 0, "seed {seed}");
    }
}

#[test]
fn all_none_map_regionizes_to_zeros() {
    let m = ClassMap::new(20, 20);
    let labels = regionize(&m);
    assert!(labels.labels().iter().all(|&l| l == 0));
}

#[test]
fn regionize_never_creates_labels_after_flood_fill() {
    for seed in 100..110 {
        let m = random_classmap(28, 28, seed);
        let despotted = remove_isolated_spots(&m);
        let dilated = dilate_leaf_edges(&despotted);
        let cleaned = remove_background_edges(&dilated);
        let filled = flood_fill_leaves(&cleaned);
        let fill_labels: std::collections::HashSet<u32> =
            filled.leaf_labels().into_iter().collect();

        let final_labels = regionize(&m);
        for &l in final_labels.labels() {
            if l != 0 {
                assert!(fill_labels.contains(&l), "seed {seed}: new label {l}");
            }
        }
    }
}

#[test]
fn leaves_only_grow_during_inflation() {
    for seed in 200..206 {
        let m = random_classmap(24, 24, seed);
        let filled = flood_fill_leaves(&remove_background_edges(&m));
        let inflated = inflate_leaves(&filled);
        for label in filled.leaf_labels() {
            let before = filled.count(RegionCell::Leaf(label));
            let after = inflated.count(RegionCell::Leaf(label));
            assert!(after >= before, "seed {seed} leaf {label}: {before} -> {after}");
        }
    }
}

#[test]
fn regionize_is_deterministic() {
    let m = random_classmap(32, 32, 42);
    assert_eq!(regionize(&m), regionize(&m));
}
