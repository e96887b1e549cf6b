//! Conversion of classified edges into a per-leaf region labeling.
//!
//! Six steps run in sequence: remove isolated spots of plant/leaf edge,
//! dilate the leaf edges to close detection gaps, erase background
//! edges, flood-fill each enclosed region with a fresh leaf label,
//! inflate the filled leaves back over the edge marks, and resolve any
//! plant-edge pixels that remain. The result contains only background
//! and leaf labels.
//!
//! Flood fill treats any pixel within a 5x5 neighborhood of a leaf or
//! plant edge as a barrier, so small holes in the detected contours do
//! not leak fill into the background and narrow petioles stay unfilled.

use crate::imagecore::LabelImage;
use crate::patchgen::EdgeClass;

/// Per-pixel edge classification; `None` marks non-edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    cells: Vec<Option<EdgeClass>>,
}

impl ClassMap {
    pub fn new(width: usize, height: usize) -> ClassMap {
        assert!(width >= 1 && height >= 1);
        ClassMap {
            width,
            height,
            cells: vec![None; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<Option<EdgeClass>>) -> ClassMap {
        assert_eq!(cells.len(), width * height);
        ClassMap {
            width,
            height,
            cells,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<EdgeClass> {
        self.cells[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: Option<EdgeClass>) {
        self.cells[y * self.width + x] = value;
    }

    pub fn cells(&self) -> &[Option<EdgeClass>] {
        &self.cells
    }

    pub fn count_class(&self, class: EdgeClass) -> usize {
        self.cells.iter().filter(|&&c| c == Some(class)).count()
    }
}

/// Intermediate state between flood fill and the final label image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionCell {
    Background,
    PlantEdgeMark,
    LeafEdgeMark,
    Leaf(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionState {
    width: usize,
    height: usize,
    cells: Vec<RegionCell>,
}

impl RegionState {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> RegionCell {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[RegionCell] {
        &self.cells
    }

    /// Distinct leaf labels present, ascending.
    pub fn leaf_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self
            .cells
            .iter()
            .filter_map(|c| match c {
                RegionCell::Leaf(k) => Some(*k),
                _ => None,
            })
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn count(&self, cell: RegionCell) -> usize {
        self.cells.iter().filter(|&&c| c == cell).count()
    }

    pub fn to_label_image(&self) -> LabelImage {
        let labels = self
            .cells
            .iter()
            .map(|c| match c {
                RegionCell::Leaf(k) => *k,
                _ => 0,
            })
            .collect();
        LabelImage::from_raw(self.width, self.height, labels)
    }
}

/// Display color for an edge class in debug renderings: plant edges
/// white, leaf edges green, background edges orange, internal noise red.
pub fn class_color(class: EdgeClass) -> [u8; 3] {
    match class {
        EdgeClass::Background => [255, 165, 0],
        EdgeClass::PlantEdge => [255, 255, 255],
        EdgeClass::LeafEdge => [0, 255, 0],
        EdgeClass::InternalNoise => [255, 0, 0],
    }
}

const SPOT_WINDOW: usize = 5;

/// Remove isolated spots of plant-edge or leaf-edge pixels.
///
/// A connected group (8-connectivity, both kinds together) is isolated
/// when it fits in a 5x5 window whose border carries no plant/leaf edge
/// pixel. Isolated groups take the most frequent other class on that
/// border, or become non-edge when the border is clear.
pub fn remove_isolated_spots(m: &ClassMap) -> ClassMap {
    let (w, h) = (m.width(), m.height());
    let is_fg =
        |c: Option<EdgeClass>| matches!(c, Some(EdgeClass::PlantEdge) | Some(EdgeClass::LeafEdge));
    let mut out = m.clone();
    let mut seen = vec![false; w * h];
    let mut component: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    for start in 0..w * h {
        if seen[start] || !is_fg(m.cells[start]) {
            continue;
        }
        component.clear();
        stack.push(start);
        seen[start] = true;
        let (mut min_x, mut max_x) = (start % w, start % w);
        let (mut min_y, mut max_y) = (start / w, start / w);
        while let Some(i) = stack.pop() {
            component.push(i);
            let (x, y) = (i % w, i / w);
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] && is_fg(m.cells[n]) {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if max_x - min_x + 1 > SPOT_WINDOW || max_y - min_y + 1 > SPOT_WINDOW {
            continue;
        }

        // 5x5 window centered on the component's bounding box.
        let wx0 = (min_x + max_x) as isize / 2 - 2;
        let wy0 = (min_y + max_y) as isize / 2 - 2;
        let mut border_counts = [0usize; EdgeClass::COUNT];
        let mut isolated = true;
        for (bx, by) in window_border(wx0, wy0, SPOT_WINDOW) {
            if bx < 0 || by < 0 || bx >= w as isize || by >= h as isize {
                continue;
            }
            match m.get(bx as usize, by as usize) {
                Some(EdgeClass::PlantEdge) | Some(EdgeClass::LeafEdge) => {
                    isolated = false;
                    break;
                }
                Some(other) => border_counts[other.index()] += 1,
                None => {}
            }
        }
        if !isolated {
            continue;
        }
        let replacement = border_counts
            .iter()
            .enumerate()
            .filter(|(_, &count)| count > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(idx, _)| EdgeClass::from_index(idx).expect("valid index"));
        for &i in &component {
            out.cells[i] = replacement;
        }
    }
    out
}

/// Cells on the perimeter of a `size x size` window, each visited once.
fn window_border(x0: isize, y0: isize, size: usize) -> Vec<(isize, isize)> {
    let s = size as isize;
    let mut cells = Vec::with_capacity(4 * (size - 1));
    for i in 0..s {
        cells.push((x0 + i, y0));
        cells.push((x0 + i, y0 + s - 1));
    }
    for i in 1..s - 1 {
        cells.push((x0, y0 + i));
        cells.push((x0 + s - 1, y0 + i));
    }
    cells
}

/// Dilate leaf edges with a 5x5 structuring element: every pixel within
/// the element of a leaf-edge pixel becomes leaf edge.
pub fn dilate_leaf_edges(m: &ClassMap) -> ClassMap {
    let (w, h) = (m.width(), m.height());
    let mut out = m.clone();
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) != Some(EdgeClass::LeafEdge) {
                continue;
            }
            for dy in -2isize..=2 {
                for dx in -2isize..=2 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        out.set(nx as usize, ny as usize, Some(EdgeClass::LeafEdge));
                    }
                }
            }
        }
    }
    out
}

/// Erase background-class edges.
pub fn remove_background_edges(m: &ClassMap) -> ClassMap {
    let cells = m
        .cells
        .iter()
        .map(|&c| match c {
            Some(EdgeClass::Background) => None,
            other => other,
        })
        .collect();
    ClassMap::from_cells(m.width, m.height, cells)
}

/// Flood-fill each enclosed internal region with a fresh leaf label.
///
/// A pixel is a barrier when any pixel in its 5x5 neighborhood is a leaf
/// or plant edge. Non-barrier regions reachable from the image border
/// are background and stay unlabeled; the rest are filled 4-connected
/// from row-major seeds, so numbering is deterministic.
pub fn flood_fill_leaves(m: &ClassMap) -> RegionState {
    let (w, h) = (m.width(), m.height());
    let barrier = barrier_mask(m);

    // Regions connected to the border are outside the plant.
    let mut exterior = vec![false; w * h];
    let mut queue: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for x in 0..w {
        for y in [0, h - 1] {
            let i = y * w + x;
            if !barrier[i] && !exterior[i] {
                exterior[i] = true;
                queue.push_back(i);
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            let i = y * w + x;
            if !barrier[i] && !exterior[i] {
                exterior[i] = true;
                queue.push_back(i);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for (nx, ny) in four_neighbors(x, y, w, h) {
            let n = ny * w + nx;
            if !barrier[n] && !exterior[n] {
                exterior[n] = true;
                queue.push_back(n);
            }
        }
    }

    let mut leaves = vec![0u32; w * h];
    let mut next_label = 1u32;
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..w * h {
        // Seeds are non-edge pixels strictly inside the plant contour.
        if barrier[start] || exterior[start] || leaves[start] != 0 || m.cells[start].is_some() {
            continue;
        }
        let label = next_label;
        next_label += 1;
        leaves[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in four_neighbors(x, y, w, h) {
                let n = ny * w + nx;
                if !barrier[n] && !exterior[n] && leaves[n] == 0 {
                    leaves[n] = label;
                    stack.push(n);
                }
            }
        }
    }

    let cells = (0..w * h)
        .map(|i| {
            if leaves[i] != 0 {
                RegionCell::Leaf(leaves[i])
            } else {
                match m.cells[i] {
                    Some(EdgeClass::LeafEdge) => RegionCell::LeafEdgeMark,
                    Some(EdgeClass::PlantEdge) => RegionCell::PlantEdgeMark,
                    _ => RegionCell::Background,
                }
            }
        })
        .collect();
    RegionState {
        width: w,
        height: h,
        cells,
    }
}

/// True where some pixel in the 5x5 neighborhood is a leaf or plant edge.
fn barrier_mask(m: &ClassMap) -> Vec<bool> {
    let (w, h) = (m.width(), m.height());
    let mut barrier = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if matches!(
                m.get(x, y),
                Some(EdgeClass::LeafEdge) | Some(EdgeClass::PlantEdge)
            ) {
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                            barrier[ny as usize * w + nx as usize] = true;
                        }
                    }
                }
            }
        }
    }
    barrier
}

fn four_neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)]
        .into_iter()
        .filter_map(move |(dx, dy)| {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                .then(|| (nx as usize, ny as usize))
        })
}

/// Grow the filled leaves back over the edge marks.
///
/// Phase one repeatedly dilates every leaf by one pixel per round, but
/// only onto leaf-edge marks; competing leaves tie toward the lower
/// label. Marks no round can reach become background. Phase two is a
/// single round converting background or plant-edge pixels adjacent to
/// a leaf.
pub fn inflate_leaves(s: &RegionState) -> RegionState {
    let (w, h) = (s.width, s.height);
    let mut state = s.clone();

    // Phase 1: absorb leaf-edge marks, synchronously round by round.
    loop {
        let mut changes: Vec<(usize, u32)> = Vec::new();
        for i in 0..w * h {
            if state.cells[i] != RegionCell::LeafEdgeMark {
                continue;
            }
            if let Some(label) = lowest_adjacent_leaf(&state, i % w, i / w) {
                changes.push((i, label));
            }
        }
        if changes.is_empty() {
            break;
        }
        for (i, label) in changes {
            state.cells[i] = RegionCell::Leaf(label);
        }
    }
    for cell in &mut state.cells {
        if *cell == RegionCell::LeafEdgeMark {
            *cell = RegionCell::Background;
        }
    }

    // Phase 2: one round over background and plant-edge pixels.
    let mut changes: Vec<(usize, u32)> = Vec::new();
    for i in 0..w * h {
        if !matches!(
            state.cells[i],
            RegionCell::Background | RegionCell::PlantEdgeMark
        ) {
            continue;
        }
        if let Some(label) = lowest_adjacent_leaf(&state, i % w, i / w) {
            changes.push((i, label));
        }
    }
    for (i, label) in changes {
        state.cells[i] = RegionCell::Leaf(label);
    }
    state
}

/// Lowest leaf label among the eight neighbors, if any.
fn lowest_adjacent_leaf(state: &RegionState, x: usize, y: usize) -> Option<u32> {
    let (w, h) = (state.width, state.height);
    let mut best: Option<u32> = None;
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            if let RegionCell::Leaf(k) = state.get(nx as usize, ny as usize) {
                best = Some(best.map_or(k, |b| b.min(k)));
            }
        }
    }
    best
}

/// Replace remaining plant-edge pixels with a neighboring leaf shared by
/// at least two of their eight neighbors (most frequent wins, ties to
/// the lower label), or background otherwise.
pub fn resolve_plant_edges(s: &RegionState) -> RegionState {
    let (w, h) = (s.width, s.height);
    let mut out = s.clone();
    for y in 0..h {
        for x in 0..w {
            if s.get(x, y) != RegionCell::PlantEdgeMark {
                continue;
            }
            let mut counts: std::collections::BTreeMap<u32, usize> =
                std::collections::BTreeMap::new();
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if let RegionCell::Leaf(k) = s.get(nx as usize, ny as usize) {
                        *counts.entry(k).or_insert(0) += 1;
                    }
                }
            }
            let winner = counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&k, _)| k);
            out.cells[y * w + x] = match winner {
                Some(k) => RegionCell::Leaf(k),
                None => RegionCell::Background,
            };
        }
    }
    out
}

/// The full edge-classification-to-regions conversion.
///
/// Background edges are erased just before flood fill rather than after:
/// the intermediate region state cannot represent them, and they are
/// neither barriers nor labels, so the resulting regions are identical.
pub fn regionize(m: &ClassMap) -> LabelImage {
    let despotted = remove_isolated_spots(m);
    let dilated = dilate_leaf_edges(&despotted);
    let cleaned = remove_background_edges(&dilated);
    let filled = flood_fill_leaves(&cleaned);
    let inflated = inflate_leaves(&filled);
    let resolved = resolve_plant_edges(&inflated);
    resolved.to_label_image()
}

#[cfg(test)]
mod tests;
