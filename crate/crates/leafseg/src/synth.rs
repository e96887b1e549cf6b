//! Deterministic synthetic rosette generator.
//!
//! Produces (image, ground truth) pairs that look enough like top-down
//! rosette plants to exercise the whole pipeline: elliptical leaves with
//! petiole stems placed at golden-angle increments, drawn oldest first
//! so newer leaves occlude older ones, over textured soil. Midrib veins
//! and small specular highlights add genuine internal-noise edges.
//!
//! Ground truth uses visible-surface semantics: occluded pixels belong
//! to the occluding leaf, as a human annotator drawing over a photo
//! would label them.
//!
//! Everything derives from xoshiro256** streams seeded from the plant
//! seed, and per-leaf trig constants are quantized to 1/4096 so pixel
//! membership decisions do not depend on platform libm rounding.

use crate::imagecore::{LabelImage, RgbImage};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("canvas {canvas} too small: need at least twice the max leaf length {need}")]
    CanvasTooSmall { canvas: usize, need: usize },
}

const GOLDEN_ANGLE: f64 = 2.399963229728653;

/// Parameters of one synthetic plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub seed: u64,
    pub leaf_count: usize,
    /// Leaf length range in pixels, sampled per leaf.
    pub leaf_length: (f64, f64),
    /// Leaf width range in pixels, sampled per leaf.
    pub leaf_width: (f64, f64),
    /// Uniform angular jitter added to each golden-angle position.
    pub angular_jitter: f64,
    /// 0 keeps leaves mostly separate; higher values widen leaves and
    /// pull them inward so they overlap more.
    pub overlap: f64,
    /// Relative amplitude of the soil texture.
    pub background_amplitude: f64,
}

impl PlantSpec {
    /// Manifest rendering, one `prefix.key=value` line per field.
    pub fn to_manifest(&self, prefix: &str) -> String {
        format!(
            "{prefix}.seed={}\n{prefix}.leaf_count={}\n{prefix}.leaf_length_min={}\n\
             {prefix}.leaf_length_max={}\n{prefix}.leaf_width_min={}\n\
             {prefix}.leaf_width_max={}\n{prefix}.angular_jitter={}\n\
             {prefix}.overlap={}\n{prefix}.background_amplitude={}\n",
            self.seed,
            self.leaf_count,
            self.leaf_length.0,
            self.leaf_length.1,
            self.leaf_width.0,
            self.leaf_width.1,
            self.angular_jitter,
            self.overlap,
            self.background_amplitude,
        )
    }

    pub fn from_config(
        cfg: &crate::config::Config,
        prefix: &str,
    ) -> Result<PlantSpec, crate::config::ConfigError> {
        let key = |k: &str| format!("{prefix}.{k}");
        Ok(PlantSpec {
            seed: cfg.require(&key("seed"))?,
            leaf_count: cfg.require(&key("leaf_count"))?,
            leaf_length: (
                cfg.require(&key("leaf_length_min"))?,
                cfg.require(&key("leaf_length_max"))?,
            ),
            leaf_width: (
                cfg.require(&key("leaf_width_min"))?,
                cfg.require(&key("leaf_width_max"))?,
            ),
            angular_jitter: cfg.require(&key("angular_jitter"))?,
            overlap: cfg.require(&key("overlap"))?,
            background_amplitude: cfg.require(&key("background_amplitude"))?,
        })
    }
}

/// Quantize to 1/4096 steps.
fn q(v: f64) -> f64 {
    (v * 4096.0).round() / 4096.0
}

struct LeafGeometry {
    // Unit direction from plant center, quantized.
    dir_x: f64,
    dir_y: f64,
    // Ellipse spans [petiole_end, length] along the direction.
    petiole_end: f64,
    length: f64,
    half_width: f64,
    color: [f64; 3],
}

/// Render one plant. The image and ground truth are generated together;
/// the ground truth records the top-most (newest) leaf at each pixel.
pub fn generate_plant(
    spec: &PlantSpec,
    canvas: usize,
) -> Result<(RgbImage, LabelImage), SynthError> {
    assert!(spec.leaf_count >= 1, "need at least one leaf");
    let need = (2.0 * spec.leaf_length.1).ceil() as usize;
    if canvas < need {
        return Err(SynthError::CanvasTooSmall { canvas, need });
    }

    let (w, h) = (canvas, canvas);
    let cx = canvas as f64 / 2.0;
    let cy = canvas as f64 / 2.0;

    // Soil: warm brown with fine grain plus coarse clumps. The clumps
    // matter: per-pixel grain blurs away before edge detection, while
    // clump outlines survive and produce genuine background edges.
    let mut noise = Stream::derive(spec.seed, 0x736f_696c); // "soil"
    let amp = spec.background_amplitude;
    let mut pixels = vec![0u8; w * h * 3];
    for i in 0..w * h {
        let shade = 1.0 + amp * (noise.unit_f64() - 0.5) * 2.0;
        for (c, base) in [70.0f64, 50.0, 32.0].iter().enumerate() {
            let grain = 1.0 + 0.3 * amp * (noise.unit_f64() - 0.5);
            let v = base * shade * grain;
            pixels[i * 3 + c] = v.clamp(0.0, 255.0) as u8;
        }
    }
    let mut img = RgbImage::from_raw(w, h, pixels);
    let clumps = w * h / 250;
    for _ in 0..clumps {
        let cx = noise.below(w as u64) as isize;
        let cy = noise.below(h as u64) as isize;
        let radius = noise.range_f64(1.2, 3.2);
        // Half light gravel, half dark pores; both contrast strongly
        // enough with the soil to register as edges after blurring.
        let target: [f64; 3] = if noise.below(2) == 0 {
            [128.0, 115.0, 92.0]
        } else {
            [24.0, 17.0, 12.0]
        };
        let strength = noise.range_f64(0.7, 0.95);
        let r = radius.ceil() as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 > radius * radius {
                    continue;
                }
                let (px, py) = (cx + dx, cy + dy);
                if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                    continue;
                }
                let p = img.get(px as usize, py as usize);
                let mut rgb = [0u8; 3];
                for c in 0..3 {
                    let v = p[c] as f64 * (1.0 - strength) + target[c] * strength;
                    rgb[c] = v.clamp(0.0, 255.0) as u8;
                }
                img.set(px as usize, py as usize, rgb);
            }
        }
    }
    let mut gt = LabelImage::zeros(w, h);

    // Leaf geometry and colors, all from one stream in a fixed order.
    let mut plant = Stream::derive(spec.seed, 0x706c_616e_74); // "plant"
    let f = spec.overlap.clamp(0.0, 1.0);
    let mut leaves = Vec::with_capacity(spec.leaf_count);
    for i in 0..spec.leaf_count {
        let angle = i as f64 * GOLDEN_ANGLE
            + spec.angular_jitter * (plant.unit_f64() * 2.0 - 1.0)
            + 0.25 * f * (plant.unit_f64() * 2.0 - 1.0);
        let length = plant.range_f64(spec.leaf_length.0, spec.leaf_length.1) * (1.0 - 0.15 * f);
        let width = plant.range_f64(spec.leaf_width.0, spec.leaf_width.1) * (1.0 + 1.2 * f);

        let green = plant.range_f64(140.0, 225.0);
        let shade = plant.range_f64(0.85, 1.15);
        let color = [
            green * plant.range_f64(0.25, 0.5) * shade,
            green * shade,
            green * plant.range_f64(0.15, 0.35) * shade,
        ];
        leaves.push(LeafGeometry {
            dir_x: q(angle.cos()),
            dir_y: q(angle.sin()),
            petiole_end: q(length * 0.16),
            length: q(length),
            half_width: q(width / 2.0),
            color,
        });
    }

    // Draw oldest first; newer leaves overwrite.
    for (idx, leaf) in leaves.iter().enumerate() {
        let label = idx as u32 + 1;
        draw_leaf(&mut img, &mut gt, cx, cy, leaf, label);
    }

    // Midrib veins and specular highlights, image only. These reuse the
    // plant stream after all geometry so adding decoration never moves
    // the leaves.
    for (idx, leaf) in leaves.iter().enumerate() {
        let label = idx as u32 + 1;
        draw_vein(&mut img, &gt, cx, cy, leaf, label);
        let highlights = 1 + plant.below(3);
        for _ in 0..highlights {
            let t = plant.range_f64(0.4, 0.9);
            let off = plant.range_f64(-0.45, 0.45);
            let r = plant.range_f64(1.4, 3.2);
            draw_highlight(&mut img, &gt, cx, cy, leaf, label, t, off, r);
        }
    }

    Ok((img, gt))
}

fn draw_leaf(
    img: &mut RgbImage,
    gt: &mut LabelImage,
    cx: f64,
    cy: f64,
    leaf: &LeafGeometry,
    label: u32,
) {
    let (w, h) = (img.width(), img.height());
    let a = (leaf.length - leaf.petiole_end) / 2.0;
    let center_t = leaf.petiole_end + a;
    let b = leaf.half_width;
    let petiole_half = 2.2f64;
    // Rim band roughly 2.5 px thick along the minor axis.
    let rim_threshold = {
        let inner = 1.0 - 2.5 / b;
        (inner * inner).max(0.0)
    };

    // Conservative bounding box around petiole plus ellipse.
    let reach = leaf.length + b + 2.0;
    let x0 = ((cx - reach).floor().max(0.0)) as usize;
    let y0 = ((cy - reach).floor().max(0.0)) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(w - 1);
    let y1 = ((cy + reach).ceil() as usize).min(h - 1);

    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // Leaf frame: t along the direction, s across it.
            let t = dx * leaf.dir_x + dy * leaf.dir_y;
            let s = -dx * leaf.dir_y + dy * leaf.dir_x;

            let metric = {
                let u = (t - center_t) / a;
                let v = s / b;
                u * u + v * v
            };
            let in_ellipse = metric <= 1.0;
            let in_petiole = t >= 0.0 && t <= leaf.petiole_end + 1.0 && s.abs() <= petiole_half;
            if !(in_ellipse || in_petiole) {
                continue;
            }

            // Gentle tip-to-base shading so leaves are not flat color.
            let mut shade = 0.88 + 0.18 * (t / leaf.length).clamp(0.0, 1.0);

            // Contact shadow: where this leaf's rim covers another leaf,
            // darken a narrow seam, the visual cue that an occlusion
            // boundary is present.
            let covered = gt.get(x, y);
            if covered != 0 && covered != label && in_ellipse && metric >= rim_threshold {
                shade *= 0.5;
            }
            let rgb = [
                (leaf.color[0] * shade).clamp(0.0, 255.0) as u8,
                (leaf.color[1] * shade).clamp(0.0, 255.0) as u8,
                (leaf.color[2] * shade).clamp(0.0, 255.0) as u8,
            ];
            img.set(x, y, rgb);
            gt.set(x, y, label);
        }
    }
}

/// Darker midrib along the major axis, drawn only where the leaf is
/// still visible (it must not repaint occluding leaves above it).
fn draw_vein(
    img: &mut RgbImage,
    gt: &LabelImage,
    cx: f64,
    cy: f64,
    leaf: &LeafGeometry,
    label: u32,
) {
    let steps = (leaf.length * 2.0) as usize;
    for i in 0..steps {
        let t = leaf.petiole_end + (leaf.length - leaf.petiole_end - 2.0) * i as f64 / steps as f64;
        let x = (cx + t * leaf.dir_x).round();
        let y = (cy + t * leaf.dir_y).round();
        if x < 0.0 || y < 0.0 || x as usize >= img.width() || y as usize >= img.height() {
            continue;
        }
        let (px, py) = (x as usize, y as usize);
        if gt.get(px, py) != label {
            continue;
        }
        let p = img.get(px, py);
        img.set(
            px,
            py,
            [
                (p[0] as f64 * 0.78) as u8,
                (p[1] as f64 * 0.78) as u8,
                (p[2] as f64 * 0.78) as u8,
            ],
        );
    }
}

/// Small bright spot at relative position (t, off) in the leaf frame.
fn draw_highlight(
    img: &mut RgbImage,
    gt: &LabelImage,
    cx: f64,
    cy: f64,
    leaf: &LeafGeometry,
    label: u32,
    t_frac: f64,
    off_frac: f64,
    radius: f64,
) {
    let t = leaf.petiole_end + (leaf.length - leaf.petiole_end) * t_frac;
    let s = leaf.half_width * off_frac;
    let hx = cx + t * leaf.dir_x - s * leaf.dir_y;
    let hy = cy + t * leaf.dir_y + s * leaf.dir_x;
    let r = radius.ceil() as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 > radius * radius {
                continue;
            }
            let x = hx.round() as isize + dx;
            let y = hy.round() as isize + dy;
            if x < 0 || y < 0 || x as usize >= img.width() || y as usize >= img.height() {
                continue;
            }
            let (px, py) = (x as usize, y as usize);
            if gt.get(px, py) != label {
                continue;
            }
            let p = img.get(px, py);
            img.set(
                px,
                py,
                [
                    (p[0] as f64 * 1.45).clamp(0.0, 255.0) as u8,
                    (p[1] as f64 * 1.45).clamp(0.0, 255.0) as u8,
                    (p[2] as f64 * 1.45).clamp(0.0, 255.0) as u8,
                ],
            );
        }
    }
}

/// Sampling ranges for a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub canvas: usize,
    pub leaf_count: (usize, usize),
    pub leaf_length: (f64, f64),
    pub leaf_width: (f64, f64),
    pub angular_jitter: f64,
    pub overlap: f64,
    pub background_amplitude: f64,
}

impl Default for DatasetSpec {
    fn default() -> DatasetSpec {
        DatasetSpec {
            canvas: 320,
            leaf_count: (8, 12),
            leaf_length: (85.0, 130.0),
            leaf_width: (26.0, 40.0),
            angular_jitter: 0.06,
            overlap: 0.3,
            background_amplitude: 0.18,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedPlant {
    pub name: String,
    pub spec: PlantSpec,
    pub image: RgbImage,
    pub gt: LabelImage,
}

/// Generate `n` plants from seeded spec sampling. The manifest records
/// the canvas and every plant's spec, so each item regenerates
/// identically from it.
pub fn generate_dataset(
    n: usize,
    ranges: &DatasetSpec,
    master_seed: u64,
) -> Result<(Vec<GeneratedPlant>, String), SynthError> {
    assert!(n >= 1, "need at least one plant");
    let mut master = Stream::derive(master_seed, 0x6d61_6e69_6665_7374); // "manifest"
    let mut manifest = format!("canvas={}\ncount={n}\n", ranges.canvas);
    let mut plants = Vec::with_capacity(n);
    for k in 0..n {
        let spec = PlantSpec {
            seed: master.next_u64(),
            leaf_count: master.range_u64(ranges.leaf_count.0 as u64, ranges.leaf_count.1 as u64)
                as usize,
            leaf_length: ranges.leaf_length,
            leaf_width: ranges.leaf_width,
            angular_jitter: ranges.angular_jitter,
            overlap: ranges.overlap,
            background_amplitude: ranges.background_amplitude,
        };
        let name = format!("plant_{k}");
        manifest.push_str(&spec.to_manifest(&name));
        let (image, gt) = generate_plant(&spec, ranges.canvas)?;
        plants.push(GeneratedPlant {
            name,
            spec,
            image,
            gt,
        });
    }
    Ok((plants, manifest))
}

/// Parse a manifest back into `(name, spec)` pairs plus the canvas size.
pub fn parse_manifest(
    text: &str,
) -> Result<(usize, Vec<(String, PlantSpec)>), crate::config::ConfigError> {
    let cfg = crate::config::Config::parse(text)?;
    let canvas: usize = cfg.require("canvas")?;
    let count: usize = cfg.require("count")?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let name = format!("plant_{k}");
        out.push((name.clone(), PlantSpec::from_config(&cfg, &name)?));
    }
    Ok((canvas, out))
}

/// Frames for temporal-patch runs: copies of one image with per-frame
/// brightness jitter, ordered oldest to newest; the final frame is the
/// original.
pub fn brightness_jittered_frames(
    img: &RgbImage,
    frames: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<RgbImage> {
    assert!(frames >= 2, "temporal sequences need at least two frames");
    let mut rng = Stream::derive(seed, 0x6672_616d_6573); // "frames"
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames - 1 {
        let scale = 1.0 + amplitude * (rng.unit_f64() * 2.0 - 1.0);
        let pixels = img
            .pixels()
            .iter()
            .map(|&v| (v as f64 * scale).clamp(0.0, 255.0) as u8)
            .collect();
        out.push(RgbImage::from_raw(img.width(), img.height(), pixels));
    }
    out.push(img.clone());
    out
}

/// Adjacent pixel pairs (4-connectivity) whose labels are distinct
/// nonzero values: a proxy for the amount of leaf-on-leaf boundary.
pub fn leaf_boundary_pairs(gt: &LabelImage) -> usize {
    let (w, h) = (gt.width(), gt.height());
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            let here = gt.get(x, y);
            if here == 0 {
                continue;
            }
            if x + 1 < w {
                let right = gt.get(x + 1, y);
                if right != 0 && right != here {
                    count += 1;
                }
            }
            if y + 1 < h {
                let below = gt.get(x, y + 1);
                if below != 0 && below != here {
                    count += 1;
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests;
