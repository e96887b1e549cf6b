//! Segmentation and counting metrics.
//!
//! The reported set matches standard leaf-segmentation practice:
//! Difference in Count (DiC) and its absolute value, Foreground/
//! Background Dice (FBD), Symmetric Best Dice (SBD), and a subset-matched
//! Jaccard index (SMJ) under greedy one-to-one leaf matching. Per-plant
//! records aggregate to mean and population standard deviation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::imagecore::LabelImage;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot aggregate an empty report")]
    EmptyReport,
}

/// Metrics for one plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantRecord {
    pub plant_id: String,
    pub dic: i64,
    pub abs_dic: u64,
    pub fbd: f64,
    pub sbd: f64,
    pub smj: f64,
}

/// Mean and population standard deviation of each metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean_dic: f64,
    pub std_dic: f64,
    pub mean_abs_dic: f64,
    pub std_abs_dic: f64,
    pub mean_fbd: f64,
    pub std_fbd: f64,
    pub mean_sbd: f64,
    pub std_sbd: f64,
    pub mean_smj: f64,
    pub std_smj: f64,
}

/// Per-plant records plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub records: Vec<PlantRecord>,
    pub aggregate: Aggregate,
}

fn check_dims(a: &LabelImage, b: &LabelImage) -> Result<(), EvalError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(EvalError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Dice coefficient of two pixel sets given their sizes and overlap.
/// Both empty counts as perfect agreement.
fn dice_from_counts(a: usize, b: usize, overlap: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * overlap as f64 / (a + b) as f64
    }
}

/// Dice coefficient of two explicit pixel sets (flat indices).
pub fn dice(a: &std::collections::HashSet<usize>, b: &std::collections::HashSet<usize>) -> f64 {
    dice_from_counts(a.len(), b.len(), a.intersection(b).count())
}

/// Per-label pixel counts and pairwise overlaps between two labelings,
/// computed in one pass. Label 0 is excluded on both sides.
struct Overlaps {
    src_sizes: BTreeMap<u32, usize>,
    ref_sizes: BTreeMap<u32, usize>,
    pair: BTreeMap<(u32, u32), usize>,
}

impl Overlaps {
    fn compute(src: &LabelImage, reference: &LabelImage) -> Overlaps {
        let mut src_sizes = BTreeMap::new();
        let mut ref_sizes = BTreeMap::new();
        let mut pair = BTreeMap::new();
        for (&s, &r) in src.labels().iter().zip(reference.labels()) {
            if s != 0 {
                *src_sizes.entry(s).or_insert(0) += 1;
            }
            if r != 0 {
                *ref_sizes.entry(r).or_insert(0) += 1;
            }
            if s != 0 && r != 0 {
                *pair.entry((s, r)).or_insert(0) += 1;
            }
        }
        Overlaps {
            src_sizes,
            ref_sizes,
            pair,
        }
    }
}

/// Mean over `src` leaves of the best Dice match among `ref` leaves.
///
/// With no leaves on either side the score is 1; with leaves only on one
/// side it is 0.
pub fn best_dice(src: &LabelImage, reference: &LabelImage) -> Result<f64, EvalError> {
    check_dims(src, reference)?;
    let ov = Overlaps::compute(src, reference);
    if ov.src_sizes.is_empty() {
        return Ok(if ov.ref_sizes.is_empty() { 1.0 } else { 0.0 });
    }
    let mut total = 0.0;
    for (&s, &s_size) in &ov.src_sizes {
        let mut best = 0.0f64;
        for (&r, &r_size) in &ov.ref_sizes {
            let overlap = ov.pair.get(&(s, r)).copied().unwrap_or(0);
            best = best.max(dice_from_counts(s_size, r_size, overlap));
        }
        total += best;
    }
    Ok(total / ov.src_sizes.len() as f64)
}

/// Symmetric Best Dice: the minimum of Best Dice taken in both
/// directions.
pub fn symmetric_best_dice(pred: &LabelImage, gt: &LabelImage) -> Result<f64, EvalError> {
    Ok(best_dice(pred, gt)?.min(best_dice(gt, pred)?))
}

/// Foreground/Background Dice: Dice of the nonzero masks, ignoring leaf
/// identity.
pub fn fbd(pred: &LabelImage, gt: &LabelImage) -> Result<f64, EvalError> {
    check_dims(pred, gt)?;
    let mut pred_fg = 0usize;
    let mut gt_fg = 0usize;
    let mut overlap = 0usize;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if p != 0 {
            pred_fg += 1;
        }
        if g != 0 {
            gt_fg += 1;
        }
        if p != 0 && g != 0 {
            overlap += 1;
        }
    }
    Ok(dice_from_counts(pred_fg, gt_fg, overlap))
}

/// Difference in count: predicted minus true leaf count, plus its
/// absolute value.
pub fn dic(pred: &LabelImage, gt: &LabelImage) -> (i64, u64) {
    let d = pred.leaf_labels().len() as i64 - gt.leaf_labels().len() as i64;
    (d, d.unsigned_abs())
}

/// Subset-matched Jaccard: greedily match (pred, gt) leaf pairs by
/// descending Jaccard index (ties toward lower gt label, then lower pred
/// label), one-to-one; the score is the mean Jaccard over gt leaves,
/// counting unmatched gt leaves as 0.
pub fn subset_matched_jaccard(pred: &LabelImage, gt: &LabelImage) -> Result<f64, EvalError> {
    check_dims(pred, gt)?;
    let ov = Overlaps::compute(pred, gt);
    let gt_count = ov.ref_sizes.len();
    if gt_count == 0 {
        // Nothing to match; perfect only if the prediction is empty too.
        return Ok(if ov.src_sizes.is_empty() { 1.0 } else { 0.0 });
    }

    // Candidate pairs with nonzero overlap.
    let mut candidates: Vec<(u32, u32, f64)> = ov
        .pair
        .iter()
        .map(|(&(p, g), &overlap)| {
            let union = ov.src_sizes[&p] + ov.ref_sizes[&g] - overlap;
            (p, g, overlap as f64 / union as f64)
        })
        .collect();
    // Descending score; ties by lower gt label, then lower pred label.
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite scores")
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });

    let mut used_pred = std::collections::HashSet::new();
    let mut used_gt = std::collections::HashSet::new();
    let mut total = 0.0;
    for (p, g, score) in candidates {
        if used_pred.contains(&p) || used_gt.contains(&g) {
            continue;
        }
        used_pred.insert(p);
        used_gt.insert(g);
        total += score;
    }
    Ok(total / gt_count as f64)
}

/// Compute one plant's record.
pub fn evaluate_plant(
    plant_id: &str,
    pred: &LabelImage,
    gt: &LabelImage,
) -> Result<PlantRecord, EvalError> {
    let (dic_value, abs_dic) = dic(pred, gt);
    Ok(PlantRecord {
        plant_id: plant_id.to_string(),
        dic: dic_value,
        abs_dic,
        fbd: fbd(pred, gt)?,
        sbd: symmetric_best_dice(pred, gt)?,
        smj: subset_matched_jaccard(pred, gt)?,
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation over plants, each plant
/// weighted equally.
pub fn aggregate(records: &[PlantRecord]) -> Result<Aggregate, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let (mean_dic, std_dic) = mean_std(records.iter().map(|r| r.dic as f64));
    let (mean_abs_dic, std_abs_dic) = mean_std(records.iter().map(|r| r.abs_dic as f64));
    let (mean_fbd, std_fbd) = mean_std(records.iter().map(|r| r.fbd));
    let (mean_sbd, std_sbd) = mean_std(records.iter().map(|r| r.sbd));
    let (mean_smj, std_smj) = mean_std(records.iter().map(|r| r.smj));
    Ok(Aggregate {
        mean_dic,
        std_dic,
        mean_abs_dic,
        std_abs_dic,
        mean_fbd,
        std_fbd,
        mean_sbd,
        std_sbd,
        mean_smj,
        std_smj,
    })
}

pub fn report(records: Vec<PlantRecord>) -> Result<MetricReport, EvalError> {
    let aggregate = aggregate(&records)?;
    Ok(MetricReport {
        records,
        aggregate,
    })
}

impl MetricReport {
    /// CSV rendering: one row per plant, then `#mean` and `#std` rows.
    /// Reals carry six decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("plant_id,dic,abs_dic,fbd,sbd,smj\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.plant_id, r.dic, r.abs_dic, r.fbd, r.sbd, r.smj
            )
            .expect("string write");
        }
        let a = &self.aggregate;
        writeln!(
            out,
            "#mean,{:.6},{:.6},{:.6},{:.6},{:.6}",
            a.mean_dic, a.mean_abs_dic, a.mean_fbd, a.mean_sbd, a.mean_smj
        )
        .expect("string write");
        writeln!(
            out,
            "#std,{:.6},{:.6},{:.6},{:.6},{:.6}",
            a.std_dic, a.std_abs_dic, a.std_fbd, a.std_sbd, a.std_smj
        )
        .expect("string write");
        out
    }
}
