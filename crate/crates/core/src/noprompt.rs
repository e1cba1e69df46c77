//! Change detection without prompts.
//!
//! For each map instance, the segmenter masks that intersect it are merged one
//! at a time, nearest centroid first. After every merge the overlap rate
//! (IoU between merged mask and instance) is measured. The instance is
//! unchanged as soon as the overlap rate reaches the threshold; it is changed
//! if the candidates run out, or merging stalls for `patience` steps, first.

use rayon::prelude::*;

use crate::ccl::Instance;
use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::{BinaryMask, ChangeMap, MaskSet};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationParams {
    /// Overlap threshold θ in (0, 1].
    pub overlap_threshold: f64,
    /// Masks sharing fewer pixels with the instance are not candidates.
    pub min_intersection: u64,
    /// Stop after this many consecutive merges without a new best overlap.
    pub patience: u32,
    pub use_shape_check: bool,
    /// Allowed open interval for `area(merged) / area(instance)`.
    pub area_ratio_band: (f64, f64),
    /// Allowed open interval for `aspect(merged) / aspect(instance)`.
    pub aspect_ratio_band: (f64, f64),
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.5,
            min_intersection: 8,
            patience: 3,
            use_shape_check: false,
            area_ratio_band: (0.5, 2.0),
            aspect_ratio_band: (0.5, 2.0),
        }
    }
}

impl AggregationParams {
    pub fn validate(&self) -> Result<()> {
        let t = self.overlap_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "overlap threshold {t} not in (0, 1]"
            )));
        }
        if self.min_intersection < 1 {
            return Err(Error::InvalidParam(
                "min_intersection must be at least 1".into(),
            ));
        }
        if self.patience < 1 {
            return Err(Error::InvalidParam("patience must be at least 1".into()));
        }
        for (name, (lo, hi)) in [
            ("area ratio band", self.area_ratio_band),
            ("aspect ratio band", self.aspect_ratio_band),
        ] {
            if !(lo < 1.0 && 1.0 < hi) {
                return Err(Error::InvalidParam(format!(
                    "{name} ({lo}, {hi}) must satisfy lo < 1 < hi"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of aggregating masks for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceVerdict {
    pub instance_id: u32,
    pub changed: bool,
    /// Highest overlap rate reached along the merge sequence.
    pub best_overlap: f64,
    /// Merged mask at the point `best_overlap` was reached.
    pub merged_mask: BinaryMask,
    /// Mask ids merged to produce `merged_mask`, in merge order.
    pub masks_used: Vec<u32>,
}

/// Ids of masks overlapping the instance by at least `min_intersection`
/// pixels, nearest mask centroid first (ties by ascending id).
pub fn intersecting_masks(
    instance: &Instance,
    masks: &MaskSet,
    min_intersection: u64,
) -> Result<Vec<u32>> {
    ensure_same_dims(instance.mask.dims(), masks.dims())?;
    let (cx, cy) = instance.centroid;
    let mut hits = Vec::new();
    for m in masks.masks() {
        if instance.mask.intersection_count(m)? >= min_intersection.max(1) {
            let (mx, my) = m.centroid()?;
            let d2 = (mx - cx).powi(2) + (my - cy).powi(2);
            hits.push((d2, m.id()));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(hits.into_iter().map(|(_, id)| id).collect())
}

fn in_band(ratio: f64, (lo, hi): (f64, f64)) -> bool {
    ratio > lo && ratio < hi
}

/// Shape attributes of the merged mask stay within the bands around the
/// instance's attributes.
fn shape_agrees(
    instance: &Instance,
    merged: &BinaryMask,
    params: &AggregationParams,
) -> Result<bool> {
    let area_ratio = merged.area() as f64 / instance.area as f64;
    let aspect_ratio = merged.aspect_ratio()? / instance.aspect_ratio();
    Ok(in_band(area_ratio, params.area_ratio_band)
        && in_band(aspect_ratio, params.aspect_ratio_band))
}

/// Merges candidate masks outward from the instance center and decides
/// whether the instance changed.
pub fn hierarchical_aggregate(
    instance: &Instance,
    masks: &MaskSet,
    params: &AggregationParams,
) -> Result<InstanceVerdict> {
    if instance.mask.is_empty() {
        return Err(Error::EmptyInstance(instance.id));
    }
    let order = intersecting_masks(instance, masks, params.min_intersection)?;
    let theta = params.overlap_threshold;
    let (w, h) = masks.dims();

    let mut merged = BinaryMask::empty(w, h);
    let mut best = 0.0f64;
    let mut best_mask = merged.clone();
    let mut best_len = 0usize;
    let mut stale = 0u32;

    for (step, id) in order.iter().enumerate() {
        let m = masks
            .get(*id)
            .expect("candidate ids come from the mask set");
        merged = merged.union(m)?;
        let overlap = merged.iou(&instance.mask)?;
        if overlap > best {
            best = overlap;
            best_mask = merged.clone();
            best_len = step + 1;
            stale = 0;
        } else {
            stale += 1;
        }
        if best >= theta || stale >= params.patience {
            break;
        }
    }

    let mut changed = best < theta;
    if !changed && params.use_shape_check && !shape_agrees(instance, &best_mask, params)? {
        changed = true;
    }
    Ok(InstanceVerdict {
        instance_id: instance.id,
        changed,
        best_overlap: best,
        merged_mask: best_mask,
        masks_used: order[..best_len].to_vec(),
    })
}

/// Runs [`hierarchical_aggregate`] for every instance and paints the pixels
/// of changed instances. Verdicts come back sorted by instance id.
///
/// Instances are processed on the current rayon pool; the result does not
/// depend on the number of workers.
pub fn detect_changes_noprompt(
    instances: &[Instance],
    masks: &MaskSet,
    params: &AggregationParams,
) -> Result<(ChangeMap, Vec<InstanceVerdict>)> {
    params.validate()?;
    for inst in instances {
        ensure_same_dims(masks.dims(), inst.mask.dims())?;
    }
    let mut verdicts = instances
        .par_iter()
        .map(|inst| hierarchical_aggregate(inst, masks, params))
        .collect::<Result<Vec<_>>>()?;
    verdicts.sort_by_key(|v| v.instance_id);

    let mut map = ChangeMap::new(masks.width(), masks.height());
    for (v, inst) in verdicts.iter().zip(sorted_by_id(instances)) {
        if v.changed {
            map.paint(&inst.mask)?;
        }
    }
    Ok((map, verdicts))
}

fn sorted_by_id(instances: &[Instance]) -> Vec<&Instance> {
    let mut v: Vec<&Instance> = instances.iter().collect();
    v.sort_by_key(|i| i.id);
    v
}

/// `instance_id,changed,best_overlap,n_masks_used` with a header row.
pub fn verdicts_to_csv(verdicts: &[InstanceVerdict]) -> String {
    let mut s = String::from("instance_id,changed,best_overlap,n_masks_used\n");
    for v in verdicts {
        s.push_str(&format!(
            "{},{},{:.6},{}\n",
            v.instance_id,
            v.changed as u8,
            v.best_overlap,
            v.masks_used.len()
        ));
    }
    s
}
