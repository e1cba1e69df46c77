//! Change detection with instance-map prompts.
//!
//! Background instances of the map are handed to the segmenter as box and
//! mask prompts. The segmenter tends to reproduce the background and leave
//! objects that appeared inside it unsegmented, so those unrecognized pixels
//! (`instance ∖ segmented`, minus small blobs) are the changes.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccl::{label_grid, Connectivity, Instance};
use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::{BBox, BinaryMask, ChangeMap, ClassCode, Legend};

/// Default minimum blob size kept by [`anomaly_extract`].
pub const DEFAULT_MIN_BLOB_AREA: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub instance_id: u32,
    pub class_code: ClassCode,
    pub prompt_box: BBox,
    pub prompt_mask: BinaryMask,
}

/// Segmenter output for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptedResult {
    pub instance_id: u32,
    pub segmented: BinaryMask,
}

/// All prompted results for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptedResults {
    pub width: u32,
    pub height: u32,
    pub results: Vec<PromptedResult>,
}

/// One prompt per background instance, ordered by instance id.
pub fn export_prompts(instances: &[Instance], legend: &Legend) -> Result<Vec<PromptSpec>> {
    let mut out = Vec::new();
    for inst in instances {
        let bg = legend.is_background(inst.class_code).ok_or_else(|| {
            Error::Legend(format!(
                "instance {} has class {} which is not in the legend",
                inst.id, inst.class_code
            ))
        })?;
        if bg {
            out.push(PromptSpec {
                instance_id: inst.id,
                class_code: inst.class_code,
                prompt_box: inst.bbox,
                prompt_mask: inst.mask.clone(),
            });
        }
    }
    out.sort_by_key(|p| p.instance_id);
    Ok(out)
}

/// Keeps only 4-connected blobs with at least `min_blob_area` pixels.
fn drop_small_blobs(mask: &BinaryMask, min_blob_area: u64) -> Result<BinaryMask> {
    if min_blob_area <= 1 || mask.is_empty() {
        return Ok(mask.clone());
    }
    let bits = mask.decode();
    let (labels, _) = label_grid(
        &bits,
        mask.width(),
        mask.height(),
        Connectivity::Four,
        min_blob_area,
        |b| b,
    );
    BinaryMask::from_sorted_indices(
        mask.width(),
        mask.height(),
        labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| i),
    )
}

/// Pixels of the instance the prompted segmentation did not recognize,
/// with blobs smaller than `min_blob_area` removed.
pub fn anomaly_extract(
    instance: &Instance,
    result: &PromptedResult,
    min_blob_area: u64,
) -> Result<BinaryMask> {
    if result.instance_id != instance.id {
        return Err(Error::Pairing(format!(
            "result for instance {} paired with instance {}",
            result.instance_id, instance.id
        )));
    }
    ensure_same_dims(instance.mask.dims(), result.segmented.dims())?;
    let unrecognized = instance.mask.difference(&result.segmented)?;
    drop_small_blobs(&unrecognized, min_blob_area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDetection {
    pub change_map: ChangeMap,
    /// Background instances with no prompted result.
    pub warnings: Vec<String>,
}

/// Union of [`anomaly_extract`] over all background instances.
pub fn detect_changes_prompt(
    instances: &[Instance],
    results: &PromptedResults,
    legend: &Legend,
    min_blob_area: u64,
) -> Result<PromptDetection> {
    let dims = (results.width, results.height);
    let by_id: BTreeMap<u32, &Instance> = instances.iter().map(|i| (i.id, i)).collect();
    let mut paired: BTreeMap<u32, &PromptedResult> = BTreeMap::new();
    for r in &results.results {
        ensure_same_dims(dims, r.segmented.dims())?;
        let inst = by_id.get(&r.instance_id).ok_or_else(|| {
            Error::Pairing(format!(
                "result references unknown instance {}",
                r.instance_id
            ))
        })?;
        if legend.is_background(inst.class_code) != Some(true) {
            return Err(Error::Pairing(format!(
                "result references instance {} whose class {} is not background",
                r.instance_id, inst.class_code
            )));
        }
        if paired.insert(r.instance_id, r).is_some() {
            return Err(Error::Pairing(format!(
                "more than one result for instance {}",
                r.instance_id
            )));
        }
    }

    let prompts = export_prompts(instances, legend)?;
    let mut warnings = Vec::new();
    let mut work = Vec::new();
    for p in &prompts {
        let inst = by_id[&p.instance_id];
        ensure_same_dims(dims, inst.mask.dims())?;
        match paired.get(&p.instance_id) {
            Some(r) => work.push((inst, *r)),
            None => warnings.push(format!(
                "background instance {} has no prompted result",
                p.instance_id
            )),
        }
    }

    let anomalies = work
        .par_iter()
        .map(|(inst, r)| anomaly_extract(inst, r, min_blob_area))
        .collect::<Result<Vec<_>>>()?;
    let mut change_map = ChangeMap::new(dims.0, dims.1);
    for a in &anomalies {
        change_map.paint(a)?;
    }
    Ok(PromptDetection {
        change_map,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct PromptRecord {
    instance_id: u32,
    class_code: ClassCode,
    #[serde(rename = "box")]
    bbox: [u32; 4],
    runs: Vec<u32>,
}

/// JSON list of `{ "instance_id", "class_code", "box": [x,y,w,h], "runs" }`.
pub fn prompts_to_json(prompts: &[PromptSpec]) -> String {
    let records: Vec<PromptRecord> = prompts
        .iter()
        .map(|p| PromptRecord {
            instance_id: p.instance_id,
            class_code: p.class_code,
            bbox: p.prompt_box.to_array(),
            runs: p.prompt_mask.runs().to_vec(),
        })
        .collect();
    let mut s = serde_json::to_string(&records).expect("prompts serialize");
    s.push('\n');
    s
}

/// Reads a prompt export; the file carries no dimensions, so the caller
/// supplies the scene size.
pub fn prompts_from_json(text: &str, width: u32, height: u32) -> Result<Vec<PromptSpec>> {
    let records: Vec<PromptRecord> = serde_json::from_str(text)?;
    records
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let mask = BinaryMask::from_runs(width, height, r.runs)
                .map_err(|e| Error::CorruptMask(format!("prompts[{k}]: {e}")))?
                .with_id(r.instance_id);
            let [x, y, w, h] = r.bbox;
            let prompt_box = BBox { x, y, w, h };
            if mask.bbox().ok() != Some(prompt_box) {
                return Err(Error::CorruptMask(format!(
                    "prompts[{k}]: box does not match the mask's bounding box"
                )));
            }
            Ok(PromptSpec {
                instance_id: r.instance_id,
                class_code: r.class_code,
                prompt_box,
                prompt_mask: mask,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ResultRecord {
    instance_id: u32,
    runs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct ResultsDoc {
    width: u32,
    height: u32,
    results: Vec<ResultRecord>,
}

impl PromptedResults {
    /// Parses `{ "width", "height", "results": [ { "instance_id", "runs" } ] }`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ResultsDoc = serde_json::from_str(text)?;
        let mut seen = BTreeSet::new();
        let results = doc
            .results
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                if !seen.insert(r.instance_id) {
                    return Err(Error::Pairing(format!(
                        "results[{k}]: duplicate instance id {}",
                        r.instance_id
                    )));
                }
                let segmented = BinaryMask::from_runs(doc.width, doc.height, r.runs)
                    .map_err(|e| Error::CorruptMask(format!("results[{k}]: {e}")))?;
                Ok(PromptedResult {
                    instance_id: r.instance_id,
                    segmented,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width: doc.width,
            height: doc.height,
            results,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ResultsDoc {
            width: self.width,
            height: self.height,
            results: self
                .results
                .iter()
                .map(|r| ResultRecord {
                    instance_id: r.instance_id,
                    runs: r.segmented.runs().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("results serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LegendEntry;

    fn block(w: u32, h: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
        })
    }

    fn legend() -> Legend {
        Legend::new(vec![
            LegendEntry {
                code: 1,
                name: "vegetation".into(),
                is_background: true,
            },
            LegendEntry {
                code: 2,
                name: "building".into(),
                is_background: false,
            },
        ])
        .unwrap()
    }

    fn inst(id: u32, class: u16, m: BinaryMask) -> Instance {
        Instance::new(id, class, m).unwrap()
    }

    #[test]
    fn export_counts_background_instances() {
        let insts = vec![
            inst(1, 2, block(8, 8, 0, 0, 2, 2)),
            inst(2, 1, block(8, 8, 4, 0, 4, 4)),
            inst(3, 1, block(8, 8, 0, 4, 8, 4)),
        ];
        let prompts = export_prompts(&insts, &legend()).unwrap();
        assert_eq!(prompts.len(), 2);
        assert_eq!(prompts[0].instance_id, 2);
        assert_eq!(
            prompts[0].prompt_box,
            prompts[0].prompt_mask.bbox().unwrap()
        );

        let no_bg = Legend::new(vec![
            LegendEntry {
                code: 1,
                name: "a".into(),
                is_background: false,
            },
            LegendEntry {
                code: 2,
                name: "b".into(),
                is_background: false,
            },
        ])
        .unwrap();
        assert!(export_prompts(&insts, &no_bg).unwrap().is_empty());

        let missing = vec![inst(1, 9, block(8, 8, 0, 0, 2, 2))];
        assert!(matches!(
            export_prompts(&missing, &legend()),
            Err(Error::Legend(_))
        ));
    }

    #[test]
    fn anomaly_examples() {
        let i = inst(1, 1, block(12, 12, 1, 1, 10, 10));
        let full = PromptedResult {
            instance_id: 1,
            segmented: i.mask.clone(),
        };
        assert!(anomaly_extract(&i, &full, 1).unwrap().is_empty());

        let hole = block(12, 12, 4, 5, 2, 2);
        let seg = i.mask.difference(&hole).unwrap();
        let r = PromptedResult {
            instance_id: 1,
            segmented: seg,
        };
        assert_eq!(anomaly_extract(&i, &r, 1).unwrap(), hole);

        let dot = block(12, 12, 7, 7, 1, 1);
        let r = PromptedResult {
            instance_id: 1,
            segmented: i.mask.difference(&dot).unwrap(),
        };
        assert!(anomaly_extract(&i, &r, 4).unwrap().is_empty());
        assert_eq!(anomaly_extract(&i, &r, 1).unwrap(), dot);
    }

    #[test]
    fn anomaly_stays_inside_instance() {
        let i = inst(1, 1, block(8, 8, 0, 0, 4, 4));
        // Segmenter output elsewhere entirely: all instance pixels unrecognized.
        let r = PromptedResult {
            instance_id: 1,
            segmented: block(8, 8, 4, 4, 4, 4),
        };
        assert_eq!(
            anomaly_extract(&i, &r, 1).unwrap(),
            i.mask.clone().with_id(0)
        );
    }

    #[test]
    fn anomaly_errors() {
        let i = inst(1, 1, block(8, 8, 0, 0, 4, 4));
        let wrong_id = PromptedResult {
            instance_id: 2,
            segmented: i.mask.clone(),
        };
        assert!(matches!(
            anomaly_extract(&i, &wrong_id, 1),
            Err(Error::Pairing(_))
        ));
        let wrong_dims = PromptedResult {
            instance_id: 1,
            segmented: BinaryMask::empty(4, 4),
        };
        assert!(matches!(
            anomaly_extract(&i, &wrong_dims, 1),
            Err(Error::Dimension { .. })
        ));
    }

    fn scene() -> (Vec<Instance>, BinaryMask) {
        let a = inst(1, 1, block(16, 8, 0, 0, 8, 8));
        let b = inst(2, 1, block(16, 8, 8, 0, 8, 8));
        let c = inst(3, 2, block(16, 8, 0, 0, 1, 1));
        let hole = block(16, 8, 11, 3, 2, 2);
        (vec![a, b, c], hole)
    }

    #[test]
    fn detect_union_of_anomalies() {
        let (insts, hole) = scene();
        let insts = &insts[..2];
        let results = PromptedResults {
            width: 16,
            height: 8,
            results: vec![
                PromptedResult {
                    instance_id: 1,
                    segmented: insts[0].mask.clone(),
                },
                PromptedResult {
                    instance_id: 2,
                    segmented: insts[1].mask.difference(&hole).unwrap(),
                },
            ],
        };
        let d = detect_changes_prompt(insts, &results, &legend(), 1).unwrap();
        assert_eq!(d.change_map, ChangeMap::from_mask(&hole));
        assert_eq!(d.change_map.count_changed(), 4);
        assert!(d.warnings.is_empty());

        let all_clean = PromptedResults {
            width: 16,
            height: 8,
            results: insts
                .iter()
                .map(|i| PromptedResult {
                    instance_id: i.id,
                    segmented: i.mask.clone(),
                })
                .collect(),
        };
        let d = detect_changes_prompt(insts, &all_clean, &legend(), 1).unwrap();
        assert_eq!(d.change_map.count_changed(), 0);
    }

    #[test]
    fn missing_results_warn() {
        let (insts, _) = scene();
        let empty = PromptedResults {
            width: 16,
            height: 8,
            results: vec![],
        };
        let d = detect_changes_prompt(&insts, &empty, &legend(), 16).unwrap();
        assert_eq!(d.change_map.count_changed(), 0);
        assert_eq!(d.warnings.len(), 2);
    }

    #[test]
    fn pairing_errors() {
        let (insts, _) = scene();
        let unknown = PromptedResults {
            width: 16,
            height: 8,
            results: vec![PromptedResult {
                instance_id: 42,
                segmented: BinaryMask::empty(16, 8),
            }],
        };
        assert!(matches!(
            detect_changes_prompt(&insts, &unknown, &legend(), 1),
            Err(Error::Pairing(_))
        ));
        let foreground = PromptedResults {
            width: 16,
            height: 8,
            results: vec![PromptedResult {
                instance_id: 3,
                segmented: BinaryMask::empty(16, 8),
            }],
        };
        assert!(matches!(
            detect_changes_prompt(&insts, &foreground, &legend(), 1),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn json_roundtrips() {
        let (insts, _) = scene();
        let prompts = export_prompts(&insts, &legend()).unwrap();
        let text = prompts_to_json(&prompts);
        assert!(text.contains("\"box\":[0,0,8,8]"));
        assert_eq!(prompts_from_json(&text, 16, 8).unwrap(), prompts);
        assert!(prompts_from_json(&text, 8, 8).is_err());

        let results = PromptedResults {
            width: 16,
            height: 8,
            results: vec![PromptedResult {
                instance_id: 1,
                segmented: insts[0].mask.clone().with_id(0),
            }],
        };
        assert_eq!(
            PromptedResults::from_json(&results.to_json()).unwrap(),
            results
        );
        let dup = r#"{"width":1,"height":1,"results":[{"instance_id":1,"runs":[1]},{"instance_id":1,"runs":[1]}]}"#;
        assert!(matches!(
            PromptedResults::from_json(dup),
            Err(Error::Pairing(_))
        ));
    }
}
