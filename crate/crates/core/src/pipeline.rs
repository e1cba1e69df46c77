//! End-to-end orchestration: labeling, both detection strategies, fusion and
//! scoring, plus the `key = value` configuration used by the CLI.

use std::collections::BTreeSet;

use crate::ccl::{label_components, Connectivity, Instance, InstanceMap, LabelParams};
use crate::error::{ensure_same_dims, Error, Result};
use crate::eval::{evaluate, fuse, MetricsRecord};
use crate::noprompt::{detect_changes_noprompt, AggregationParams, InstanceVerdict};
use crate::prompt::{
    detect_changes_prompt, PromptDetection, PromptedResults, DEFAULT_MIN_BLOB_AREA,
};
use crate::raster::{ChangeMap, LabelRaster, Legend, MaskSet};

/// Every tunable of the detection chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    pub label: LabelParams,
    pub aggregation: AggregationParams,
    pub min_blob_area: u64,
    /// Worker threads; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            label: LabelParams::default(),
            aggregation: AggregationParams::default(),
            min_blob_area: DEFAULT_MIN_BLOB_AREA,
            workers: 0,
        }
    }
}

/// Keys accepted by [`DetectConfig::set`] and config files.
pub const CONFIG_KEYS: &[&str] = &[
    "theta",
    "connectivity",
    "min_area",
    "ignore_codes",
    "min_intersection",
    "patience",
    "shape_check",
    "area_band_lo",
    "area_band_hi",
    "aspect_band_lo",
    "aspect_band_hi",
    "min_blob_area",
    "workers",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParam(format!("{key}: cannot parse {value:?}")))
}

impl DetectConfig {
    /// Sets one tunable by name; `-` and `_` are interchangeable in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let agg = &mut self.aggregation;
        match k {
            "theta" => agg.overlap_threshold = parse(k, value)?,
            "connectivity" => {
                self.label.connectivity = Connectivity::from_neighbors(parse(k, value)?)?
            }
            "min_area" => self.label.min_area = parse(k, value)?,
            "ignore_codes" => {
                self.label.ignore_codes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(k, s))
                    .collect::<Result<BTreeSet<_>>>()?
            }
            "min_intersection" => agg.min_intersection = parse(k, value)?,
            "patience" => agg.patience = parse(k, value)?,
            "shape_check" => {
                agg.use_shape_check = match value.trim() {
                    "1" | "true" | "on" | "yes" => true,
                    "0" | "false" | "off" | "no" => false,
                    _ => {
                        return Err(Error::InvalidParam(format!(
                            "{k}: expected a boolean, got {value:?}"
                        )))
                    }
                }
            }
            "area_band_lo" => agg.area_ratio_band.0 = parse(k, value)?,
            "area_band_hi" => agg.area_ratio_band.1 = parse(k, value)?,
            "aspect_band_lo" => agg.aspect_ratio_band.0 = parse(k, value)?,
            "aspect_band_hi" => agg.aspect_ratio_band.1 = parse(k, value)?,
            "min_blob_area" => self.min_blob_area = parse(k, value)?,
            "workers" => self.workers = parse(k, value)?,
            _ => return Err(Error::InvalidParam(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config file of `key = value` lines (`#` comments allowed).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParam(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::InvalidParam(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.min_area < 1 {
            return Err(Error::InvalidParam("min_area must be at least 1".into()));
        }
        self.aggregation.validate()
    }

    /// Runs `f` on a thread pool sized by `workers`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

pub struct PipelineInputs<'a> {
    pub raster: &'a LabelRaster,
    pub legend: &'a Legend,
    pub masks: &'a MaskSet,
    pub prompted: Option<&'a PromptedResults>,
    pub truth: Option<&'a ChangeMap>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub instance_map: InstanceMap,
    pub instances: Vec<Instance>,
    pub noprompt: ChangeMap,
    pub verdicts: Vec<InstanceVerdict>,
    pub prompt: Option<PromptDetection>,
    pub fused: ChangeMap,
    pub metrics: Option<MetricsRecord>,
}

/// Label → no-prompt detection → prompt detection (when results are given)
/// → fusion → evaluation (when truth is given).
pub fn run(inputs: &PipelineInputs<'_>, config: &DetectConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let dims = inputs.raster.dims();
    ensure_same_dims(dims, inputs.masks.dims())?;
    if let Some(p) = inputs.prompted {
        ensure_same_dims(dims, (p.width, p.height))?;
    }
    if let Some(t) = inputs.truth {
        ensure_same_dims(dims, t.dims())?;
    }
    inputs.legend.check_raster(inputs.raster)?;

    config.install(|| {
        let (instance_map, instances) = label_components(inputs.raster, &config.label)?;
        let (noprompt, verdicts) =
            detect_changes_noprompt(&instances, inputs.masks, &config.aggregation)?;
        let prompt = inputs
            .prompted
            .map(|p| detect_changes_prompt(&instances, p, inputs.legend, config.min_blob_area))
            .transpose()?;
        let fused = match &prompt {
            Some(p) => fuse(&noprompt, &p.change_map)?,
            None => noprompt.clone(),
        };
        let metrics = inputs.truth.map(|t| evaluate(&fused, t)).transpose()?;
        Ok(PipelineOutput {
            instance_map,
            instances,
            noprompt,
            verdicts,
            prompt,
            fused,
            metrics,
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneParams};

    #[test]
    fn config_text_and_overrides() {
        let mut c = DetectConfig::default();
        c.apply_text(
            "# tuning\ntheta = 0.7\nconnectivity=8\nignore-codes = 3, 4\nshape_check = on\n",
        )
        .unwrap();
        assert_eq!(c.aggregation.overlap_threshold, 0.7);
        assert_eq!(c.label.connectivity, Connectivity::Eight);
        assert_eq!(c.label.ignore_codes, BTreeSet::from([3, 4]));
        assert!(c.aggregation.use_shape_check);
        c.set("theta", "0.6").unwrap();
        assert_eq!(c.aggregation.overlap_threshold, 0.6);
    }

    #[test]
    fn config_errors() {
        let mut c = DetectConfig::default();
        assert!(c.apply_text("bogus = 1\n").is_err());
        assert!(c.apply_text("theta 0.5\n").is_err());
        assert!(c.set("connectivity", "6").is_err());
        assert!(c.set("patience", "-1").is_err());
        assert!(c.set("shape_check", "maybe").is_err());
        for k in CONFIG_KEYS {
            // every documented key is accepted
            let v = match *k {
                "connectivity" => "4",
                "shape_check" => "off",
                "ignore_codes" => "",
                "area_band_lo" | "aspect_band_lo" => "0.5",
                "area_band_hi" | "aspect_band_hi" => "2",
                "theta" => "0.5",
                _ => "3",
            };
            c.set(k, v).unwrap();
        }
    }

    #[test]
    fn pipeline_on_clean_scene() {
        let scene = generate_scene(&SceneParams {
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let out = run(
            &PipelineInputs {
                raster: &scene.raster,
                legend: &scene.legend,
                masks: &scene.masks,
                prompted: Some(&scene.prompted),
                truth: Some(&scene.truth),
            },
            &DetectConfig::default(),
        )
        .unwrap();
        let m = out.metrics.unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0), "{m:?}");
        assert_eq!(out.fused, scene.truth);
    }

    #[test]
    fn pipeline_rejects_mismatched_inputs() {
        let scene = generate_scene(&SceneParams::default()).unwrap();
        let small = ChangeMap::new(8, 8);
        let r = run(
            &PipelineInputs {
                raster: &scene.raster,
                legend: &scene.legend,
                masks: &scene.masks,
                prompted: None,
                truth: Some(&small),
            },
            &DetectConfig::default(),
        );
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }
}
