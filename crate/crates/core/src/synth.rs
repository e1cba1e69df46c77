//! Deterministic synthetic scenes with known ground truth.
//!
//! A scene is a map raster of rectangles and ellipses on a vegetation
//! background, a simulated "segment everything" mask set for the optical
//! side, simulated prompted results for the background instances, and the
//! true change map. Objects are tagged unchanged, shape-changed (one axis
//! shrunk to 20-35% of its size), removed (absent from the optical side) or
//! new (absent from the map). Every draw comes from [`SplitMix64`], so a
//! seed fully determines the scene.

use serde::Serialize;

use crate::ccl::{label_components, LabelParams};
use crate::error::{Error, Result};
use crate::prompt::{PromptedResult, PromptedResults};
use crate::raster::{
    BBox, BinaryMask, ChangeMap, ClassCode, LabelRaster, Legend, LegendEntry, MaskSet,
};
use crate::rng::SplitMix64;

pub const BACKGROUND_CODE: ClassCode = 1;
const FOREGROUND_CODES: [ClassCode; 3] = [2, 3, 4];

const MIN_SIDE: u32 = 24;
const MAX_SIDE: u32 = 48;
const PLACEMENT_RETRIES: u32 = 2000;
/// Shrink factor range for shape changes; well outside the (0.5, 2.0) bands.
const SHRINK_RANGE: (f64, f64) = (0.20, 0.35);

/// Fractions of `n_objects` assigned to each change type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChangeFractions {
    pub shape_change: f64,
    pub removal: f64,
    pub new_object: f64,
}

impl ChangeFractions {
    pub fn new(shape_change: f64, removal: f64, new_object: f64) -> Self {
        Self {
            shape_change,
            removal,
            new_object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneParams {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub n_objects: u32,
    pub change_fractions: ChangeFractions,
    /// Maximum pieces each optical object is cut into.
    pub split_k: u32,
    /// Maximum dilation/erosion radius applied to optical objects.
    pub boundary_noise: u32,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 256,
            height: 256,
            n_objects: 12,
            change_fractions: ChangeFractions::new(0.2, 0.2, 0.1),
            split_k: 3,
            boundary_noise: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let f = self.change_fractions;
        for (name, v) in [
            ("shape_change", f.shape_change),
            ("removal", f.removal),
            ("new_object", f.new_object),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!(
                    "{name} fraction {v} not in [0, 1]"
                )));
            }
        }
        if f.shape_change + f.removal + f.new_object > 1.0 + 1e-9 {
            return Err(Error::InvalidParam("change fractions sum above 1".into()));
        }
        if self.split_k < 1 {
            return Err(Error::InvalidParam("split_k must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam(
                "scene dimensions must be positive".into(),
            ));
        }
        if (self.width as u64) * (self.height as u64) > u32::MAX as u64 {
            return Err(Error::InvalidParam("scene exceeds the pixel limit".into()));
        }
        Ok(())
    }

    /// Number of objects per role: (shape-changed, removed, new).
    fn role_counts(&self) -> (u32, u32, u32) {
        let n = self.n_objects;
        let count = |f: f64| (f * n as f64).round() as u32;
        let f = self.change_fractions;
        let (mut s, mut r, mut a) = (count(f.shape_change), count(f.removal), count(f.new_object));
        while s + r + a > n {
            if a > 0 {
                a -= 1;
            } else if r > 0 {
                r -= 1;
            } else {
                s -= 1;
            }
        }
        (s, r, a)
    }

    fn gap(&self) -> u32 {
        2 * self.boundary_noise + 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    Unchanged,
    ShapeChanged,
    Removed,
    New,
}

impl ObjectRole {
    pub fn is_change(self) -> bool {
        self != ObjectRole::Unchanged
    }

    /// Present in the map raster.
    pub fn in_map(self) -> bool {
        self != ObjectRole::New
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub id: u32,
    pub class: ClassCode,
    pub role: ObjectRole,
    pub shape: ObjectShape,
    /// Map geometry, or optical geometry for new objects.
    #[serde(serialize_with = "ser_bbox")]
    pub bbox: BBox,
    /// Optical geometry of shape-changed objects.
    #[serde(
        serialize_with = "ser_opt_bbox",
        skip_serializing_if = "Option::is_none"
    )]
    pub optical_bbox: Option<BBox>,
}

fn ser_bbox<S: serde::Serializer>(b: &BBox, s: S) -> std::result::Result<S::Ok, S::Error> {
    b.to_array().serialize(s)
}

fn ser_opt_bbox<S: serde::Serializer>(
    b: &Option<BBox>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    b.map(BBox::to_array).serialize(s)
}

impl SceneObject {
    /// Geometry in the optical image, if the object is visible there.
    pub fn optical_geometry(&self) -> Option<BBox> {
        match self.role {
            ObjectRole::Unchanged | ObjectRole::New => Some(self.bbox),
            ObjectRole::ShapeChanged => self.optical_bbox,
            ObjectRole::Removed => None,
        }
    }
}

/// Everything a synthetic scene provides.
#[derive(Debug, Clone)]
pub struct Scene {
    pub params: SceneParams,
    pub raster: LabelRaster,
    pub legend: Legend,
    pub masks: MaskSet,
    pub prompted: PromptedResults,
    pub truth: ChangeMap,
    pub objects: Vec<SceneObject>,
}

/// Legend used by every synthetic scene; only vegetation is background.
pub fn legend() -> Legend {
    let e = |code, name: &str, is_background| LegendEntry {
        code,
        name: name.into(),
        is_background,
    };
    Legend::new(vec![
        e(BACKGROUND_CODE, "vegetation", true),
        e(2, "building", false),
        e(3, "water", false),
        e(4, "bare_soil", false),
    ])
    .expect("static legend is valid")
}

/// Rasterizes a shape filling `bbox`. Ellipses are inscribed in the box and
/// include pixels whose centers satisfy the ellipse inequality.
pub fn rasterize(shape: ObjectShape, bbox: BBox, width: u32, height: u32) -> BinaryMask {
    match shape {
        ObjectShape::Rect => BinaryMask::from_fn(width, height, |x, y| bbox.contains(x, y)),
        ObjectShape::Ellipse => {
            let a = bbox.w as f64 / 2.0;
            let b = bbox.h as f64 / 2.0;
            let cx = bbox.x as f64 + a;
            let cy = bbox.y as f64 + b;
            BinaryMask::from_fn(width, height, |x, y| {
                if !bbox.contains(x, y) {
                    return false;
                }
                let dx = (x as f64 + 0.5 - cx) / a;
                let dy = (y as f64 + 0.5 - cy) / b;
                dx * dx + dy * dy <= 1.0
            })
        }
    }
}

/// Rebuilds the true change map from object roles alone.
pub fn truth_from_objects(width: u32, height: u32, objects: &[SceneObject]) -> Result<ChangeMap> {
    let mut truth = ChangeMap::new(width, height);
    for o in objects.iter().filter(|o| o.role.is_change()) {
        truth.paint(&rasterize(o.shape, o.bbox, width, height))?;
        if let Some(b) = o.optical_bbox {
            truth.paint(&rasterize(o.shape, b, width, height))?;
        }
    }
    Ok(truth)
}

/// Square (Chebyshev) dilation for `radius > 0`, erosion for `radius < 0`.
/// Pixels outside the grid count as unset for both.
pub fn morph(mask: &BinaryMask, radius: i32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    if radius < 0 {
        // erosion: a pixel survives only if its whole window is set
        let (w, h) = mask.dims();
        let r = radius.unsigned_abs();
        let grown = morph(&mask.complement(), r as i32).decode();
        let bits = mask.decode();
        return BinaryMask::from_fn(w, h, |x, y| {
            let i = (y * w + x) as usize;
            bits[i] && !grown[i] && x >= r && y >= r && x + r < w && y + r < h
        });
    }
    let (w, h) = mask.dims();
    let r = radius as u32;
    let bits = mask.decode();
    let mut rows = vec![false; bits.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[(y * w + x) as usize] = (lo..=hi).any(|xx| bits[(y * w + xx) as usize]);
        }
    }
    BinaryMask::from_fn(w, h, |x, y| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        (lo..=hi).any(|yy| rows[(yy * w + x) as usize])
    })
}

/// Cuts `mask` into at most `pieces` parts with axis-parallel cuts, always
/// splitting the largest region across its longer side.
fn split_mask(mask: &BinaryMask, pieces: u32, rng: &mut SplitMix64) -> Result<Vec<BinaryMask>> {
    let Ok(bbox) = mask.bbox() else {
        return Ok(Vec::new());
    };
    let mut regions = vec![bbox];
    for _ in 1..pieces {
        let (idx, r) = regions
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| (a.1.w * a.1.h).cmp(&(b.1.w * b.1.h)).then(b.0.cmp(&a.0)))
            .expect("at least one region");
        let len = r.w.max(r.h);
        if len < 2 {
            break;
        }
        let frac = 0.3 + 0.4 * rng.next_f64();
        let cut = ((len as f64 * frac) as u32).clamp(1, len - 1);
        let (first, second) = if r.w >= r.h {
            (
                BBox { w: cut, ..r },
                BBox {
                    x: r.x + cut,
                    w: r.w - cut,
                    ..r
                },
            )
        } else {
            (
                BBox { h: cut, ..r },
                BBox {
                    y: r.y + cut,
                    h: r.h - cut,
                    ..r
                },
            )
        };
        regions[idx] = first;
        regions.insert(idx + 1, second);
    }
    let (w, h) = mask.dims();
    let mut out = Vec::new();
    for r in regions {
        let piece = mask.intersection(&BinaryMask::from_fn(w, h, |x, y| r.contains(x, y)))?;
        if !piece.is_empty() {
            out.push(piece);
        }
    }
    Ok(out)
}

fn overlaps_with_gap(a: &BBox, b: &BBox, gap: u32) -> bool {
    let (ax0, ay0) = (a.x as i64 - gap as i64, a.y as i64 - gap as i64);
    let (ax1, ay1) = ((a.x + a.w + gap) as i64, (a.y + a.h + gap) as i64);
    let (bx0, by0, bx1, by1) = (
        b.x as i64,
        b.y as i64,
        (b.x + b.w) as i64,
        (b.y + b.h) as i64,
    );
    ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
}

/// Generates a complete scene from `params`.
pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let mut rng = SplitMix64::new(params.seed);
    let gap = params.gap();
    let border = params.boundary_noise + 2;

    // placement
    let mut placed: Vec<(ObjectShape, ClassCode, BBox)> = Vec::new();
    for k in 0..params.n_objects {
        let mut ok = None;
        for _ in 0..PLACEMENT_RETRIES {
            let shape = if rng.below(2) == 0 {
                ObjectShape::Rect
            } else {
                ObjectShape::Ellipse
            };
            let class = FOREGROUND_CODES[rng.below(FOREGROUND_CODES.len() as u64) as usize];
            let bw = rng.range_inclusive(MIN_SIDE, MAX_SIDE);
            let bh = rng.range_inclusive(MIN_SIDE, MAX_SIDE);
            if bw + 2 * border > w || bh + 2 * border > h {
                continue;
            }
            let x = rng.range_inclusive(border, w - border - bw);
            let y = rng.range_inclusive(border, h - border - bh);
            let bbox = BBox { x, y, w: bw, h: bh };
            if placed
                .iter()
                .all(|(_, _, b)| !overlaps_with_gap(b, &bbox, gap))
            {
                ok = Some((shape, class, bbox));
                break;
            }
        }
        match ok {
            Some(o) => placed.push(o),
            None => {
                return Err(Error::Placement(format!(
                    "could not place object {} of {} in a {w}x{h} scene after {PLACEMENT_RETRIES} attempts",
                    k + 1,
                    params.n_objects
                )))
            }
        }
    }

    // roles
    let (n_shape, n_removed, n_new) = params.role_counts();
    let mut order: Vec<usize> = (0..placed.len()).collect();
    rng.shuffle(&mut order);
    let mut roles = vec![ObjectRole::Unchanged; placed.len()];
    for (rank, &i) in order.iter().enumerate() {
        let rank = rank as u32;
        roles[i] = if rank < n_shape {
            ObjectRole::ShapeChanged
        } else if rank < n_shape + n_removed {
            ObjectRole::Removed
        } else if rank < n_shape + n_removed + n_new {
            ObjectRole::New
        } else {
            ObjectRole::Unchanged
        };
    }

    let mut objects = Vec::with_capacity(placed.len());
    for (i, &(shape, class, bbox)) in placed.iter().enumerate() {
        let role = roles[i];
        let optical_bbox =
            (role == ObjectRole::ShapeChanged).then(|| shrink_one_axis(bbox, &mut rng));
        objects.push(SceneObject {
            id: i as u32 + 1,
            class,
            role,
            shape,
            bbox,
            optical_bbox,
        });
    }

    // map raster
    let mut pixels = vec![BACKGROUND_CODE; (w * h) as usize];
    for o in objects.iter().filter(|o| o.role.in_map()) {
        for i in rasterize(o.shape, o.bbox, w, h).indices() {
            pixels[i] = o.class;
        }
    }
    let raster = LabelRaster::new(w, h, pixels)?;

    // optical side: noisy objects, split into pieces
    let mut optical: Vec<(&SceneObject, BinaryMask)> = Vec::new();
    for o in &objects {
        if let Some(b) = o.optical_geometry() {
            let truth_mask = rasterize(o.shape, b, w, h);
            let radius = if params.boundary_noise > 0 {
                let span = 2 * params.boundary_noise as u64 + 1;
                rng.below(span) as i32 - params.boundary_noise as i32
            } else {
                0
            };
            optical.push((o, morph(&truth_mask, radius)));
        }
    }
    let mut covered = BinaryMask::empty(w, h);
    for (_, m) in &optical {
        covered = covered.union(m)?;
    }
    let mut masks = vec![covered.complement().with_id(1)];
    for (_, m) in &optical {
        let pieces = 1 + rng.below(params.split_k as u64) as u32;
        for piece in split_mask(m, pieces, &mut rng)? {
            let id = masks.len() as u32 + 1;
            masks.push(piece.with_id(id));
        }
    }
    let masks = MaskSet::new(w, h, masks)?;

    // prompted results: background instances with new objects carved out
    let mut new_objects = BinaryMask::empty(w, h);
    for (o, m) in &optical {
        if o.role == ObjectRole::New {
            new_objects = new_objects.union(m)?;
        }
    }
    let legend = legend();
    let (_, instances) = label_components(&raster, &LabelParams::default())?;
    let results = instances
        .iter()
        .filter(|i| legend.is_background(i.class_code) == Some(true))
        .map(|i| {
            Ok(PromptedResult {
                instance_id: i.id,
                segmented: i.mask.difference(&new_objects)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let prompted = PromptedResults {
        width: w,
        height: h,
        results,
    };

    let truth = truth_from_objects(w, h, &objects)?;
    Ok(Scene {
        params: params.clone(),
        raster,
        legend,
        masks,
        prompted,
        truth,
        objects,
    })
}

/// Shrinks one axis, keeping the center fixed (equal margins on both sides).
fn shrink_one_axis(b: BBox, rng: &mut SplitMix64) -> BBox {
    let horizontal = rng.below(2) == 0;
    let f = SHRINK_RANGE.0 + (SHRINK_RANGE.1 - SHRINK_RANGE.0) * rng.next_f64();
    let side = if horizontal { b.w } else { b.h };
    let mut s = ((side as f64 * f) as u32).max(2);
    if (side - s) % 2 == 1 {
        s += 1;
    }
    let off = (side - s) / 2;
    if horizontal {
        BBox {
            x: b.x + off,
            w: s,
            ..b
        }
    } else {
        BBox {
            y: b.y + off,
            h: s,
            ..b
        }
    }
}

#[derive(Serialize)]
struct GeneratorInfo {
    algorithm: &'static str,
    gamma: String,
    mix1: String,
    mix2: String,
    unit_float: &'static str,
    bounded: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: GeneratorInfo,
    params: &'a SceneParams,
    objects: &'a [SceneObject],
}

impl Scene {
    /// JSON manifest: generator constants, parameter echo and object list.
    pub fn manifest_json(&self) -> String {
        let m = Manifest {
            generator: GeneratorInfo {
                algorithm: SplitMix64::NAME,
                gamma: format!("0x{:016x}", SplitMix64::GAMMA),
                mix1: format!("0x{:016x}", SplitMix64::MIX1),
                mix2: format!("0x{:016x}", SplitMix64::MIX2),
                unit_float: "(next >> 11) * 2^-53",
                bounded: "(next * n) >> 64",
            },
            params: &self.params,
            objects: &self.objects,
        };
        let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
        s.push('\n');
        s
    }
}
