//! Connected component labeling of class rasters.
//!
//! Two-pass labeling with a union-find over provisional labels. Final instance
//! ids are contiguous `1..=N`, assigned in raster scan order of each
//! component's first pixel; suppressed pixels keep label 0.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{encode_pgm, BBox, BinaryMask, ClassCode, Graymap, LabelRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_neighbors(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::InvalidParam(format!(
                "connectivity must be 4 or 8, got {n}"
            ))),
        }
    }

    pub fn neighbors(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelParams {
    pub connectivity: Connectivity,
    /// Components with fewer pixels are suppressed (label 0).
    pub min_area: u64,
    pub ignore_codes: BTreeSet<ClassCode>,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Four,
            min_area: 16,
            ignore_codes: BTreeSet::new(),
        }
    }
}

/// Row-major instance ids; 0 = unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    count: u32,
}

impl InstanceMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn instance_count(&self) -> u32 {
        self.count
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[(y * self.width + x) as usize]
    }

    /// 16-bit graymap export for inspection.
    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        if self.count > u16::MAX as u32 {
            return Err(Error::Export(format!(
                "{} instances do not fit a 16-bit graymap",
                self.count
            )));
        }
        Ok(encode_pgm(&Graymap {
            width: self.width,
            height: self.height,
            maxval: 65535,
            samples: self.labels.iter().map(|&l| l as u16).collect(),
        }))
    }
}

/// One connected map region with its derived shape attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub class_code: ClassCode,
    pub mask: BinaryMask,
    pub area: u64,
    pub bbox: BBox,
    pub centroid: (f64, f64),
}

impl Instance {
    pub fn new(id: u32, class_code: ClassCode, mask: BinaryMask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::EmptyInstance(id));
        }
        let g = mask.geometry()?;
        Ok(Self {
            id,
            class_code,
            mask: mask.with_id(id),
            area: g.area,
            bbox: g.bbox,
            centroid: g.centroid,
        })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.bbox.aspect_ratio()
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        // slot 0 is the "no label" sentinel
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let l = self.parent.len() as u32;
        self.parent.push(l);
        l
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two sets, keeping the smaller label as root.
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Labels 4- or 8-connected regions of equal value among pixels accepted by
/// `include`. Returns final labels (`1..=N` in scan order, 0 elsewhere) and `N`.
pub(crate) fn label_grid<T: Copy + Eq>(
    values: &[T],
    width: u32,
    height: u32,
    connectivity: Connectivity,
    min_area: u64,
    include: impl Fn(T) -> bool,
) -> (Vec<u32>, u32) {
    let (w, h) = (width as usize, height as usize);
    let mut prov = vec![0u32; w * h];
    let mut uf = UnionFind::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = values[i];
            if !include(v) {
                continue;
            }
            let mut label = 0u32;
            let visit = |j: usize, label: &mut u32, uf: &mut UnionFind| {
                if prov[j] != 0 && values[j] == v {
                    if *label == 0 {
                        *label = prov[j];
                    } else {
                        uf.union(*label, prov[j]);
                    }
                }
            };
            if x > 0 {
                visit(i - 1, &mut label, &mut uf);
            }
            if y > 0 {
                visit(i - w, &mut label, &mut uf);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(i - w - 1, &mut label, &mut uf);
                    }
                    if x + 1 < w {
                        visit(i - w + 1, &mut label, &mut uf);
                    }
                }
            }
            prov[i] = if label == 0 { uf.make() } else { label };
        }
    }

    let n_prov = uf.parent.len();
    let mut sizes = vec![0u64; n_prov];
    for p in prov.iter_mut() {
        if *p != 0 {
            *p = uf.find(*p);
            sizes[*p as usize] += 1;
        }
    }

    // Roots are the smallest provisional label of their component, which
    // belongs to the component's first pixel in scan order.
    let mut final_id = vec![0u32; n_prov];
    let mut next = 0u32;
    for root in 1..n_prov {
        if uf.parent[root] == root as u32 && sizes[root] >= min_area {
            next += 1;
            final_id[root] = next;
        }
    }
    for p in prov.iter_mut() {
        *p = final_id[*p as usize];
    }
    (prov, next)
}

/// Labels connected same-class regions and builds one [`Instance`] per region.
pub fn label_components(
    raster: &LabelRaster,
    params: &LabelParams,
) -> Result<(InstanceMap, Vec<Instance>)> {
    if params.min_area < 1 {
        return Err(Error::InvalidParam("min_area must be at least 1".into()));
    }
    let (labels, count) = label_grid(
        raster.pixels(),
        raster.width(),
        raster.height(),
        params.connectivity,
        params.min_area,
        |c| !params.ignore_codes.contains(&c),
    );

    let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); count as usize];
    let mut classes = vec![0 as ClassCode; count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            let slot = (l - 1) as usize;
            if pixels[slot].is_empty() {
                classes[slot] = raster.pixels()[i];
            }
            pixels[slot].push(i);
        }
    }
    let instances = pixels
        .into_iter()
        .zip(classes)
        .enumerate()
        .map(|(k, (idx, class))| {
            let mask = BinaryMask::from_sorted_indices(raster.width(), raster.height(), idx)?;
            Instance::new(k as u32 + 1, class, mask)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        InstanceMap {
            width: raster.width(),
            height: raster.height(),
            labels,
            count,
        },
        instances,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    id: u32,
    class_code: ClassCode,
    area: u64,
    bbox: [u32; 4],
    centroid: [f64; 2],
    runs: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDump {
    width: u32,
    height: u32,
    instances: Vec<InstanceRecord>,
}

/// Serializes instances as `{ "width", "height", "instances": [ { "id",
/// "class_code", "area", "bbox", "centroid", "runs" } ] }`.
pub fn instances_to_json(width: u32, height: u32, instances: &[Instance]) -> String {
    let dump = InstanceDump {
        width,
        height,
        instances: instances
            .iter()
            .map(|i| InstanceRecord {
                id: i.id,
                class_code: i.class_code,
                area: i.area,
                bbox: i.bbox.to_array(),
                centroid: [i.centroid.0, i.centroid.1],
                runs: i.mask.runs().to_vec(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&dump).expect("instances serialize");
    s.push('\n');
    s
}

/// Reads an instance dump. Geometry is recomputed from the runs.
pub fn instances_from_json(text: &str) -> Result<(u32, u32, Vec<Instance>)> {
    let dump: InstanceDump = serde_json::from_str(text)?;
    let mut seen = BTreeSet::new();
    let instances = dump
        .instances
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            if !seen.insert(r.id) {
                return Err(Error::CorruptMask(format!(
                    "instances[{k}]: duplicate instance id {}",
                    r.id
                )));
            }
            let mask = BinaryMask::from_runs(dump.width, dump.height, r.runs)
                .map_err(|e| Error::CorruptMask(format!("instances[{k}] (id {}): {e}", r.id)))?;
            Instance::new(r.id, r.class_code, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dump.width, dump.height, instances))
}
