//! Run-length encoded binary masks.
//!
//! Runs follow a row-major scan and alternate zero-runs and one-runs, starting
//! with a zero-run. The leading zero-run is the only run allowed to be empty,
//! so `[4]` is an all-zero 2x2 mask and `[0, 4]` an all-one 2x2 mask.

use std::collections::HashSet;

use crate::error::{ensure_same_dims, Error, Result};

use super::{BBox, Geometry};

/// A binary mask over a `width x height` grid, stored as canonical runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    id: u32,
    score: f64,
}

/// Accumulates `(value, length)` segments into canonical runs.
struct RunBuilder {
    runs: Vec<u32>,
    value: bool,
    len: u32,
}

impl RunBuilder {
    fn new() -> Self {
        Self {
            runs: Vec::new(),
            value: false,
            len: 0,
        }
    }

    fn push(&mut self, value: bool, n: u32) {
        if n == 0 {
            return;
        }
        if value != self.value {
            self.runs.push(self.len);
            self.value = value;
            self.len = 0;
        }
        self.len += n;
    }

    fn finish(mut self) -> Vec<u32> {
        self.runs.push(self.len);
        self.runs
    }
}

/// Iterates the `(value, length)` segments of a run list, skipping empty runs.
fn segments(runs: &[u32]) -> impl Iterator<Item = (bool, u32)> + '_ {
    runs.iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (i % 2 == 1, n))
}

fn pixel_count(width: u32, height: u32) -> Result<u32> {
    width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidParam(format!("{width}x{height} exceeds the pixel limit")))
}

impl BinaryMask {
    /// Encodes a row-major bitvector.
    pub fn encode(bits: &[bool], width: u32, height: u32) -> Result<Self> {
        let n = pixel_count(width, height)?;
        if bits.len() != n as usize {
            return Err(Error::Dimension {
                expected_width: width,
                expected_height: height,
                found_width: bits.len() as u32,
                found_height: 1,
            });
        }
        let mut b = RunBuilder::new();
        for &bit in bits {
            b.push(bit, 1);
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    /// Builds a mask from runs, canonicalizing empty interior runs away.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        let n = pixel_count(width, height)? as u64;
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != n {
            return Err(Error::CorruptMask(format!(
                "runs sum to {total}, expected {n} for {width}x{height}"
            )));
        }
        if runs.iter().skip(1).all(|&r| r > 0) {
            return Ok(Self::from_canonical(width, height, runs));
        }
        let mut b = RunBuilder::new();
        for (v, len) in segments(&runs) {
            b.push(v, len);
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    /// Builds a mask from strictly increasing row-major pixel indices.
    pub fn from_sorted_indices<I>(width: u32, height: u32, indices: I) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        let n = pixel_count(width, height)? as usize;
        let mut b = RunBuilder::new();
        let mut cursor = 0usize;
        for idx in indices {
            if idx < cursor || idx >= n {
                return Err(Error::CorruptMask(format!(
                    "pixel index {idx} out of order or out of range"
                )));
            }
            b.push(false, (idx - cursor) as u32);
            b.push(true, 1);
            cursor = idx + 1;
        }
        b.push(false, (n - cursor) as u32);
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::from_canonical(width, height, vec![width * height])
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::from_canonical(width, height, vec![0, width * height])
    }

    /// Builds a mask by evaluating `f(x, y)` on every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut b = RunBuilder::new();
        for y in 0..height {
            for x in 0..width {
                b.push(f(x, y), 1);
            }
        }
        Self::from_canonical(width, height, b.finish())
    }

    fn from_canonical(width: u32, height: u32, runs: Vec<u32>) -> Self {
        Self {
            width,
            height,
            runs,
            id: 0,
            score: 1.0,
        }
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Expands the runs into a row-major bitvector.
    pub fn decode(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity((self.width * self.height) as usize);
        for (v, len) in segments(&self.runs) {
            bits.extend(std::iter::repeat_n(v, len as usize));
        }
        bits
    }

    /// Iterates `(start, len)` of every one-run in row-major index space.
    pub fn one_runs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut pos = 0usize;
        self.runs.iter().enumerate().filter_map(move |(i, &n)| {
            let start = pos;
            pos += n as usize;
            (i % 2 == 1 && n > 0).then_some((start, n as usize))
        })
    }

    /// Iterates the row-major indices of set pixels.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.one_runs().flat_map(|(s, n)| s..s + n)
    }

    /// Iterates per-row spans `(y, x_start, x_end_exclusive)` of set pixels.
    pub fn row_spans(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        let w = self.width as usize;
        self.one_runs().flat_map(move |(start, len)| {
            let mut s = start;
            let end = start + len;
            std::iter::from_fn(move || {
                if s >= end {
                    return None;
                }
                let y = s / w;
                let x = s % w;
                let seg = (end - s).min(w - x);
                s += seg;
                Some((y as u32, x as u32, (x + seg) as u32))
            })
        })
    }

    pub fn is_empty(&self) -> bool {
        self.runs.len() < 2
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&n| n as u64).sum()
    }

    pub fn bbox(&self) -> Result<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for (y, xs, xe) in self.row_spans() {
            any = true;
            x0 = x0.min(xs);
            x1 = x1.max(xe);
            y0 = y0.min(y);
            y1 = y1.max(y + 1);
        }
        if !any {
            return Err(Error::EmptyMask);
        }
        Ok(BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Mean `(x, y)` of set-pixel coordinates.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let mut sx: u128 = 0;
        let mut sy: u128 = 0;
        let mut n: u128 = 0;
        for (y, xs, xe) in self.row_spans() {
            let seg = (xe - xs) as u128;
            // sum of xs..xe
            sx += seg * xs as u128 + seg * (seg - 1) / 2;
            sy += seg * y as u128;
            n += seg;
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok((sx as f64 / n as f64, sy as f64 / n as f64))
    }

    pub fn aspect_ratio(&self) -> Result<f64> {
        Ok(self.bbox()?.aspect_ratio())
    }

    /// Area, bounding box, centroid and bounding-box aspect ratio.
    pub fn geometry(&self) -> Result<Geometry> {
        let bbox = self.bbox()?;
        Ok(Geometry {
            area: self.area(),
            bbox,
            centroid: self.centroid()?,
            aspect_ratio: bbox.aspect_ratio(),
        })
    }

    /// Walks both run lists in lockstep, calling `f` on every maximal
    /// segment where neither mask changes value.
    fn walk(&self, other: &BinaryMask, mut f: impl FnMut(bool, bool, u32)) -> Result<()> {
        ensure_same_dims(self.dims(), other.dims())?;
        let mut a = segments(&self.runs);
        let mut b = segments(&other.runs);
        let mut ca = a.next();
        let mut cb = b.next();
        while let (Some((va, na)), Some((vb, nb))) = (ca, cb) {
            let step = na.min(nb);
            f(va, vb, step);
            ca = if na > step {
                Some((va, na - step))
            } else {
                a.next()
            };
            cb = if nb > step {
                Some((vb, nb - step))
            } else {
                b.next()
            };
        }
        Ok(())
    }

    fn combine(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        let mut b = RunBuilder::new();
        self.walk(other, |va, vb, n| b.push(op(va, vb), n))?;
        Ok(Self::from_canonical(self.width, self.height, b.finish()))
    }

    /// `|A ∩ B|`.
    pub fn intersection_count(&self, other: &BinaryMask) -> Result<u64> {
        let mut count = 0u64;
        self.walk(other, |va, vb, n| {
            if va && vb {
                count += n as u64;
            }
        })?;
        Ok(count)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && b)
    }

    /// `A ∖ B`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && !b)
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        let mut inter = 0u64;
        let mut union = 0u64;
        self.walk(other, |va, vb, n| {
            if va && vb {
                inter += n as u64;
            }
            if va || vb {
                union += n as u64;
            }
        })?;
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    pub fn complement(&self) -> BinaryMask {
        let mut b = RunBuilder::new();
        for (v, n) in segments(&self.runs) {
            b.push(!v, n);
        }
        Self::from_canonical(self.width, self.height, b.finish())
    }
}

/// A segmenter's output for one scene: masks sharing the scene dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    width: u32,
    height: u32,
    masks: Vec<BinaryMask>,
}

impl MaskSet {
    pub fn new(width: u32, height: u32, masks: Vec<BinaryMask>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(masks.len());
        for m in &masks {
            ensure_same_dims((width, height), m.dims())?;
            if !seen.insert(m.id()) {
                return Err(Error::CorruptMask(format!("duplicate mask id {}", m.id())));
            }
        }
        Ok(Self {
            width,
            height,
            masks,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn get(&self, id: u32) -> Option<&BinaryMask> {
        self.masks.iter().find(|m| m.id() == id)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear-scan reference encoder.
    fn scan_runs(bits: &[bool]) -> Vec<u32> {
        let mut runs = vec![0u32];
        let mut cur = false;
        for &b in bits {
            if b != cur {
                runs.push(0);
                cur = b;
            }
            *runs.last_mut().unwrap() += 1;
        }
        runs
    }

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b != 0).collect()
    }

    fn block(w: u32, h: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
        })
    }

    #[test]
    fn encode_examples() {
        let m = BinaryMask::encode(&bits(&[0, 0, 0, 0]), 2, 2).unwrap();
        assert_eq!(m.runs(), &[4]);
        let m = BinaryMask::encode(&bits(&[1, 1, 1, 1]), 2, 2).unwrap();
        assert_eq!(m.runs(), &[0, 4]);
        let b = bits(&[0, 1, 1, 0, 0, 1]);
        let m = BinaryMask::encode(&b, 3, 2).unwrap();
        assert_eq!(scan_runs(&b), vec![1, 2, 2, 1]);
        assert_eq!(m.runs(), &[1, 2, 2, 1]);
    }

    #[test]
    fn encode_length_mismatch() {
        assert!(matches!(
            BinaryMask::encode(&bits(&[0, 1, 0]), 2, 2),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn decode_examples() {
        let m = BinaryMask::from_runs(2, 2, vec![4]).unwrap();
        assert_eq!(m.decode(), bits(&[0, 0, 0, 0]));
        let m = BinaryMask::from_runs(2, 2, vec![0, 4]).unwrap();
        assert_eq!(m.decode(), bits(&[1, 1, 1, 1]));
        let m = BinaryMask::from_runs(3, 2, vec![1, 2, 2, 1]).unwrap();
        assert_eq!(m.decode(), bits(&[0, 1, 1, 0, 0, 1]));
    }

    #[test]
    fn decode_rejects_bad_sum() {
        assert!(matches!(
            BinaryMask::from_runs(2, 2, vec![1, 2]),
            Err(Error::CorruptMask(_))
        ));
        assert!(matches!(
            BinaryMask::from_runs(2, 2, vec![]),
            Err(Error::CorruptMask(_))
        ));
    }

    #[test]
    fn non_canonical_runs_are_normalized() {
        let m = BinaryMask::from_runs(3, 2, vec![1, 1, 0, 1, 2, 1, 0]).unwrap();
        assert_eq!(m.runs(), &[1, 2, 2, 1]);
        let again = BinaryMask::encode(&m.decode(), 3, 2).unwrap();
        assert_eq!(again.runs(), m.runs());
    }

    #[test]
    fn from_sorted_indices_matches_encode() {
        let b = bits(&[1, 0, 1, 1, 0, 0, 0, 1, 1]);
        let idx: Vec<usize> = (0..b.len()).filter(|&i| b[i]).collect();
        let m = BinaryMask::from_sorted_indices(3, 3, idx).unwrap();
        assert_eq!(m, BinaryMask::encode(&b, 3, 3).unwrap());
        assert!(BinaryMask::from_sorted_indices(3, 3, [4, 2]).is_err());
        assert!(BinaryMask::from_sorted_indices(3, 3, [9]).is_err());
    }

    #[test]
    fn iou_examples() {
        let m = block(4, 4, 1, 1, 2, 2);
        assert_eq!(m.iou(&m).unwrap(), 1.0);

        let left = block(4, 4, 0, 0, 2, 4);
        let right = block(4, 4, 2, 0, 2, 4);
        assert_eq!(left.intersection_count(&right).unwrap(), 0);
        assert_eq!(left.iou(&right).unwrap(), 0.0);

        // {(0,0),(1,0),(0,1),(1,1)} vs {(0,0),(0,1)}: 2 shared, 4 in the union.
        let a = block(4, 4, 0, 0, 2, 2);
        let b = block(4, 4, 0, 0, 1, 2);
        assert_eq!(a.iou(&b).unwrap(), 0.5);
    }

    #[test]
    fn iou_of_empty_masks_is_zero() {
        let e = BinaryMask::empty(3, 3);
        assert_eq!(e.iou(&e).unwrap(), 0.0);
    }

    #[test]
    fn algebra_rejects_dimension_mismatch() {
        let a = BinaryMask::empty(3, 3);
        let b = BinaryMask::empty(3, 4);
        assert!(matches!(a.iou(&b), Err(Error::Dimension { .. })));
        assert!(matches!(a.union(&b), Err(Error::Dimension { .. })));
        assert!(matches!(a.difference(&b), Err(Error::Dimension { .. })));
        assert!(matches!(
            a.intersection_count(&b),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn union_and_difference() {
        let a = block(4, 4, 0, 0, 2, 2);
        let b = block(4, 4, 1, 1, 2, 2);
        let u = a.union(&b).unwrap();
        assert_eq!(u.area(), 7);
        let d = a.difference(&b).unwrap();
        assert_eq!(d.area(), 3);
        assert!(d.decode()[0] && !d.decode()[5]);
    }

    #[test]
    fn geometry_examples() {
        let full = BinaryMask::full(3, 3);
        let g = full.geometry().unwrap();
        assert_eq!(g.area, 9);
        assert_eq!(
            g.bbox,
            BBox {
                x: 0,
                y: 0,
                w: 3,
                h: 3
            }
        );
        assert_eq!(g.centroid, (1.0, 1.0));
        assert_eq!(g.aspect_ratio, 1.0);

        let single = block(4, 4, 2, 1, 1, 1);
        let g = single.geometry().unwrap();
        assert_eq!(g.area, 1);
        assert_eq!(
            g.bbox,
            BBox {
                x: 2,
                y: 1,
                w: 1,
                h: 1
            }
        );
        assert_eq!(g.centroid, (2.0, 1.0));

        let row = block(4, 4, 0, 0, 3, 1);
        let g = row.geometry().unwrap();
        assert_eq!(g.area, 3);
        assert_eq!(
            g.bbox,
            BBox {
                x: 0,
                y: 0,
                w: 3,
                h: 1
            }
        );
        assert_eq!(g.aspect_ratio, 3.0);
    }

    #[test]
    fn geometry_of_empty_mask() {
        let e = BinaryMask::empty(4, 4);
        assert_eq!(e.area(), 0);
        assert!(matches!(e.bbox(), Err(Error::EmptyMask)));
        assert!(matches!(e.centroid(), Err(Error::EmptyMask)));
        assert!(matches!(e.geometry(), Err(Error::EmptyMask)));
    }

    #[test]
    fn runs_spanning_rows() {
        // One-run from (2,0) through (1,2) on a 3-wide grid.
        let m = BinaryMask::from_runs(3, 3, vec![2, 5, 2]).unwrap();
        let spans: Vec<_> = m.row_spans().collect();
        assert_eq!(spans, vec![(0, 2, 3), (1, 0, 3), (2, 0, 1)]);
        assert_eq!(
            m.bbox().unwrap(),
            BBox {
                x: 0,
                y: 0,
                w: 3,
                h: 3
            }
        );
        let (cx, cy) = m.centroid().unwrap();
        // x: 2+0+1+2+0, y: 0+1+1+1+2
        assert_eq!((cx, cy), (1.0, 1.0));
    }

    #[test]
    fn mask_set_validation() {
        let a = BinaryMask::empty(2, 2).with_id(1);
        let b = BinaryMask::full(2, 2).with_id(1);
        assert!(MaskSet::new(2, 2, vec![a.clone(), b]).is_err());
        let c = BinaryMask::full(3, 2).with_id(2);
        assert!(MaskSet::new(2, 2, vec![a.clone(), c]).is_err());
        let set = MaskSet::new(2, 2, vec![a]).unwrap();
        assert!(set.get(1).is_some());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mask_pair() -> impl Strategy<Value = (u32, u32, Vec<bool>, Vec<bool>)> {
            (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
                let n = (w * h) as usize;
                (
                    Just(w),
                    Just(h),
                    proptest::collection::vec(any::<bool>(), n),
                    proptest::collection::vec(any::<bool>(), n),
                )
            })
        }

        proptest! {
            #[test]
            fn roundtrip_and_canonical((w, h, a, _b) in mask_pair()) {
                let m = BinaryMask::encode(&a, w, h).unwrap();
                prop_assert_eq!(m.decode(), a.clone());
                prop_assert_eq!(m.runs().to_vec(), scan_runs(&a));
                prop_assert_eq!(m.runs().iter().map(|&r| r as u64).sum::<u64>(), (w * h) as u64);
            }

            #[test]
            fn algebra_matches_pixel_sets((w, h, a, b) in mask_pair()) {
                let ma = BinaryMask::encode(&a, w, h).unwrap();
                let mb = BinaryMask::encode(&b, w, h).unwrap();
                let sa: HashSet<usize> = (0..a.len()).filter(|&i| a[i]).collect();
                let sb: HashSet<usize> = (0..b.len()).filter(|&i| b[i]).collect();
                let inter = sa.intersection(&sb).count() as u64;
                let uni = sa.union(&sb).count() as u64;
                prop_assert_eq!(ma.intersection_count(&mb).unwrap(), inter);
                prop_assert_eq!(ma.union(&mb).unwrap().area(), uni);
                prop_assert_eq!(uni, ma.area() + mb.area() - inter);
                let diff: Vec<bool> = (0..a.len()).map(|i| a[i] && !b[i]).collect();
                prop_assert_eq!(ma.difference(&mb).unwrap().decode(), diff);
                let iou = ma.iou(&mb).unwrap();
                prop_assert!((0.0..=1.0).contains(&iou));
                prop_assert_eq!(iou, mb.iou(&ma).unwrap());
                if !sa.is_empty() {
                    prop_assert_eq!(ma.iou(&ma).unwrap(), 1.0);
                }
            }
        }
    }
}
