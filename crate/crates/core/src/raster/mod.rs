//! Raster and mask primitives shared by every detection stage.

mod io;
mod mask;

pub use io::{decode_pgm, encode_pgm, Graymap, MaskDoc, MaskSetDoc};
pub use mask::{BinaryMask, MaskSet};

use std::collections::HashSet;

use crate::error::{ensure_same_dims, Error, Result};

/// Land-cover class code.
pub type ClassCode = u16;

/// Axis-aligned rectangle in pixel units; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn aspect_ratio(&self) -> f64 {
        self.w as f64 / self.h as f64
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Shape attributes of a nonempty mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub area: u64,
    pub bbox: BBox,
    pub centroid: (f64, f64),
    pub aspect_ratio: f64,
}

/// Row-major grid of class codes, e.g. rasterized map data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    width: u32,
    height: u32,
    pixels: Vec<ClassCode>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<ClassCode>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = (width as u64) * (height as u64);
        if n > u32::MAX as u64 {
            return Err(Error::InvalidParam(format!(
                "{width}x{height} exceeds the pixel limit"
            )));
        }
        if pixels.len() as u64 != n {
            return Err(Error::Dimension {
                expected_width: width,
                expected_height: height,
                found_width: pixels.len() as u32,
                found_height: 1,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
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

    pub fn pixels(&self) -> &[ClassCode] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> ClassCode {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(&Graymap {
            width: self.width,
            height: self.height,
            maxval: 65535,
            samples: self.pixels.clone(),
        })
    }

    /// Reads an 8- or 16-bit graymap as class codes.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let g = decode_pgm(bytes)?;
        Self::new(g.width, g.height, g.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegendEntry {
    pub code: ClassCode,
    pub name: String,
    pub is_background: bool,
}

/// Class legend; marks which classes are background (usable as prompts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Legend {
    entries: Vec<LegendEntry>,
}

impl Legend {
    pub fn new(entries: Vec<LegendEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Legend("legend has no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.code) {
                return Err(Error::Legend(format!("duplicate class code {}", e.code)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LegendEntry] {
        &self.entries
    }

    pub fn get(&self, code: ClassCode) -> Option<&LegendEntry> {
        self.entries.iter().find(|e| e.code == code)
    }

    pub fn is_background(&self, code: ClassCode) -> Option<bool> {
        self.get(code).map(|e| e.is_background)
    }

    pub fn background_codes(&self) -> impl Iterator<Item = ClassCode> + '_ {
        self.entries
            .iter()
            .filter(|e| e.is_background)
            .map(|e| e.code)
    }

    /// Fails if the raster uses a class code the legend does not define.
    pub fn check_raster(&self, raster: &LabelRaster) -> Result<()> {
        let known: HashSet<ClassCode> = self.entries.iter().map(|e| e.code).collect();
        for (i, c) in raster.pixels().iter().enumerate() {
            if !known.contains(c) {
                return Err(Error::Legend(format!(
                    "class code {c} at pixel ({}, {}) is not in the legend",
                    i as u32 % raster.width(),
                    i as u32 / raster.width()
                )));
            }
        }
        Ok(())
    }

    /// Parses `code,name,is_background` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Legend(format!("line {}: {what}", lineno + 1));
            let (code, rest) = line
                .split_once(',')
                .ok_or_else(|| bad("expected 3 fields"))?;
            let (name, flag) = rest
                .rsplit_once(',')
                .ok_or_else(|| bad("expected 3 fields"))?;
            let code: ClassCode = code
                .trim()
                .parse()
                .map_err(|_| bad("class code is not a 16-bit integer"))?;
            let is_background = match flag.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad("is_background must be 0 or 1")),
            };
            entries.push(LegendEntry {
                code,
                name: name.trim().to_string(),
                is_background,
            });
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# code,name,is_background\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{}\n",
                e.code, e.name, e.is_background as u8
            ));
        }
        s
    }
}

/// Binary per-pixel change map (`true` = changed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMap {
    width: u32,
    height: u32,
    changed: Vec<bool>,
}

impl ChangeMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            changed: vec![false; (width * height) as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, changed: Vec<bool>) -> Result<Self> {
        if changed.len() as u64 != width as u64 * height as u64 {
            return Err(Error::Dimension {
                expected_width: width,
                expected_height: height,
                found_width: changed.len() as u32,
                found_height: 1,
            });
        }
        Ok(Self {
            width,
            height,
            changed,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            changed: mask.decode(),
        }
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

    pub fn bits(&self) -> &[bool] {
        &self.changed
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.changed[(y * self.width + x) as usize]
    }

    pub fn count_changed(&self) -> u64 {
        self.changed.iter().filter(|&&c| c).count() as u64
    }

    /// Marks every set pixel of `mask` as changed.
    pub fn paint(&mut self, mask: &BinaryMask) -> Result<()> {
        ensure_same_dims(self.dims(), mask.dims())?;
        for (start, len) in mask.one_runs() {
            self.changed[start..start + len].fill(true);
        }
        Ok(())
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::encode(&self.changed, self.width, self.height)
            .expect("change map length matches its dimensions")
    }

    /// 8-bit graymap, 0 = unchanged and 255 = changed.
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(&Graymap {
            width: self.width,
            height: self.height,
            maxval: 255,
            samples: self
                .changed
                .iter()
                .map(|&c| if c { 255 } else { 0 })
                .collect(),
        })
    }

    /// Reads a graymap; any nonzero sample counts as changed.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let g = decode_pgm(bytes)?;
        Ok(Self {
            width: g.width,
            height: g.height,
            changed: g.samples.iter().map(|&s| s != 0).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_raster_validation() {
        assert!(LabelRaster::new(2, 2, vec![1, 2, 3]).is_err());
        assert!(LabelRaster::new(0, 2, vec![]).is_err());
        let r = LabelRaster::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(r.get(1, 1), 4);
    }

    #[test]
    fn legend_parse() {
        let text = "# comment\n1,vegetation,1\n\n2,low, dense building,0\n";
        let l = Legend::parse(text).unwrap();
        assert_eq!(l.entries().len(), 2);
        assert_eq!(l.get(2).unwrap().name, "low, dense building");
        assert_eq!(l.background_codes().collect::<Vec<_>>(), vec![1]);
        assert_eq!(Legend::parse(&l.to_text()).unwrap(), l);
    }

    #[test]
    fn legend_errors() {
        assert!(matches!(
            Legend::parse("# nothing\n"),
            Err(Error::Legend(_))
        ));
        assert!(matches!(
            Legend::parse("1,a,1\n1,b,0\n"),
            Err(Error::Legend(_))
        ));
        assert!(matches!(Legend::parse("1,a,2\n"), Err(Error::Legend(_))));
        assert!(matches!(Legend::parse("x,a,1\n"), Err(Error::Legend(_))));
        assert!(matches!(Legend::parse("1 a 1\n"), Err(Error::Legend(_))));
    }

    #[test]
    fn legend_checks_raster_codes() {
        let l = Legend::parse("1,veg,1\n2,bldg,0\n").unwrap();
        let ok = LabelRaster::new(2, 1, vec![1, 2]).unwrap();
        assert!(l.check_raster(&ok).is_ok());
        let bad = LabelRaster::new(2, 1, vec![1, 9]).unwrap();
        assert!(l.check_raster(&bad).is_err());
    }

    #[test]
    fn change_map_paint_and_roundtrip() {
        let mut cm = ChangeMap::new(3, 2);
        let m = BinaryMask::from_runs(3, 2, vec![1, 2, 3]).unwrap();
        cm.paint(&m).unwrap();
        assert_eq!(cm.count_changed(), 2);
        assert!(cm.get(1, 0) && cm.get(2, 0) && !cm.get(0, 1));
        assert_eq!(ChangeMap::from_pgm(&cm.to_pgm()).unwrap(), cm);
        assert_eq!(cm.to_mask(), m.with_id(0));
        assert!(cm.paint(&BinaryMask::empty(2, 2)).is_err());
    }

    #[test]
    fn label_raster_pgm_is_16_bit() {
        let r = LabelRaster::new(1, 1, vec![7]).unwrap();
        let bytes = r.to_pgm();
        assert_eq!(bytes, b"P5\n1 1\n65535\n\x00\x07".to_vec());
        assert_eq!(LabelRaster::from_pgm(&bytes).unwrap(), r);
    }
}
