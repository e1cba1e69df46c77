//! Binary graymap (`P5`) codec and the mask-set JSON document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BinaryMask, MaskSet};

/// Decoded graymap samples; 8-bit files are widened to `u16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

/// Writes the canonical form: `P5\n<w> <h>\n<maxval>\n` then raw samples,
/// big-endian when `maxval` is 65535.
pub fn encode_pgm(g: &Graymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", g.width, g.height, g.maxval).into_bytes();
    if g.maxval > 255 {
        out.reserve(g.samples.len() * 2);
        for &s in &g.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(g.samples.iter().map(|&s| s as u8));
    }
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<(u64, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        let value = text
            .parse::<u64>()
            .map_err(|_| Error::format(start, format!("{what} out of range")))?;
        Ok((value, start))
    }
}

/// Parses a binary graymap. Errors carry the byte offset of the problem.
pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "missing P5 magic number"));
    }
    let mut r = HeaderReader { bytes, pos: 2 };
    if !r.bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(2, "expected whitespace after magic number"));
    }
    let (width, wpos) = r.number("width")?;
    let (height, hpos) = r.number("height")?;
    let (maxval, mpos) = r.number("maxval")?;
    if width == 0 || width > u32::MAX as u64 {
        return Err(Error::format(wpos, format!("invalid width {width}")));
    }
    if height == 0 || height > u32::MAX as u64 {
        return Err(Error::format(hpos, format!("invalid height {height}")));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::format(
            mpos,
            format!("maxval {maxval} not supported (expected 255 or 65535)"),
        ));
    }
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => {
            return Err(Error::format(
                r.pos,
                "expected single whitespace after maxval",
            ))
        }
    }
    let n = width * height;
    if n > u32::MAX as u64 {
        return Err(Error::format(
            wpos,
            format!("{width}x{height} exceeds the pixel limit"),
        ));
    }
    let bps = if maxval == 65535 { 2 } else { 1 };
    let data = &bytes[r.pos..];
    let need = (n * bps) as usize;
    if data.len() < need {
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated pixel data: {} of {need} bytes present",
                data.len()
            ),
        ));
    }
    if data.len() > need {
        return Err(Error::format(
            r.pos + need,
            "trailing bytes after pixel data",
        ));
    }
    let samples = if bps == 2 {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    Ok(Graymap {
        width: width as u32,
        height: height as u32,
        maxval: maxval as u16,
        samples,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskDoc {
    pub id: u32,
    #[serde(default = "default_score")]
    pub score: f64,
    pub runs: Vec<u32>,
}

fn default_score() -> f64 {
    1.0
}

/// `{ "width": W, "height": H, "masks": [ { "id", "score", "runs" }, ... ] }`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskSetDoc {
    pub width: u32,
    pub height: u32,
    pub masks: Vec<MaskDoc>,
}

impl MaskSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MaskSetDoc = serde_json::from_str(text)?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&MaskSetDoc::from(self)).expect("mask set serializes");
        s.push('\n');
        s
    }
}

impl TryFrom<MaskSetDoc> for MaskSet {
    type Error = Error;

    fn try_from(doc: MaskSetDoc) -> Result<Self> {
        let masks = doc
            .masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                if !(0.0..=1.0).contains(&m.score) {
                    return Err(Error::CorruptMask(format!(
                        "masks[{i}] (id {}): score {} outside [0, 1]",
                        m.id, m.score
                    )));
                }
                BinaryMask::from_runs(doc.width, doc.height, m.runs)
                    .map(|b| b.with_id(m.id).with_score(m.score))
                    .map_err(|e| Error::CorruptMask(format!("masks[{i}] (id {}): {e}", m.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        MaskSet::new(doc.width, doc.height, masks)
    }
}

impl From<&MaskSet> for MaskSetDoc {
    fn from(set: &MaskSet) -> Self {
        MaskSetDoc {
            width: set.width(),
            height: set.height(),
            masks: set
                .masks()
                .iter()
                .map(|m| MaskDoc {
                    id: m.id(),
                    score: m.score(),
                    runs: m.runs().to_vec(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_single_16_bit_sample() {
        let g = Graymap {
            width: 1,
            height: 1,
            maxval: 65535,
            samples: vec![7],
        };
        let bytes = encode_pgm(&g);
        let header = b"P5\n1 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0x00, 0x07]);
        assert_eq!(decode_pgm(&bytes).unwrap(), g);
    }

    #[test]
    fn truncated_file_reports_first_missing_byte() {
        let mut bytes = b"P5\n4 4\n65535\n".to_vec();
        let header_len = bytes.len();
        bytes.extend(std::iter::repeat_n(0u8, 16)); // 8 of 16 samples
        match decode_pgm(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, header_len + 16),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let err_offset = |b: &[u8]| match decode_pgm(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(err_offset(b"P6\n1 1\n255\n\0"), 0);
        assert_eq!(err_offset(b"P5\n1 1\n1023\n\0\0"), 7);
        assert_eq!(err_offset(b"P5\n0 1\n255\n"), 3);
        assert_eq!(err_offset(b"P5\nx 1\n255\n\0"), 3);
        assert_eq!(err_offset(b"P5\n1 1\n255\n\0\0"), 12);
    }

    #[test]
    fn header_comments_are_skipped() {
        let g = decode_pgm(b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(g.samples, vec![0, 255]);
        assert_eq!(g.maxval, 255);
    }

    #[test]
    fn mask_set_json() {
        let text = r#"{"width":3,"height":2,"masks":[{"id":4,"runs":[1,2,2,1]},{"id":9,"score":0.5,"runs":[6]}]}"#;
        let set = MaskSet::from_json(text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.masks()[0].score(), 1.0);
        assert_eq!(set.get(9).unwrap().score(), 0.5);
        assert_eq!(MaskSet::from_json(&set.to_json()).unwrap(), set);
    }

    #[test]
    fn mask_set_json_errors() {
        let bad_sum = r#"{"width":3,"height":2,"masks":[{"id":4,"runs":[1,2]}]}"#;
        let err = MaskSet::from_json(bad_sum).unwrap_err().to_string();
        assert!(err.contains("masks[0]"), "{err}");
        let dup = r#"{"width":1,"height":1,"masks":[{"id":1,"runs":[1]},{"id":1,"runs":[1]}]}"#;
        assert!(MaskSet::from_json(dup).is_err());
        let score = r#"{"width":1,"height":1,"masks":[{"id":1,"score":1.5,"runs":[1]}]}"#;
        assert!(MaskSet::from_json(score).is_err());
        assert!(matches!(MaskSet::from_json("{"), Err(Error::Json(_))));
    }
}
