//! Change-map fusion and accuracy assessment.
//!
//! The changed class is the positive class. Overall accuracy, F1 and Cohen's
//! kappa are computed from the pixel confusion matrix.

use crate::error::{ensure_same_dims, Result};
use crate::raster::ChangeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub oa: f64,
    pub f1: f64,
    pub kc: f64,
}

impl MetricsRecord {
    /// Derives OA, F1 and kappa from confusion counts. F1 is 0 when there
    /// are no positives in either map; kappa is 0 when chance agreement is 1.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let total = (tp + fp + fn_ + tn) as f64;
        let (tpf, fpf, fnf, tnf) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
        let oa = if total > 0.0 {
            (tpf + tnf) / total
        } else {
            0.0
        };
        let f1_den = 2.0 * tpf + fpf + fnf;
        let f1 = if f1_den > 0.0 {
            2.0 * tpf / f1_den
        } else {
            0.0
        };
        let pe = if total > 0.0 {
            ((tpf + fnf) * (tpf + fpf) + (fpf + tnf) * (fnf + tnf)) / (total * total)
        } else {
            1.0
        };
        let kc = if pe >= 1.0 {
            0.0
        } else {
            (oa - pe) / (1.0 - pe)
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            oa,
            f1,
            kc,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `dataset,tp,fp,fn,tn,oa,f1,kc` data row (no header), ratios to 6 places.
    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{dataset},{},{},{},{},{},{},{}",
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            fmt6(self.oa),
            fmt6(self.f1),
            fmt6(self.kc)
        )
    }
}

pub const METRICS_CSV_HEADER: &str = "dataset,tp,fp,fn,tn,oa,f1,kc";

fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    // no "-0.000000"
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Pixelwise OR.
pub fn fuse(a: &ChangeMap, b: &ChangeMap) -> Result<ChangeMap> {
    ensure_same_dims(a.dims(), b.dims())?;
    let bits = a
        .bits()
        .iter()
        .zip(b.bits())
        .map(|(&x, &y)| x || y)
        .collect();
    ChangeMap::from_bits(a.width(), a.height(), bits)
}

/// Scores `pred` against `truth`.
pub fn evaluate(pred: &ChangeMap, truth: &ChangeMap) -> Result<MetricsRecord> {
    ensure_same_dims(truth.dims(), pred.dims())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(MetricsRecord::from_counts(tp, fp, fn_, tn))
}
