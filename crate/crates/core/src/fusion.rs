//! Preprocessing: timestamp merge of the radio and vision streams, purge of
//! failed CIR estimates, and label assignment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::radio::CirRecord;
use crate::vision::{Detection, VisionRecord};
use crate::{Error, Result};

/// Which situation an instance shows: nobody transmitting, or the device in
/// box 1 or box 2 transmitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NoTx = 0,
    Bb1 = 1,
    Bb2 = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::NoTx, Label::Bb1, Label::Bb2];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_value(v: u8) -> Result<Label> {
        match v {
            0 => Ok(Label::NoTx),
            1 => Ok(Label::Bb1),
            2 => Ok(Label::Bb2),
            _ => Err(Error::DataCorruption(format!("label {v} is not in {{0, 1, 2}}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::NoTx => "NO TX",
            Label::Bb1 => "BBOX 1",
            Label::Bb2 => "BBOX 2",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub tolerance_us: u64,
    /// Purge threshold δ. `None` derives it from the training data
    /// ([`auto_purge_threshold`]).
    pub purge_threshold: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            tolerance_us: 50_000,
            purge_threshold: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance_us == 0 {
            return Err(Error::Config("match tolerance must be positive".into()));
        }
        if let Some(d) = self.purge_threshold {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("purge threshold must be a nonnegative real, got {d}")));
            }
        }
        Ok(())
    }
}

/// A merged radio + vision instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedInstance {
    pub timestamp_us: u64,
    /// `None` when nobody transmits; the radio features are then zero.
    pub cir: Option<CirRecord>,
    pub detections: Vec<Detection>,
    pub label: Label,
}

/// Map the vision ground truth to a training label.
pub fn assign_label(record: &VisionRecord) -> Result<Label> {
    match record.truth {
        None => Ok(Label::NoTx),
        Some(i) if i >= record.detections.len() => Err(Error::DataCorruption(format!(
            "truth index {i} but only {} detections at t={} µs",
            record.detections.len(),
            record.timestamp_us
        ))),
        Some(0) => Ok(Label::Bb1),
        Some(1) => Ok(Label::Bb2),
        Some(i) => Err(Error::DataCorruption(format!("truth index {i} has no label (at most two boxes)"))),
    }
}

fn check_sorted(name: &str, ts: impl Iterator<Item = u64>) -> Result<()> {
    let mut prev: Option<u64> = None;
    for (i, t) in ts.enumerate() {
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::Contract(format!(
                    "{name} stream is not strictly increasing at record {i} ({t} µs after {p} µs)"
                )));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Pair every vision record with the nearest unused radio record within
/// tolerance.
///
/// Vision records without a transmitter become zero-radio `NO TX`
/// instances. Vision records with a transmitter but no radio record in
/// range are dropped, as are radio records nobody claims.
pub fn merge(radio: &[CirRecord], vision: &[VisionRecord], cfg: &FusionConfig) -> Result<Vec<FusedInstance>> {
    cfg.validate()?;
    check_sorted("radio", radio.iter().map(|r| r.timestamp_us))?;
    check_sorted("vision", vision.iter().map(|v| v.timestamp_us))?;

    let mut used = vec![false; radio.len()];
    let mut out = Vec::with_capacity(vision.len());
    for v in vision {
        let label = assign_label(v)?;
        if label == Label::NoTx {
            out.push(FusedInstance {
                timestamp_us: v.timestamp_us,
                cir: None,
                detections: v.detections.clone(),
                label,
            });
            continue;
        }
        let t = v.timestamp_us;
        let split = radio.partition_point(|r| r.timestamp_us < t);
        let mut best: Option<(u64, usize)> = None;
        // Scan outwards in both directions while inside the tolerance.
        for i in (0..split).rev() {
            let gap = t - radio[i].timestamp_us;
            if gap > cfg.tolerance_us {
                break;
            }
            if !used[i] {
                best = Some((gap, i));
                break;
            }
        }
        for (i, r) in radio.iter().enumerate().skip(split) {
            let gap = r.timestamp_us - t;
            if gap > cfg.tolerance_us {
                break;
            }
            if !used[i] {
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, i));
                }
                break;
            }
        }
        if let Some((_, i)) = best {
            used[i] = true;
            out.push(FusedInstance {
                timestamp_us: t,
                cir: Some(radio[i].clone()),
                detections: v.detections.clone(),
                label,
            });
        }
    }
    Ok(out)
}

/// Drop instances whose CIR peak magnitude is below `delta`. Zero-radio
/// instances are always kept.
pub fn purge(instances: Vec<FusedInstance>, delta: f64) -> Result<Vec<FusedInstance>> {
    if !(delta >= 0.0) {
        return Err(Error::Contract(format!("purge threshold must be nonnegative, got {delta}")));
    }
    Ok(instances
        .into_iter()
        .filter(|inst| inst.cir.as_ref().is_none_or(|c| c.peak_magnitude() >= delta))
        .collect())
}

/// Fraction of the median peak magnitude used as the default δ.
pub const AUTO_PURGE_FRACTION: f64 = 0.05;

/// `0.05 ×` the median CIR peak magnitude over instances carrying a CIR,
/// or 0 when there are none.
pub fn auto_purge_threshold<'a>(instances: impl IntoIterator<Item = &'a FusedInstance>) -> f64 {
    let mut peaks: Vec<f64> = instances
        .into_iter()
        .filter_map(|i| i.cir.as_ref().map(|c| c.peak_magnitude()))
        .collect();
    if peaks.is_empty() {
        return 0.0;
    }
    peaks.sort_by(f64::total_cmp);
    let n = peaks.len();
    let median = if n % 2 == 1 {
        peaks[n / 2]
    } else {
        0.5 * (peaks[n / 2 - 1] + peaks[n / 2])
    };
    AUTO_PURGE_FRACTION * median
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::SUBCARRIERS;
    use crate::vision::reassess_ordering;
    use num_complex::Complex64;

    fn cir(ts: u64, peak: f64) -> CirRecord {
        let mut taps = [Complex64::new(0.0, 0.0); SUBCARRIERS];
        taps[3] = Complex64::new(0.0, peak);
        CirRecord {
            timestamp_us: ts,
            taps,
            snr_db: None,
        }
    }

    fn det(x: f64) -> Detection {
        Detection {
            x,
            y: 0.4,
            w: 0.05,
            h: 0.08,
            confidence: 0.995,
        }
    }

    fn vis(ts: u64, truth: Option<usize>) -> VisionRecord {
        VisionRecord {
            timestamp_us: ts,
            detections: vec![det(0.2), det(0.6)],
            truth,
        }
    }

    #[test]
    fn labels_follow_truth() {
        assert_eq!(assign_label(&vis(0, Some(0))).unwrap(), Label::Bb1);
        assert_eq!(assign_label(&vis(0, Some(1))).unwrap(), Label::Bb2);
        assert_eq!(assign_label(&vis(0, None)).unwrap(), Label::NoTx);
        assert!(matches!(assign_label(&vis(0, Some(2))), Err(Error::DataCorruption(_))));
        assert_eq!(Label::NoTx.name(), "NO TX");
        assert_eq!(Label::from_value(2).unwrap(), Label::Bb2);
        assert!(Label::from_value(3).is_err());
    }

    #[test]
    fn close_timestamps_match() {
        let out = merge(&[cir(1_000, 1.0)], &[vis(1_020, Some(0))], &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, Label::Bb1);
        assert_eq!(out[0].cir.as_ref().unwrap().timestamp_us, 1_000);
    }

    #[test]
    fn far_radio_is_not_matched() {
        let out = merge(&[cir(1_000, 1.0)], &[vis(61_000, Some(1))], &FusionConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn idle_frames_become_zero_radio_instances() {
        let out = merge(&[cir(1_000, 1.0)], &[vis(1_010, None)], &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, Label::NoTx);
        assert!(out[0].cir.is_none());
    }

    #[test]
    fn radio_record_matches_at_most_once() {
        let radio = [cir(10_000, 1.0), cir(40_000, 1.0)];
        let vision = [vis(11_000, Some(0)), vis(12_000, Some(0)), vis(13_000, Some(0))];
        let out = merge(&radio, &vision, &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].cir.as_ref().unwrap().timestamp_us, 10_000);
        assert_eq!(out[1].cir.as_ref().unwrap().timestamp_us, 40_000);
    }

    #[test]
    fn unsorted_streams_are_rejected() {
        let err = merge(&[cir(2, 1.0), cir(1, 1.0)], &[], &FusionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err = merge(&[], &[vis(5, None), vis(5, None)], &FusionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn inst(peak: Option<f64>) -> FusedInstance {
        FusedInstance {
            timestamp_us: 0,
            cir: peak.map(|p| cir(0, p)),
            detections: vec![det(0.2)],
            label: if peak.is_some() { Label::Bb1 } else { Label::NoTx },
        }
    }

    #[test]
    fn purge_threshold_behaviour() {
        assert!(purge(vec![inst(Some(0.01))], 0.05).unwrap().is_empty());
        assert_eq!(purge(vec![inst(Some(0.0)), inst(Some(0.01))], 0.0).unwrap().len(), 2);
        assert_eq!(purge(vec![inst(None)], 10.0).unwrap().len(), 1);
        assert!(purge(vec![], -1.0).is_err());
    }

    #[test]
    fn auto_threshold_is_five_percent_of_median() {
        let v = [inst(Some(1.0)), inst(Some(3.0)), inst(Some(2.0)), inst(None)];
        assert!((auto_purge_threshold(&v) - 0.1).abs() < 1e-15);
        assert_eq!(auto_purge_threshold(&[inst(None)]), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn purge_matches_linear_scan(peaks in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 0..60), delta in 0.0f64..1.0) {
            let batch: Vec<FusedInstance> = peaks.iter().map(|p| inst(*p)).collect();
            let mut expected = 0;
            for p in &peaks {
                match p {
                    None => expected += 1,
                    Some(v) if *v >= delta => expected += 1,
                    _ => {}
                }
            }
            let out = purge(batch, delta).unwrap();
            proptest::prop_assert_eq!(out.len(), expected);
            let idle_in = peaks.iter().filter(|p| p.is_none()).count();
            proptest::prop_assert_eq!(out.iter().filter(|i| i.label == Label::NoTx).count(), idle_in);
        }

        #[test]
        fn merged_pairs_respect_tolerance(
            radio_gaps in proptest::collection::vec(1u64..30_000, 1..40),
            vision_gaps in proptest::collection::vec(1u64..40_000, 1..40),
            active in proptest::collection::vec(proptest::option::of(0usize..2), 40),
        ) {
            let mut t = 0;
            let radio: Vec<CirRecord> = radio_gaps.iter().map(|g| { t += g; cir(t, 1.0) }).collect();
            let mut t = 0;
            let vision: Vec<VisionRecord> = vision_gaps.iter().zip(&active).map(|(g, a)| { t += g; vis(t, *a) }).collect();
            let cfg = FusionConfig::default();
            let out = merge(&radio, &vision, &cfg).unwrap();
            for w in out.windows(2) {
                proptest::prop_assert!(w[0].timestamp_us <= w[1].timestamp_us);
            }
            let mut seen = std::collections::HashSet::new();
            for i in &out {
                if let Some(c) = &i.cir {
                    proptest::prop_assert!(c.timestamp_us.abs_diff(i.timestamp_us) <= cfg.tolerance_us);
                    proptest::prop_assert!(seen.insert(c.timestamp_us));
                }
            }
        }

        #[test]
        fn label_is_stable_under_reordering(truth in 0usize..2) {
            let record = VisionRecord { timestamp_us: 0, detections: vec![det(0.7), det(0.1)], truth: Some(truth) };
            let fixed = reassess_ordering(&record);
            let label = assign_label(&fixed).unwrap();
            // The labelled box is the same physical detection.
            let named = fixed.detections[label.index() - 1];
            proptest::prop_assert_eq!(named, record.detections[truth]);
        }
    }
}
