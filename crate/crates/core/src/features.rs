//! Fixed-length feature vectors built from a fused instance.
//!
//! Layout (default, 60 values):
//!
//! | range  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..24  | pooled CIR magnitudes                     |
//! | 24..48 | pooled CIR phases (circular mean)         |
//! | 48     | peak magnitude                            |
//! | 49     | peak index / 51                           |
//! | 50..55 | box 1: x, y, w, h, confidence             |
//! | 55..60 | box 2: x, y, w, h, confidence             |
//!
//! The split between magnitude and phase bins is configurable as long as
//! both sum to 48.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fusion::FusedInstance;
use crate::radio::SUBCARRIERS;
use crate::{Error, Result};

pub const FEATURE_LEN: usize = 60;
/// Radio block length (pooled bins + peak value + peak index).
pub const RADIO_LEN: usize = 50;
const POOLED_LEN: usize = 48;
const BOX_LEN: usize = 5;
const PHASE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureLayout {
    magnitude_bins: usize,
    phase_bins: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout {
            magnitude_bins: 24,
            phase_bins: 24,
        }
    }
}

impl FeatureLayout {
    pub fn new(magnitude_bins: usize, phase_bins: usize) -> Result<Self> {
        if magnitude_bins + phase_bins != POOLED_LEN
            || magnitude_bins == 0
            || phase_bins == 0
            || magnitude_bins > SUBCARRIERS
            || phase_bins > SUBCARRIERS
        {
            return Err(Error::Config(format!(
                "layout needs 1..=52 magnitude and phase bins summing to {POOLED_LEN}, got {magnitude_bins}+{phase_bins}"
            )));
        }
        Ok(FeatureLayout {
            magnitude_bins,
            phase_bins,
        })
    }

    pub fn magnitude_bins(&self) -> usize {
        self.magnitude_bins
    }

    pub fn phase_bins(&self) -> usize {
        self.phase_bins
    }

    pub fn id(&self) -> String {
        format!("cir-m{}-p{}-peak-bb5x2", self.magnitude_bins, self.phase_bins)
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for FeatureLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Incompatible(format!("unknown feature layout {s:?}"));
        let rest = s.strip_prefix("cir-m").ok_or_else(bad)?;
        let rest = rest.strip_suffix("-peak-bb5x2").ok_or_else(bad)?;
        let (m, p) = rest.split_once("-p").ok_or_else(bad)?;
        let m = m.parse().map_err(|_| bad())?;
        let p = p.parse().map_err(|_| bad())?;
        FeatureLayout::new(m, p).map_err(|_| bad())
    }
}

impl TryFrom<String> for FeatureLayout {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureLayout> for String {
    fn from(l: FeatureLayout) -> String {
        l.id()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::Contract(format!(
                "feature vector needs {FEATURE_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("feature values must be finite".into()));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `[⌊52b/B⌋, ⌊52(b+1)/B⌋)` for bin `b` of `B`.
pub fn bin_edges(bins: usize, b: usize) -> (usize, usize) {
    (SUBCARRIERS * b / bins, SUBCARRIERS * (b + 1) / bins)
}

fn pool_magnitudes(cir: &[Complex64; SUBCARRIERS], bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|b| {
            let (lo, hi) = bin_edges(bins, b);
            cir[lo..hi].iter().map(|t| t.norm()).sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn pool_phases(cir: &[Complex64; SUBCARRIERS], bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|b| {
            let (lo, hi) = bin_edges(bins, b);
            // Magnitude-weighted unit phasors sum to the taps themselves.
            let sum: Complex64 = cir[lo..hi].iter().filter(|t| t.norm() >= PHASE_EPS).sum();
            if sum.norm() < PHASE_EPS {
                0.0
            } else {
                sum.arg()
            }
        })
        .collect()
}

/// Average tap magnitude and circular-mean phase per bin.
pub fn pool_cir(cir: &[Complex64; SUBCARRIERS], layout: &FeatureLayout) -> (Vec<f64>, Vec<f64>) {
    (
        pool_magnitudes(cir, layout.magnitude_bins),
        pool_phases(cir, layout.phase_bins),
    )
}

/// Peak magnitude and its index normalized to `[0, 1]` (lowest index on ties).
pub fn peak(cir: &[Complex64; SUBCARRIERS]) -> (f64, f64) {
    let mut best = 0;
    let mut value = cir[0].norm();
    for (i, t) in cir.iter().enumerate().skip(1) {
        let m = t.norm();
        if m > value {
            value = m;
            best = i;
        }
    }
    (value, best as f64 / (SUBCARRIERS - 1) as f64)
}

pub fn extract(instance: &FusedInstance, layout: &FeatureLayout) -> FeatureVector {
    let mut v = Vec::with_capacity(FEATURE_LEN);
    match &instance.cir {
        Some(c) => {
            let (mags, phases) = pool_cir(&c.taps, layout);
            v.extend(mags);
            v.extend(phases);
            let (value, index) = peak(&c.taps);
            v.push(value);
            v.push(index);
        }
        None => v.resize(RADIO_LEN, 0.0),
    }
    for slot in 0..2 {
        match instance.detections.get(slot) {
            Some(d) => v.extend([d.x, d.y, d.w, d.h, d.confidence]),
            None => v.extend([0.0; BOX_LEN]),
        }
    }
    debug_assert_eq!(v.len(), FEATURE_LEN);
    FeatureVector(v)
}
