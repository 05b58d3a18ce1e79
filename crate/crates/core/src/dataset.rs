//! Dataset CSV format and in-memory training matrices.
//!
//! One instance per line, 116 columns:
//!
//! ```text
//! timestamp_us, label,
//! cir_re_0 .. cir_re_51, cir_im_0 .. cir_im_51,
//! bb1_x, bb1_y, bb1_w, bb1_h, bb1_conf,
//! bb2_x, bb2_y, bb2_w, bb2_h, bb2_conf
//! ```
//!
//! Reals carry 9 significant digits. An instance without a CIR has an
//! all-zero radio block; a missing box is zero-filled and recognized by a
//! zero width or height.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::features::{extract, FeatureLayout, FeatureVector, FEATURE_LEN};
use crate::fusion::{FusedInstance, Label};
use crate::radio::{CirRecord, SUBCARRIERS};
use crate::vision::Detection;
use crate::{Error, Result};

pub const COLUMNS: usize = 2 + 2 * SUBCARRIERS + 10;

pub fn header() -> String {
    let mut cols = vec!["timestamp_us".to_string(), "label".to_string()];
    cols.extend((0..SUBCARRIERS).map(|i| format!("cir_re_{i}")));
    cols.extend((0..SUBCARRIERS).map(|i| format!("cir_im_{i}")));
    for b in 1..=2 {
        for f in ["x", "y", "w", "h", "conf"] {
            cols.push(format!("bb{b}_{f}"));
        }
    }
    cols.join(",")
}

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn format_row(instance: &FusedInstance) -> String {
    let mut out = Vec::with_capacity(COLUMNS);
    out.push(instance.timestamp_us.to_string());
    out.push(instance.label.value().to_string());
    let zero = [Complex64::new(0.0, 0.0); SUBCARRIERS];
    let taps = instance.cir.as_ref().map_or(&zero, |c| &c.taps);
    out.extend(taps.iter().map(|t| real(t.re)));
    out.extend(taps.iter().map(|t| real(t.im)));
    for b in 0..2 {
        match instance.detections.get(b) {
            Some(d) => out.extend([d.x, d.y, d.w, d.h, d.confidence].map(real)),
            None => out.extend(std::iter::repeat_n(real(0.0), 5)),
        }
    }
    out.join(",")
}

pub fn write_dataset<W: Write>(mut w: W, instances: &[FusedInstance]) -> Result<()> {
    writeln!(w, "{}", header())?;
    for inst in instances {
        writeln!(w, "{}", format_row(inst))?;
    }
    w.flush()?;
    Ok(())
}

/// Parse one data line; `line` is the 1-based line number used in errors.
pub fn parse_row(text: &str, line: usize) -> Result<FusedInstance> {
    let err = |message: String| Error::Parse { line, message };
    let fields: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != COLUMNS {
        return Err(err(format!("expected {COLUMNS} columns, found {}", fields.len())));
    }
    let timestamp_us: u64 = fields[0]
        .trim()
        .parse()
        .map_err(|_| err(format!("bad timestamp {:?}", fields[0])))?;
    let label = fields[1]
        .trim()
        .parse::<u8>()
        .ok()
        .and_then(|v| Label::from_value(v).ok())
        .ok_or_else(|| err(format!("bad label {:?}", fields[1])))?;
    let mut reals = Vec::with_capacity(COLUMNS - 2);
    for (i, f) in fields[2..].iter().enumerate() {
        let v: f64 = f
            .trim()
            .parse()
            .map_err(|_| err(format!("column {} is not a number: {f:?}", i + 3)))?;
        if !v.is_finite() {
            return Err(err(format!("column {} is not finite", i + 3)));
        }
        reals.push(v);
    }
    let mut taps = [Complex64::new(0.0, 0.0); SUBCARRIERS];
    for (i, t) in taps.iter_mut().enumerate() {
        *t = Complex64::new(reals[i], reals[SUBCARRIERS + i]);
    }
    let cir = taps.iter().any(|t| t.re != 0.0 || t.im != 0.0).then(|| CirRecord {
        timestamp_us,
        taps,
        snr_db: None,
    });
    let mut detections = Vec::new();
    for b in 0..2 {
        let s = &reals[2 * SUBCARRIERS + 5 * b..2 * SUBCARRIERS + 5 * b + 5];
        if s[2] > 0.0 && s[3] > 0.0 {
            if b == 1 && detections.is_empty() {
                return Err(err("box 2 present without box 1".into()));
            }
            detections.push(Detection {
                x: s[0],
                y: s[1],
                w: s[2],
                h: s[3],
                confidence: s[4],
            });
        }
    }
    Ok(FusedInstance {
        timestamp_us,
        cir,
        detections,
        label,
    })
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<FusedInstance>> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    if first.trim_end() != header() {
        return Err(Error::Parse {
            line: 1,
            message: "header does not match the dataset schema".into(),
        });
    }
    let mut out = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        out.push(parse_row(&l, i + 2)?);
    }
    Ok(out)
}

pub fn read_dataset_file(path: &std::path::Path) -> Result<Vec<FusedInstance>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_dataset(std::io::BufReader::new(f))
}

pub fn write_dataset_file(path: &std::path::Path, instances: &[FusedInstance]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(f), instances)
}

/// Feature matrix and labels of a set of instances.
pub fn training_set(instances: &[FusedInstance], layout: &FeatureLayout) -> Result<TrainingSet> {
    let pairs: Vec<(FeatureVector, Label)> = instances.iter().map(|i| (extract(i, layout), i.label)).collect();
    TrainingSet::from_pairs(&pairs)
}

/// Row-major training data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
}

impl TrainingSet {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Contract(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(TrainingSet { dim, features, labels })
    }

    pub fn from_pairs(pairs: &[(FeatureVector, Label)]) -> Result<Self> {
        let dim = pairs.first().map_or(FEATURE_LEN, |(f, _)| f.as_slice().len());
        let mut features = Vec::with_capacity(dim * pairs.len());
        for (f, _) in pairs {
            if f.as_slice().len() != dim {
                return Err(Error::Contract("feature vectors differ in length".into()));
            }
            features.extend_from_slice(f.as_slice());
        }
        TrainingSet::new(dim, features, pairs.iter().map(|(_, l)| *l).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        TrainingSet {
            dim: self.dim,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub(crate) fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|f| (0..self.len()).map(|i| self.features[i * self.dim + f]).collect())
            .collect()
    }
}
