//! Versioned JSON model files.
//!
//! ```json
//! {
//!   "format": "visradio-model",
//!   "version": 1,
//!   "kind": "forest" | "mlp",
//!   "feature_layout": "cir-m24-p24-peak-bb5x2",
//!   "forest": { ... } | "mlp": { ... }
//! }
//! ```
//!
//! Network parameters are row-major arrays of decimal strings with 17
//! significant digits, which round-trip 64-bit reals exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureLayout, FeatureVector};
use crate::forest::ForestModel;
use crate::fusion::Label;
use crate::mlp::{Dense, LayerSummary, MlpModel, LAYER_SIZES, PARAMETER_COUNT};
use crate::{Error, Result};

pub const FORMAT: &str = "visradio-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Forest(_) => "forest",
            Classifier::Mlp(_) => "mlp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub layout: FeatureLayout,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn predict(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        match &self.classifier {
            Classifier::Forest(f) => Ok(f.predict(x.as_slice())),
            Classifier::Mlp(m) => m.predict(x.as_slice()),
        }
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<[f64; 3]> {
        match &self.classifier {
            Classifier::Forest(f) => Ok(f.predict_proba(x.as_slice())),
            Classifier::Mlp(m) => m.predict_proba(x.as_slice()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let (forest, mlp) = match &self.classifier {
            Classifier::Forest(f) => (Some(f.clone()), None),
            Classifier::Mlp(m) => (None, Some(MlpRecord::from_model(m))),
        };
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            kind: self.classifier.kind().into(),
            feature_layout: self.layout.id(),
            forest,
            mlp,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Incompatible(format!("not a model file (format {:?})", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Incompatible(format!(
                "model file version {} is not supported (expected {VERSION})",
                file.version
            )));
        }
        let layout: FeatureLayout = file.feature_layout.parse()?;
        let classifier = match (file.kind.as_str(), file.forest, file.mlp) {
            ("forest", Some(f), None) => {
                if f.trees.is_empty() || f.trees.len() != f.params.n_trees {
                    return Err(Error::DataCorruption("forest tree count mismatch".into()));
                }
                for t in &f.trees {
                    t.validate(crate::features::FEATURE_LEN)?;
                }
                Classifier::Forest(f)
            }
            ("mlp", None, Some(m)) => Classifier::Mlp(m.into_model()?),
            (kind, _, _) => {
                return Err(Error::Incompatible(format!("model kind {kind:?} does not match its body")));
            }
        };
        Ok(TrainedModel {
            layout,
            classifier,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        TrainedModel::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    kind: String,
    feature_layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forest: Option<ForestModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mlp: Option<MlpRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRecord {
    parameter_count: usize,
    layers: Vec<LayerSummary>,
    input_mean: Vec<String>,
    input_scale: Vec<String>,
    dense: Vec<DenseRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseRecord {
    shape: [usize; 2],
    weights: Vec<String>,
    bias: Vec<String>,
}

fn encode(v: f64) -> String {
    format!("{v:.16e}")
}

fn decode(values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::DataCorruption(format!("bad parameter {s:?}")))
        })
        .collect()
}

impl MlpRecord {
    fn from_model(m: &MlpModel) -> Self {
        MlpRecord {
            parameter_count: m.parameter_count(),
            layers: m.layer_summary(),
            input_mean: m.input_mean.iter().map(|&v| encode(v)).collect(),
            input_scale: m.input_scale.iter().map(|&v| encode(v)).collect(),
            dense: m
                .layers
                .iter()
                .map(|d| DenseRecord {
                    shape: [d.weights.nrows(), d.weights.ncols()],
                    // iter() walks a standard-layout array in row-major order
                    weights: d.weights.iter().map(|&v| encode(v)).collect(),
                    bias: d.bias.iter().map(|&v| encode(v)).collect(),
                })
                .collect(),
        }
    }

    fn into_model(self) -> Result<MlpModel> {
        if self.parameter_count != PARAMETER_COUNT {
            return Err(Error::Incompatible(format!(
                "network has {} parameters, expected {PARAMETER_COUNT}",
                self.parameter_count
            )));
        }
        if self.dense.len() != LAYER_SIZES.len() - 1 {
            return Err(Error::DataCorruption("wrong number of dense layers".into()));
        }
        let mut layers = Vec::new();
        for (d, w) in self.dense.iter().zip(LAYER_SIZES.windows(2)) {
            if d.shape != [w[0], w[1]] {
                return Err(Error::DataCorruption(format!("layer shape {:?} should be {:?}", d.shape, [w[0], w[1]])));
            }
            let weights = Array2::from_shape_vec((w[0], w[1]), decode(&d.weights)?)
                .map_err(|e| Error::DataCorruption(format!("weights: {e}")))?;
            let bias = decode(&d.bias)?;
            if bias.len() != w[1] {
                return Err(Error::DataCorruption("bias length mismatch".into()));
            }
            layers.push(Dense {
                weights,
                bias: Array1::from(bias),
            });
        }
        let model = MlpModel {
            layers,
            input_mean: decode(&self.input_mean)?,
            input_scale: decode(&self.input_scale)?,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrainingSet;
    use crate::forest::{fit_forest, ForestParams, TreeOptions};
    use crate::rng::rng_from;
    use rand::Rng;

    fn data() -> TrainingSet {
        let mut rng = rng_from(0);
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..60 {
            let label = Label::ALL[i % 3];
            let mut row: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            row[label.index()] += 2.0;
            f.extend(row);
            l.push(label);
        }
        TrainingSet::new(60, f, l).unwrap()
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let mut m = MlpModel::init(4);
        m.input_mean[3] = 0.1 + 0.2;
        m.input_scale[7] = std::f64::consts::PI;
        let tm = TrainedModel {
            layout: FeatureLayout::default(),
            classifier: Classifier::Mlp(m),
        };
        let json = tm.to_json().unwrap();
        assert!(json.contains("\"parameter_count\": 56963"));
        let back = TrainedModel::from_json(&json).unwrap();
        assert_eq!(back, tm);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn forest_round_trip_is_exact() {
        let f = fit_forest(&data(), ForestParams { n_trees: 3, max_depth: 5 }, TreeOptions::default(), 2).unwrap();
        let tm = TrainedModel {
            layout: FeatureLayout::default(),
            classifier: Classifier::Forest(f),
        };
        let json = tm.to_json().unwrap();
        assert_eq!(TrainedModel::from_json(&json).unwrap(), tm);
    }

    #[test]
    fn rejects_foreign_or_damaged_files() {
        let tm = TrainedModel {
            layout: FeatureLayout::default(),
            classifier: Classifier::Mlp(MlpModel::init(0)),
        };
        let json = tm.to_json().unwrap();
        let v2 = json.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(TrainedModel::from_json(&v2), Err(Error::Incompatible(_))));
        let layout = json.replacen("cir-m24-p24", "cir-m20-p20", 1);
        assert!(matches!(TrainedModel::from_json(&layout), Err(Error::Incompatible(_))));
        let kind = json.replacen("\"kind\": \"mlp\"", "\"kind\": \"forest\"", 1);
        assert!(matches!(TrainedModel::from_json(&kind), Err(Error::Incompatible(_))));
        assert!(matches!(TrainedModel::from_json("{"), Err(Error::Json(_))));
        let pos = json.find("\"weights\": [\n").unwrap() + "\"weights\": [\n".len();
        let end = pos + json[pos..].find(',').unwrap();
        let mut damaged = json.clone();
        damaged.replace_range(pos..end, "\"oops\"");
        assert!(matches!(TrainedModel::from_json(&damaged), Err(Error::DataCorruption(_))));
    }
}
