//! End-to-end experiment harness: dataset generation for a setup, training
//! of either classifier family, evaluation, single-record inference and
//! report tables. The command-line tool is a thin layer over this module.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_row, training_set};
use crate::eval::{associate, log_loss, micro_metrics, per_class, Association, ClassRow, ConfusionMatrix, MetricsReport};
use crate::features::{extract, FeatureLayout};
use crate::forest::{grid_search_cv, CvReport, Grid, TreeOptions};
use crate::fusion::{auto_purge_threshold, merge, purge, FusedInstance, FusionConfig, Label};
use crate::mlp::{train, LayerSummary, MlpModel, TrainConfig};
use crate::model_file::{Classifier, TrainedModel};
use crate::radio::{
    apply_channel, channel_frequency_response, sample_profile, CirEstimator, CirRecord, EnvironmentProfile, Noise,
    PilotFrame, Setup,
};
use crate::rng::{derive, rng_from, SimRng};
use crate::vision::{detect, step_scene, Camera, MotionModel, Scene, VisionRecord};
use crate::{Error, Result};

/// Scale applied to the campaign sizes for the default instance counts.
pub const DEFAULT_SCALE: f64 = 0.1;

/// One step of the transmission schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// Index of the transmitting device, or `None` for silence.
    pub transmitter: Option<usize>,
    pub duration_ms: u64,
}

/// Timing, schedule and sensor parameters of the synthetic testbed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationParams {
    pub vision_period_us: u64,
    pub radio_period_us: u64,
    /// Cycled round-robin.
    pub schedule: Vec<Phase>,
    pub camera: Camera,
    pub motion: MotionModel,
    /// Schedule cycles simulated and merged at a time.
    pub block_cycles: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            vision_period_us: 33_000,
            radio_period_us: 10_000,
            schedule: vec![
                Phase {
                    transmitter: Some(0),
                    duration_ms: 2_000,
                },
                Phase {
                    transmitter: Some(1),
                    duration_ms: 2_000,
                },
                Phase {
                    transmitter: None,
                    duration_ms: 1_000,
                },
            ],
            camera: Camera::default(),
            motion: MotionModel::default(),
            block_cycles: 10,
        }
    }
}

impl SimulationParams {
    fn cycle_us(&self) -> u64 {
        self.schedule.iter().map(|p| p.duration_ms * 1_000).sum()
    }

    /// Transmitter scheduled at time `t_us`.
    pub fn transmitter_at(&self, t_us: u64) -> Option<usize> {
        let mut pos = t_us % self.cycle_us();
        for p in &self.schedule {
            let d = p.duration_ms * 1_000;
            if pos < d {
                return p.transmitter;
            }
            pos -= d;
        }
        unreachable!("position lies inside the cycle")
    }

    pub fn validate(&self) -> Result<()> {
        if self.vision_period_us == 0 || self.radio_period_us == 0 {
            return Err(Error::Config("frame periods must be positive".into()));
        }
        if self.schedule.is_empty() || self.cycle_us() == 0 {
            return Err(Error::Config("schedule needs at least one phase of positive duration".into()));
        }
        if self.schedule.iter().any(|p| p.transmitter.is_some_and(|t| t > 1)) {
            return Err(Error::Config("schedule names a device other than 0 or 1".into()));
        }
        if self.block_cycles == 0 {
            return Err(Error::Config("block_cycles must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub scene: u64,
    pub channel: u64,
    pub training: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            scene: 1,
            channel: 2,
            training: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub grid: Grid,
    pub folds: usize,
    pub tree_options: TreeOptions,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            grid: Grid::default(),
            folds: 10,
            tree_options: TreeOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        MlpSettings {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
        }
    }
}

/// A complete experiment description. Every field has a default, so a
/// JSON config only needs the fields it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setup: Setup,
    /// Defaults to the setup's campaign size scaled by [`DEFAULT_SCALE`].
    pub train_count: Option<usize>,
    pub validation_count: Option<usize>,
    pub seeds: Seeds,
    pub fusion: FusionConfig,
    pub feature_layout: FeatureLayout,
    /// Defaults to the setup's preset.
    pub environment: Option<EnvironmentProfile>,
    pub simulation: SimulationParams,
    pub forest: ForestConfig,
    pub mlp: MlpSettings,
    /// Training runs averaged in the timing report.
    pub timing_repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_setup(Setup::Setup1)
    }
}

impl ExperimentConfig {
    pub fn for_setup(setup: Setup) -> Self {
        ExperimentConfig {
            setup,
            train_count: None,
            validation_count: None,
            seeds: Seeds::default(),
            fusion: FusionConfig::default(),
            feature_layout: FeatureLayout::default(),
            environment: None,
            simulation: SimulationParams::default(),
            forest: ForestConfig::default(),
            mlp: MlpSettings::default(),
            timing_repetitions: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// (training, validation) instance counts.
    pub fn counts(&self) -> (usize, usize) {
        let (t, v) = self.setup.scaled_size(DEFAULT_SCALE);
        (self.train_count.unwrap_or(t), self.validation_count.unwrap_or(v))
    }

    pub fn environment(&self) -> EnvironmentProfile {
        self.environment.clone().unwrap_or_else(|| EnvironmentProfile::preset(self.setup))
    }

    /// The same config with every defaulted field spelled out.
    pub fn resolved(&self) -> Self {
        let (t, v) = self.counts();
        ExperimentConfig {
            train_count: Some(t),
            validation_count: Some(v),
            environment: Some(self.environment()),
            ..self.clone()
        }
    }

    pub fn mlp_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.mlp.epochs,
            learning_rate: self.mlp.learning_rate,
            batch_size: self.mlp.batch_size,
            seed: derive(self.seeds.training, MLP_TRAIN_STREAM),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t, v) = self.counts();
        if t == 0 || v == 0 {
            return Err(Error::Config("instance counts must be positive".into()));
        }
        self.fusion.validate()?;
        self.environment().validate()?;
        self.simulation.validate()?;
        self.forest.grid.validate()?;
        if self.forest.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        self.mlp_train_config().validate()?;
        if self.timing_repetitions == 0 {
            return Err(Error::Config("timing_repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

const MLP_INIT_STREAM: u64 = 0x1417;
const MLP_TRAIN_STREAM: u64 = 0x7EA1;
const FOREST_STREAM: u64 = 0xF0E5;

/// Bookkeeping for one generated data set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub simulated_seconds: f64,
    pub vision_frames: usize,
    pub radio_frames: usize,
    pub sync_failures: usize,
    pub merged: usize,
    pub purged: usize,
    pub emitted: usize,
    /// Emitted instances per label, `X = 0, 1, 2`.
    pub class_counts: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub config: ExperimentConfig,
    pub purge_threshold: f64,
    pub train: SegmentStats,
    pub validation: SegmentStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub train: Vec<FusedInstance>,
    pub validation: Vec<FusedInstance>,
    pub report: GenerationReport,
}

/// Radio + vision simulation of one data set, advanced block by block.
struct Simulator {
    env: EnvironmentProfile,
    params: SimulationParams,
    scene: Scene,
    scene_rng: SimRng,
    channel_rng: SimRng,
    estimator: CirEstimator,
    frame: PilotFrame,
    block_start: u64,
    stats: SegmentStats,
}

impl Simulator {
    fn new(cfg: &ExperimentConfig, segment: u64) -> Self {
        let env = cfg.environment();
        let mut scene_rng = rng_from(derive(cfg.seeds.scene, segment));
        let scene = Scene::random(env.survey_area, cfg.simulation.motion, &mut scene_rng);
        Simulator {
            env,
            params: cfg.simulation.clone(),
            scene,
            scene_rng,
            channel_rng: rng_from(derive(cfg.seeds.channel, segment)),
            estimator: CirEstimator::new(),
            frame: PilotFrame::default(),
            block_start: 0,
            stats: SegmentStats::default(),
        }
    }

    fn radio_frame(&mut self, t: u64, device: usize) -> Result<CirRecord> {
        let rng = &mut self.channel_rng;
        let position = self.scene.devices[device].position;
        let profile = sample_profile(&self.env, position, rng)?;
        let mut h = channel_frequency_response(&profile, &self.frame);
        if rng.random_bool(self.env.sync_failure_rate) {
            // A missed frame start leaves little more than noise.
            h.iter_mut().for_each(|v| *v *= 1e-3);
            self.stats.sync_failures += 1;
        }
        let z: f64 = rng.sample(StandardNormal);
        let snr_db = self.env.snr_db_mean + self.env.snr_db_std * z;
        let y = apply_channel(&self.frame, &h, Noise::SnrDb(snr_db), rng)?;
        let mut rec = self.estimator.estimate(&y, &self.frame, t);
        rec.snr_db = Some(snr_db);
        Ok(rec)
    }

    /// Simulate the next `block_cycles` schedule cycles and merge them.
    fn next_block(&mut self, fusion: &FusionConfig) -> Result<Vec<FusedInstance>> {
        let start = self.block_start;
        let end = start + self.params.block_cycles * self.params.cycle_us();
        self.block_start = end;
        let (vp, rp) = (self.params.vision_period_us, self.params.radio_period_us);

        let mut radio = Vec::new();
        let mut vision: Vec<VisionRecord> = Vec::new();
        let mut next_v = start.div_ceil(vp) * vp;
        let mut next_r = start.div_ceil(rp) * rp;
        loop {
            let t = next_v.min(next_r);
            if t >= end {
                break;
            }
            if t > self.scene.time_us {
                let dt = (t - self.scene.time_us) as f64 * 1e-6;
                self.scene = step_scene(&self.scene, dt, &mut self.scene_rng)?;
                self.scene.time_us = t;
            }
            if next_v == t {
                self.scene.active = self.params.transmitter_at(t);
                vision.push(detect(&self.scene, &self.params.camera, &mut self.scene_rng)?);
                self.stats.vision_frames += 1;
                next_v += vp;
            }
            if next_r == t {
                // The transmitter state follows the nearest camera frame so
                // that radio and vision agree at phase boundaries.
                let nearest = (t + vp / 2) / vp * vp;
                if let Some(dev) = self.params.transmitter_at(nearest) {
                    radio.push(self.radio_frame(t, dev)?);
                    self.stats.radio_frames += 1;
                }
                next_r += rp;
            }
        }
        self.stats.simulated_seconds = end as f64 * 1e-6;
        let merged = merge(&radio, &vision, fusion)?;
        self.stats.merged += merged.len();
        Ok(merged)
    }
}

/// Simulate until `target` instances survive the purge. With no threshold
/// given, δ is derived from the first `target` raw instances.
fn simulate_segment(
    cfg: &ExperimentConfig,
    segment: u64,
    target: usize,
    delta: Option<f64>,
) -> Result<(Vec<FusedInstance>, f64, SegmentStats)> {
    let mut sim = Simulator::new(cfg, segment);
    let mut raw: Vec<FusedInstance> = Vec::new();
    let mut delta = delta;
    let frame_cap = 20 * target + 10_000;
    loop {
        raw.extend(sim.next_block(&cfg.fusion)?);
        if delta.is_none() && raw.len() >= target {
            delta = Some(auto_purge_threshold(&raw));
        }
        if let Some(d) = delta {
            let kept = raw
                .iter()
                .filter(|i| i.cir.as_ref().is_none_or(|c| c.peak_magnitude() >= d))
                .count();
            if kept >= target {
                break;
            }
            if sim.stats.vision_frames > frame_cap {
                return Err(Error::Generation(format!(
                    "only {kept} of {target} instances survive the purge threshold δ = {d:e} after {} camera frames",
                    sim.stats.vision_frames
                )));
            }
        } else if sim.stats.vision_frames > frame_cap {
            return Err(Error::Generation(format!(
                "only {} raw instances after {} camera frames; the schedule cannot reach {target} before δ can be set",
                raw.len(),
                sim.stats.vision_frames
            )));
        }
    }
    let delta = delta.expect("set before leaving the loop");
    let before = raw.len();
    let mut kept = purge(raw, delta)?;
    let mut stats = sim.stats;
    stats.purged = before - kept.len();
    kept.truncate(target);
    stats.emitted = kept.len();
    for i in &kept {
        stats.class_counts[i.label.index()] += 1;
    }
    Ok((kept, delta, stats))
}

/// Generate the training and validation sets of an experiment. Validation
/// uses independent random streams and the training set's δ.
pub fn generate(cfg: &ExperimentConfig) -> Result<Generated> {
    cfg.validate()?;
    let (nt, nv) = cfg.counts();
    let (train, delta, train_stats) = simulate_segment(cfg, 0, nt, cfg.fusion.purge_threshold)?;
    let (validation, _, validation_stats) = simulate_segment(cfg, 1, nv, Some(delta))?;
    Ok(Generated {
        train,
        validation,
        report: GenerationReport {
            config: cfg.resolved(),
            purge_threshold: delta,
            train: train_stats,
            validation: validation_stats,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Forest,
    Mlp,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(ClassifierKind::Forest),
            "mlp" => Ok(ClassifierKind::Mlp),
            _ => Err(Error::Config(format!("unknown classifier {s:?} (expected forest or mlp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpReport {
    pub layers: Vec<LayerSummary>,
    pub parameter_count: usize,
    pub train_config: TrainConfig,
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub classifier: ClassifierKind,
    pub feature_layout: String,
    pub instances: usize,
    pub class_counts: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_validation: Option<CvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpReport>,
    pub config: ExperimentConfig,
}

pub fn train_classifier(
    instances: &[FusedInstance],
    kind: ClassifierKind,
    cfg: &ExperimentConfig,
) -> Result<(TrainedModel, TrainReport)> {
    if instances.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let layout = cfg.feature_layout;
    let data = training_set(instances, &layout)?;
    let mut class_counts = [0usize; 3];
    for l in data.labels() {
        class_counts[l.index()] += 1;
    }
    let (classifier, cross_validation, mlp) = match kind {
        ClassifierKind::Forest => {
            let (model, cv) = grid_search_cv(
                &data,
                &cfg.forest.grid,
                cfg.forest.folds,
                cfg.forest.tree_options,
                derive(cfg.seeds.training, FOREST_STREAM),
            )?;
            (Classifier::Forest(model), Some(cv), None)
        }
        ClassifierKind::Mlp => {
            let tc = cfg.mlp_train_config();
            let init = MlpModel::init(derive(cfg.seeds.training, MLP_INIT_STREAM));
            let (model, history) = train(&init, &data, &tc)?;
            let report = MlpReport {
                layers: model.layer_summary(),
                parameter_count: model.parameter_count(),
                train_config: tc,
                loss_history: history,
            };
            (Classifier::Mlp(model), None, Some(report))
        }
    };
    let model = TrainedModel { layout, classifier };
    let report = TrainReport {
        classifier: kind,
        feature_layout: layout.id(),
        instances: data.len(),
        class_counts,
        cross_validation,
        mlp,
        config: cfg.resolved(),
    };
    Ok((model, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model_kind: String,
    pub feature_layout: String,
    pub instances: usize,
    pub metrics: MetricsReport,
    pub per_class: Vec<ClassRow>,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(model: &TrainedModel, instances: &[FusedInstance]) -> Result<Evaluation> {
    if instances.is_empty() {
        return Err(Error::Contract("evaluation set is empty".into()));
    }
    let mut cm = ConfusionMatrix::default();
    let mut probs = Vec::with_capacity(instances.len());
    let mut truth = Vec::with_capacity(instances.len());
    for inst in instances {
        let x = extract(inst, &model.layout);
        let (label, _) = model.predict(&x)?;
        cm.add(inst.label, label);
        probs.push(model.predict_proba(&x)?);
        truth.push(inst.label);
    }
    let mut metrics = micro_metrics(&cm)?;
    metrics.log_loss = Some(log_loss(&probs, &truth)?);
    Ok(Evaluation {
        model_kind: model.classifier.kind().into(),
        feature_layout: model.layout.id(),
        instances: instances.len(),
        metrics,
        per_class: per_class(&cm),
        confusion: cm,
    })
}

/// Fail with an incompatibility error when a requested layout differs from
/// the model's.
pub fn check_layout(model: &TrainedModel, requested: Option<&str>) -> Result<()> {
    if let Some(id) = requested {
        let layout: FeatureLayout = id.parse()?;
        if layout != model.layout {
            return Err(Error::Incompatible(format!(
                "data uses feature layout {id} but the model expects {}",
                model.layout.id()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub label: Label,
    pub confidence: f64,
    pub association: Association,
}

impl Inference {
    /// `label<TAB>confidence<TAB>association`.
    pub fn line(&self) -> String {
        format!("{}\t{:.6}\t{}", self.label.name(), self.confidence, self.association.describe())
    }
}

/// Classify one dataset row (its label column is ignored) and map the
/// result onto the row's detections.
pub fn infer(model: &TrainedModel, row: &str) -> Result<Inference> {
    let inst = parse_row(row, 1)?;
    let (label, confidence) = model.predict(&extract(&inst, &model.layout))?;
    let record = VisionRecord {
        timestamp_us: inst.timestamp_us,
        detections: inst.detections.clone(),
        truth: None,
    };
    Ok(Inference {
        label,
        confidence,
        association: associate((label, confidence), &record),
    })
}

/// CSV table with one line per metrics document.
pub fn report_table(rows: &[(String, Evaluation)]) -> String {
    let mut out = String::from("source,model,instances,accuracy,precision,recall,f1,log_loss,no_tx_recall\n");
    for (name, e) in rows {
        let m = &e.metrics;
        let no_tx = e.confusion.class_recall(Label::NoTx).map_or(String::new(), |r| format!("{r:.6}"));
        out.push_str(&format!(
            "{name},{},{},{:.6},{:.6},{:.6},{:.6},{},{no_tx}\n",
            e.model_kind,
            e.instances,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.log_loss.map_or(String::new(), |l| format!("{l:.6}")),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(setup: Setup) -> ExperimentConfig {
        ExperimentConfig {
            train_count: Some(600),
            validation_count: Some(200),
            forest: ForestConfig {
                grid: Grid {
                    tree_counts: vec![5],
                    depths: vec![10],
                },
                folds: 3,
                tree_options: TreeOptions::default(),
            },
            mlp: MlpSettings {
                epochs: 2,
                ..MlpSettings::default()
            },
            ..ExperimentConfig::for_setup(setup)
        }
    }

    #[test]
    fn generates_exact_counts_and_labels() {
        let g = generate(&small(Setup::Setup1)).unwrap();
        assert_eq!(g.train.len(), 600);
        assert_eq!(g.validation.len(), 200);
        assert!(g.report.purge_threshold > 0.0);
        for inst in g.train.iter().chain(&g.validation) {
            assert_eq!(inst.cir.is_none(), inst.label == Label::NoTx);
            if let Some(c) = &inst.cir {
                assert!(c.peak_magnitude() >= g.report.purge_threshold);
            }
            assert_eq!(inst.detections.len(), 2);
        }
        let counts = g.report.train.class_counts;
        assert!(counts.iter().all(|&c| c > 0));
        assert!(counts[0] < counts[1] && counts[0] < counts[2]);
        assert!(g.train.windows(2).all(|w| w[0].timestamp_us < w[1].timestamp_us));
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = small(Setup::Setup4);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seeds.channel += 1;
        assert_ne!(generate(&cfg).unwrap().train, generate(&other).unwrap().train);
    }

    #[test]
    fn schedule_without_silence_has_no_no_tx_rows() {
        let mut cfg = small(Setup::Setup1);
        cfg.simulation.schedule.retain(|p| p.transmitter.is_some());
        let g = generate(&cfg).unwrap();
        assert_eq!(g.report.train.class_counts[0], 0);
        assert!(g.train.iter().all(|i| i.label != Label::NoTx));
    }

    #[test]
    fn unreachable_purge_names_delta() {
        let mut cfg = small(Setup::Setup1);
        cfg.fusion.purge_threshold = Some(1e9);
        cfg.simulation.schedule.retain(|p| p.transmitter.is_some());
        cfg.train_count = Some(50);
        match generate(&cfg) {
            Err(Error::Generation(msg)) => assert!(msg.contains('δ'), "{msg}"),
            other => panic!("expected a generation error, got {other:?}"),
        }
    }

    #[test]
    fn transmitter_schedule_cycles() {
        let p = SimulationParams::default();
        assert_eq!(p.transmitter_at(0), Some(0));
        assert_eq!(p.transmitter_at(1_999_999), Some(0));
        assert_eq!(p.transmitter_at(2_000_000), Some(1));
        assert_eq!(p.transmitter_at(4_500_000), None);
        assert_eq!(p.transmitter_at(5_000_000), Some(0));
    }

    #[test]
    fn train_evaluate_infer_round() {
        let cfg = small(Setup::Setup1);
        let g = generate(&cfg).unwrap();
        for kind in [ClassifierKind::Forest, ClassifierKind::Mlp] {
            let (model, report) = train_classifier(&g.train, kind, &cfg).unwrap();
            assert_eq!(report.instances, 600);
            let e = evaluate(&model, &g.validation).unwrap();
            assert_eq!(e.instances, 200);
            assert_eq!(e.confusion.total(), 200);
            let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(evaluate(&back, &g.validation).unwrap(), e);
            let row = crate::dataset::format_row(&g.validation[0]);
            let line = infer(&model, &row).unwrap().line();
            assert_eq!(line.split('\t').count(), 3);
        }
    }

    #[test]
    fn layout_mismatch_is_incompatible() {
        let model = TrainedModel {
            layout: FeatureLayout::default(),
            classifier: Classifier::Mlp(MlpModel::init(0)),
        };
        assert!(check_layout(&model, Some("cir-m24-p24-peak-bb5x2")).is_ok());
        assert!(matches!(check_layout(&model, Some("cir-m30-p18-peak-bb5x2")), Err(Error::Incompatible(_))));
        assert!(check_layout(&model, None).is_ok());
    }

    #[test]
    fn config_json_is_partial_and_strict() {
        let cfg = ExperimentConfig::from_json(r#"{"setup": "setup3", "train_count": 10}"#).unwrap();
        assert_eq!(cfg.counts(), (10, 10_518));
        assert_eq!(cfg.environment(), EnvironmentProfile::preset(Setup::Setup3));
        assert!(matches!(ExperimentConfig::from_json(r#"{"stup": 1}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"train_count": 0}"#), Err(Error::Config(_))));
        let full = serde_json::to_string(&cfg.resolved()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&full).unwrap(), cfg.resolved());
    }

    #[test]
    fn default_counts_follow_scaled_campaigns() {
        assert_eq!(ExperimentConfig::for_setup(Setup::Setup1).counts(), (17_687, 5_708));
        assert_eq!(ExperimentConfig::for_setup(Setup::Setup2).counts(), (24_297, 15_409));
        assert_eq!(ExperimentConfig::for_setup(Setup::Setup3).counts(), (38_052, 10_518));
        assert_eq!(ExperimentConfig::for_setup(Setup::Setup4).counts(), (3_814, 1_601));
    }
}
