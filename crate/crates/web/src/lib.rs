//! Browser bindings for the demo page in `www/`. Each export returns a JSON
//! string; errors surface as JavaScript exceptions.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use visradio::experiment::{evaluate, generate, train_classifier, ClassifierKind, ExperimentConfig};
use visradio::forest::Grid;
use visradio::radio::{
    apply_channel, channel_frequency_response, sample_profile, CirEstimator, EnvironmentProfile, Noise, PilotFrame,
    Setup,
};
use visradio::rng::rng_from;
use visradio::vision::{detect, step_scene, Scene};

fn setup(name: &str) -> visradio::Result<Setup> {
    name.parse()
}

/// Estimated CIR magnitudes of one frame sent from `(x, y)`, with and
/// without receiver noise.
pub fn cir_json(setup_name: &str, x: f64, y: f64, seed: u64) -> visradio::Result<Value> {
    let env = EnvironmentProfile::preset(setup(setup_name)?);
    let mut rng = rng_from(seed);
    let profile = sample_profile(&env, [x, y], &mut rng)?;
    let frame = PilotFrame::default();
    let h = channel_frequency_response(&profile, &frame);
    let est = CirEstimator::new();
    let clean = est.estimate(&apply_channel(&frame, &h, Noise::Noiseless, &mut rng)?, &frame, 0);
    let noisy = est.estimate(&apply_channel(&frame, &h, Noise::SnrDb(env.snr_db_mean), &mut rng)?, &frame, 0);
    Ok(json!({
        "setup": setup_name,
        "snr_db": env.snr_db_mean,
        "paths": profile.taps().len(),
        "noiseless": clean.taps.iter().map(|t| t.norm()).collect::<Vec<_>>(),
        "estimated": noisy.taps.iter().map(|t| t.norm()).collect::<Vec<_>>(),
    }))
}

/// Positions and detector boxes of the two devices over `frames` camera
/// frames.
pub fn track_json(seed: u64, frames: usize) -> visradio::Result<Value> {
    let cfg = ExperimentConfig::default();
    let sim = &cfg.simulation;
    let dt = sim.vision_period_us as f64 * 1e-6;
    let mut rng = rng_from(seed);
    let mut scene = Scene::random(cfg.environment().survey_area, sim.motion, &mut rng);
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        scene.active = sim.transmitter_at(scene.time_us);
        let record = detect(&scene, &sim.camera, &mut rng)?;
        out.push(json!({
            "t_us": scene.time_us,
            "positions": scene.devices.iter().map(|d| d.position).collect::<Vec<_>>(),
            "boxes": record.detections,
            "label": record.truth.map_or(0, |i| i + 1),
        }));
        scene = step_scene(&scene, dt, &mut rng)?;
        scene.time_us += sim.vision_period_us;
    }
    let area = cfg.environment().survey_area;
    Ok(json!({ "area": [area.min, area.max], "frames": out }))
}

/// Generate a small dataset, train one classifier on it and score the
/// validation part.
pub fn train_json(setup_name: &str, classifier: &str, train_count: usize, seed: u64) -> visradio::Result<Value> {
    let mut cfg = ExperimentConfig::for_setup(setup(setup_name)?);
    cfg.train_count = Some(train_count);
    cfg.validation_count = Some((train_count / 3).max(1));
    cfg.seeds.scene = seed;
    cfg.seeds.channel = seed.wrapping_add(1);
    cfg.seeds.training = seed.wrapping_add(2);
    cfg.forest.grid = Grid {
        tree_counts: vec![10, 20],
        depths: vec![10, 20],
    };
    cfg.forest.folds = 3;
    let kind: ClassifierKind = classifier.parse()?;
    let g = generate(&cfg)?;
    let (model, _) = train_classifier(&g.train, kind, &cfg)?;
    let e = evaluate(&model, &g.validation)?;
    Ok(json!({
        "setup": setup_name,
        "classifier": classifier,
        "train": g.train.len(),
        "validation": e.instances,
        "metrics": e.metrics,
        "per_class": e.per_class,
        "confusion": e.confusion,
    }))
}

fn to_js(r: visradio::Result<Value>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn cir(setup: &str, x: f64, y: f64, seed: u32) -> Result<String, JsError> {
    to_js(cir_json(setup, x, y, u64::from(seed)))
}

#[wasm_bindgen]
pub fn track(seed: u32, frames: u32) -> Result<String, JsError> {
    to_js(track_json(u64::from(seed), frames as usize))
}

#[wasm_bindgen]
pub fn train(setup: &str, classifier: &str, train_count: u32, seed: u32) -> Result<String, JsError> {
    to_js(train_json(setup, classifier, train_count as usize, u64::from(seed)))
}
