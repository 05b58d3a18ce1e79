//! Camera side of the testbed: device motion inside the survey area and a
//! synthetic object detector that emits bounding boxes with confidences.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Point, SurveyArea};
use crate::{Error, Result};

/// Lowest confidence the detector is allowed to report inside the survey area.
pub const MIN_CONFIDENCE: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub position: Point,
    pub velocity: Point,
}

/// Velocity random walk: each step adds zero-mean Gaussian noise with
/// deviation `velocity_noise · √dt` per axis, then clamps the speed.
///
/// The devices are carried by people, who do not walk through each other:
/// a step that would bring two devices closer than `min_separation` is
/// replaced by a bounce (both keep their position and reverse velocity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// m/s per √s.
    pub velocity_noise: f64,
    pub max_speed: f64,
    /// Meters; 0 disables the rule.
    #[serde(default)]
    pub min_separation: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            velocity_noise: 0.4,
            max_speed: 0.5,
            min_separation: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub devices: Vec<DeviceState>,
    pub area: SurveyArea,
    /// Index into `devices` of the device currently transmitting.
    pub active: Option<usize>,
    pub time_us: u64,
    pub motion: MotionModel,
}

impl Scene {
    pub fn new(devices: Vec<DeviceState>, area: SurveyArea, motion: MotionModel) -> Result<Self> {
        let scene = Scene {
            devices,
            area,
            active: None,
            time_us: 0,
            motion,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Two devices at rest, placed uniformly at random in `area` at least
    /// `min_separation` apart (when the area allows it).
    pub fn random<R: Rng + ?Sized>(area: SurveyArea, motion: MotionModel, rng: &mut R) -> Self {
        let mut draw = || DeviceState {
            position: [
                rng.random_range(area.min[0]..=area.max[0]),
                rng.random_range(area.min[1]..=area.max[1]),
            ],
            velocity: [0.0, 0.0],
        };
        let mut devices = vec![draw(), draw()];
        for _ in 0..1000 {
            if distance(devices[0].position, devices[1].position) >= motion.min_separation {
                break;
            }
            devices[1] = draw();
        }
        Scene {
            devices,
            area,
            active: None,
            time_us: 0,
            motion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() || self.devices.len() > 2 {
            return Err(Error::Contract(format!("a scene holds 1 or 2 devices, got {}", self.devices.len())));
        }
        if !self.area.is_valid() {
            return Err(Error::Contract("survey area is degenerate".into()));
        }
        if let Some((i, _)) = self.devices.iter().enumerate().find(|(_, d)| !self.area.contains(d.position)) {
            return Err(Error::Contract(format!("device {i} is outside the survey area")));
        }
        if let Some(a) = self.active {
            if a >= self.devices.len() {
                return Err(Error::Contract(format!("active transmitter {a} does not exist")));
            }
        }
        Ok(())
    }
}

/// Fold `x` back into `[lo, hi]` by mirror reflection; returns whether the
/// direction flipped an odd number of times.
fn reflect(mut x: f64, lo: f64, hi: f64) -> (f64, bool) {
    let mut flipped = false;
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return (x, flipped);
        }
        flipped = !flipped;
    }
    (x.clamp(lo, hi), flipped)
}

/// Advance the scene by `dt` seconds.
pub fn step_scene<R: Rng + ?Sized>(scene: &Scene, dt: f64, rng: &mut R) -> Result<Scene> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Contract(format!("time step must be positive, got {dt}")));
    }
    let mut next = scene.clone();
    let sigma = scene.motion.velocity_noise * dt.sqrt();
    let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::Contract(e.to_string()))?;
    for dev in next.devices.iter_mut() {
        for axis in 0..2 {
            if sigma > 0.0 {
                dev.velocity[axis] += noise.sample(rng);
            }
        }
        let speed = dev.velocity[0].hypot(dev.velocity[1]);
        if speed > scene.motion.max_speed && speed > 0.0 {
            let k = scene.motion.max_speed / speed;
            dev.velocity = [dev.velocity[0] * k, dev.velocity[1] * k];
        }
        for axis in 0..2 {
            let moved = dev.position[axis] + dev.velocity[axis] * dt;
            let (p, flipped) = reflect(moved, scene.area.min[axis], scene.area.max[axis]);
            dev.position[axis] = p;
            if flipped {
                dev.velocity[axis] = -dev.velocity[axis];
            }
        }
    }
    if next.devices.len() == 2 {
        let before = distance(scene.devices[0].position, scene.devices[1].position);
        let after = distance(next.devices[0].position, next.devices[1].position);
        if after < scene.motion.min_separation && after < before {
            for (n, old) in next.devices.iter_mut().zip(&scene.devices) {
                n.position = old.position;
                n.velocity = [-n.velocity[0], -n.velocity[1]];
            }
        }
    }
    next.time_us = scene.time_us + (dt * 1e6).round() as u64;
    Ok(next)
}

/// A bounding box in normalized image coordinates, `(x, y)` being the
/// top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn center(&self) -> Point {
        [self.x + 0.5 * self.w, self.y + 0.5 * self.h]
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= 1.0 + 1e-12
            && self.y + self.h <= 1.0 + 1e-12
            && (0.0..=1.0).contains(&self.confidence)
    }
}

/// Ground-to-image mapping of the synthetic camera. Box centers are an
/// affine map of the floor position; box sizes shrink with distance from
/// the camera line `y = camera_y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub origin: Point,
    /// Floor extent (x, y) that maps onto the unit image square.
    pub extent: Point,
    pub camera_y: f64,
    /// Box size (w, h) at one meter from the camera line.
    pub box_size: Point,
    /// Gaussian jitter on box coordinates, in normalized units.
    pub jitter: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            origin: [-0.25, -0.25],
            extent: [2.5, 1.5],
            camera_y: -1.0,
            box_size: [0.08, 0.12],
            jitter: 0.005,
        }
    }
}

impl Camera {
    /// Noise-free box center and size for a device at `p`.
    pub fn project(&self, p: Point) -> (Point, Point) {
        let center = [
            (p[0] - self.origin[0]) / self.extent[0],
            (p[1] - self.origin[1]) / self.extent[1],
        ];
        let range = (p[1] - self.camera_y).max(0.1);
        (center, [self.box_size[0] / range, self.box_size[1] / range])
    }
}

/// One detector output frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisionRecord {
    pub timestamp_us: u64,
    /// Index 0 is "BB 1", index 1 is "BB 2".
    pub detections: Vec<Detection>,
    /// Index of the transmitting device's detection. Simulation ground
    /// truth; never used as a feature.
    pub truth: Option<usize>,
}

/// Ordering rule for box names: ascending center x, then ascending center y.
pub fn box_order(a: &Detection, b: &Detection) -> Ordering {
    let (ca, cb) = (a.center(), b.center());
    ca[0].total_cmp(&cb[0]).then(ca[1].total_cmp(&cb[1]))
}

/// Run the synthetic detector on the scene.
pub fn detect<R: Rng + ?Sized>(scene: &Scene, camera: &Camera, rng: &mut R) -> Result<VisionRecord> {
    scene.validate()?;
    let jitter = Normal::new(0.0, camera.jitter.max(0.0)).map_err(|e| Error::Contract(e.to_string()))?;
    let mut boxes: Vec<(usize, Detection)> = Vec::with_capacity(scene.devices.len());
    for (i, dev) in scene.devices.iter().enumerate() {
        let (center, size) = camera.project(dev.position);
        let mut j = [0.0; 4];
        if camera.jitter > 0.0 {
            for v in j.iter_mut() {
                *v = jitter.sample(rng);
            }
        }
        let w = (size[0] + j[2]).clamp(1e-3, 1.0);
        let h = (size[1] + j[3]).clamp(1e-3, 1.0);
        let cx = (center[0] + j[0]).clamp(0.5 * w, 1.0 - 0.5 * w);
        let cy = (center[1] + j[1]).clamp(0.5 * h, 1.0 - 0.5 * h);
        let confidence = rng.random_range(MIN_CONFIDENCE..=1.0);
        boxes.push((
            i,
            Detection {
                x: cx - 0.5 * w,
                y: cy - 0.5 * h,
                w,
                h,
                confidence,
            },
        ));
    }
    boxes.sort_by(|a, b| box_order(&a.1, &b.1));
    let truth = scene.active.and_then(|dev| boxes.iter().position(|(i, _)| *i == dev));
    Ok(VisionRecord {
        timestamp_us: scene.time_us,
        detections: boxes.into_iter().map(|(_, d)| d).collect(),
        truth,
    })
}

/// Re-apply the box naming rule after devices have moved, keeping `truth`
/// attached to the same physical detection.
pub fn reassess_ordering(record: &VisionRecord) -> VisionRecord {
    let mut order: Vec<usize> = (0..record.detections.len()).collect();
    order.sort_by(|&a, &b| box_order(&record.detections[a], &record.detections[b]).then(a.cmp(&b)));
    VisionRecord {
        timestamp_us: record.timestamp_us,
        detections: order.iter().map(|&i| record.detections[i]).collect(),
        truth: record.truth.and_then(|t| order.iter().position(|&i| i == t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn still(area: SurveyArea, positions: &[Point]) -> Scene {
        Scene::new(
            positions
                .iter()
                .map(|&p| DeviceState {
                    position: p,
                    velocity: [0.0, 0.0],
                })
                .collect(),
            area,
            MotionModel {
                velocity_noise: 0.0,
                max_speed: 1.0,
                min_separation: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_velocity_zero_noise_stays_put() {
        let s = still(SurveyArea::default(), &[[0.5, 0.5], [1.5, 0.2]]);
        let n = step_scene(&s, 0.1, &mut rng_from(1)).unwrap();
        assert_eq!(n.devices, s.devices);
        assert_eq!(n.time_us, 100_000);
    }

    #[test]
    fn boundary_reflects_inward() {
        let mut s = still(SurveyArea::default(), &[[1.99, 0.5]]);
        s.devices[0].velocity = [0.5, 0.0];
        let n = step_scene(&s, 0.1, &mut rng_from(1)).unwrap();
        let d = n.devices[0];
        assert!(s.area.contains(d.position));
        assert!((d.position[0] - 1.96).abs() < 1e-12);
        assert!(d.velocity[0] < 0.0);
    }

    #[test]
    fn long_walk_stays_inside() {
        let area = SurveyArea::default();
        let mut rng = rng_from(42);
        let mut s = Scene::random(
            area,
            MotionModel {
                velocity_noise: 2.0,
                max_speed: 3.0,
                min_separation: 0.0,
            },
            &mut rng,
        );
        for _ in 0..100_000 {
            s = step_scene(&s, 0.01, &mut rng).unwrap();
            assert!(s.devices.iter().all(|d| area.contains(d.position)));
        }
    }

    #[test]
    fn devices_keep_their_distance() {
        let area = SurveyArea::default();
        let mut rng = rng_from(7);
        let motion = MotionModel::default();
        let mut s = Scene::random(area, motion, &mut rng);
        assert!(distance(s.devices[0].position, s.devices[1].position) >= motion.min_separation);
        for _ in 0..50_000 {
            s = step_scene(&s, 0.01, &mut rng).unwrap();
            assert!(distance(s.devices[0].position, s.devices[1].position) >= motion.min_separation);
        }
    }

    #[test]
    fn approaching_devices_bounce() {
        let mut s = still(SurveyArea::default(), &[[0.5, 0.5], [1.0, 0.5]]);
        s.motion.min_separation = 0.45;
        s.devices[0].velocity = [0.5, 0.0];
        let n = step_scene(&s, 0.2, &mut rng_from(0)).unwrap();
        assert_eq!(n.devices[0].position, [0.5, 0.5]);
        assert_eq!(n.devices[0].velocity, [-0.5, 0.0]);
        // Moving apart from an already-close start is allowed.
        let mut s = still(SurveyArea::default(), &[[0.5, 0.5], [0.6, 0.5]]);
        s.motion.min_separation = 0.45;
        s.devices[1].velocity = [0.5, 0.0];
        let n = step_scene(&s, 0.1, &mut rng_from(0)).unwrap();
        assert!((n.devices[1].position[0] - 0.65).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let s = still(SurveyArea::default(), &[[0.5, 0.5]]);
        assert!(step_scene(&s, 0.0, &mut rng_from(1)).is_err());
    }

    #[test]
    fn truth_follows_left_device() {
        let mut s = still(SurveyArea::default(), &[[1.6, 0.5], [0.3, 0.5]]);
        s.active = Some(1);
        let r = detect(&s, &Camera::default(), &mut rng_from(3)).unwrap();
        assert_eq!(r.detections.len(), 2);
        assert!(r.detections[0].center()[0] < r.detections[1].center()[0]);
        assert_eq!(r.truth, Some(0));
        s.active = None;
        assert_eq!(detect(&s, &Camera::default(), &mut rng_from(3)).unwrap().truth, None);
    }

    #[test]
    fn detection_is_deterministic_and_confident() {
        let mut rng = rng_from(8);
        let s = Scene::random(SurveyArea::default(), MotionModel::default(), &mut rng);
        let a = detect(&s, &Camera::default(), &mut rng_from(9)).unwrap();
        let b = detect(&s, &Camera::default(), &mut rng_from(9)).unwrap();
        assert_eq!(a, b);
        for d in &a.detections {
            assert!(d.confidence >= MIN_CONFIDENCE);
            assert!(d.is_valid());
        }
    }

    #[test]
    fn corner_boxes_stay_in_frame() {
        let area = SurveyArea::default();
        let cam = Camera {
            jitter: 0.05,
            ..Camera::default()
        };
        let s = still(area, &[area.min, area.max]);
        let mut rng = rng_from(5);
        for _ in 0..1000 {
            let r = detect(&s, &cam, &mut rng).unwrap();
            assert!(r.detections.iter().all(|d| d.is_valid()));
        }
    }

    fn det(x: f64, y: f64) -> Detection {
        Detection {
            x,
            y,
            w: 0.05,
            h: 0.05,
            confidence: 0.995,
        }
    }

    #[test]
    fn reassess_restores_order_and_moves_truth() {
        let ordered = VisionRecord {
            timestamp_us: 5,
            detections: vec![det(0.1, 0.2), det(0.6, 0.2)],
            truth: Some(1),
        };
        assert_eq!(reassess_ordering(&ordered), ordered);
        let swapped = VisionRecord {
            timestamp_us: 5,
            detections: vec![det(0.6, 0.2), det(0.1, 0.2)],
            truth: Some(0),
        };
        assert_eq!(reassess_ordering(&swapped), ordered);
        let single = VisionRecord {
            timestamp_us: 1,
            detections: vec![det(0.4, 0.4)],
            truth: Some(0),
        };
        assert_eq!(reassess_ordering(&single), single);
    }

    #[test]
    fn ties_in_x_break_on_y() {
        let r = VisionRecord {
            timestamp_us: 0,
            detections: vec![det(0.3, 0.7), det(0.3, 0.1)],
            truth: None,
        };
        let o = reassess_ordering(&r);
        assert_eq!(o.detections[0].y, 0.1);
    }

    proptest::proptest! {
        #[test]
        fn reassess_is_idempotent(xs in proptest::collection::vec((0.0f64..0.9, 0.0f64..0.9), 0..3), t in 0usize..3) {
            let detections: Vec<Detection> = xs.iter().map(|&(x, y)| det(x, y)).collect();
            let truth = if t < detections.len() { Some(t) } else { None };
            let r = VisionRecord { timestamp_us: 0, detections, truth };
            let once = reassess_ordering(&r);
            proptest::prop_assert_eq!(reassess_ordering(&once), once.clone());
            if let Some(t) = r.truth {
                proptest::prop_assert_eq!(once.detections[once.truth.unwrap()], r.detections[t]);
            }
        }
    }
}
