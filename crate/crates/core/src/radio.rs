//! Simulated pilot-based uplink: multipath channel, pilot frame, additive
//! noise and least-squares CIR estimation.
//!
//! Conventions:
//! * Subcarrier `m` (0..52) sits at baseband offset `m·Δf`, so the channel
//!   frequency response is `H[m] = Σ_k a_k e^{jθ_k} e^{-j2π m Δf τ_k}`.
//! * The CIR is the inverse DFT of `Ĥ` with the `1/52` factor on the
//!   inverse side: `ĥ[n] = (1/52) Σ_m Ĥ[m] e^{+j2π mn/52}`. A tap with delay
//!   `τ = n / (52 Δf)` therefore lands exactly on sample `n`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Point, SurveyArea};
use crate::{Error, Result};

pub const SUBCARRIERS: usize = 52;
pub const SUBCARRIER_SPACING_HZ: f64 = 312_500.0;
pub const CENTER_FREQUENCY_HZ: f64 = 1.0e9;

/// Duration of one CIR tap on the estimation grid, `1 / (52 Δf)`.
pub fn sample_period_s() -> f64 {
    1.0 / (SUBCARRIERS as f64 * SUBCARRIER_SPACING_HZ)
}

/// Span of the 52-tap estimation window.
pub fn frame_duration_s() -> f64 {
    SUBCARRIERS as f64 * sample_period_s()
}

/// One multipath component `a e^{jθ} δ(t - τ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub amplitude: f64,
    pub delay_s: f64,
    pub phase: f64,
}

/// Ground-truth multipath channel: a nonempty set of taps sorted by delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultipathProfile {
    taps: Vec<Tap>,
}

impl MultipathProfile {
    pub fn new(taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Contract("a multipath profile needs at least one tap".into()));
        }
        if taps[0].delay_s < 0.0 {
            return Err(Error::Contract("first tap delay must be nonnegative".into()));
        }
        for (k, tap) in taps.iter().enumerate() {
            if !tap.amplitude.is_finite() || tap.amplitude < 0.0 {
                return Err(Error::Contract(format!("tap {k}: amplitude must be finite and nonnegative")));
            }
            if !tap.delay_s.is_finite() || !tap.phase.is_finite() {
                return Err(Error::Contract(format!("tap {k}: delay and phase must be finite")));
            }
        }
        if taps.windows(2).any(|w| w[1].delay_s < w[0].delay_s) {
            return Err(Error::Contract("tap delays must be nondecreasing".into()));
        }
        Ok(MultipathProfile { taps })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Pointwise sum of two channels (used for superposition checks).
    pub fn superpose(&self, other: &MultipathProfile) -> MultipathProfile {
        let mut taps: Vec<Tap> = self.taps.iter().chain(other.taps.iter()).copied().collect();
        taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
        MultipathProfile { taps }
    }
}

/// An all-pilot BPSK OFDM frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotFrame {
    symbols: [Complex64; SUBCARRIERS],
    pub subcarrier_spacing_hz: f64,
    pub center_frequency_hz: f64,
}

/// Signs of the 802.11a long training symbol on the 52 used subcarriers
/// (-26..-1, 1..26).
const LONG_TRAINING_SIGNS: [i8; SUBCARRIERS] = [
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, //
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
];

impl Default for PilotFrame {
    fn default() -> Self {
        PilotFrame::from_signs(&LONG_TRAINING_SIGNS).expect("static pilot pattern is valid")
    }
}

impl PilotFrame {
    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        if signs.len() != SUBCARRIERS {
            return Err(Error::Contract(format!(
                "pilot frame needs {SUBCARRIERS} symbols, got {}",
                signs.len()
            )));
        }
        let mut symbols = [Complex64::new(0.0, 0.0); SUBCARRIERS];
        for (slot, &s) in symbols.iter_mut().zip(signs) {
            *slot = match s {
                1 => Complex64::new(1.0, 0.0),
                -1 => Complex64::new(-1.0, 0.0),
                other => return Err(Error::Contract(format!("BPSK symbol must be ±1, got {other}"))),
            };
        }
        Ok(PilotFrame {
            symbols,
            subcarrier_spacing_hz: SUBCARRIER_SPACING_HZ,
            center_frequency_hz: CENTER_FREQUENCY_HZ,
        })
    }

    pub fn symbols(&self) -> &[Complex64; SUBCARRIERS] {
        &self.symbols
    }
}

/// Estimated CIR for one received pilot frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CirRecord {
    pub timestamp_us: u64,
    pub taps: [Complex64; SUBCARRIERS],
    /// SNR the frame was simulated at; `None` for noiseless frames and for
    /// records read back from disk.
    pub snr_db: Option<f64>,
}

impl CirRecord {
    pub fn peak_magnitude(&self) -> f64 {
        self.taps.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

/// Named environment presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    Setup1,
    Setup2,
    Setup3,
    Setup4,
}

impl Setup {
    pub const ALL: [Setup; 4] = [Setup::Setup1, Setup::Setup2, Setup::Setup3, Setup::Setup4];

    pub fn name(self) -> &'static str {
        match self {
            Setup::Setup1 => "setup1",
            Setup::Setup2 => "setup2",
            Setup::Setup3 => "setup3",
            Setup::Setup4 => "setup4",
        }
    }

    /// Measurement-campaign sizes (training, validation).
    pub fn campaign_size(self) -> (usize, usize) {
        match self {
            Setup::Setup1 => (176_874, 57_086),
            Setup::Setup2 => (242_975, 154_098),
            Setup::Setup3 => (380_527, 105_187),
            Setup::Setup4 => (38_145, 16_013),
        }
    }

    /// Campaign sizes scaled by `factor` and floored.
    pub fn scaled_size(self, factor: f64) -> (usize, usize) {
        let (t, v) = self.campaign_size();
        ((t as f64 * factor).floor() as usize, (v as f64 * factor).floor() as usize)
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setup::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown setup {s:?}")))
    }
}

/// Specular reflector: a wall at `x = wall_x`. The reflected path is the
/// straight line from the device to the mirror image of the access point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub wall_x: f64,
    pub coefficient: f64,
}

/// Propagation characteristics of one measurement environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile {
    pub name: Setup,
    /// Inclusive range for the number of multipath components.
    pub tap_count: [usize; 2],
    /// Maximum excess delay of diffuse components relative to the direct path.
    pub delay_spread_s: f64,
    pub snr_db_mean: f64,
    pub snr_db_std: f64,
    /// Direct-path amplitude is `(1 m / d)^gain_exponent`.
    pub gain_exponent: f64,
    /// Propagation delay per meter of path length. Larger than free space so
    /// that positions inside the survey area spread over the tap grid.
    pub delay_per_meter_s: f64,
    pub access_point: Point,
    pub survey_area: SurveyArea,
    pub reflector: Option<Reflector>,
    /// Diffuse component amplitudes relative to the direct path.
    pub diffuse_gain: [f64; 2],
    /// Probability that a frame is lost to a synchronization failure.
    pub sync_failure_rate: f64,
}

impl EnvironmentProfile {
    pub fn preset(setup: Setup) -> Self {
        let ts = sample_period_s();
        let base = EnvironmentProfile {
            name: setup,
            tap_count: [3, 6],
            delay_spread_s: 8.0 * ts,
            snr_db_mean: 25.0,
            snr_db_std: 2.0,
            gain_exponent: 1.0,
            delay_per_meter_s: 8.0 * ts,
            access_point: [-0.6, -0.4],
            survey_area: SurveyArea::default(),
            reflector: Some(Reflector {
                wall_x: 2.6,
                coefficient: 0.6,
            }),
            diffuse_gain: [0.05, 0.25],
            sync_failure_rate: 0.01,
        };
        match setup {
            Setup::Setup1 => base,
            Setup::Setup2 => EnvironmentProfile {
                tap_count: [6, 12],
                delay_spread_s: 12.0 * ts,
                diffuse_gain: [0.05, 0.3],
                ..base
            },
            Setup::Setup3 => EnvironmentProfile {
                snr_db_mean: base.snr_db_mean - 10.0,
                ..base
            },
            Setup::Setup4 => EnvironmentProfile {
                tap_count: [1, 3],
                delay_spread_s: 4.0 * ts,
                snr_db_mean: 22.0,
                reflector: Some(Reflector {
                    wall_x: 2.6,
                    coefficient: 0.4,
                }),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.tap_count;
        if lo < 1 || hi > SUBCARRIERS || lo > hi {
            return Err(Error::Config(format!("tap-count range [{lo}, {hi}] must lie within [1, 52]")));
        }
        if !(self.delay_spread_s >= 0.0 && self.delay_spread_s < frame_duration_s()) {
            return Err(Error::Config("delay spread must be in [0, frame duration)".into()));
        }
        if !self.snr_db_mean.is_finite() || !(self.snr_db_std >= 0.0) {
            return Err(Error::Config("SNR mean must be finite and deviation nonnegative".into()));
        }
        if !self.gain_exponent.is_finite() || !(self.delay_per_meter_s >= 0.0) {
            return Err(Error::Config("gain exponent and delay-per-meter must be finite".into()));
        }
        if !self.survey_area.is_valid() {
            return Err(Error::Config("survey area is degenerate".into()));
        }
        let [g0, g1] = self.diffuse_gain;
        if !(g0 >= 0.0 && g1 >= g0 && g1.is_finite()) {
            return Err(Error::Config("diffuse gain range must be ordered and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.sync_failure_rate) {
            return Err(Error::Config("sync failure rate must be a probability".into()));
        }
        Ok(())
    }

    /// Amplitude of a path of length `d` meters.
    pub fn path_gain(&self, d: f64) -> f64 {
        d.max(1e-3).powf(-self.gain_exponent)
    }
}

/// Draw the multipath channel seen by a transmitter at `position`.
///
/// Tap 0 is the direct path: delay proportional to the distance to the
/// access point and amplitude from the environment's gain law. When the
/// drawn tap count allows it and the environment has a reflector, tap 1 is
/// the specular reflection. The remaining taps are diffuse components with
/// random excess delay (within the delay spread) and relative amplitude.
/// All phases are uniform on `[0, 2π)`.
pub fn sample_profile<R: Rng + ?Sized>(
    env: &EnvironmentProfile,
    position: Point,
    rng: &mut R,
) -> Result<MultipathProfile> {
    env.validate()?;
    if !env.survey_area.contains(position) {
        return Err(Error::Domain(format!(
            "position ({:.3}, {:.3}) is outside the survey area",
            position[0], position[1]
        )));
    }
    let [lo, hi] = env.tap_count;
    let n = rng.random_range(lo..=hi);

    let d = distance(position, env.access_point);
    let direct_amp = env.path_gain(d);
    let direct_delay = d * env.delay_per_meter_s;
    let mut taps = Vec::with_capacity(n);
    taps.push(Tap {
        amplitude: direct_amp,
        delay_s: direct_delay,
        phase: rng.random_range(0.0..TAU),
    });

    let mut remaining = n - 1;
    if remaining > 0 {
        if let Some(wall) = env.reflector {
            let image = [2.0 * wall.wall_x - env.access_point[0], env.access_point[1]];
            let dr = distance(position, image);
            taps.push(Tap {
                amplitude: wall.coefficient * env.path_gain(dr),
                delay_s: dr * env.delay_per_meter_s,
                phase: rng.random_range(0.0..TAU),
            });
            remaining -= 1;
        }
    }
    let ts = sample_period_s();
    let [g0, g1] = env.diffuse_gain;
    for _ in 0..remaining {
        // Diffuse components trail the direct path by at least one tap.
        let excess = if env.delay_spread_s > ts {
            rng.random_range(ts..=env.delay_spread_s)
        } else {
            env.delay_spread_s
        };
        let rel = if g1 > g0 { rng.random_range(g0..=g1) } else { g0 };
        taps.push(Tap {
            amplitude: direct_amp * rel,
            delay_s: direct_delay + excess,
            phase: rng.random_range(0.0..TAU),
        });
    }
    taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    MultipathProfile::new(taps)
}

/// Evaluate the channel on the frame's subcarriers.
pub fn channel_frequency_response(profile: &MultipathProfile, frame: &PilotFrame) -> [Complex64; SUBCARRIERS] {
    let mut h = [Complex64::new(0.0, 0.0); SUBCARRIERS];
    for (m, hm) in h.iter_mut().enumerate() {
        let f = m as f64 * frame.subcarrier_spacing_hz;
        *hm = profile
            .taps()
            .iter()
            .map(|t| Complex64::from_polar(t.amplitude, t.phase - 2.0 * PI * f * t.delay_s))
            .sum();
    }
    h
}

/// Receiver noise model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    /// No noise at all (the `+∞ dB` case).
    Noiseless,
    /// Complex white Gaussian noise at the given SNR relative to the mean
    /// received signal power per subcarrier.
    SnrDb(f64),
}

/// `Y[m] = H[m]·X[m] + W[m]`.
pub fn apply_channel<R: Rng + ?Sized>(
    frame: &PilotFrame,
    h: &[Complex64; SUBCARRIERS],
    noise: Noise,
    rng: &mut R,
) -> Result<[Complex64; SUBCARRIERS]> {
    let mut y = [Complex64::new(0.0, 0.0); SUBCARRIERS];
    for ((ym, hm), xm) in y.iter_mut().zip(h).zip(frame.symbols()) {
        *ym = hm * xm;
    }
    match noise {
        Noise::Noiseless => {}
        Noise::SnrDb(snr_db) => {
            if !snr_db.is_finite() {
                return Err(Error::Contract(format!("SNR must be finite, got {snr_db}")));
            }
            let signal_power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / SUBCARRIERS as f64;
            let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
            let sigma = (noise_power / 2.0).sqrt();
            for ym in y.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *ym += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok(y)
}

/// Least-squares pilot estimator followed by a 52-point inverse DFT.
///
/// Holds a prepared FFT plan; reuse one instance for a stream of frames.
#[derive(Clone)]
pub struct CirEstimator {
    ifft: Arc<dyn Fft<f64>>,
}

impl Default for CirEstimator {
    fn default() -> Self {
        CirEstimator::new()
    }
}

impl fmt::Debug for CirEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirEstimator").finish_non_exhaustive()
    }
}

impl CirEstimator {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        CirEstimator {
            ifft: planner.plan_fft_inverse(SUBCARRIERS),
        }
    }

    pub fn estimate(&self, received: &[Complex64; SUBCARRIERS], frame: &PilotFrame, timestamp_us: u64) -> CirRecord {
        let mut buf: Vec<Complex64> = received.iter().zip(frame.symbols()).map(|(y, x)| y / x).collect();
        self.ifft.process(&mut buf);
        let scale = 1.0 / SUBCARRIERS as f64;
        let mut taps = [Complex64::new(0.0, 0.0); SUBCARRIERS];
        for (t, v) in taps.iter_mut().zip(buf) {
            *t = v * scale;
        }
        CirRecord {
            timestamp_us,
            taps,
            snr_db: None,
        }
    }
}

/// One-shot form of [`CirEstimator::estimate`].
pub fn estimate_cir(received: &[Complex64; SUBCARRIERS], frame: &PilotFrame, timestamp_us: u64) -> CirRecord {
    CirEstimator::new().estimate(received, frame, timestamp_us)
}
