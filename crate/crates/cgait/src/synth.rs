//! Synthetic recordings in the 19-column text layout.
//!
//! Each subject walks with its own stride period, stance share and peak
//! force, and every 1000-frame window is walked at its own load factor. With
//! `planted` set, frames 400..450 of every window carry an extra sinusoid on
//! top of the gait whose period encodes the class and whose phase is random,
//! so the label is recoverable only from that stretch of signal.
//!
//! Pulse parameters come from a separate random stream, so a planted
//! recording and its unplanted twin share the gait sample for sample.

use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use cgait_core::signal::{parse_recording, segment_windows, Channel, Window, SENSORS_PER_FOOT, WINDOW_LEN};
use cgait_core::Severity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{write_manifest, DataError};

pub const PULSE_START: usize = 400;
/// Exclusive.
pub const PULSE_END: usize = 450;
/// Pulse period in frames, by class index.
pub const PULSE_PERIODS: [f64; 4] = [5.0, 8.0, 12.0, 18.0];
const SENSOR_WEIGHTS: [f64; SENSORS_PER_FOOT] = [0.2, 0.15, 0.1, 0.1, 0.1, 0.1, 0.15, 0.1];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub subjects_per_class: usize,
    pub windows_per_subject: usize,
    pub seed: u64,
    pub planted: bool,
    /// Per-window pulse amplitude in newtons. The pulse swings between zero
    /// and twice the amplitude above the gait force.
    pub pulse_amplitude: RangeInclusive<f64>,
    /// Per-window factor applied to the gait force of both feet.
    pub gait_scale: RangeInclusive<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects_per_class: 6,
            windows_per_subject: 3,
            seed: 0,
            planted: true,
            pulse_amplitude: 1000.0..=2000.0,
            gait_scale: 0.3..=1.7,
        }
    }
}

pub fn pulse_period(class: Severity) -> f64 {
    PULSE_PERIODS[class.index()]
}

/// Added force at `frame` (0-based within the window) for a pulse of the
/// given class, amplitude and phase (in cycles).
pub fn pulse_value(class: Severity, amplitude: f64, phase: f64, frame: usize) -> f64 {
    if !(PULSE_START..PULSE_END).contains(&frame) {
        return 0.0;
    }
    let cycles = (frame - PULSE_START) as f64 / pulse_period(class) + phase;
    amplitude * (1.0 + (std::f64::consts::TAU * cycles).sin())
}

struct Gait {
    period: f64,
    stance: f64,
    peak: f64,
    offset: f64,
}

impl Gait {
    fn random(rng: &mut ChaCha8Rng) -> Gait {
        let period = rng.random_range(100.0..125.0);
        Gait {
            period,
            stance: rng.random_range(0.58..0.66),
            peak: rng.random_range(550.0..750.0),
            offset: rng.random_range(0.0..period),
        }
    }

    fn force(&self, t: f64, scale: f64, rng: &mut ChaCha8Rng) -> f64 {
        let u = ((t + self.offset) % self.period) / self.period;
        let base = if u < self.stance {
            self.peak * (std::f64::consts::PI * u / self.stance).sin().sqrt()
        } else {
            0.0
        };
        (scale * base + rng.random_range(-15.0..15.0)).max(0.0)
    }
}

/// Total left and right force of one subject, `frames` long.
pub fn synthetic_feet(
    class: Severity,
    frames: usize,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    pulse_rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let left_gait = Gait::random(rng);
    let right_gait = Gait::random(rng);
    let scales: Vec<f64> = (0..frames.div_ceil(WINDOW_LEN))
        .map(|_| rng.random_range(cfg.gait_scale.clone()))
        .collect();
    let mut left = Vec::with_capacity(frames);
    let mut right = Vec::with_capacity(frames);
    for t in 0..frames {
        let s = scales[t / WINDOW_LEN];
        left.push(left_gait.force(t as f64, s, rng));
        right.push(right_gait.force(t as f64 + right_gait.period / 2.0, s, rng));
    }
    if cfg.planted {
        for w in 0..frames / WINDOW_LEN {
            let amplitude = pulse_rng.random_range(cfg.pulse_amplitude.clone());
            let phase = pulse_rng.random_range(0.0..1.0);
            for f in PULSE_START..PULSE_END {
                left[w * WINDOW_LEN + f] += pulse_value(class, amplitude, phase, f);
            }
        }
    }
    (left, right)
}

/// Full 19-column recording text for one subject.
pub fn synthetic_recording_text(
    class: Severity,
    frames: usize,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    pulse_rng: &mut ChaCha8Rng,
) -> String {
    let (left, right) = synthetic_feet(class, frames, cfg, rng, pulse_rng);
    let mut text = String::with_capacity(frames * 120);
    for (t, (&l, &r)) in left.iter().zip(&right).enumerate() {
        write!(text, "{:.2}", t as f64 / 100.0).unwrap();
        for total in [l, r] {
            for w in SENSOR_WEIGHTS {
                write!(text, "\t{:.2}", total * w).unwrap();
            }
        }
        writeln!(text, "\t{l:.2}\t{r:.2}").unwrap();
    }
    text
}

pub fn subject_id(class: Severity, i: usize) -> String {
    let tag = match class {
        Severity::Healthy => "Co",
        Severity::Stage2 => "S2",
        Severity::Stage2_5 => "S25",
        Severity::Stage3 => "S3",
    };
    format!("Syn{tag}{i:02}")
}

fn subject_rngs(cfg: &SynthConfig, class: Severity, i: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let seed = cfg.seed ^ ((class.index() as u64) << 32 | i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    (ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed ^ 0x5d58_83a1_f0c4_2e97))
}

/// Frames per synthetic recording: whole windows plus a remainder that
/// segmentation drops.
pub fn recording_frames(cfg: &SynthConfig) -> usize {
    cfg.windows_per_subject * WINDOW_LEN + 237
}

fn subject_text(cfg: &SynthConfig, class: Severity, i: usize) -> String {
    let (mut rng, mut pulse_rng) = subject_rngs(cfg, class, i);
    synthetic_recording_text(class, recording_frames(cfg), cfg, &mut rng, &mut pulse_rng)
}

/// Write a complete data directory and return its manifest.
pub fn write_data_dir(dir: &Path, cfg: &SynthConfig) -> Result<Vec<(String, Severity)>, DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = Vec::new();
    for class in Severity::ALL {
        for i in 0..cfg.subjects_per_class {
            let id = subject_id(class, i);
            let path = dir.join(format!("{id}.txt"));
            fs::write(&path, subject_text(cfg, class, i)).map_err(|source| DataError::Io { path, source })?;
            manifest.push((id, class));
        }
    }
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// The windows [`write_data_dir`] would produce, without touching disk.
pub fn synthetic_windows(cfg: &SynthConfig) -> Vec<Window> {
    let mut out = Vec::new();
    for class in Severity::ALL {
        for i in 0..cfg.subjects_per_class {
            let id = subject_id(class, i);
            let rec = parse_recording(&subject_text(cfg, class, i), &id, class).expect("synthetic recording parses");
            out.extend(segment_windows(&rec, Channel::TotalLeft).expect("synthetic recording is long enough"));
        }
    }
    out
}
