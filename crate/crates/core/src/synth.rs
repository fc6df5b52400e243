//! Synthetic exercise trials with frame-level ground truth.
//!
//! Each trial is a smooth reach of one arm (`r(t) = 3u^2 - 2u^3`) plus, with
//! some probability, one contiguous compensatory segment during which the
//! head, neck and shoulders are displaced (trunk lean plus shoulder hike).
//! Everything else is Gaussian keypoint noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    trial_label_of, DatasetManifest, JointLayout, KeypointTrial, Label, Provenance, Side, DEFAULT_T_MAX,
};
use crate::error::{Error, Result};
use crate::seed;

/// Frames over which the compensation overlay ramps in and out.
const RAMP_FRAMES: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub patient_count: usize,
    pub trials_per_patient_per_side: usize,
    /// Inclusive range of trial lengths in frames.
    pub length_range: [usize; 2],
    pub compensation_probability_affected: f64,
    pub compensation_probability_unaffected: f64,
    /// Fraction of the trial covered by the compensatory segment.
    pub compensation_coverage_range: [f64; 2],
    /// Peak compensation displacement, pixels.
    pub compensation_amplitude: f64,
    /// Peak wrist reach, pixels.
    pub motion_amplitude: f64,
    pub noise_std: f64,
    pub t_max: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patient_count: 15,
            trials_per_patient_per_side: 10,
            length_range: [120, 200],
            compensation_probability_affected: 0.55,
            compensation_probability_unaffected: 0.0,
            compensation_coverage_range: [0.5, 0.8],
            compensation_amplitude: 25.0,
            motion_amplitude: 80.0,
            noise_std: 1.0,
            t_max: DEFAULT_T_MAX,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patient_count == 0 {
            return bad("patient_count must be at least 1".into());
        }
        if self.trials_per_patient_per_side == 0 {
            return bad("trials_per_patient_per_side must be at least 1".into());
        }
        let [lo, hi] = self.length_range;
        if lo < 1 || lo > hi || hi > self.t_max {
            return bad(format!(
                "length_range [{lo}, {hi}] must satisfy 1 <= min <= max <= t_max ({})",
                self.t_max
            ));
        }
        for (name, p) in [
            (
                "compensation_probability_affected",
                self.compensation_probability_affected,
            ),
            (
                "compensation_probability_unaffected",
                self.compensation_probability_unaffected,
            ),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        let [clo, chi] = self.compensation_coverage_range;
        if !(0.0 < clo && clo <= chi && chi <= 1.0) {
            return bad(format!("compensation_coverage_range [{clo}, {chi}] must lie in (0, 1]"));
        }
        for (name, v) in [
            ("compensation_amplitude", self.compensation_amplitude),
            ("motion_amplitude", self.motion_amplitude),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Arm performing the reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Right,
    Left,
}

impl Arm {
    fn other(self) -> Arm {
        match self {
            Arm::Right => Arm::Left,
            Arm::Left => Arm::Right,
        }
    }

    /// +1 for the right arm (image x grows toward the subject's left), -1 for the left.
    fn lateral(self) -> f64 {
        match self {
            Arm::Right => -1.0,
            Arm::Left => 1.0,
        }
    }
}

// Upper-body rest pose in pixels, in `JointLayout::UPPER_BODY` order.
const REST_POSE: [[f64; 2]; 8] = [
    [320.0, 120.0],
    [320.0, 180.0],
    [270.0, 185.0],
    [255.0, 250.0],
    [250.0, 310.0],
    [370.0, 185.0],
    [385.0, 250.0],
    [390.0, 310.0],
];

const HEAD: usize = 0;
const NECK: usize = 1;

fn shoulder(arm: Arm) -> usize {
    match arm {
        Arm::Right => 2,
        Arm::Left => 5,
    }
}

fn elbow(arm: Arm) -> usize {
    shoulder(arm) + 1
}

fn wrist(arm: Arm) -> usize {
    shoulder(arm) + 2
}

/// Smooth monotone reach profile on `[0, 1]`.
pub fn reach_profile(u: f64) -> f64 {
    3.0 * u * u - 2.0 * u * u * u
}

/// Overlay weight at offset `k` inside a segment of `len` frames.
fn ramp(k: usize, len: usize) -> f64 {
    let rise = (k + 1) as f64 / RAMP_FRAMES;
    let fall = (len - k) as f64 / RAMP_FRAMES;
    rise.min(fall).min(1.0)
}

/// Identity of one trial to generate.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub trial_id: String,
    pub patient_id: String,
    pub side: Side,
    pub arm: Arm,
}

/// Injected compensatory segment, `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.start + self.len
    }
}

pub fn generate_trial(config: &SynthConfig, spec: &TrialSpec, rng: &mut ChaCha8Rng) -> Result<KeypointTrial> {
    Ok(generate_trial_with_segment(config, spec, rng)?.0)
}

/// Generates a trial and reports the injected segment, if any.
pub fn generate_trial_with_segment(
    config: &SynthConfig,
    spec: &TrialSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(KeypointTrial, Option<Segment>)> {
    config.validate()?;
    let [lo, hi] = config.length_range;
    let len = rng.random_range(lo..=hi);

    let p_comp = match spec.side {
        Side::Affected => config.compensation_probability_affected,
        Side::Unaffected => config.compensation_probability_unaffected,
    };
    let segment = if rng.random_bool(p_comp) {
        let [clo, chi] = config.compensation_coverage_range;
        let coverage = if chi > clo { rng.random_range(clo..=chi) } else { clo };
        let seg_len = ((coverage * len as f64).round() as usize).clamp(1, len);
        let start = rng.random_range(0..=len - seg_len);
        Some(Segment { start, len: seg_len })
    } else {
        None
    };

    let offset = [rng.random_range(-20.0..=20.0), rng.random_range(-20.0..=20.0)];
    let comp_gain = rng.random_range(0.8..=1.2) * config.compensation_amplitude;
    let reach_gain = rng.random_range(0.85..=1.15) * config.motion_amplitude;
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let arm = spec.arm;
    let lat = arm.lateral();
    let mut frames = Vec::with_capacity(len);
    let mut frame_labels = Vec::with_capacity(len);
    for t in 0..len {
        let u = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
        let r = reach_profile(u) * reach_gain;
        let mut pose = REST_POSE;
        // Forward-and-up raise of the exercising arm.
        pose[wrist(arm)][0] += -lat * 0.3 * r;
        pose[wrist(arm)][1] -= r;
        pose[elbow(arm)][0] += -lat * 0.15 * r;
        pose[elbow(arm)][1] -= 0.5 * r;

        let label = match segment {
            Some(seg) if seg.contains(t) => {
                let c = comp_gain * ramp(t - seg.start, seg.len);
                // Trunk lean away from the working arm plus a hiked working shoulder.
                let lean = -lat * c;
                pose[HEAD][0] += lean;
                pose[NECK][0] += 0.7 * lean;
                pose[shoulder(arm.other())][0] += 0.6 * lean;
                pose[shoulder(arm)][1] -= 0.6 * c;
                Label::Compensatory
            }
            _ => Label::Normal,
        };

        let frame: Vec<[f64; 2]> = pose
            .iter()
            .map(|p| {
                let mut q = [p[0] + offset[0], p[1] + offset[1]];
                if config.noise_std > 0.0 {
                    q[0] += noise.sample(rng);
                    q[1] += noise.sample(rng);
                }
                // Keypoint detectors report millipixel precision at best.
                [(q[0] * 1000.0).round() / 1000.0, (q[1] * 1000.0).round() / 1000.0]
            })
            .collect();
        frames.push(frame);
        frame_labels.push(label);
    }

    let trial = KeypointTrial {
        trial_id: spec.trial_id.clone(),
        patient_id: spec.patient_id.clone(),
        side: spec.side,
        trial_label: trial_label_of(&frame_labels),
        frames,
        frame_labels,
    };
    Ok((trial, segment))
}

fn trial_stream(config: &SynthConfig, patient: usize, side: Side, k: usize) -> u64 {
    let side_ix = match side {
        Side::Affected => 0,
        Side::Unaffected => 1,
    };
    1 + ((patient * 2 + side_ix) * config.trials_per_patient_per_side + k) as u64
}

/// Generates every trial, together with the injected segments (parallel to `trials`).
pub fn generate_dataset_with_segments(config: &SynthConfig) -> Result<(DatasetManifest, Vec<Option<Segment>>)> {
    config.validate()?;
    let base = seed::derive(config.seed, seed::Stage::Synth);
    let mut trials = Vec::new();
    let mut segments = Vec::new();
    for p in 0..config.patient_count {
        // Stream 0 is reserved for patient-level draws; streams are keyed so
        // every trial can be regenerated in isolation.
        let mut patient_rng = seed::substream(base ^ (p as u64).wrapping_mul(0x9e37_79b9), 0);
        let affected_arm = if patient_rng.random_bool(0.5) {
            Arm::Right
        } else {
            Arm::Left
        };
        let patient_id = format!("p{p:02}");
        for side in [Side::Affected, Side::Unaffected] {
            let arm = match side {
                Side::Affected => affected_arm,
                Side::Unaffected => affected_arm.other(),
            };
            for k in 0..config.trials_per_patient_per_side {
                let spec = TrialSpec {
                    trial_id: format!("{patient_id}_{side}_{k:02}"),
                    patient_id: patient_id.clone(),
                    side,
                    arm,
                };
                let mut rng = seed::substream(base, trial_stream(config, p, side, k));
                let (trial, seg) = generate_trial_with_segment(config, &spec, &mut rng)?;
                trials.push(trial);
                segments.push(seg);
            }
        }
    }
    let manifest = DatasetManifest {
        t_max: config.t_max,
        layout: JointLayout::upper_body(),
        provenance: Provenance::Synthetic,
        seed: config.seed,
        trials,
    };
    Ok((manifest, segments))
}

pub fn generate_dataset(config: &SynthConfig) -> Result<DatasetManifest> {
    Ok(generate_dataset_with_segments(config)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(side: Side) -> TrialSpec {
        TrialSpec {
            trial_id: "x".into(),
            patient_id: "p".into(),
            side,
            arm: Arm::Right,
        }
    }

    #[test]
    fn default_config_validates() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let d = SynthConfig::default;
        assert!(matches!(
            SynthConfig {
                trials_per_patient_per_side: 0,
                ..d()
            }
            .validate(),
            Err(Error::Config(_))
        ));
        assert!(SynthConfig {
            length_range: [100, 500],
            ..d()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            compensation_probability_affected: 1.5,
            ..d()
        }
        .validate()
        .is_err());
        assert!(SynthConfig { noise_std: -1.0, ..d() }.validate().is_err());
    }

    #[test]
    fn toml_overrides_defaults() {
        let c = SynthConfig::from_toml_str("patient_count = 3\nseed = 7\n").unwrap();
        assert_eq!(c.patient_count, 3);
        assert_eq!(c.seed, 7);
        assert_eq!(c.length_range, [120, 200]);
        assert!(SynthConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn no_compensation_means_all_normal() {
        let c = SynthConfig {
            compensation_probability_affected: 0.0,
            ..SynthConfig::default()
        };
        let m = generate_dataset(&c).unwrap();
        assert_eq!(m.trials.len(), 300);
        for t in &m.trials {
            assert_eq!(t.trial_label, Label::Normal);
            assert!(t.frame_labels.iter().all(|&l| l == Label::Normal));
        }
    }

    #[test]
    fn full_coverage_labels_every_frame() {
        let c = SynthConfig {
            compensation_probability_affected: 1.0,
            compensation_coverage_range: [1.0, 1.0],
            ..SynthConfig::default()
        };
        let mut rng = seed::rng(3);
        let t = generate_trial(&c, &spec(Side::Affected), &mut rng).unwrap();
        assert!(t.frame_labels.iter().all(|&l| l == Label::Compensatory));
        assert_eq!(t.trial_label, Label::Compensatory);
    }

    #[test]
    fn labels_match_segment_and_overlay_is_visible() {
        let c = SynthConfig {
            compensation_probability_affected: 1.0,
            ..SynthConfig::default()
        };
        for s in 0..20 {
            let mut rng = seed::rng(s);
            let (t, seg) = generate_trial_with_segment(&c, &spec(Side::Affected), &mut rng).unwrap();
            let seg = seg.expect("segment injected");
            for (i, l) in t.frame_labels.iter().enumerate() {
                assert_eq!(l.is_compensatory(), seg.contains(i));
            }
            t.validate(&JointLayout::upper_body(), c.t_max).unwrap();
            // Head x at segment center vs frame 0: overlay well above noise.
            let mid = seg.start + seg.len / 2;
            let dx = (t.frames[mid][HEAD][0] - t.frames[0][HEAD][0]).abs();
            assert!(dx > 5.0 * c.noise_std, "dx = {dx}");
        }
    }

    #[test]
    fn uncompensated_head_is_noise_only() {
        let c = SynthConfig::default();
        let mut rng = seed::rng(5);
        let t = generate_trial(&c, &spec(Side::Unaffected), &mut rng).unwrap();
        let x0 = t.frames[0][HEAD][0];
        assert!(t.frames.iter().all(|f| (f[HEAD][0] - x0).abs() < 8.0 * c.noise_std));
    }

    #[test]
    fn generation_is_deterministic() {
        let c = SynthConfig {
            patient_count: 2,
            ..SynthConfig::default()
        };
        assert_eq!(generate_dataset(&c).unwrap(), generate_dataset(&c).unwrap());
        let other = SynthConfig {
            seed: c.seed + 1,
            ..c.clone()
        };
        assert_ne!(generate_dataset(&c).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn ramp_reaches_one_inside_long_segments() {
        assert_eq!(ramp(0, 60), 0.2);
        assert_eq!(ramp(30, 60), 1.0);
        assert_eq!(ramp(59, 60), 0.2);
        assert_eq!(reach_profile(0.0), 0.0);
        assert_eq!(reach_profile(1.0), 1.0);
    }
}
