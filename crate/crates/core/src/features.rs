//! Per-focal-person feature tensors and presence masks.
//!
//! For a focal person `i` and every other slot `j` (ascending person id,
//! focal skipped) the channels at each step are:
//!
//! | idx | name         | raw quantity                                   |
//! |-----|--------------|------------------------------------------------|
//! | 0   | focal_head   | head orientation of `i`                        |
//! | 1   | focal_body   | body orientation of `i` (head if missing)      |
//! | 2   | distance     | ‖p_j − p_i‖                                    |
//! | 3   | bearing      | direction of `p_j − p_i`                       |
//! | 4   | other_head   | head orientation of `j`                        |
//! | 5   | other_body   | body orientation of `j` (head if missing)      |
//!
//! Orientation channels (0, 1, 3, 4, 5) are taken relative to the frame's
//! zero reference, the circular mean of all present body orientations, and
//! encoded as `(angle + π) / 2π`. Every channel is then min-max scaled with
//! bounds fitted on training data. Absent slots hold `-1` in every channel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{wrap_angle, Frame, PersonId, PersonState, SceneSequence};

pub const CHANNELS: [&str; N_CHANNELS] = [
    "focal_head",
    "focal_body",
    "distance",
    "bearing",
    "other_head",
    "other_body",
];
pub const N_CHANNELS: usize = 6;
pub const PAD: f64 = -1.0;

const DEGENERATE_RESULTANT: f64 = 1e-12;

/// Direction of the mean resultant vector, in (−π, π].
pub fn circular_mean(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::Degenerate("circular mean of an empty set".into()));
    }
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let n = angles.len() as f64;
    let (s, c) = (s / n, c / n);
    if s.hypot(c) <= DEGENERATE_RESULTANT {
        return Err(Error::Degenerate("angles cancel out, resultant length ~ 0".into()));
    }
    Ok(wrap_angle(s.atan2(c)))
}

/// Maps an angle in (−π, π] onto (0, 1].
pub fn encode_angle(angle: f64) -> f64 {
    (angle + PI) / (2.0 * PI)
}

/// Tensor slot used for `other` when `focal` is the focal person.
pub fn slot_of(focal: PersonId, other: PersonId) -> usize {
    debug_assert_ne!(focal, other);
    if other < focal {
        other
    } else {
        other - 1
    }
}

/// Inverse of [`slot_of`].
pub fn person_at_slot(focal: PersonId, slot: usize) -> PersonId {
    if slot < focal {
        slot
    } else {
        slot + 1
    }
}

/// Circular mean of the present body orientations; 0 when degenerate.
pub fn zero_reference(frame: &Frame) -> f64 {
    let angles: Vec<f64> = frame.persons.iter().map(PersonState::body_or_head).collect();
    circular_mean(&angles).unwrap_or(0.0)
}

/// Unscaled channel values for one (focal, other) pair.
pub fn raw_pair_features(focal: &PersonState, other: &PersonState, zero_ref: f64) -> [f64; N_CHANNELS] {
    let rel = |a: f64| encode_angle(wrap_angle(a - zero_ref));
    let (dx, dy) = (other.x - focal.x, other.y - focal.y);
    [
        rel(focal.head),
        rel(focal.body_or_head()),
        dx.hypot(dy),
        rel(dy.atan2(dx)),
        rel(other.head),
        rel(other.body_or_head()),
    ]
}

/// Per-channel min-max bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: [f64; N_CHANNELS],
    pub max: [f64; N_CHANNELS],
}

impl FeatureScaler {
    pub fn fit<'a>(raw: impl IntoIterator<Item = &'a [f64; N_CHANNELS]>) -> Result<Self> {
        let mut min = [f64::INFINITY; N_CHANNELS];
        let mut max = [f64::NEG_INFINITY; N_CHANNELS];
        let mut any = false;
        for v in raw {
            any = true;
            for c in 0..N_CHANNELS {
                min[c] = min[c].min(v[c]);
                max[c] = max[c].max(v[c]);
            }
        }
        if !any {
            return Err(Error::Degenerate("no feature vectors to fit scaling bounds".into()));
        }
        Ok(Self { min, max })
    }

    /// Bounds from every present pair in the given frames of each sequence.
    pub fn fit_frames(seqs: &[SceneSequence], ranges: &[std::ops::Range<usize>]) -> Result<Self> {
        let mut raw = Vec::new();
        for (seq, range) in seqs.iter().zip(ranges) {
            for frame in &seq.frames[range.clone()] {
                let zr = zero_reference(frame);
                for a in &frame.persons {
                    for b in &frame.persons {
                        if a.id != b.id {
                            raw.push(raw_pair_features(a, b, zr));
                        }
                    }
                }
            }
        }
        Self::fit(raw.iter())
    }

    pub fn scale(&self, raw: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
        let mut out = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            let span = self.max[c] - self.min[c];
            out[c] = if span > 0.0 {
                ((raw[c] - self.min[c]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        out
    }
}

/// `(steps, slots, N_CHANNELS)` feature values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub focal_id: PersonId,
    pub steps: usize,
    pub slots: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(focal_id: PersonId, steps: usize, slots: usize) -> Self {
        Self {
            focal_id,
            steps,
            slots,
            values: vec![PAD; steps * slots * N_CHANNELS],
        }
    }

    pub fn at(&self, step: usize, slot: usize) -> &[f64] {
        let o = (step * self.slots + slot) * N_CHANNELS;
        &self.values[o..o + N_CHANNELS]
    }

    pub fn at_mut(&mut self, step: usize, slot: usize) -> &mut [f64] {
        let o = (step * self.slots + slot) * N_CHANNELS;
        &mut self.values[o..o + N_CHANNELS]
    }
}

/// `(steps, slots)` presence indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceMask {
    pub steps: usize,
    pub slots: usize,
    pub values: Vec<bool>,
}

impl PresenceMask {
    pub fn new(steps: usize, slots: usize) -> Self {
        Self {
            steps,
            slots,
            values: vec![false; steps * slots],
        }
    }

    pub fn get(&self, step: usize, slot: usize) -> bool {
        self.values[step * self.slots + slot]
    }

    pub fn set(&mut self, step: usize, slot: usize, present: bool) {
        self.values[step * self.slots + slot] = present;
    }

    pub fn count(&self, step: usize) -> usize {
        self.values[step * self.slots..(step + 1) * self.slots]
            .iter()
            .filter(|&&p| p)
            .count()
    }
}

/// Builds the tensor and mask for `focal_id` over frames `[start, start + len)`.
pub fn build_features(
    seq: &SceneSequence,
    focal_id: PersonId,
    start: usize,
    len: usize,
    scaler: &FeatureScaler,
) -> Result<(FeatureTensor, PresenceMask)> {
    if len == 0 {
        return Err(Error::Shape("empty window".into()));
    }
    let end = start + len;
    if end > seq.frames.len() {
        return Err(Error::Shape(format!(
            "window [{start}, {end}) exceeds {} frames of scene {}",
            seq.frames.len(),
            seq.scene_id
        )));
    }
    if focal_id >= seq.n {
        return Err(Error::Shape(format!("focal id {focal_id} not in [0, {})", seq.n)));
    }
    if !seq.frames[end - 1].is_present(focal_id) {
        return Err(Error::invariant(
            "focal_id",
            format!(
                "person {focal_id} absent at the final window step of scene {}",
                seq.scene_id
            ),
        ));
    }
    let slots = seq.n - 1;
    let mut tensor = FeatureTensor::new(focal_id, len, slots);
    let mut mask = PresenceMask::new(len, slots);
    for (step, frame) in seq.frames[start..end].iter().enumerate() {
        // A focal person absent at an earlier step leaves that whole step padded.
        let Some(focal) = frame.person(focal_id) else {
            continue;
        };
        let zr = zero_reference(frame);
        for other in frame.persons.iter().filter(|p| p.id != focal_id) {
            let slot = slot_of(focal_id, other.id);
            let scaled = scaler.scale(&raw_pair_features(focal, other, zr));
            tensor.at_mut(step, slot).copy_from_slice(&scaled);
            mask.set(step, slot, true);
        }
    }
    Ok((tensor, mask))
}
