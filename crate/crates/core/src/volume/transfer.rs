// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::VolumeError;

pub type Rgba = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    /// Normalised scalar in [0, 1].
    pub scalar: f64,
    pub rgba: Rgba,
}

/// Piecewise-linear scalar → RGBA map over the normalised domain [0, 1].
///
/// The domain is the dataset's dtype range for integer volumes and its value
/// extent for float volumes; see [`TransferFunction::normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransferFunction", into = "RawTransferFunction")]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
}

#[derive(Serialize, Deserialize)]
struct RawTransferFunction {
    control_points: Vec<ControlPoint>,
}

impl TryFrom<RawTransferFunction> for TransferFunction {
    type Error = VolumeError;

    fn try_from(raw: RawTransferFunction) -> Result<Self, Self::Error> {
        TransferFunction::new(raw.control_points)
    }
}

impl From<TransferFunction> for RawTransferFunction {
    fn from(tf: TransferFunction) -> Self {
        RawTransferFunction {
            control_points: tf.points,
        }
    }
}

impl TransferFunction {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self, VolumeError> {
        if points.len() < 2 {
            return Err(VolumeError::invalid("control_points", "need at least two points"));
        }
        if points[0].scalar != 0.0 || points[points.len() - 1].scalar != 1.0 {
            return Err(VolumeError::invalid(
                "control_points",
                "first scalar must be 0 and last must be 1",
            ));
        }
        if points.windows(2).any(|w| !(w[0].scalar < w[1].scalar)) {
            return Err(VolumeError::invalid(
                "control_points",
                "scalars must be strictly increasing",
            ));
        }
        if points.iter().flat_map(|p| p.rgba).any(|c| !(0.0..=1.0).contains(&c)) {
            return Err(VolumeError::invalid("control_points", "rgba outside [0, 1]"));
        }
        Ok(Self { points })
    }

    /// Black/transparent to white/opaque.
    pub fn grayscale_ramp() -> Self {
        Self {
            points: vec![
                ControlPoint {
                    scalar: 0.0,
                    rgba: [0.0; 4],
                },
                ControlPoint {
                    scalar: 1.0,
                    rgba: [1.0; 4],
                },
            ],
        }
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.points
    }

    /// Maps a raw value into [0, 1] over `[lo, hi]`, clamping outside.
    pub fn normalize(value: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn evaluate(&self, value: f64) -> Rgba {
        let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
        let n = self.points.len();
        let i = self
            .points
            .partition_point(|p| p.scalar <= v)
            .saturating_sub(1)
            .min(n - 2);
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        let t = (v - a.scalar) / (b.scalar - a.scalar);
        // Written so that t = 0 and t = 1 return the end colours exactly.
        [0, 1, 2, 3].map(|c| a.rgba[c] * (1.0 - t) + b.rgba[c] * t)
    }
}

pub fn apply_transfer_function(values: &[f64], tf: &TransferFunction) -> Vec<Rgba> {
    values.iter().map(|&v| tf.evaluate(v)).collect()
}
