// SPDX-License-Identifier: Apache-2.0

use super::AlignError;
use crate::Vec3;

/// Speed → gain law for precise manipulation: slow controller motion is
/// scaled down to `g_min`, fast motion passes through at unit gain, with a
/// linear ramp between `v_min` and `v_ref` (mm/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainProfile {
    v_min: f64,
    v_ref: f64,
    g_min: f64,
}

impl Default for GainProfile {
    fn default() -> Self {
        Self {
            v_min: 10.0,
            v_ref: 110.0,
            g_min: 0.1,
        }
    }
}

impl GainProfile {
    pub fn new(v_min: f64, v_ref: f64, g_min: f64) -> Result<Self, AlignError> {
        if !(v_min.is_finite() && v_min >= 0.0) {
            return Err(AlignError::InvalidTransform("v_min must be >= 0".into()));
        }
        if !(v_ref.is_finite() && v_ref > v_min) {
            return Err(AlignError::InvalidTransform("v_ref must exceed v_min".into()));
        }
        if !(g_min > 0.0 && g_min <= 1.0) {
            return Err(AlignError::InvalidTransform("g_min must be in (0, 1]".into()));
        }
        Ok(Self { v_min, v_ref, g_min })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_ref(&self) -> f64 {
        self.v_ref
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    pub fn gain(&self, speed: f64) -> f64 {
        if !(speed > self.v_min) {
            self.g_min
        } else if speed >= self.v_ref {
            1.0
        } else {
            self.g_min + (1.0 - self.g_min) * (speed - self.v_min) / (self.v_ref - self.v_min)
        }
    }
}

pub fn adaptive_delta(controller_delta: Vec3, controller_speed: f64, profile: &GainProfile) -> Vec3 {
    controller_delta * profile.gain(controller_speed)
}
