//! Photometric, smoothness, and supervision losses and the three total
//! objectives built from them.

mod objective;
mod photometric;
mod smoothness;
mod ssim;
mod supervised;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Mask};

pub use objective::{
    direct_supervised_total, gen_depth_loss, gen_pose_loss, generalized_total, self_supervised_total,
    Estimate, Frames, Gradient, Objective, Regime, TermBreakdown,
};
pub use photometric::{automask, pe, reprojection_loss};
pub use smoothness::smoothness_loss;
pub use ssim::ssim_map;
pub use supervised::{depth_supervision_loss, pose_supervision_loss};

/// Term weights. Defaults are the values the loss was tuned with:
/// `α = 0.85`, `λ = 0.001`, `γ = 30`, `ζ = ψ = 15`, `θ = 160`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// SSIM versus L1 balance inside the photometric error.
    pub alpha: f64,
    /// Edge-aware smoothness weight.
    pub lambda: f64,
    /// Photometric weight in the direct-supervision objective.
    pub psi: f64,
    /// Depth-supervision weight.
    pub gamma: f64,
    /// Translation weight of the pose distance.
    pub zeta: f64,
    /// Rotation weight of the pose distance.
    pub theta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.85,
            lambda: 0.001,
            psi: 15.0,
            gamma: 30.0,
            zeta: 15.0,
            theta: 160.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        let named = [
            ("lambda", self.lambda),
            ("psi", self.psi),
            ("gamma", self.gamma),
            ("zeta", self.zeta),
            ("theta", self.theta),
        ];
        for (name, w) in named {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("weight {name} = {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Window and stabilization constants for SSIM on `[0, 1]` intensities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 3,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("SSIM window {} must be odd and >= 3", self.window)));
        }
        if !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::invalid("SSIM constants must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel loss with the set of pixels that enter the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelLossMap {
    pub values: Field,
    pub weight_mask: Mask,
}

impl PixelLossMap {
    /// `1/N Σ` over included pixels, with `N` the total pixel count.
    pub fn masked_mean(&self) -> f64 {
        let sum: f64 = self
            .values
            .as_slice()
            .iter()
            .zip(self.weight_mask.as_slice())
            .filter(|(_, &m)| m)
            .map(|(v, _)| v)
            .sum();
        sum / self.values.len() as f64
    }
}
