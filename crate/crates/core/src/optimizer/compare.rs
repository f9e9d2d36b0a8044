use serde::{Deserialize, Serialize};

use super::{optimize, FreeVars, OptimConfig, OptimProblem, OptimReport};
use crate::error::Result;
use crate::eval::{ape_with, depth_metrics, Alignment, ApeMetrics, DepthMetrics, Trajectory};
use crate::losses::{Estimate, LossWeights, Regime, SsimParams};
use crate::synth::FrameTriplet;

/// One regime's optimization and its evaluation against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: Regime,
    pub depth: DepthMetrics,
    /// Errors of the relative poses, unaligned.
    pub pose: ApeMetrics,
    pub final_loss: f64,
    pub report: OptimReport,
}

/// One entry per regime, in [`Regime::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeComparison {
    pub entries: Vec<RegimeResult>,
}

impl RegimeComparison {
    pub fn get(&self, regime: Regime) -> Option<&RegimeResult> {
        self.entries.iter().find(|e| e.regime == regime)
    }
}

/// Scores an estimate against the triplet's ground truth. The relative poses
/// of a triplet cannot be similarity-aligned, so they are compared directly.
pub fn evaluate_estimate(triplet: &FrameTriplet, est: &Estimate) -> Result<(DepthMetrics, ApeMetrics)> {
    let depth = depth_metrics(&[est.inv_depth.to_depth()], std::slice::from_ref(&triplet.target_depth))?;
    let pred = Trajectory::from_poses(est.poses.clone())?;
    let truth = Trajectory::from_poses(triplet.rel_poses.clone())?;
    let pose = ape_with(&pred, &truth, truth.len(), Alignment::None)?;
    Ok((depth, pose))
}

/// Runs every regime from the same initialization and evaluates each result.
pub fn compare_regimes(
    triplet: &FrameTriplet,
    init: &Estimate,
    free: FreeVars,
    config: &OptimConfig,
    weights: &LossWeights,
    ssim: &SsimParams,
) -> Result<RegimeComparison> {
    let entries = Regime::ALL
        .into_iter()
        .map(|regime| {
            let problem = OptimProblem {
                weights: *weights,
                ssim: *ssim,
                ..OptimProblem::new(triplet.clone(), regime, free, init.clone())
            };
            let report = optimize(&problem, config)?;
            let (depth, pose) = evaluate_estimate(triplet, &report.final_estimate)?;
            Ok(RegimeResult {
                regime,
                depth,
                pose,
                final_loss: *report.loss_trace.last().expect("non-empty trace"),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegimeComparison { entries })
}
