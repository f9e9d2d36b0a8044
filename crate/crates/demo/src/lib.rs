//! In-browser views of the losses: warp a source frame under an edited pose
//! and depth, inspect the per-pixel photometric error, and step an optimizer
//! while watching its loss trace.
//!
//! [`Scene`] and [`Session`] are plain Rust so they test on the host; the
//! `bindings` module wraps them for JavaScript on wasm32.

#[cfg(target_arch = "wasm32")]
mod bindings;
mod render;

use photoloss::eval::{depth_metrics_with, ScaleAlignment};
use photoloss::geometry::warp;
use photoloss::losses::{pe, Estimate, Objective, Regime};
use photoloss::optimizer::{evaluate_estimate, FreeVars, OptimConfig, Optimizer, Step};
use photoloss::synth::{perturb, render_scene, FrameTriplet, Perturbation, SceneSpec};
use photoloss::{LossWeights, Pose, SsimParams};

pub use render::{gray_rgba, heat_rgba};

pub type Result<T> = std::result::Result<T, String>;

fn err(e: photoloss::Error) -> String {
    e.to_string()
}

/// Pose and depth edits applied on top of the ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Edit {
    /// Multiplies the true depth.
    pub depth_scale: f64,
    /// Added to the true axis-angle rotation.
    pub rotation: [f64; 3],
    /// Added to the true translation.
    pub translation: [f64; 3],
}

impl Edit {
    pub fn none() -> Self {
        Edit {
            depth_scale: 1.0,
            ..Edit::default()
        }
    }
}

/// The default translating-plane scene at a chosen resolution.
pub struct Scene {
    triplet: FrameTriplet,
}

/// Warped source with its photometric error against the target.
pub struct WarpView {
    pub warped: Vec<u8>,
    pub error: Vec<u8>,
    pub mean_error: f64,
    pub valid_fraction: f64,
}

impl Scene {
    pub fn new(size: usize) -> Result<Scene> {
        if !(8..=256).contains(&size) {
            return Err(format!("size must be between 8 and 256, got {size}"));
        }
        let triplet = render_scene(&SceneSpec::default().resized(size, size))
            .map_err(err)?
            .remove(0);
        Ok(Scene { triplet })
    }

    pub fn width(&self) -> usize {
        self.triplet.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.triplet.intrinsics.height
    }

    pub fn triplet(&self) -> &FrameTriplet {
        &self.triplet
    }

    pub fn target_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.triplet.target)
    }

    pub fn source_rgba(&self, source: usize) -> Result<Vec<u8>> {
        self.source(source).map(gray_rgba)
    }

    fn source(&self, i: usize) -> Result<&photoloss::Image> {
        self.triplet
            .sources
            .get(i)
            .ok_or_else(|| format!("source index {i} out of range"))
    }

    /// Warps source `i` into the target view with the edited depth and pose,
    /// and maps `pe(target, warped)` with invalid pixels shown black.
    pub fn warp(&self, i: usize, edit: &Edit) -> Result<WarpView> {
        let t = &self.triplet;
        let src = self.source(i)?;
        if !(edit.depth_scale > 0.0) {
            return Err("depth scale must be positive".into());
        }
        let depth = photoloss::DepthMap::new(t.target_depth.field().map(|d| d * edit.depth_scale)).map_err(err)?;
        let mut params = t.rel_poses[i].to_params();
        for (k, d) in edit.rotation.iter().chain(&edit.translation).enumerate() {
            params[k] += d;
        }
        let pose = Pose::from_params(&params);
        pose.validate().map_err(err)?;
        let (warped, valid) = warp(src, &depth, &pose, &t.intrinsics).map_err(err)?;
        let map = pe(&t.target, &warped, &LossWeights::default(), &SsimParams::default()).map_err(err)?;
        let values = map.values.as_slice();
        let mask = valid.as_slice();
        let n = mask.iter().filter(|&&m| m).count();
        let mean_error = if n == 0 {
            0.0
        } else {
            values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / n as f64
        };
        Ok(WarpView {
            warped: gray_rgba(&warped),
            error: heat_rgba(values, Some(mask), 0.5),
            mean_error,
            valid_fraction: n as f64 / mask.len() as f64,
        })
    }
}

/// A live optimization of depth and poses from a perturbed start.
pub struct Session {
    triplet: &'static FrameTriplet,
    optimizer: Optimizer<'static>,
    finished: bool,
}

impl Session {
    /// The scene's frames stay allocated for the rest of the program, since
    /// the optimizer borrows them.
    pub fn new(scene: &Scene, regime: &str, noise: f64, seed: u64) -> Result<Session> {
        let regime: Regime = regime.parse().map_err(err)?;
        if !(0.0..=0.5).contains(&noise) {
            return Err(format!("noise must be within [0, 0.5], got {noise}"));
        }
        let triplet: &'static FrameTriplet = Box::leak(Box::new(scene.triplet.clone()));
        let perturbation = Perturbation {
            depth: noise,
            rotation: noise / 5.0,
            translation: noise / 5.0,
        };
        let init = perturb(triplet, &perturbation, seed).map_err(err)?.truth();
        let truth = triplet.truth();
        let objective = Objective::new(
            triplet.frames(),
            regime,
            LossWeights::default(),
            SsimParams::default(),
            Some(&truth),
        )
        .map_err(err)?;
        let optimizer = Optimizer::new(objective, &init, FreeVars::BOTH, OptimConfig::default()).map_err(err)?;
        Ok(Session {
            triplet,
            optimizer,
            finished: false,
        })
    }

    /// Runs up to `n` iterations; returns the latest loss.
    pub fn step(&mut self, n: usize) -> Result<f64> {
        for _ in 0..n {
            if self.finished {
                break;
            }
            match self.optimizer.step().map_err(err)? {
                Step::Continue(_) => {}
                Step::Converged(_) | Step::Exhausted => self.finished = true,
            }
        }
        Ok(self.optimizer.trace().last().copied().unwrap_or(f64::NAN))
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn trace(&self) -> &[f64] {
        self.optimizer.trace()
    }

    pub fn estimate(&self) -> Result<Estimate> {
        self.optimizer.estimate().map_err(err)
    }

    /// Current depth, colored on the true depth's range.
    pub fn depth_rgba(&self) -> Result<Vec<u8>> {
        let est = self.estimate()?;
        let truth = self.triplet.target_depth.field().as_slice();
        let (lo, hi) = truth.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        let depth = est.inv_depth.to_depth();
        let scaled: Vec<f64> = depth.field().as_slice().iter().map(|d| (d - lo) / (hi - lo).max(1e-9)).collect();
        Ok(heat_rgba(&scaled, None, 1.0))
    }

    /// Mean relative depth error (unscaled) and largest rotation error.
    pub fn errors(&self) -> Result<(f64, f64)> {
        let est = self.estimate()?;
        let depth = depth_metrics_with(
            &[est.inv_depth.to_depth()],
            std::slice::from_ref(&self.triplet.target_depth),
            ScaleAlignment::Fixed(1.0),
        )
        .map_err(err)?;
        let (_, pose) = evaluate_estimate(self.triplet, &est).map_err(err)?;
        Ok((depth.rel_mean, pose.rot_max))
    }
}
