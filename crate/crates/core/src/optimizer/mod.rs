//! Direct gradient-based recovery of depth and pose on a synthetic triplet.
//!
//! Depth is optimized as log inverse depth, which keeps it positive; poses as
//! their six axis-angle/translation parameters. Updates use Adam.

mod check;
mod compare;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, InverseDepthMap, Pose};
use crate::losses::{Estimate, Gradient, LossWeights, Objective, Regime, SsimParams};
use crate::synth::FrameTriplet;

pub use check::{check_gradients, GradientCheck};
pub use compare::{compare_regimes, evaluate_estimate, RegimeComparison, RegimeResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    Analytic,
    #[serde(rename = "fd")]
    FiniteDifference,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(GradientMode::Analytic),
            "fd" | "finite-difference" => Ok(GradientMode::FiniteDifference),
            _ => Err(Error::invalid(format!("unknown gradient mode {s:?}; expected analytic or fd"))),
        }
    }
}

/// Which parts of the estimate are optimized; the rest stay at their
/// initial values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeVars {
    pub depth: bool,
    pub poses: bool,
}

impl FreeVars {
    pub const DEPTH: FreeVars = FreeVars { depth: true, poses: false };
    pub const POSES: FreeVars = FreeVars { depth: false, poses: true };
    pub const BOTH: FreeVars = FreeVars { depth: true, poses: true };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Adam step for log inverse depth.
    pub step_size: f64,
    /// Adam step for pose parameters.
    pub pose_step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Normalize by the running maximum of the second moment (AMSGrad), which
    /// keeps per-coordinate step sizes from growing as gradients shrink.
    pub amsgrad: bool,
    /// Halvings of the step tried when an update would raise the loss above
    /// its value `window` iterations earlier; 0 applies every update
    /// unconditionally.
    pub backtracks: usize,
    /// Look-back of the acceptance test. 1 makes the trace monotone; larger
    /// windows let Adam oscillate while the trend still decreases.
    pub window: usize,
    /// Relative loss change counted as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    /// Stop as soon as every free gradient component is at most this large.
    pub gradient_tolerance: f64,
    pub gradient_mode: GradientMode,
    /// Central-difference step in finite-difference mode.
    pub fd_step: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iters: 2000,
            step_size: 1e-2,
            pose_step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            amsgrad: true,
            backtracks: 30,
            window: 50,
            tolerance: 1e-8,
            patience: 10,
            gradient_tolerance: 1e-12,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-4,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("pose_step_size", self.pose_step_size),
            ("epsilon", self.epsilon),
            ("fd_step", self.fd_step),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {x}")));
            }
        }
        for (name, x) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {x}")));
            }
        }
        if !(self.tolerance >= 0.0) || !(self.gradient_tolerance >= 0.0) {
            return Err(Error::invalid("tolerances must be non-negative"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        Ok(())
    }
}

/// A triplet, a regime, and a starting point. The triplet's ground truth is
/// the reference for the supervised regimes.
#[derive(Clone, Debug)]
pub struct OptimProblem {
    pub triplet: FrameTriplet,
    pub regime: Regime,
    pub free: FreeVars,
    pub init: Estimate,
    pub weights: LossWeights,
    pub ssim: SsimParams,
}

impl OptimProblem {
    pub fn new(triplet: FrameTriplet, regime: Regime, free: FreeVars, init: Estimate) -> Self {
        OptimProblem {
            triplet,
            regime,
            free,
            init,
            weights: LossWeights::default(),
            ssim: SsimParams::default(),
        }
    }

    pub fn reference(&self) -> Estimate {
        self.triplet.truth()
    }

    pub fn objective(&self) -> Result<(Objective<'_>, Estimate)> {
        let reference = self.reference();
        let obj = Objective::new(self.triplet.frames(), self.regime, self.weights, self.ssim, Some(&reference))?;
        Ok((obj, reference))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub regime: Regime,
    /// Loss at the start of every iteration; one entry per iteration.
    pub loss_trace: Vec<f64>,
    pub final_estimate: Estimate,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub duration: Duration,
}

/// Loss value and gradient at `at`, analytic or by central differences on
/// inverse depth and pose parameters.
pub fn gradient(objective: &Objective<'_>, at: &Estimate, free: FreeVars, mode: GradientMode, step: f64) -> Result<(f64, Gradient)> {
    match mode {
        GradientMode::Analytic => objective.value_and_gradient(at, free.depth, free.poses),
        GradientMode::FiniteDifference => {
            let value = objective.value(at)?;
            let mut grad = Gradient::zeros(at.inv_depth.field().len(), at.poses.len());
            if free.depth {
                let mut field = at.inv_depth.field().clone();
                for i in 0..field.len() {
                    let x = field.as_slice()[i];
                    let mut eval = |v: f64| -> Result<f64> {
                        field.as_mut_slice()[i] = v;
                        objective.value(&Estimate {
                            inv_depth: InverseDepthMap::new(field.clone())?,
                            poses: at.poses.clone(),
                        })
                    };
                    grad.inv_depth[i] = (eval(x + step)? - eval(x - step)?) / (2.0 * step);
                    field.as_mut_slice()[i] = x;
                }
            }
            if free.poses {
                for j in 0..at.poses.len() {
                    for c in 0..6 {
                        let eval = |delta: f64| -> Result<f64> {
                            let mut poses = at.poses.clone();
                            let mut q = poses[j].to_params();
                            q[c] += delta;
                            poses[j] = Pose::from_params(&q);
                            objective.value(&Estimate {
                                inv_depth: at.inv_depth.clone(),
                                poses,
                            })
                        };
                        grad.poses[j][c] = (eval(step)? - eval(-step)?) / (2.0 * step);
                    }
                }
            }
            Ok((value, grad))
        }
    }
}

/// Outcome of one [`Optimizer::step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// Loss evaluated and parameters updated.
    Continue(f64),
    /// Loss evaluated; the stopping rule fired and parameters were kept.
    Converged(f64),
    /// The iteration budget is spent.
    Exhausted,
}

/// Adam state over the free variables, advanced one iteration at a time.
pub struct Optimizer<'a> {
    objective: Objective<'a>,
    free: FreeVars,
    config: OptimConfig,
    params: Vec<f64>,
    n_depth: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
    /// Loss and log-space gradient at `params`, if already known.
    current: Option<(f64, Vec<f64>)>,
    /// Backtracking multiplier on the Adam step.
    scale: f64,
    /// Adam steps since the moments were last reset.
    adam_t: i32,
    /// Moments were reset and no step has been accepted since.
    restarted: bool,
    trace: Vec<f64>,
    stalled: usize,
    converged: bool,
}

impl<'a> Optimizer<'a> {
    pub fn new(objective: Objective<'a>, init: &Estimate, free: FreeVars, config: OptimConfig) -> Result<Self> {
        config.validate()?;
        if !free.depth && !free.poses {
            return Err(Error::invalid("at least one of depth and poses must be free"));
        }
        objective.value(init)?;
        let mut params: Vec<f64> = init.inv_depth.field().as_slice().iter().map(|d| d.ln()).collect();
        let n_depth = params.len();
        params.extend(init.poses.iter().flat_map(Pose::to_params));
        let dim = params.len();
        Ok(Optimizer {
            objective,
            free,
            config,
            params,
            n_depth,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            v_max: vec![0.0; dim],
            current: None,
            scale: 1.0,
            adam_t: 0,
            restarted: false,
            trace: Vec::new(),
            stalled: 0,
            converged: false,
        })
    }

    pub fn objective(&self) -> &Objective<'a> {
        &self.objective
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn estimate(&self) -> Result<Estimate> {
        self.estimate_at(&self.params)
    }

    fn estimate_at(&self, params: &[f64]) -> Result<Estimate> {
        let k = self.objective.frames().intrinsics;
        let inv = Field::new(k.width, k.height, params[..self.n_depth].iter().map(|x| x.exp()).collect())?;
        let inv_depth = InverseDepthMap::new(inv)?;
        let poses = params[self.n_depth..]
            .chunks_exact(6)
            .map(|c| Pose::from_params(&[c[0], c[1], c[2], c[3], c[4], c[5]]))
            .collect();
        Ok(Estimate { inv_depth, poses })
    }

    fn is_free(&self, i: usize) -> bool {
        if i < self.n_depth {
            self.free.depth
        } else {
            self.free.poses
        }
    }

    /// Loss and, if `with_grad`, the gradient in optimization coordinates.
    fn evaluate(&self, params: &[f64], with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let iteration = self.trace.len();
        let diverged = |reason: String| Error::Diverged { iteration, reason };
        let est = self.estimate_at(params).map_err(|e| diverged(e.to_string()))?;
        let cfg = &self.config;
        let (loss, g) = if with_grad {
            let (loss, grad) = gradient(&self.objective, &est, self.free, cfg.gradient_mode, cfg.fd_step)?;
            // chain rule through d = exp(θ)
            let mut g: Vec<f64> = Vec::with_capacity(params.len());
            g.extend(grad.inv_depth.iter().zip(est.inv_depth.field().as_slice()).map(|(gd, d)| gd * d));
            g.extend(grad.poses.iter().flatten());
            if g.iter().any(|x| !x.is_finite()) {
                return Err(diverged("non-finite gradient".into()));
            }
            (loss, Some(g))
        } else {
            (self.objective.value(&est)?, None)
        };
        if !loss.is_finite() {
            return Err(diverged(format!("loss is {loss}")));
        }
        Ok((loss, g))
    }

    pub fn step(&mut self) -> Result<Step> {
        let iteration = self.trace.len();
        if self.converged {
            return Ok(Step::Converged(*self.trace.last().expect("trace")));
        }
        if iteration >= self.config.max_iters {
            return Ok(Step::Exhausted);
        }
        let (loss, g) = match self.current.take() {
            Some(c) => c,
            None => {
                let (loss, g) = self.evaluate(&self.params, true)?;
                (loss, g.expect("gradient"))
            }
        };
        let cfg = self.config;
        if let Some(&prev) = self.trace.last() {
            let change = (loss - prev).abs();
            let stalled = if prev == 0.0 { change == 0.0 } else { change <= cfg.tolerance * prev.abs() };
            self.stalled = if stalled { self.stalled + 1 } else { 0 };
        }
        self.trace.push(loss);
        let free_max = (0..g.len()).filter(|&i| self.is_free(i)).fold(0.0f64, |m, i| m.max(g[i].abs()));
        if self.stalled >= cfg.patience || free_max <= cfg.gradient_tolerance {
            self.converged = true;
            return Ok(Step::Converged(loss));
        }
        if iteration + 1 == cfg.max_iters {
            self.current = Some((loss, g));
            return Ok(Step::Continue(loss));
        }

        loop {
            let direction = self.adam_direction(&g);
            if cfg.backtracks == 0 {
                self.params.iter_mut().zip(&direction).for_each(|(x, d)| *x -= d);
                return Ok(Step::Continue(loss));
            }
            let analytic = cfg.gradient_mode == GradientMode::Analytic;
            let bound = self.trace[self.trace.len().saturating_sub(cfg.window)];
            for _ in 0..=cfg.backtracks {
                let trial: Vec<f64> = self.params.iter().zip(&direction).map(|(x, d)| x - self.scale * d).collect();
                let (trial_loss, trial_grad) = self.evaluate(&trial, analytic)?;
                if trial_loss <= bound {
                    let trial_grad = match trial_grad {
                        Some(g) => g,
                        None => self.evaluate(&trial, true)?.1.expect("gradient"),
                    };
                    self.params = trial;
                    self.current = Some((trial_loss, trial_grad));
                    self.scale = (self.scale * 2.0).min(1.0);
                    self.restarted = false;
                    return Ok(Step::Continue(loss));
                }
                self.scale *= 0.5;
            }
            // No acceptable point along the Adam direction at any tried
            // scale. Restart from fresh moments once before giving up.
            if self.restarted {
                self.converged = true;
                return Ok(Step::Converged(loss));
            }
            self.m.fill(0.0);
            self.v.fill(0.0);
            self.v_max.fill(0.0);
            self.adam_t = 0;
            self.scale = 1.0;
            self.restarted = true;
        }
    }

    fn adam_direction(&mut self, g: &[f64]) -> Vec<f64> {
        let cfg = self.config;
        self.adam_t += 1;
        let t = self.adam_t;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        let mut direction = vec![0.0; g.len()];
        for (i, d) in direction.iter_mut().enumerate() {
            if !self.is_free(i) {
                continue;
            }
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mut v_hat = self.v[i] / c2;
            if cfg.amsgrad {
                self.v_max[i] = self.v_max[i].max(v_hat);
                v_hat = self.v_max[i];
            }
            let lr = if i < self.n_depth { cfg.step_size } else { cfg.pose_step_size };
            *d = lr * (self.m[i] / c1) / (v_hat.sqrt() + cfg.epsilon);
        }
        direction
    }
}

/// Runs Adam until the stopping rule fires or `max_iters` iterations are
/// spent. The final estimate is the one whose loss ends the trace.
pub fn optimize(problem: &OptimProblem, config: &OptimConfig) -> Result<OptimReport> {
    let start = Instant::now();
    let (objective, _) = problem.objective()?;
    let mut opt = Optimizer::new(objective, &problem.init, problem.free, *config)?;
    while let Step::Continue(_) = opt.step()? {}
    Ok(OptimReport {
        regime: problem.regime,
        loss_trace: opt.trace.clone(),
        final_estimate: opt.estimate()?,
        iterations: opt.trace.len(),
        converged: opt.converged,
        duration: start.elapsed(),
    })
}

#[cfg(test)]
mod tests;
