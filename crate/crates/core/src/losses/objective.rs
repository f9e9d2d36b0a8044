use serde::{Deserialize, Serialize};

use super::photometric::{check_sources, identity_min, PhotometricTerm};
use super::smoothness::{edge_weights, smoothness_backward, smoothness_values};
use super::supervised::{depth_supervision_eval, pose_supervision_eval};
use super::{LossWeights, PixelLossMap, SsimParams};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Field, Image, Intrinsics, InverseDepthMap, Mask, Pose};

/// The three training objectives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Masked min-over-sources photometric error plus edge-aware smoothness.
    SelfSupervised,
    /// Weighted photometric, inverse-depth, and pose-distance supervision.
    Direct,
    /// Self-supervised terms plus photometric depth and pose supervision.
    Generalized,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::SelfSupervised, Regime::Direct, Regime::Generalized];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::SelfSupervised => "self-supervised",
            Regime::Direct => "direct",
            Regime::Generalized => "generalized",
        }
    }

    pub fn needs_reference(&self) -> bool {
        !matches!(self, Regime::SelfSupervised)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown regime {s:?}; expected self-supervised, direct or generalized")))
    }
}

/// Target frame, its source frames, and the shared camera.
#[derive(Clone, Copy, Debug)]
pub struct Frames<'a> {
    pub target: &'a Image,
    pub sources: &'a [Image],
    pub intrinsics: &'a Intrinsics,
}

/// Target inverse depth and one target-to-source pose per source frame.
/// Used both for predictions and for references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub inv_depth: InverseDepthMap,
    pub poses: Vec<Pose>,
}

/// Gradient of a scalar objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub inv_depth: Vec<f64>,
    /// `[rx, ry, rz, tx, ty, tz]` per source.
    pub poses: Vec<[f64; 6]>,
}

impl Gradient {
    pub fn zeros(pixels: usize, sources: usize) -> Self {
        Gradient {
            inv_depth: vec![0.0; pixels],
            poses: vec![[0.0; 6]; sources],
        }
    }
}

/// Contribution of every term to a total; terms absent from the regime are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    /// Masked reprojection term with predicted depth and poses (weighted by ψ
    /// in the direct regime).
    pub photometric: f64,
    /// `λ · mean(L_s)`.
    pub smoothness: f64,
    /// Masked photometric term with predicted depth and reference poses.
    pub depth_photometric: f64,
    /// Masked photometric term with reference depth and predicted poses.
    pub pose_photometric: f64,
    /// `γ · L_dt`.
    pub depth_supervision: f64,
    /// Sum of pose distances over sources.
    pub pose_supervision: f64,
    pub total: f64,
}

/// A regime bound to a set of frames, ready to evaluate values and gradients.
pub struct Objective<'a> {
    frames: Frames<'a>,
    regime: Regime,
    weights: LossWeights,
    ssim: SsimParams,
    reference: Option<Estimate>,
    reference_depth: Option<Field>,
    identity_min: Vec<f64>,
    edges: (Vec<f64>, Vec<f64>),
}

impl<'a> Objective<'a> {
    pub fn new(
        frames: Frames<'a>,
        regime: Regime,
        weights: LossWeights,
        ssim: SsimParams,
        reference: Option<&Estimate>,
    ) -> Result<Self> {
        let k = frames.intrinsics;
        k.validate()?;
        weights.validate()?;
        ssim.validate()?;
        check_sources(frames.target, frames.sources, frames.sources.len(), k)?;
        if regime.needs_reference() && reference.is_none() {
            return Err(Error::invalid(format!("{regime} regime requires reference depth and poses")));
        }
        if let Some(r) = reference {
            check_estimate(r, k, frames.sources.len())?;
        }
        Ok(Objective {
            frames,
            regime,
            weights,
            ssim,
            reference: reference.cloned(),
            reference_depth: reference.map(|r| r.inv_depth.to_depth().field().clone()),
            identity_min: identity_min(frames.target, frames.sources, weights.alpha, &ssim),
            edges: edge_weights(frames.target),
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn frames(&self) -> Frames<'a> {
        self.frames
    }

    pub fn ssim(&self) -> SsimParams {
        self.ssim
    }

    pub fn value(&self, est: &Estimate) -> Result<f64> {
        Ok(self.evaluate(est, false, false)?.0.total)
    }

    pub fn breakdown(&self, est: &Estimate) -> Result<TermBreakdown> {
        Ok(self.evaluate(est, false, false)?.0)
    }

    /// Value and gradient with respect to inverse depth and/or poses.
    /// Components not requested are left at zero.
    pub fn value_and_gradient(&self, est: &Estimate, wrt_depth: bool, wrt_poses: bool) -> Result<(f64, Gradient)> {
        let (terms, grad) = self.evaluate(est, wrt_depth, wrt_poses)?;
        Ok((terms.total, grad))
    }

    fn evaluate(&self, est: &Estimate, wrt_depth: bool, wrt_poses: bool) -> Result<(TermBreakdown, Gradient)> {
        self.evaluate_on(est, wrt_depth, wrt_poses, None)
    }

    /// Per-pixel discrete state of every photometric term: argmin source,
    /// automask, and the sampling cell and validity in each source. The
    /// objective is smooth in any neighbourhood where these stay fixed.
    pub(crate) fn pixel_states(&self, est: &Estimate) -> Result<Vec<Vec<i64>>> {
        let Frames {
            target,
            sources,
            intrinsics: k,
        } = self.frames;
        check_estimate(est, k, sources.len())?;
        let depth = est.inv_depth.to_depth();
        let mut terms = vec![(depth.field(), est.poses.as_slice())];
        if let (Regime::Generalized, Some(r)) = (self.regime, self.reference.as_ref()) {
            terms.push((depth.field(), r.poses.as_slice()));
            terms.push((self.reference_depth.as_ref().expect("reference depth"), est.poses.as_slice()));
        }
        let mut states = vec![Vec::new(); k.width * k.height];
        for (d, poses) in terms {
            let term = PhotometricTerm::evaluate(target, sources, d, poses, k, self.weights.alpha, &self.ssim, false);
            let mu = term.automask(&self.identity_min);
            for (i, state) in states.iter_mut().enumerate() {
                state.push(term.argmin[i].map_or(-1, |j| j as i64));
                state.push(mu[i] as i64);
                for ws in &term.warped {
                    let px = &ws.pixels[i];
                    state.extend([px.u.floor() as i64, px.v.floor() as i64, px.valid as i64]);
                }
            }
        }
        Ok(states)
    }

    /// Like [`Objective::value_and_gradient`] but with every per-pixel
    /// photometric contribution outside `keep` dropped.
    pub(crate) fn value_and_gradient_on(
        &self,
        est: &Estimate,
        wrt_depth: bool,
        wrt_poses: bool,
        keep: &[bool],
    ) -> Result<(f64, Gradient)> {
        let (terms, grad) = self.evaluate_on(est, wrt_depth, wrt_poses, Some(keep))?;
        Ok((terms.total, grad))
    }

    fn evaluate_on(
        &self,
        est: &Estimate,
        wrt_depth: bool,
        wrt_poses: bool,
        keep: Option<&[bool]>,
    ) -> Result<(TermBreakdown, Gradient)> {
        let Frames {
            target,
            sources,
            intrinsics: k,
        } = self.frames;
        check_estimate(est, k, sources.len())?;
        let (w, h) = (k.width, k.height);
        let n = w * h;
        let nf = n as f64;
        let alpha = self.weights.alpha;
        let p = &self.ssim;
        let want = wrt_depth || wrt_poses;
        let inv = est.inv_depth.field().as_slice();
        let depth = est.inv_depth.to_depth();
        let depth = depth.field();

        let mut terms = TermBreakdown::default();
        // gradient with respect to depth D, converted to inverse depth at the end
        let mut g_depth = vec![0.0; n];
        let mut grad = Gradient::zeros(n, sources.len());

        let masked = |term: &PhotometricTerm, coef: f64| -> (f64, Vec<f64>) {
            let mut mu = term.automask(&self.identity_min);
            if let Some(keep) = keep {
                mu.iter_mut().zip(keep).for_each(|(m, &k)| *m &= k);
            }
            let value = term.min.iter().zip(&mu).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / nf * coef;
            let upstream = mu.iter().map(|&m| if m { coef / nf } else { 0.0 }).collect();
            (value, upstream)
        };

        let photometric_coef = match self.regime {
            Regime::Direct => self.weights.psi,
            _ => 1.0,
        };
        let lp = PhotometricTerm::evaluate(target, sources, depth, &est.poses, k, alpha, p, want);
        let (value, upstream) = masked(&lp, photometric_coef);
        terms.photometric = value;
        if want && photometric_coef != 0.0 {
            lp.backward(
                target,
                sources,
                alpha,
                p,
                &upstream,
                wrt_depth.then_some(g_depth.as_mut_slice()),
                wrt_poses.then_some(grad.poses.as_mut_slice()),
            );
        }

        if matches!(self.regime, Regime::SelfSupervised | Regime::Generalized) {
            let ls = smoothness_values(inv, w, h, &self.edges);
            terms.smoothness = self.weights.lambda * ls.iter().sum::<f64>() / nf;
            if wrt_depth && self.weights.lambda != 0.0 {
                let upstream = vec![self.weights.lambda / nf; n];
                smoothness_backward(inv, w, h, &self.edges, &upstream, &mut grad.inv_depth);
            }
        }

        let reference = self.reference.as_ref();
        match (self.regime, reference) {
            (Regime::Generalized, Some(r)) => {
                let ref_depth = self.reference_depth.as_ref().expect("reference depth");
                let ldp = PhotometricTerm::evaluate(target, sources, depth, &r.poses, k, alpha, p, wrt_depth);
                let (value, upstream) = masked(&ldp, 1.0);
                terms.depth_photometric = value;
                if wrt_depth {
                    ldp.backward(target, sources, alpha, p, &upstream, Some(&mut g_depth), None);
                }
                let lrp = PhotometricTerm::evaluate(target, sources, ref_depth, &est.poses, k, alpha, p, wrt_poses);
                let (value, upstream) = masked(&lrp, 1.0);
                terms.pose_photometric = value;
                if wrt_poses {
                    lrp.backward(target, sources, alpha, p, &upstream, None, Some(&mut grad.poses));
                }
            }
            (Regime::Direct, Some(r)) => {
                let gamma = self.weights.gamma;
                let ref_inv = r.inv_depth.field().as_slice();
                let g = (wrt_depth && gamma != 0.0).then_some((grad.inv_depth.as_mut_slice(), gamma));
                terms.depth_supervision = gamma * depth_supervision_eval(inv, ref_inv, w, h, p, g);
                for (j, (pred, reference)) in est.poses.iter().zip(&r.poses).enumerate() {
                    let g = wrt_poses.then_some((&mut grad.poses[j], 1.0));
                    terms.pose_supervision += pose_supervision_eval(pred, reference, &self.weights, g);
                }
            }
            _ => {}
        }

        if wrt_depth {
            for i in 0..n {
                // D = 1/d
                grad.inv_depth[i] -= g_depth[i] * depth.as_slice()[i] * depth.as_slice()[i];
            }
        }
        terms.total = terms.photometric
            + terms.smoothness
            + terms.depth_photometric
            + terms.pose_photometric
            + terms.depth_supervision
            + terms.pose_supervision;
        Ok((terms, grad))
    }
}

fn check_estimate(est: &Estimate, k: &Intrinsics, sources: usize) -> Result<()> {
    est.inv_depth.field().check_shape(k.width, k.height)?;
    if est.poses.len() != sources {
        return Err(Error::invalid(format!(
            "{} poses for {} sources",
            est.poses.len(),
            sources
        )));
    }
    for pose in &est.poses {
        pose.validate()?;
    }
    Ok(())
}

/// `1/N Σ μ L_p + λ L_s`.
pub fn self_supervised_total(frames: Frames<'_>, est: &Estimate, w: &LossWeights, p: &SsimParams) -> Result<f64> {
    Objective::new(frames, Regime::SelfSupervised, *w, *p, None)?.value(est)
}

/// `1/N Σ (ψ μ L_p + γ L_dt) + Σ_j L_pose`.
pub fn direct_supervised_total(
    frames: Frames<'_>,
    est: &Estimate,
    reference: &Estimate,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<f64> {
    Objective::new(frames, Regime::Direct, *w, *p, Some(reference))?.value(est)
}

/// `1/N Σ (μ_dp L_dp + μ_rp L_rp + μ L_p + λ L_s)`, with no cross-term weights.
pub fn generalized_total(
    frames: Frames<'_>,
    est: &Estimate,
    reference: &Estimate,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<f64> {
    Objective::new(frames, Regime::Generalized, *w, *p, Some(reference))?.value(est)
}

fn masked_photometric(
    target: &Image,
    sources: &[Image],
    depth: &DepthMap,
    poses: &[Pose],
    k: &Intrinsics,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<PixelLossMap> {
    k.validate()?;
    w.validate()?;
    p.validate()?;
    check_sources(target, sources, poses.len(), k)?;
    depth.field().check_shape(k.width, k.height)?;
    for pose in poses {
        pose.validate()?;
    }
    let term = PhotometricTerm::evaluate(target, sources, depth.field(), poses, k, w.alpha, p, false);
    let mu = term.automask(&identity_min(target, sources, w.alpha, p));
    Ok(PixelLossMap {
        values: Field::new(k.width, k.height, term.min)?,
        weight_mask: Mask::new(k.width, k.height, mu)?,
    })
}

/// Photometric depth loss: predicted depth warped with reference poses. The
/// weight mask is the automask of this term.
pub fn gen_depth_loss(
    target: &Image,
    sources: &[Image],
    pred_depth: &DepthMap,
    ref_poses: &[Pose],
    k: &Intrinsics,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<PixelLossMap> {
    masked_photometric(target, sources, pred_depth, ref_poses, k, w, p)
}

/// Photometric pose loss: reference depth warped with predicted poses. The
/// weight mask is the automask of this term.
pub fn gen_pose_loss(
    target: &Image,
    sources: &[Image],
    ref_depth: &DepthMap,
    pred_poses: &[Pose],
    k: &Intrinsics,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<PixelLossMap> {
    masked_photometric(target, sources, ref_depth, pred_poses, k, w, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::photometric::reprojection_loss;
    use crate::losses::smoothness::smoothness_loss;
    use crate::losses::supervised::{depth_supervision_loss, pose_supervision_loss};
    use crate::synth::{perturb, render_scene, FrameTriplet, Perturbation, SceneSpec};

    fn triplet(size: usize) -> FrameTriplet {
        render_scene(&SceneSpec::default().resized(size, size)).unwrap().remove(0)
    }

    fn perturbed(t: &FrameTriplet) -> Estimate {
        let noise = Perturbation {
            depth: 0.05,
            rotation: 0.01,
            translation: 0.05,
        };
        perturb(t, &noise, 3).unwrap().truth()
    }

    fn static_triplet() -> FrameTriplet {
        let spec = SceneSpec {
            trajectory: vec![Pose::identity(); 3],
            ..SceneSpec::default().resized(24, 24)
        };
        render_scene(&spec).unwrap().remove(0)
    }

    /// Restricts a reprojection map to pixels where it beats every unwarped source.
    fn automasked(t: &FrameTriplet, lp: &PixelLossMap) -> PixelLossMap {
        let (w, p) = (LossWeights::default(), SsimParams::default());
        let id: Vec<f64> = (0..lp.values.len())
            .map(|i| {
                t.sources
                    .iter()
                    .map(|s| crate::losses::pe(&t.target, s, &w, &p).unwrap().values.as_slice()[i])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mask = lp
            .weight_mask
            .as_slice()
            .iter()
            .zip(lp.values.as_slice())
            .zip(&id)
            .map(|((&valid, &v), &m)| valid && v < m)
            .collect();
        PixelLossMap {
            values: lp.values.clone(),
            weight_mask: Mask::new(lp.values.width(), lp.values.height(), mask).unwrap(),
        }
    }

    #[test]
    fn generalized_decomposes_into_named_terms() {
        let t = triplet(32);
        let truth = t.truth();
        let est = perturbed(&t);
        let (w, p) = (LossWeights::default(), SsimParams::default());
        let f = t.frames();
        let total = generalized_total(f, &est, &truth, &w, &p).unwrap();
        let ss = self_supervised_total(f, &est, &w, &p).unwrap();
        let dp = gen_depth_loss(f.target, f.sources, &est.inv_depth.to_depth(), &truth.poses, f.intrinsics, &w, &p)
            .unwrap()
            .masked_mean();
        let rp = gen_pose_loss(f.target, f.sources, &t.target_depth, &est.poses, f.intrinsics, &w, &p)
            .unwrap()
            .masked_mean();
        assert!((total - (ss + dp + rp)).abs() < 1e-12, "{total} vs {}", ss + dp + rp);
    }

    #[test]
    fn self_supervised_matches_brute_force_composition() {
        let t = triplet(32);
        let est = perturbed(&t);
        let (w, p) = (LossWeights::default(), SsimParams::default());
        let f = t.frames();
        let depth = est.inv_depth.to_depth();
        let lp = automasked(&t, &reprojection_loss(f.target, f.sources, &depth, &est.poses, f.intrinsics, &w, &p).unwrap());
        let ls = smoothness_loss(&est.inv_depth, f.target).unwrap();
        let expected = lp.masked_mean() + w.lambda * ls.values.mean();
        let got = self_supervised_total(f, &est, &w, &p).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

        let no_smooth = LossWeights { lambda: 0.0, ..w };
        let got = self_supervised_total(f, &est, &no_smooth, &p).unwrap();
        assert!((got - lp.masked_mean()).abs() < 1e-12);
    }

    #[test]
    fn direct_matches_brute_force_composition() {
        let t = triplet(32);
        let truth = t.truth();
        let est = perturbed(&t);
        let (w, p) = (LossWeights::default(), SsimParams::default());
        let f = t.frames();
        let lp = automasked(
            &t,
            &reprojection_loss(f.target, f.sources, &est.inv_depth.to_depth(), &est.poses, f.intrinsics, &w, &p).unwrap(),
        )
        .masked_mean();
        let ldt = depth_supervision_loss(&est.inv_depth, &truth.inv_depth, &p).unwrap();
        let lpose: f64 = est
            .poses
            .iter()
            .zip(&truth.poses)
            .map(|(a, b)| pose_supervision_loss(a, b, &w).unwrap())
            .sum();
        let expected = w.psi * lp + w.gamma * ldt + lpose;
        let got = direct_supervised_total(f, &est, &truth, &w, &p).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0), "{got} vs {expected}");

        // ψ = γ = 0 leaves only the pose distances
        let poses_only = LossWeights { psi: 0.0, gamma: 0.0, ..w };
        let got = direct_supervised_total(f, &est, &truth, &poses_only, &p).unwrap();
        assert!((got - lpose).abs() < 1e-12);
    }

    #[test]
    fn totals_vanish_on_a_static_scene() {
        let t = static_triplet();
        let truth = t.truth();
        let (w, p) = (LossWeights::default(), SsimParams::default());
        let f = t.frames();
        assert_eq!(self_supervised_total(f, &truth, &w, &p).unwrap(), 0.0);
        assert_eq!(direct_supervised_total(f, &truth, &truth, &w, &p).unwrap(), 0.0);
        assert_eq!(generalized_total(f, &truth, &truth, &w, &p).unwrap(), 0.0);
    }

    #[test]
    fn reference_required_for_supervised_regimes() {
        let t = triplet(16);
        let f = t.frames();
        for regime in [Regime::Direct, Regime::Generalized] {
            assert!(Objective::new(f, regime, LossWeights::default(), SsimParams::default(), None).is_err());
        }
        let mut est = t.truth();
        est.poses.pop();
        assert!(self_supervised_total(f, &est, &LossWeights::default(), &SsimParams::default()).is_err());
    }

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
        assert!("supervised".parse::<Regime>().is_err());
    }

    #[test]
    fn gradients_zero_when_not_requested() {
        let t = triplet(16);
        let est = perturbed(&t);
        let obj = Objective::new(t.frames(), Regime::SelfSupervised, LossWeights::default(), SsimParams::default(), None)
            .unwrap();
        let (v, g) = obj.value_and_gradient(&est, false, true).unwrap();
        assert_eq!(v, obj.value(&est).unwrap());
        assert!(g.inv_depth.iter().all(|&x| x == 0.0));
        assert!(g.poses.iter().flatten().any(|&x| x != 0.0));
    }
}
