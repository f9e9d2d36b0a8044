use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::FrameTriplet;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Pose};

/// Noise levels used to build optimizer initializations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Standard deviation of the log-normal depth multiplier.
    pub depth: f64,
    /// Standard deviation of each axis-angle component, radians.
    pub rotation: f64,
    /// Standard deviation of each translation component, as a fraction of
    /// the translation norm.
    pub translation: f64,
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("depth", self.depth), ("rotation", self.rotation), ("translation", self.translation)] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::invalid(format!("{name} noise must be finite and >= 0, got {x}")));
            }
        }
        Ok(())
    }
}

/// Multiplicative log-normal noise on depth and additive Gaussian noise on
/// the relative poses. Images are left untouched. Deterministic per seed.
pub fn perturb(triplet: &FrameTriplet, noise: &Perturbation, seed: u64) -> Result<FrameTriplet> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let depth = triplet.target_depth.field().map(|d| d * (noise.depth * unit.sample(&mut rng)).exp());
    let mut gauss3 = |sigma: f64| {
        Vector3::new(
            sigma * unit.sample(&mut rng),
            sigma * unit.sample(&mut rng),
            sigma * unit.sample(&mut rng),
        )
    };
    let rel_poses = triplet
        .rel_poses
        .iter()
        .map(|p| {
            let rotation = p.rotation + gauss3(noise.rotation);
            let translation = p.translation + gauss3(noise.translation * p.translation.norm());
            Pose::new(rotation, translation)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameTriplet {
        target_depth: DepthMap::new(depth)?,
        rel_poses,
        ..triplet.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_scene, SceneSpec};

    fn triplet() -> FrameTriplet {
        render_scene(&SceneSpec::default()).unwrap().remove(0)
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = triplet();
        assert_eq!(perturb(&t, &Perturbation::default(), 3).unwrap(), t);
    }

    #[test]
    fn depth_noise_magnitude() {
        let t = triplet();
        let noise = Perturbation {
            depth: 0.1,
            ..Perturbation::default()
        };
        let p = perturb(&t, &noise, 5).unwrap();
        let truth = t.target_depth.field().as_slice();
        let rel: f64 = p
            .target_depth
            .field()
            .as_slice()
            .iter()
            .zip(truth)
            .map(|(a, b)| (a - b).abs() / b)
            .sum::<f64>()
            / truth.len() as f64;
        assert!((0.05..=0.15).contains(&rel), "{rel}");
    }

    #[test]
    fn same_seed_same_output() {
        let t = triplet();
        let noise = Perturbation {
            depth: 0.1,
            rotation: 0.02,
            translation: 0.02,
        };
        assert_eq!(perturb(&t, &noise, 9).unwrap(), perturb(&t, &noise, 9).unwrap());
        assert_ne!(perturb(&t, &noise, 9).unwrap(), perturb(&t, &noise, 10).unwrap());
    }

    #[test]
    fn negative_noise_is_rejected() {
        let noise = Perturbation {
            depth: -0.1,
            ..Perturbation::default()
        };
        assert!(perturb(&triplet(), &noise, 1).is_err());
    }
}
