use serde::{Deserialize, Serialize};

use super::summarize;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// How predictions are rescaled before comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleAlignment {
    /// One least-squares scale for the whole sequence.
    Global,
    /// A least-squares scale per frame; the reported scale is their mean.
    PerFrame,
    /// A caller-chosen scale.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    /// `|s·D̂ − D| / D` statistics over every pixel of every frame.
    pub rel_mean: f64,
    pub rel_max: f64,
    pub rel_median: f64,
    /// Fraction of pixels with `max(D/sD̂, sD̂/D) < 1.25^k`.
    pub acc_1: f64,
    pub acc_2: f64,
    pub acc_3: f64,
    pub scale: f64,
}

fn check_pairs(pred: &[DepthMap], reference: &[DepthMap]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::invalid("depth evaluation needs at least one frame"));
    }
    if pred.len() != reference.len() {
        return Err(Error::shape(format!("{} reference frames", reference.len()), format!("{} predicted", pred.len())));
    }
    for (p, r) in pred.iter().zip(reference) {
        p.field().check_shape(r.width(), r.height())?;
    }
    Ok(())
}

fn lsq_scale<'a>(pairs: impl Iterator<Item = (&'a DepthMap, &'a DepthMap)>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, r) in pairs {
        for (a, b) in p.field().as_slice().iter().zip(r.field().as_slice()) {
            num += a * b;
            den += a * a;
        }
    }
    num / den
}

/// `argmin_s Σ (s·D̂ − D)²` over the whole sequence.
pub fn align_depth_scale(pred: &[DepthMap], reference: &[DepthMap]) -> Result<f64> {
    check_pairs(pred, reference)?;
    Ok(lsq_scale(pred.iter().zip(reference)))
}

/// Depth metrics with a single global scale.
pub fn depth_metrics(pred: &[DepthMap], reference: &[DepthMap]) -> Result<DepthMetrics> {
    depth_metrics_with(pred, reference, ScaleAlignment::Global)
}

pub fn depth_metrics_with(pred: &[DepthMap], reference: &[DepthMap], align: ScaleAlignment) -> Result<DepthMetrics> {
    check_pairs(pred, reference)?;
    let scales: Vec<f64> = match align {
        ScaleAlignment::Global => vec![lsq_scale(pred.iter().zip(reference)); pred.len()],
        ScaleAlignment::PerFrame => pred.iter().zip(reference).map(|pr| lsq_scale(std::iter::once(pr))).collect(),
        ScaleAlignment::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("depth scale must be positive, got {s}")));
            }
            vec![s; pred.len()]
        }
    };
    let mut rel = Vec::new();
    let mut hits = [0usize; 3];
    for ((p, r), s) in pred.iter().zip(reference).zip(&scales) {
        for (a, b) in p.field().as_slice().iter().zip(r.field().as_slice()) {
            let a = a * s;
            rel.push((a - b).abs() / b);
            let delta = (b / a).max(a / b);
            for (k, hit) in hits.iter_mut().enumerate() {
                if delta < 1.25f64.powi(k as i32 + 1) {
                    *hit += 1;
                }
            }
        }
    }
    let n = rel.len() as f64;
    let (rel_mean, rel_max, rel_median) = summarize(&rel);
    Ok(DepthMetrics {
        rel_mean,
        rel_max,
        rel_median,
        acc_1: hits[0] as f64 / n,
        acc_2: hits[1] as f64 / n,
        acc_3: hits[2] as f64 / n,
        scale: scales.iter().sum::<f64>() / scales.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Field;
    use proptest::prelude::*;

    fn map(values: &[f64]) -> DepthMap {
        DepthMap::new(Field::new(values.len(), 1, values.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn identical_depth_is_perfect() {
        let d = vec![map(&[1.0, 2.0, 3.5])];
        let m = depth_metrics(&d, &d).unwrap();
        assert_eq!(m.scale, 1.0);
        assert_eq!((m.rel_mean, m.rel_max, m.rel_median), (0.0, 0.0, 0.0));
        assert_eq!((m.acc_1, m.acc_2, m.acc_3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unit_scale_threshold_buckets() {
        // δ = 1.3 lies between 1.25 and 1.5625
        let r = vec![map(&[1.0, 2.0, 4.0])];
        let p = vec![map(&[1.3, 2.6, 5.2])];
        let m = depth_metrics_with(&p, &r, ScaleAlignment::Fixed(1.0)).unwrap();
        assert_eq!(m.acc_1, 0.0);
        assert_eq!(m.acc_2, 1.0);
        assert_eq!(m.acc_3, 1.0);
        assert!((m.rel_mean - 0.3).abs() < 1e-12);
        // global alignment removes the constant factor
        let m = depth_metrics(&p, &r).unwrap();
        assert!((m.scale - 1.0 / 1.3).abs() < 1e-12);
        assert!(m.rel_max < 1e-12);
    }

    #[test]
    fn per_frame_scales_differ_from_global() {
        let r = vec![map(&[1.0, 2.0]), map(&[1.0, 2.0])];
        let p = vec![map(&[2.0, 4.0]), map(&[3.0, 6.0])];
        let g = depth_metrics(&p, &r).unwrap();
        let f = depth_metrics_with(&p, &r, ScaleAlignment::PerFrame).unwrap();
        assert!(f.rel_max < 1e-12);
        assert!(g.rel_max > 0.1);
        assert!((f.scale - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_mismatched_sequences() {
        assert!(align_depth_scale(&[], &[]).is_err());
        assert!(depth_metrics(&[map(&[1.0])], &[]).is_err());
        assert!(depth_metrics(&[map(&[1.0])], &[map(&[1.0, 2.0])]).is_err());
        assert!(depth_metrics_with(&[map(&[1.0])], &[map(&[1.0])], ScaleAlignment::Fixed(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn global_scale_recovers_any_factor(
            values in prop::collection::vec(0.1f64..10.0, 1..20),
            k in 0.01f64..100.0,
        ) {
            let r = vec![map(&values)];
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            let p = vec![map(&scaled)];
            let s = align_depth_scale(&p, &r).unwrap();
            prop_assert!((s * k - 1.0).abs() < 1e-12);
            let m = depth_metrics(&p, &r).unwrap();
            prop_assert!(m.rel_max < 1e-9);
            prop_assert_eq!(m.acc_1, 1.0);
        }

        #[test]
        fn accuracies_are_nested_fractions(
            pairs in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..30),
        ) {
            let r = vec![map(&pairs.iter().map(|p| p.0).collect::<Vec<_>>())];
            let p = vec![map(&pairs.iter().map(|p| p.1).collect::<Vec<_>>())];
            let m = depth_metrics(&p, &r).unwrap();
            prop_assert!(0.0 <= m.acc_1 && m.acc_1 <= m.acc_2 && m.acc_2 <= m.acc_3 && m.acc_3 <= 1.0);
            prop_assert!(m.rel_median <= m.rel_max && m.rel_mean <= m.rel_max);
        }
    }
}
