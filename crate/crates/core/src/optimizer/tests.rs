use super::*;
use crate::geometry::Pose;
use crate::synth::{perturb, render_scene, Perturbation, SceneSpec};

fn triplet(size: usize) -> FrameTriplet {
    render_scene(&SceneSpec::default().resized(size, size)).unwrap().remove(0)
}

fn static_triplet() -> FrameTriplet {
    let spec = SceneSpec {
        trajectory: vec![Pose::identity(); 3],
        ..SceneSpec::default().resized(24, 24)
    };
    render_scene(&spec).unwrap().remove(0)
}

fn noisy_init(t: &FrameTriplet, seed: u64) -> Estimate {
    let noise = Perturbation {
        depth: 0.1,
        rotation: 0.02,
        translation: 0.02,
    };
    perturb(t, &noise, seed).unwrap().truth()
}

fn short(iters: usize) -> OptimConfig {
    OptimConfig {
        max_iters: iters,
        ..OptimConfig::default()
    }
}

#[test]
fn truth_on_a_static_scene_converges_at_once() {
    let t = static_triplet();
    for regime in Regime::ALL {
        let p = OptimProblem::new(t.clone(), regime, FreeVars::BOTH, t.truth());
        let r = optimize(&p, &OptimConfig::default()).unwrap();
        assert!(r.converged, "{regime}");
        assert!(r.iterations <= 10, "{regime}: {}", r.iterations);
        let last = *r.loss_trace.last().unwrap();
        assert!((last - r.loss_trace[0]).abs() <= 1e-6);
        assert_eq!(r.final_estimate, t.truth());
    }
}

#[test]
fn trace_length_matches_iterations_and_stays_finite() {
    let t = triplet(24);
    let p = OptimProblem::new(t.clone(), Regime::Generalized, FreeVars::BOTH, noisy_init(&t, 1));
    let r = optimize(&p, &short(40)).unwrap();
    assert_eq!(r.loss_trace.len(), r.iterations);
    assert!(r.iterations <= 40);
    assert!(r.loss_trace.iter().all(|x| x.is_finite()));
}

#[test]
fn loss_trend_is_non_increasing_over_windows() {
    let t = triplet(32);
    for regime in Regime::ALL {
        let p = OptimProblem::new(t.clone(), regime, FreeVars::BOTH, noisy_init(&t, 2));
        let r = optimize(&p, &short(300)).unwrap();
        let tr = &r.loss_trace;
        for i in 0..tr.len().saturating_sub(50) {
            assert!(tr[i + 50] <= tr[i] + 1e-9, "{regime} at {i}: {} > {}", tr[i + 50], tr[i]);
        }
        assert!(tr.last().unwrap() < &tr[0], "{regime}");
    }
}

#[test]
fn window_of_one_gives_a_monotone_trace() {
    let t = triplet(24);
    let p = OptimProblem::new(t.clone(), Regime::SelfSupervised, FreeVars::DEPTH, noisy_init(&t, 3));
    let cfg = OptimConfig {
        window: 1,
        ..short(100)
    };
    let r = optimize(&p, &cfg).unwrap();
    assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn runs_are_bit_identical() {
    let t = triplet(24);
    let p = OptimProblem::new(t.clone(), Regime::Direct, FreeVars::BOTH, noisy_init(&t, 4));
    let a = optimize(&p, &short(60)).unwrap();
    let b = optimize(&p, &short(60)).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.final_estimate, b.final_estimate);
    assert_eq!(a.converged, b.converged);
}

#[test]
fn fixed_variables_stay_at_their_initial_values() {
    let t = triplet(24);
    let init = noisy_init(&t, 5);
    let p = OptimProblem::new(t.clone(), Regime::Generalized, FreeVars::DEPTH, init.clone());
    let r = optimize(&p, &short(30)).unwrap();
    assert_eq!(r.final_estimate.poses, init.poses);
    assert_ne!(r.final_estimate.inv_depth, init.inv_depth);
    let p = OptimProblem::new(t.clone(), Regime::Generalized, FreeVars::POSES, init.clone());
    let r = optimize(&p, &short(30)).unwrap();
    assert_eq!(r.final_estimate.inv_depth, init.inv_depth);
    assert_ne!(r.final_estimate.poses, init.poses);
}

#[test]
fn oversized_steps_diverge_with_the_iteration_index() {
    let t = triplet(16);
    let p = OptimProblem::new(t.clone(), Regime::SelfSupervised, FreeVars::DEPTH, noisy_init(&t, 6));
    let cfg = OptimConfig {
        step_size: 1e3,
        backtracks: 0,
        ..short(50)
    };
    match optimize(&p, &cfg) {
        Err(Error::Diverged { iteration, .. }) => assert!(iteration >= 1 && iteration < 50),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let t = triplet(16);
    let none = FreeVars {
        depth: false,
        poses: false,
    };
    let p = OptimProblem::new(t.clone(), Regime::Direct, none, t.truth());
    assert!(optimize(&p, &OptimConfig::default()).is_err());
    let p = OptimProblem::new(t.clone(), Regime::Direct, FreeVars::BOTH, t.truth());
    for cfg in [
        OptimConfig { step_size: 0.0, ..OptimConfig::default() },
        OptimConfig { beta1: 1.0, ..OptimConfig::default() },
        OptimConfig { patience: 0, ..OptimConfig::default() },
        OptimConfig { tolerance: -1.0, ..OptimConfig::default() },
    ] {
        assert!(optimize(&p, &cfg).is_err());
    }
}

#[test]
fn single_pixel_perturbation_is_pushed_back() {
    let t = triplet(64);
    let truth = t.truth();
    let p = OptimProblem::new(t.clone(), Regime::Generalized, FreeVars::DEPTH, truth.clone());
    let (obj, _) = p.objective().unwrap();
    let h = 1e-4;
    let mut held = 0;
    let mut total = 0;
    for factor in [1.1, 0.9] {
        for v in (6..58).step_by(4) {
            for u in (6..58).step_by(4) {
                let i = v * 64 + u;
                let at_value = |x: f64| {
                    let mut field = truth.inv_depth.field().clone();
                    field.as_mut_slice()[i] = x;
                    Estimate {
                        inv_depth: InverseDepthMap::new(field).unwrap(),
                        poses: truth.poses.clone(),
                    }
                };
                let x = truth.inv_depth.field().as_slice()[i] * factor;
                let at = at_value(x);
                let fd = (obj.value(&at_value(x + h)).unwrap() - obj.value(&at_value(x - h)).unwrap()) / (2.0 * h);
                let (_, g) = gradient(&obj, &at, FreeVars::DEPTH, GradientMode::Analytic, h).unwrap();
                assert_eq!(g.inv_depth[i] > 0.0, fd > 0.0, "pixel ({u}, {v}) factor {factor}");
                total += 1;
                if fd * (factor - 1.0) > 0.0 {
                    held += 1;
                }
            }
        }
    }
    assert!(held as f64 >= 0.95 * total as f64, "{held}/{total}");
}

#[test]
fn finite_difference_mode_agrees_with_analytic() {
    let t = triplet(16);
    let at = noisy_init(&t, 7);
    for regime in Regime::ALL {
        let p = OptimProblem::new(t.clone(), regime, FreeVars::BOTH, at.clone());
        let (obj, _) = p.objective().unwrap();
        let (va, ga) = gradient(&obj, &at, FreeVars::BOTH, GradientMode::Analytic, 1e-4).unwrap();
        let (vf, gf) = gradient(&obj, &at, FreeVars::BOTH, GradientMode::FiniteDifference, 1e-6).unwrap();
        assert_eq!(va, vf);
        let scale = ga.inv_depth.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let agree = ga
            .inv_depth
            .iter()
            .zip(&gf.inv_depth)
            .filter(|(a, f)| (*a - *f).abs() <= 1e-3 * a.abs().max(f.abs()).max(1e-6 * scale))
            .count();
        assert!(agree as f64 >= 0.95 * ga.inv_depth.len() as f64, "{regime}: {agree}");
        for (a, f) in ga.poses.iter().flatten().zip(gf.poses.iter().flatten()) {
            assert!((a - f).abs() <= 1e-3 * a.abs().max(f.abs()).max(1e-9), "{regime}: {a} vs {f}");
        }
    }
}

#[test]
fn gradient_check_passes_on_a_perturbed_problem() {
    let t = triplet(32);
    let at = noisy_init(&t, 8);
    for regime in Regime::ALL {
        let p = OptimProblem::new(t.clone(), regime, FreeVars::BOTH, at.clone());
        let (obj, _) = p.objective().unwrap();
        let check = check_gradients(&obj, &at, 1e-4, 1e-3, 2).unwrap();
        assert_eq!(check.depth_checked, 28 * 28);
        assert!(check.depth_fraction() >= 0.95, "{regime}: {}", check.depth_fraction());
        assert!(check.max_pose_error() <= 1e-3, "{regime}: {:?}", check.pose_rel_errors);
        assert!(check.pose_skipped_pixels.iter().all(|&n| n < 32 * 32 / 2), "{regime}: {:?}", check.pose_skipped_pixels);
    }
}

#[test]
fn step_api_matches_optimize() {
    let t = triplet(16);
    let p = OptimProblem::new(t.clone(), Regime::SelfSupervised, FreeVars::BOTH, noisy_init(&t, 9));
    let (obj, _) = p.objective().unwrap();
    let mut opt = Optimizer::new(obj, &p.init, p.free, short(25)).unwrap();
    while let Step::Continue(_) = opt.step().unwrap() {}
    let r = optimize(&p, &short(25)).unwrap();
    assert_eq!(opt.trace(), r.loss_trace.as_slice());
    assert_eq!(opt.estimate().unwrap(), r.final_estimate);
    assert_eq!(opt.step().unwrap(), if r.converged { Step::Converged(*r.loss_trace.last().unwrap()) } else { Step::Exhausted });
}

#[test]
fn comparison_has_one_entry_per_regime() {
    let t = triplet(24);
    let init = noisy_init(&t, 10);
    let c = compare_regimes(&t, &init, FreeVars::BOTH, &short(20), &LossWeights::default(), &SsimParams::default()).unwrap();
    assert_eq!(c.entries.len(), 3);
    for (e, r) in c.entries.iter().zip(Regime::ALL) {
        assert_eq!(e.regime, r);
        assert!(e.depth.rel_mean.is_finite() && e.pose.rot_mean.is_finite());
        assert_eq!(e.pose.frames, 2);
        assert_eq!(e.final_loss, *e.report.loss_trace.last().unwrap());
    }
}

#[test]
fn comparison_from_truth_on_a_static_scene_does_not_move() {
    let t = static_triplet();
    let c = compare_regimes(&t, &t.truth(), FreeVars::BOTH, &OptimConfig::default(), &LossWeights::default(), &SsimParams::default())
        .unwrap();
    for e in &c.entries {
        assert!(e.report.converged);
        assert!(e.depth.rel_max < 1e-12 && e.pose.rot_max < 1e-12);
    }
}

#[test]
fn gradient_mode_parses() {
    assert_eq!("fd".parse::<GradientMode>().unwrap(), GradientMode::FiniteDifference);
    assert_eq!("analytic".parse::<GradientMode>().unwrap(), GradientMode::Analytic);
    assert!("exact".parse::<GradientMode>().is_err());
}

