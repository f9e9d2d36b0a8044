use photoloss::losses::{generalized_total, Regime};
use photoloss::optimizer::{compare_regimes, evaluate_estimate, optimize, FreeVars, OptimConfig, OptimProblem};
use photoloss::synth::{perturb, render_scene, Perturbation, SceneSpec, Surface};
use photoloss::{LossWeights, SsimParams};

fn short(iters: usize) -> OptimConfig {
    OptimConfig {
        max_iters: iters,
        ..OptimConfig::default()
    }
}

#[test]
fn render_perturb_optimize_evaluate() {
    let t = render_scene(&SceneSpec::default().resized(32, 32)).unwrap().remove(0);
    let noise = Perturbation {
        depth: 0.1,
        rotation: 0.02,
        translation: 0.02,
    };
    let init = perturb(&t, &noise, 1).unwrap().truth();
    let (d0, p0) = evaluate_estimate(&t, &init).unwrap();
    let report = optimize(&OptimProblem::new(t.clone(), Regime::Generalized, FreeVars::BOTH, init), &short(400)).unwrap();
    let (d1, p1) = evaluate_estimate(&t, &report.final_estimate).unwrap();
    assert!(d1.rel_mean < d0.rel_mean, "{} -> {}", d0.rel_mean, d1.rel_mean);
    assert!(p1.rot_mean < p0.rot_mean, "{} -> {}", p0.rot_mean, p1.rot_mean);
    assert!(report.loss_trace.last() < report.loss_trace.first());
}

#[test]
fn slanted_plane_and_sphere_scenes_score_low_at_truth() {
    let surfaces = [
        r#"{"kind": "slanted-plane", "distance": 2.0, "tilt_x": 0.2, "tilt_y": -0.3}"#,
        r#"{"kind": "sphere-patch", "center": [0.0, 0.0, 4.0], "radius": 2.5}"#,
    ];
    for surface in surfaces {
        let json = format!(r#"{{"surface": {surface}, "channels": 3}}"#);
        let spec: SceneSpec = serde_json::from_str(&json).unwrap();
        assert!(!matches!(spec.surface, Surface::Plane { .. }));
        let t = render_scene(&spec.resized(32, 32)).unwrap().remove(0);
        assert_eq!(t.target.channels(), 3);
        let truth = t.truth();
        let loss = generalized_total(t.frames(), &truth, &truth, &LossWeights::default(), &SsimParams::default()).unwrap();
        assert!(loss < 1e-2, "{surface}: {loss}");
    }
}

#[test]
fn comparison_improves_on_the_initialization_in_every_regime() {
    let t = render_scene(&SceneSpec::default().resized(24, 24)).unwrap().remove(0);
    let noise = Perturbation {
        depth: 0.1,
        rotation: 0.02,
        translation: 0.02,
    };
    let init = perturb(&t, &noise, 2).unwrap().truth();
    let cmp = compare_regimes(&t, &init, FreeVars::BOTH, &short(200), &LossWeights::default(), &SsimParams::default()).unwrap();
    assert_eq!(cmp.entries.len(), 3);
    for e in &cmp.entries {
        assert!(e.final_loss < e.report.loss_trace[0], "{}", e.regime);
    }
}
