use photoloss_demo::{Edit, Scene, Session};

#[test]
fn true_pose_warp_matches_the_target_closely() {
    let scene = Scene::new(32).unwrap();
    let n = scene.width() * scene.height();
    let view = scene.warp(0, &Edit::none()).unwrap();
    assert_eq!(view.warped.len(), 4 * n);
    assert_eq!(view.error.len(), 4 * n);
    assert!(view.valid_fraction > 0.8);
    assert!(view.mean_error < 0.02, "{}", view.mean_error);

    let off = scene
        .warp(
            0,
            &Edit {
                rotation: [0.0, 0.05, 0.0],
                ..Edit::none()
            },
        )
        .unwrap();
    assert!(off.mean_error > 3.0 * view.mean_error);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(Scene::new(2).is_err());
    let scene = Scene::new(16).unwrap();
    assert!(scene.source_rgba(2).is_err());
    assert!(scene.warp(0, &Edit { depth_scale: 0.0, ..Edit::none() }).is_err());
    assert!(Session::new(&scene, "nonsense", 0.1, 1).is_err());
    assert!(Session::new(&scene, "direct", 2.0, 1).is_err());
}

#[test]
fn session_steps_lower_the_loss() {
    let scene = Scene::new(24).unwrap();
    let mut session = Session::new(&scene, "generalized", 0.1, 3).unwrap();
    let first = session.step(1).unwrap();
    let last = session.step(150).unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert!(session.trace().len() <= 151);
    let (depth, rot) = session.errors().unwrap();
    assert!(depth.is_finite() && rot.is_finite());
    assert_eq!(session.depth_rgba().unwrap().len(), 4 * 24 * 24);
}
