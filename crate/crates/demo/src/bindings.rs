use wasm_bindgen::prelude::*;

use crate::{Edit, Scene, Session};

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = Scene)]
pub struct JsScene(Scene);

#[wasm_bindgen(js_class = Scene)]
impl JsScene {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize) -> Result<JsScene, JsError> {
        Scene::new(size).map(JsScene).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[wasm_bindgen(js_name = targetRgba)]
    pub fn target_rgba(&self) -> Vec<u8> {
        self.0.target_rgba()
    }

    #[wasm_bindgen(js_name = sourceRgba)]
    pub fn source_rgba(&self, source: usize) -> Result<Vec<u8>, JsError> {
        self.0.source_rgba(source).map_err(js)
    }

    /// Warps a source with edited depth and pose.
    #[allow(clippy::too_many_arguments)]
    pub fn warp(
        &self,
        source: usize,
        depth_scale: f64,
        rx: f64,
        ry: f64,
        rz: f64,
        tx: f64,
        ty: f64,
        tz: f64,
    ) -> Result<WarpResult, JsError> {
        let edit = Edit {
            depth_scale,
            rotation: [rx, ry, rz],
            translation: [tx, ty, tz],
        };
        self.0.warp(source, &edit).map(WarpResult).map_err(js)
    }
}

#[wasm_bindgen]
pub struct WarpResult(crate::WarpView);

#[wasm_bindgen]
impl WarpResult {
    pub fn warped(&self) -> Vec<u8> {
        self.0.warped.clone()
    }

    pub fn error(&self) -> Vec<u8> {
        self.0.error.clone()
    }

    #[wasm_bindgen(js_name = meanError)]
    pub fn mean_error(&self) -> f64 {
        self.0.mean_error
    }

    #[wasm_bindgen(js_name = validFraction)]
    pub fn valid_fraction(&self) -> f64 {
        self.0.valid_fraction
    }
}

#[wasm_bindgen(js_name = Session)]
pub struct JsSession(Session);

#[wasm_bindgen(js_class = Session)]
impl JsSession {
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &JsScene, regime: &str, noise: f64, seed: u64) -> Result<JsSession, JsError> {
        Session::new(&scene.0, regime, noise, seed).map(JsSession).map_err(js)
    }

    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        self.0.step(n).map_err(js)
    }

    pub fn finished(&self) -> bool {
        self.0.finished()
    }

    pub fn trace(&self) -> Vec<f64> {
        self.0.trace().to_vec()
    }

    #[wasm_bindgen(js_name = depthRgba)]
    pub fn depth_rgba(&self) -> Result<Vec<u8>, JsError> {
        self.0.depth_rgba().map_err(js)
    }

    /// `[mean relative depth error, max rotation error]`.
    pub fn errors(&self) -> Result<Vec<f64>, JsError> {
        self.0.errors().map(|(d, r)| vec![d, r]).map_err(js)
    }
}
