//! Browser bindings for an interactive curvature demo: train a tiny
//! classifier, then inspect the loss along its Hessian eigenvectors.
//!
//! Build with `wasm-pack build crates/wasm --target web --out-dir www/pkg`
//! and serve `crates/wasm/www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

pub use demo::{Demo, StepPoint, PAIRS_PER_SIDE};

fn js(e: hessianscope::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Explorer {
    inner: Demo,
}

#[wasm_bindgen]
impl Explorer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, train_steps: u32) -> Result<Explorer, JsError> {
        Demo::new(seed as u64, train_steps as u64).map(|inner| Explorer { inner }).map_err(js)
    }

    pub fn dim(&self) -> usize {
        self.inner.operator().dim()
    }

    pub fn loss(&self) -> Result<f64, JsError> {
        self.inner.loss().map_err(js)
    }

    /// Extracted eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.inner.pairs().iter().map(|p| p.lambda).collect()
    }

    /// Flat `[α, true loss, model]` triples; a non-finite loss is `NaN`.
    pub fn profile(&self, index: usize, alpha_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
        let p = self.inner.profile(index, alpha_max, points).map_err(js)?;
        Ok(p.alphas
            .iter()
            .zip(&p.true_loss)
            .zip(&p.quad_model)
            .flat_map(|((&a, t), &m)| [a, t.unwrap_or(f64::NAN), m])
            .collect())
    }

    /// Tracked smallest curvature after each update.
    pub fn track(&self, eta_scale: f64, steps: usize) -> Result<Vec<f64>, JsError> {
        self.inner.track(eta_scale, steps).map_err(js)
    }

    /// Flat `[λ, α*]` pairs from the greedy line search.
    pub fn line_search(&self) -> Result<Vec<f64>, JsError> {
        let points = self.inner.line_search().map_err(js)?;
        Ok(points.iter().flat_map(|p| [p.lambda, p.alpha_star]).collect())
    }
}
