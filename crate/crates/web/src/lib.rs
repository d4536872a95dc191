//! Browser bindings: penalty curves, synthetic scenes with generated QA, and
//! answer-consistent flips and rotations.

use earthvl_core::augment::{augment_sample, GeoTransform, TransformKind};
use earthvl_core::io::synth::{gen_synthetic_scene, SynthSpec};
use earthvl_core::loss::penalty_curve;
use earthvl_core::model::encoder::PALETTE;
use earthvl_core::qa::{generate_qa, QAPair, RuleThresholds, SceneMeta};
use earthvl_core::raster::{SemanticMask, IGNORE};
use earthvl_core::{Error, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `1 + alpha * d^gamma` for `d = 0..=max_diff`.
#[wasm_bindgen(js_name = penaltyCurve)]
pub fn penalty_curve_js(alpha: f64, gamma: f64, max_diff: usize) -> std::result::Result<Vec<f64>, JsError> {
    penalty_curve(alpha, gamma, max_diff.min(1000)).map_err(js)
}

#[wasm_bindgen(js_name = presets)]
pub fn presets_js() -> Vec<String> {
    SynthSpec::PRESETS.iter().map(|s| s.to_string()).collect()
}

/// A mask with its QA pairs.
#[wasm_bindgen]
pub struct DemoScene {
    mask: SemanticMask,
    qa: Vec<QAPair>,
    transforms: Vec<TransformKind>,
}

impl DemoScene {
    pub fn build(preset: &str, seed: u64) -> Result<DemoScene> {
        let scene = gen_synthetic_scene(&SynthSpec::preset(preset)?, seed)?;
        let id = format!("{preset}-{seed}");
        let qa = generate_qa(&id, &scene.mask, &SceneMeta::default(), &RuleThresholds::default())?;
        Ok(DemoScene { mask: scene.mask, qa, transforms: Vec::new() })
    }

    pub fn apply(&self, kind: &str) -> Result<DemoScene> {
        let k: TransformKind = kind.parse()?;
        let (mask, qa) = augment_sample(&self.mask, &self.qa, GeoTransform::from_kind(k));
        let mut transforms = self.transforms.clone();
        transforms.push(k);
        Ok(DemoScene { mask, qa, transforms })
    }

    /// QA regenerated from scratch on the current mask.
    pub fn regenerate(&self) -> Result<Vec<QAPair>> {
        let id = self.qa.first().map_or("scene", |q| q.image_id.as_str()).to_string();
        generate_qa(&id, &self.mask, &SceneMeta::default(), &RuleThresholds::default())
    }

    pub fn mask(&self) -> &SemanticMask {
        &self.mask
    }

    pub fn qa(&self) -> &[QAPair] {
        &self.qa
    }
}

#[wasm_bindgen]
impl DemoScene {
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, seed: u32) -> std::result::Result<DemoScene, JsError> {
        DemoScene::build(preset, seed as u64).map_err(js)
    }

    /// Flip or rotate: "hflip", "vflip" or "rot90cw".
    pub fn transform(&self, kind: &str) -> std::result::Result<DemoScene, JsError> {
        self.apply(kind).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    /// Palette colors, row-major RGBA.
    pub fn rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.mask.cells().len() * 4);
        for &c in self.mask.cells() {
            let [r, g, b] = if c == IGNORE { [1.0, 1.0, 1.0] } else { PALETTE[c as usize] };
            out.extend([r, g, b].map(|v| (v * 255.0).round() as u8));
            out.push(255);
        }
        out
    }

    /// Transforms applied so far, joined by "+".
    #[wasm_bindgen(js_name = history)]
    pub fn history(&self) -> String {
        self.transforms.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
    }

    /// QA pairs as a JSON array of {qtype, question, answer, regenerated}.
    /// `regenerated` is the answer produced from the transformed mask.
    #[wasm_bindgen(js_name = qaJson)]
    pub fn qa_json(&self) -> std::result::Result<String, JsError> {
        let fresh = self.regenerate().map_err(js)?;
        let rows: Vec<serde_json::Value> = self
            .qa
            .iter()
            .map(|q| {
                let again = fresh.iter().find(|f| f.qid == q.qid).map(|f| f.answer.as_str());
                serde_json::json!({
                    "qtype": q.qtype.as_str(),
                    "question": q.question,
                    "answer": q.answer,
                    "regenerated": again,
                })
            })
            .collect();
        serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
    }
}
