//! Newline-delimited JSON detection and scene files.
//!
//! Detection line:
//! `{"image_id": "...", "label": 2, "scene": [..d1..], "objects": [{"concept": "dog", "confidence": 0.91, "visual": [..d1..]}, ...]}`
//!
//! `scene` may be omitted when a separate scene file supplies it. An
//! `attribute` key on an object is accepted and ignored. Scene line:
//! `{"image_id": "...", "label": 2, "scene": [..d1..]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSlot {
    pub concept: String,
    pub confidence: f64,
    pub visual: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl ObjectSlot {
    /// Padding slot for detectors that return fewer than `N` objects.
    pub fn padding(d1: usize) -> Self {
        ObjectSlot {
            concept: PAD_CONCEPT.to_string(),
            confidence: 0.0,
            visual: vec![0.0; d1],
            attribute: None,
        }
    }

    pub fn is_padding(&self) -> bool {
        self.concept == PAD_CONCEPT
    }
}

/// Concept name reserved for padding slots; it always embeds to zero.
pub const PAD_CONCEPT: &str = "<pad>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Vec<f64>>,
    pub objects: Vec<ObjectSlot>,
}

impl DetectionRecord {
    /// Checks slot count, confidence range and vector lengths.
    pub fn validate(&self, n: usize, d1: usize) -> Result<()> {
        if self.objects.len() != n {
            return Err(Error::shape("objects", (n, d1), (self.objects.len(), d1)));
        }
        if let Some(scene) = &self.scene {
            check_vector("scene", scene, d1)?;
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if !(0.0..=1.0).contains(&obj.confidence) {
                return Err(Error::Range {
                    what: format!("confidence of object {i} ({})", obj.concept),
                    value: obj.confidence,
                });
            }
            check_vector("visual", &obj.visual, d1)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub image_id: String,
    pub label: usize,
    pub scene: Vec<f64>,
}

fn check_vector(what: &'static str, v: &[f64], d1: usize) -> Result<()> {
    if v.len() != d1 {
        return Err(Error::shape(what, (d1, 1), (v.len(), 1)));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{what} contains {x}")));
    }
    Ok(())
}

fn parse_lines<T: for<'de> Deserialize<'de>>(
    text: &str,
    mut validate: impl FnMut(&T) -> Result<()>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate(&item).map_err(|e| Error::at_line(line_no, e))?;
        out.push(item);
    }
    Ok(out)
}

pub fn parse_detections(text: &str, n: usize, d1: usize) -> Result<Vec<DetectionRecord>> {
    parse_lines(text, |r: &DetectionRecord| r.validate(n, d1))
}

pub fn load_detections(path: &Path, n: usize, d1: usize) -> Result<Vec<DetectionRecord>> {
    parse_detections(&read_to_string(path)?, n, d1)
}

pub fn parse_scenes(text: &str, d1: usize) -> Result<Vec<SceneRecord>> {
    parse_lines(text, |r: &SceneRecord| check_vector("scene", &r.scene, d1))
}

pub fn load_scenes(path: &Path, d1: usize) -> Result<Vec<SceneRecord>> {
    parse_scenes(&read_to_string(path)?, d1)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

pub fn write_scenes(path: &Path, scenes: &[SceneRecord]) -> Result<()> {
    write_atomic(path, to_jsonl(scenes)?.as_bytes())
}
