//! JSON interchange format for motions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{standard_skeleton, Motion, MotionError, DOF};
use crate::Scalar;

pub const MOTION_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    skeleton: String,
    fps: f64,
    #[serde(default)]
    label: Option<usize>,
    frames: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attack: Option<serde_json::Value>,
}

/// A motion plus the optional provenance block adversarial files carry.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionDocument<T> {
    pub motion: Motion<T>,
    pub origin_id: Option<String>,
    pub attack: Option<serde_json::Value>,
}

impl<T: Scalar> MotionDocument<T> {
    pub fn plain(motion: Motion<T>) -> Self {
        Self {
            motion,
            origin_id: None,
            attack: None,
        }
    }

    pub fn to_json_string(&self) -> String {
        let m = &self.motion;
        let file = MotionFile {
            format_version: MOTION_FORMAT_VERSION,
            id: Some(m.id().to_string()),
            skeleton: standard_skeleton().id().to_string(),
            fps: m.fps(),
            label: m.label(),
            frames: (0..m.frame_count())
                .map(|i| m.frame(i).iter().map(|v| Some(v.as_f64())).collect())
                .collect(),
            origin_id: self.origin_id.clone(),
            attack: self.attack.clone(),
        };
        // serde_json prints floats with the shortest round-trip representation.
        serde_json::to_string(&file).expect("motion serializes")
    }

    /// Parses a motion file. `fallback_id` names motions whose file has no `id`.
    pub fn from_json_str(text: &str, source: &str, fallback_id: &str) -> Result<Self, MotionError> {
        let parse_err = |message: String| MotionError::Parse {
            path: source.to_string(),
            message,
        };
        let file: MotionFile =
            serde_json::from_str(&null_out_non_finite(text)).map_err(|e| parse_err(e.to_string()))?;
        if file.format_version != MOTION_FORMAT_VERSION {
            return Err(parse_err(format!("unsupported format_version {}", file.format_version)));
        }
        let std = standard_skeleton();
        if file.skeleton != std.id() {
            return Err(parse_err(format!(
                "skeleton {} is not the standard skeleton {}",
                file.skeleton,
                std.id()
            )));
        }
        let mut frames = Vec::with_capacity(file.frames.len() * DOF);
        for (i, row) in file.frames.iter().enumerate() {
            if row.len() != DOF {
                return Err(parse_err(format!("frame {i} has {} values, expected {DOF}", row.len())));
            }
            for (d, v) in row.iter().enumerate() {
                match v {
                    Some(v) if v.is_finite() => frames.push(T::of(*v)),
                    _ => return Err(parse_err(format!("frame {i} has a non-finite value at dof {d}"))),
                }
            }
        }
        let id = file.id.unwrap_or_else(|| fallback_id.to_string());
        let motion = Motion::new(id, file.fps, file.label, frames).map_err(|e| parse_err(e.to_string()))?;
        Ok(Self {
            motion,
            origin_id: file.origin_id,
            attack: file.attack,
        })
    }
}

/// JSON has no NaN/Infinity; writers such as Python's emit them as bare
/// tokens anyway. Turn them into `null` so the offending frame can be named.
fn null_out_non_finite(text: &str) -> std::borrow::Cow<'_, str> {
    if !text.contains("NaN") && !text.contains("Infinity") {
        return text.into();
    }
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else {
            let token = ["-Infinity", "Infinity", "NaN"].into_iter().find(|t| rest.starts_with(t));
            if let Some(t) = token {
                out.push_str("null");
                rest = &rest[t.len()..];
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out.into()
}

fn io_err(path: &Path, source: std::io::Error) -> MotionError {
    MotionError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_motion_document<T: Scalar>(path: impl AsRef<Path>) -> Result<MotionDocument<T>, MotionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("motion");
    MotionDocument::from_json_str(&text, &path.display().to_string(), stem)
}

pub fn load_motion<T: Scalar>(path: impl AsRef<Path>) -> Result<Motion<T>, MotionError> {
    load_motion_document(path).map(|d| d.motion)
}

pub fn save_motion_document<T: Scalar>(doc: &MotionDocument<T>, path: impl AsRef<Path>) -> Result<(), MotionError> {
    let path = path.as_ref();
    fs::write(path, doc.to_json_string()).map_err(|e| io_err(path, e))
}

pub fn save_motion<T: Scalar>(motion: &Motion<T>, path: impl AsRef<Path>) -> Result<(), MotionError> {
    save_motion_document(&MotionDocument::plain(motion.clone()), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_motion(seed: u64, m: usize) -> Motion<f64> {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..m * DOF).map(|_| rng.random_range(-2.0..2.0) * 10f64.powi(rng.random_range(-8..3))).collect();
        Motion::new(format!("m{seed}"), 30.0, Some(3), frames).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_load_is_bitwise_identity(seed in any::<u64>(), m in 8usize..20) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.json");
            let motion = random_motion(seed, m);
            save_motion(&motion, &path).unwrap();
            let back: Motion<f64> = load_motion(&path).unwrap();
            prop_assert_eq!(back.frames().len(), motion.frames().len());
            for (a, b) in back.frames().iter().zip(motion.frames()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back, motion);
        }
    }

    fn frames_json(rows: &[String]) -> String {
        format!(
            r#"{{"format_version":1,"skeleton":"{}","fps":30.0,"label":3,"frames":[{}]}}"#,
            standard_skeleton().id(),
            rows.join(",")
        )
    }

    fn row(n: usize) -> String {
        format!("[{}]", vec!["0.5"; n].join(","))
    }

    #[test]
    fn short_frame_is_rejected() {
        let mut rows = vec![row(75); 8];
        rows[2] = row(74);
        let err = MotionDocument::<f64>::from_json_str(&frames_json(&rows), "x.json", "x").unwrap_err();
        assert!(err.to_string().contains("frame 2 has 74 values"), "{err}");
    }

    #[test]
    fn nan_is_rejected_with_frame_index() {
        let mut rows = vec![row(75); 8];
        rows[5] = rows[5].replacen("0.5", "NaN", 1);
        let err = MotionDocument::<f64>::from_json_str(&frames_json(&rows), "x.json", "x").unwrap_err();
        assert!(err.to_string().contains("frame 5"), "{err}");
        rows[5] = rows[5].replacen("NaN", "-Infinity", 1);
        let err = MotionDocument::<f64>::from_json_str(&frames_json(&rows), "x.json", "x").unwrap_err();
        assert!(err.to_string().contains("frame 5"), "{err}");
    }

    #[test]
    fn missing_id_uses_fallback_and_extras_survive() {
        let rows = vec![row(75); 8];
        let doc = MotionDocument::<f64>::from_json_str(&frames_json(&rows), "x.json", "stem").unwrap();
        assert_eq!(doc.motion.id(), "stem");
        assert_eq!(doc.motion.label(), Some(3));
        let with_meta = MotionDocument {
            motion: doc.motion.clone(),
            origin_id: Some("orig".into()),
            attack: Some(serde_json::json!({"strategy": "ab"})),
        };
        let back = MotionDocument::<f64>::from_json_str(&with_meta.to_json_string(), "y", "y").unwrap();
        assert_eq!(back, with_meta);
    }

    #[test]
    fn wrong_skeleton_and_version_rejected() {
        let rows = vec![row(75); 8];
        let text = frames_json(&rows);
        let other = text.replace(standard_skeleton().id(), "kinect-0000");
        assert!(MotionDocument::<f64>::from_json_str(&other, "x", "x").is_err());
        let v2 = text.replace("\"format_version\":1", "\"format_version\":2");
        assert!(MotionDocument::<f64>::from_json_str(&v2, "x", "x").is_err());
    }

    #[test]
    fn string_contents_are_not_rewritten() {
        assert_eq!(null_out_non_finite(r#"{"id":"NaN"}"#), r#"{"id":"NaN"}"#);
        assert_eq!(null_out_non_finite(r#"[NaN,-Infinity]"#), "[null,null]");
    }
}
