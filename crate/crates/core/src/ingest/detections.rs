use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use super::files::GroundTruth;
use super::IngestError;

/// Normalized `(x_min, y_min, width, height)` box inside the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    // Rounding slack for detector output written with limited precision.
    const EPS: f64 = 1e-9;

    pub fn new(x_min: f64, y_min: f64, width: f64, height: f64) -> Result<Self, String> {
        let b = Self { x_min, y_min, width, height };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<(), String> {
        let Self { x_min, y_min, width, height } = *self;
        if ![x_min, y_min, width, height].iter().all(|v| v.is_finite()) {
            return Err("non-finite bbox coordinate".into());
        }
        if x_min < 0.0 || y_min < 0.0 {
            return Err(format!("bbox origin ({x_min}, {y_min}) is negative"));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(format!("bbox size {width}x{height} is not positive"));
        }
        if x_min + width > 1.0 + Self::EPS {
            return Err(format!("x_min + width = {} exceeds 1", x_min + width));
        }
        if y_min + height > 1.0 + Self::EPS {
            return Err(format!("y_min + height = {} exceeds 1", y_min + height));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub category: String,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    /// Path as written in the detection file, relative to the image root.
    pub path: PathBuf,
    /// Pixel `(width, height)`; filled once the image has been decoded.
    pub dimensions: Option<(u32, u32)>,
    pub sequence_id: Option<String>,
    pub ground_truth: Option<GroundTruth>,
}

impl ImageEntry {
    /// Image ids are the file path without extension, with path separators
    /// replaced by `_` so they can prefix crop file names.
    pub fn id_for_path(file: &str) -> String {
        let p = std::path::Path::new(file);
        let stem = match (p.parent(), p.file_stem()) {
            (Some(parent), Some(stem)) if !parent.as_os_str().is_empty() => {
                format!("{}/{}", parent.to_string_lossy(), stem.to_string_lossy())
            }
            (_, Some(stem)) => stem.to_string_lossy().into_owned(),
            _ => file.to_owned(),
        };
        stem.replace(['/', '\\'], "_")
    }
}

#[derive(Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
}

#[derive(Deserialize)]
struct RawImage {
    file: String,
    #[serde(default)]
    detections: Option<Vec<RawDetection>>,
}

#[derive(Deserialize)]
struct RawDetection {
    #[serde(default)]
    category: Option<String>,
    conf: f64,
    bbox: [f64; 4],
}

/// Parses a detector output file. Records are kept in file order and
/// confidences are not thresholded here.
pub fn parse_detection_file(bytes: &[u8]) -> Result<Vec<(ImageEntry, Vec<DetectionRecord>)>, IngestError> {
    let raw: RawFile = serde_json::from_slice(bytes).map_err(|e| IngestError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(raw.images.len());
    for img in raw.images {
        let image_id = ImageEntry::id_for_path(&img.file);
        let mut records = Vec::new();
        for det in img.detections.unwrap_or_default() {
            let invalid = |reason: String| IngestError::Validation { image_id: image_id.clone(), reason };
            if !(0.0..=1.0).contains(&det.conf) {
                return Err(invalid(format!("confidence {} outside [0, 1]", det.conf)));
            }
            let [x, y, w, h] = det.bbox;
            let bbox = BBox::new(x, y, w, h).map_err(invalid)?;
            records.push(DetectionRecord {
                image_id: image_id.clone(),
                category: det.category.unwrap_or_else(|| "1".to_owned()),
                bbox,
                confidence: det.conf,
            });
        }
        let entry = ImageEntry { image_id, path: PathBuf::from(&img.file), ..Default::default() };
        out.push((entry, records));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_all_detections_unthresholded() {
        let json = br#"{"images":[{"file":"a/b/img1.jpg","detections":[
            {"category":"1","conf":0.95,"bbox":[0.1,0.1,0.2,0.3]},
            {"category":"1","conf":0.30,"bbox":[0.5,0.5,0.1,0.1]}]}]}"#;
        let parsed = parse_detection_file(json).unwrap();
        assert_eq!(parsed.len(), 1);
        let (entry, dets) = &parsed[0];
        assert_eq!(entry.image_id, "a_b_img1");
        assert_eq!(dets.iter().map(|d| d.confidence).collect::<Vec<_>>(), vec![0.95, 0.30]);
    }

    #[test]
    fn empty_image_list() {
        assert!(parse_detection_file(br#"{"images":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn bbox_overflow_names_image() {
        let json = br#"{"images":[{"file":"cam1.jpg","detections":[{"category":"1","conf":0.9,"bbox":[0.4,0.1,0.8,0.2]}]}]}"#;
        match parse_detection_file(json) {
            Err(IngestError::Validation { image_id, .. }) => assert_eq!(image_id, "cam1"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let json = b"{\"images\": [\n  {\"file\": \"x.jpg\", \"detections\": [oops]}]}";
        match parse_detection_file(json) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_detections_field_is_empty() {
        let parsed = parse_detection_file(br#"{"images":[{"file":"e.jpg","max_detection_conf":0.0}]}"#).unwrap();
        assert!(parsed[0].1.is_empty());
    }
}
