//! CSV side files and the crop extraction pass over an image directory.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::{classify_empty, crop_and_resize, filter_detections, DetectionRecord, ImageEntry, ImageStatus, IngestConfig, IngestError};

/// Ground truth attached to an image (sequence labels are copied onto every image).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label: Option<String>,
    pub count: u32,
    pub empty: bool,
}

/// One row of the `image_id,label,count,empty` CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub image_id: String,
    #[serde(deserialize_with = "empty_string_as_none")]
    pub label: Option<String>,
    pub count: u32,
    #[serde(deserialize_with = "flexible_bool")]
    pub empty: bool,
}

impl GroundTruthRow {
    pub fn truth(&self) -> GroundTruth {
        GroundTruth { label: self.label.clone(), count: self.count, empty: self.empty }
    }
}

fn empty_string_as_none<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s = Option::<String>::deserialize(d)?;
    Ok(s.filter(|s| !s.trim().is_empty()))
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" | "" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other:?}"))),
    }
}

pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthRow>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: GroundTruthRow = rec?;
        if !row.empty && row.count == 0 {
            return Err(IngestError::Validation {
                image_id: row.image_id,
                reason: "non-empty image with count 0".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One row of the crop index: `crop_id,image_id,x,y,w,h,conf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropIndexRow {
    pub crop_id: String,
    pub image_id: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub conf: f64,
}

pub fn write_crop_index<W: Write>(writer: W, rows: &[CropIndexRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| IngestError::Io { path: "crop index".into(), source: e })?;
    Ok(())
}

pub fn read_crop_index<R: Read>(reader: R) -> Result<Vec<CropIndexRow>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(IngestError::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub file: String,
    pub status: ImageStatus,
    pub count: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub images: Vec<ImageReport>,
    pub crops: Vec<CropIndexRow>,
}

impl IngestReport {
    pub fn empty_images(&self) -> impl Iterator<Item = &ImageReport> {
        self.images.iter().filter(|r| r.status == ImageStatus::Empty)
    }
}

/// Thresholds every image, writes one `<image_id>_<k>.png` per kept detection
/// into `out_dir`, and returns the per-image report plus the crop index.
/// Images without a kept detection are never decoded.
pub fn ingest_images(
    entries: &[(ImageEntry, Vec<DetectionRecord>)],
    image_root: &Path,
    out_dir: &Path,
    cfg: &IngestConfig,
    jobs: usize,
) -> Result<IngestReport, IngestError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| IngestError::Domain(format!("thread pool: {e}")))?;
    let per_image: Vec<Result<(ImageReport, Vec<CropIndexRow>), IngestError>> = pool.install(|| {
        entries
            .par_iter()
            .map(|(entry, dets)| process_image(entry, dets, image_root, out_dir, cfg))
            .collect()
    });
    let mut report = IngestReport::default();
    for r in per_image {
        let (img, crops) = r?;
        report.images.push(img);
        report.crops.extend(crops);
    }
    Ok(report)
}

fn process_image(
    entry: &ImageEntry,
    dets: &[DetectionRecord],
    image_root: &Path,
    out_dir: &Path,
    cfg: &IngestConfig,
) -> Result<(ImageReport, Vec<CropIndexRow>), IngestError> {
    let kept = filter_detections(dets, cfg);
    let status = classify_empty(dets, cfg);
    let report = ImageReport {
        image_id: entry.image_id.clone(),
        file: entry.path.to_string_lossy().into_owned(),
        status,
        count: kept.len() as u32,
    };
    if status == ImageStatus::Empty {
        return Ok((report, Vec::new()));
    }
    let path = image_root.join(&entry.path);
    let img = image::open(&path)
        .map_err(|e| IngestError::Image { path: path.display().to_string(), source: e })?
        .to_rgb8();
    let mut rows = Vec::with_capacity(kept.len());
    for (k, det) in kept.iter().enumerate() {
        let crop = crop_and_resize(&img, &det.bbox, cfg, &entry.image_id, k)?;
        let out = out_dir.join(format!("{}.png", crop.crop_id));
        crop.to_image()
            .save(&out)
            .map_err(|e| IngestError::Image { path: out.display().to_string(), source: e })?;
        rows.push(CropIndexRow {
            crop_id: crop.crop_id,
            image_id: entry.image_id.clone(),
            x: crop.source.x,
            y: crop.source.y,
            w: crop.source.w,
            h: crop.source.h,
            conf: det.confidence,
        });
    }
    Ok((report, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_csv() {
        let csv = "image_id,label,count,empty\nimg1,zebra,3,false\nimg2,,0,true\n";
        let rows = read_ground_truth(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].label.as_deref(), Some("zebra"));
        assert!(rows[1].empty && rows[1].label.is_none());
    }

    #[test]
    fn ground_truth_rejects_zero_count_animal() {
        let csv = "image_id,label,count,empty\nimg1,zebra,0,0\n";
        assert!(read_ground_truth(csv.as_bytes()).is_err());
    }

    #[test]
    fn crop_index_round_trip() {
        let rows = vec![CropIndexRow { crop_id: "a_0".into(), image_id: "a".into(), x: 1, y: 2, w: 3, h: 4, conf: 0.97 }];
        let mut buf = Vec::new();
        write_crop_index(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("crop_id,image_id,x,y,w,h,conf\n"));
        assert_eq!(read_crop_index(buf.as_slice()).unwrap(), rows);
    }
}
