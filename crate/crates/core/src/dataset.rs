//! Paired contact dataset: manifest format, loading, validation and splitting.
//!
//! A dataset is a directory holding PNG images plus one TOML manifest. The
//! manifest carries the dataset-level keys and a `[[records]]` table; image
//! paths are relative to the manifest's directory and forces are stored
//! inline at full precision. See `docs/manifest.md` for the exact layout.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Six-axis contact reading. Forces in N, torques in N·mm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct ForceVector {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl ForceVector {
    pub const AXES: [&'static str; 6] = ["fx", "fy", "fz", "mx", "my", "mz"];

    pub fn new(fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Self {
        Self { fx, fy, fz, mx, my, mz }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<[f64; 6]> for ForceVector {
    fn from(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

impl From<ForceVector> for [f64; 6] {
    fn from(f: ForceVector) -> Self {
        f.to_array()
    }
}

/// Rig pose: position in mm relative to the initial contact point, twist in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub twist: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, twist: f64) -> Self {
        Self { x, y, z, twist }
    }
}

impl From<[f64; 4]> for Pose {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Pose> for [f64; 4] {
    fn from(p: Pose) -> Self {
        [p.x, p.y, p.z, p.twist]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorType {
    /// Three coloured lights, no markers.
    RgbPlain,
    /// Three coloured lights with a printed marker grid.
    RgbMarker,
    /// Single white light with a printed marker grid.
    WhiteMarker,
}

impl SensorType {
    pub fn has_markers(self) -> bool {
        !matches!(self, SensorType::RgbPlain)
    }
}

impl fmt::Display for SensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorType::RgbPlain => "rgb_plain",
            SensorType::RgbMarker => "rgb_marker",
            SensorType::WhiteMarker => "white_marker",
        })
    }
}

/// One manifest row: image references plus the inline force and pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub record_id: String,
    pub object_image: PathBuf,
    pub tactile_image: PathBuf,
    pub force: ForceVector,
    pub pose: Pose,
}

/// A decoded record.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactRecord {
    pub record_id: String,
    pub object_image: Image,
    pub force: ForceVector,
    pub tactile_image: Image,
    pub pose: Pose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format_version: u32,
    sensor_type: SensorType,
    /// (height, width)
    image_size: [usize; 2],
    #[serde(default)]
    records: Vec<RecordEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub format_version: u32,
    pub image_size: (usize, usize),
    pub sensor_type: SensorType,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, image_size: (usize, usize), sensor_type: SensorType) -> Self {
        Self {
            root: root.into(),
            format_version: MANIFEST_FORMAT_VERSION,
            image_size,
            sensor_type,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Decodes both images of record `index`.
    pub fn load_record(&self, index: usize) -> Result<ContactRecord> {
        let e = &self.records[index];
        let load = |rel: &Path| {
            Image::load_png(&self.resolve(rel)).map_err(|err| Error::Record {
                record_id: e.record_id.clone(),
                message: err.to_string(),
            })
        };
        Ok(ContactRecord {
            record_id: e.record_id.clone(),
            object_image: load(&e.object_image)?,
            force: e.force,
            tactile_image: load(&e.tactile_image)?,
            pose: e.pose,
        })
    }

    pub fn load_all(&self) -> Result<Vec<ContactRecord>> {
        (0..self.len()).map(|i| self.load_record(i)).collect()
    }

    /// Writes both images of a record under `root` and appends its entry.
    pub fn push_record(&mut self, record: &ContactRecord, object_rel: PathBuf, tactile_rel: PathBuf) -> Result<()> {
        for (img, rel) in [(&record.object_image, &object_rel), (&record.tactile_image, &tactile_rel)] {
            let path = self.resolve(rel);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            img.save_png(&path)?;
        }
        self.records.push(RecordEntry {
            record_id: record.record_id.clone(),
            object_image: object_rel,
            tactile_image: tactile_rel,
            force: record.force,
            pose: record.pose,
        });
        Ok(())
    }

    /// Serialized manifest text.
    pub fn to_toml(&self) -> Result<String> {
        let file = ManifestFile {
            format_version: self.format_version,
            sensor_type: self.sensor_type,
            image_size: [self.image_size.0, self.image_size.1],
            records: self.records.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Parse { what: "manifest".into(), message: e.to_string() })
    }

    /// Writes the manifest to `path`. Record paths stay relative; `path`
    /// should live in `self.root` for them to resolve on reload.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_toml()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Checks record-level invariants without touching the filesystem.
    pub fn validate_entries(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.records {
            if !seen.insert(e.record_id.as_str()) {
                return Err(Error::Record { record_id: e.record_id.clone(), message: "duplicate record_id".into() });
            }
            if !e.force.is_finite() {
                return Err(Error::Record { record_id: e.record_id.clone(), message: "non-finite force".into() });
            }
        }
        Ok(())
    }

    /// Header-only check that every image exists, is RGB and has `image_size`.
    pub fn validate_files(&self) -> Result<()> {
        let (h, w) = self.image_size;
        for e in &self.records {
            for rel in [&e.object_image, &e.tactile_image] {
                let path = self.resolve(rel);
                let fail = |message: String| Error::Record { record_id: e.record_id.clone(), message };
                if !path.is_file() {
                    return Err(fail(format!("missing image file {}", path.display())));
                }
                let (dw, dh, channels) = probe_png(&path).map_err(fail)?;
                if (dh as usize, dw as usize) != (h, w) {
                    return Err(Error::Validation(format!(
                        "record {}: {} is {dh}x{dw}, manifest declares {h}x{w}",
                        e.record_id,
                        rel.display()
                    )));
                }
                if channels != 3 {
                    return Err(Error::Validation(format!(
                        "record {}: {} has {channels} channels, expected 3",
                        e.record_id,
                        rel.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self { records: indices.iter().map(|&i| self.records[i].clone()).collect(), ..self.clone_header() }
    }

    fn clone_header(&self) -> Self {
        Self {
            root: self.root.clone(),
            format_version: self.format_version,
            image_size: self.image_size,
            sensor_type: self.sensor_type,
            records: Vec::new(),
        }
    }
}

fn probe_png(path: &Path) -> std::result::Result<(u32, u32, u8), String> {
    use image::ImageDecoder;
    let reader = image::ImageReader::open(path)
        .map_err(|e| e.to_string())?
        .with_guessed_format()
        .map_err(|e| e.to_string())?;
    let decoder = reader.into_decoder().map_err(|e| e.to_string())?;
    let (w, h) = decoder.dimensions();
    Ok((w, h, decoder.color_type().channel_count()))
}

/// Parses manifest text; `root` is the directory record paths resolve against.
pub fn parse_manifest(text: &str, root: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let file: ManifestFile =
        toml::from_str(text).map_err(|e| Error::Parse { what: "manifest".into(), message: e.to_string() })?;
    if file.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::FormatVersion { found: file.format_version, supported: MANIFEST_FORMAT_VERSION });
    }
    let [h, w] = file.image_size;
    if h == 0 || w == 0 {
        return Err(Error::Validation(format!("image_size {h}x{w} must be positive")));
    }
    let m = DatasetManifest {
        root: root.into(),
        format_version: file.format_version,
        image_size: (h, w),
        sensor_type: file.sensor_type,
        records: file.records,
    };
    m.validate_entries()?;
    Ok(m)
}

/// Reads and fully validates a manifest and the image files it references.
pub fn load_dataset(manifest_path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = parse_manifest(&text, root)?;
    m.validate_files()?;
    Ok(m)
}

/// Deterministic seeded random partition into `(train, test)`.
///
/// `round(ratio * N)` records go to train. Each half keeps the input order.
pub fn split_dataset(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::param("ratio", format!("{ratio} not in (0, 1)")));
    }
    let n = manifest.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n as f64).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((manifest.subset(&train), manifest.subset(&test)))
}
