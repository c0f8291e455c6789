//! Complete synthetic datasets from a shape set, a path and a renderer.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{ContactRecord, DatasetManifest};
use crate::error::{Error, Result};
use crate::rigsim::force::contact_force_with;
use crate::rigsim::render::{render_object, render_tactile_with, RenderConfig};
use crate::rigsim::shapes::ShapeSpec;
use crate::rigsim::trajectory::{generate_trajectory, TrajectoryConfig};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Renders every (shape, frame) pair without touching the filesystem.
pub fn simulate_records(shapes: &[ShapeSpec], traj: &TrajectoryConfig, render: &RenderConfig) -> Result<Vec<ContactRecord>> {
    render.validate()?;
    let states = generate_trajectory(traj)?;
    let mut seen = std::collections::HashSet::new();
    for s in shapes {
        s.shape.validate()?;
        if s.name.is_empty() || s.name.contains(['/', '\\']) || !seen.insert(s.name.as_str()) {
            return Err(Error::param("shapes", format!("shape names must be unique path-safe strings, got {:?}", s.name)));
        }
    }
    let mut out = Vec::with_capacity(shapes.len() * states.len());
    for spec in shapes {
        let profile = spec.shape.profile();
        let records: Vec<ContactRecord> = states
            .par_iter()
            .enumerate()
            .map(|(i, st)| ContactRecord {
                record_id: format!("{}_{i:04}", spec.name),
                object_image: render_object(&spec.shape, &st.pose, render),
                force: contact_force_with(&spec.shape, &profile, &st.pose, &render.force),
                tactile_image: render_tactile_with(&spec.shape, &profile, &st.pose, render),
                pose: st.pose,
            })
            .collect();
        out.extend(records);
    }
    Ok(out)
}

/// Writes `records` under `out_dir` with a manifest; on failure removes
/// everything this call created.
pub fn write_dataset(records: &[ContactRecord], render: &RenderConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let existed = out_dir.exists();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = DatasetManifest::new(out_dir, render.size(), render.sensor_type);
    let mut created: Vec<PathBuf> = Vec::new();
    let result = (|| {
        for r in records {
            let obj = PathBuf::from("objects").join(format!("{}.png", r.record_id));
            let tac = PathBuf::from("tactile").join(format!("{}.png", r.record_id));
            created.push(out_dir.join(&obj));
            created.push(out_dir.join(&tac));
            manifest.push_record(r, obj, tac)?;
        }
        manifest.validate_entries()?;
        let path = out_dir.join(MANIFEST_FILE);
        created.push(path.clone());
        manifest.save(&path)
    })();
    if let Err(e) = result {
        for p in &created {
            let _ = std::fs::remove_file(p);
        }
        for sub in ["objects", "tactile"] {
            let _ = std::fs::remove_dir(out_dir.join(sub));
        }
        if !existed {
            let _ = std::fs::remove_dir(out_dir);
        }
        return Err(e);
    }
    Ok(manifest)
}

pub fn generate_dataset(
    shapes: &[ShapeSpec],
    traj: &TrajectoryConfig,
    render: &RenderConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let records = simulate_records(shapes, traj, render)?;
    write_dataset(&records, render, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_dataset, SensorType};
    use crate::rigsim::shapes::IndenterShape;

    fn one_level() -> TrajectoryConfig {
        TrajectoryConfig { press_depth_step: 0.4, max_depth: 0.4, capture_stride: 40, ..Default::default() }
    }

    #[test]
    fn single_cycle_dataset_loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let shapes = vec![ShapeSpec { name: "ball".into(), shape: IndenterShape::Sphere { diameter: 6.0 } }];
        let render = RenderConfig::for_sensor(SensorType::RgbMarker, (32, 32));
        let m = generate_dataset(&shapes, &one_level(), &render, dir.path()).unwrap();
        let loaded = load_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.records, m.records);
        loaded.validate_entries().unwrap();
        loaded.validate_files().unwrap();
        let rec = loaded.load_record(3).unwrap();
        assert_eq!(rec.tactile_image.height(), 32);
    }

    #[test]
    fn duplicate_shape_names_are_rejected() {
        let s = ShapeSpec { name: "a".into(), shape: IndenterShape::Sphere { diameter: 6.0 } };
        let err = simulate_records(&[s.clone(), s], &one_level(), &RenderConfig::default()).unwrap_err();
        assert!(err.to_string().contains("shapes"));
    }
}
