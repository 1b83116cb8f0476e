//! Scene bundles: a model, its ground-truth pose, the camera, and the sensor
//! depth rendered from them.

use std::path::Path;

use super::depth::DepthMap;
use super::model::ObjectModel;
use super::ply::{load_model, load_symmetries, write_ply_binary};
use super::render::render_depth;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};

pub const MODEL_FILE: &str = "model.ply";
pub const SYMMETRY_FILE: &str = "symmetries.json";
pub const CAMERA_FILE: &str = "camera.json";
pub const POSES_FILE: &str = "gt_poses.json";
pub const DEPTH_FILE: &str = "depth.f32";

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub model: ObjectModel,
    pub gt_pose: RigidTransform,
    pub intrinsics: Intrinsics,
    /// Sensor depth at full image resolution, stored at `f32` precision.
    pub depth: DepthMap,
    /// Set when the object rendered to no pixel at all.
    pub empty_render: bool,
}

/// Renders the sensor depth for `model` at `gt_pose` and bundles everything.
pub fn make_scene(model: ObjectModel, gt_pose: RigidTransform, intrinsics: Intrinsics) -> Result<Scene> {
    intrinsics.validate()?;
    if !gt_pose.is_valid(1e-6) {
        return Err(Error::InvalidArgument(
            "ground-truth pose is not a rigid transform".into(),
        ));
    }
    let depth = render_depth(&model, &gt_pose, &intrinsics).quantized();
    let empty_render = depth.valid_count() == 0;
    if empty_render {
        log::warn!("scene render is empty; the object is outside the view");
    }
    Ok(Scene {
        model,
        gt_pose,
        intrinsics,
        depth,
        empty_render,
    })
}

impl Scene {
    pub fn mask(&self) -> Vec<bool> {
        self.depth.mask()
    }

    /// Camera and depth of the solver grid that keeps every `factor`-th pixel.
    pub fn field_grid(&self, factor: usize) -> (Intrinsics, DepthMap) {
        (self.intrinsics.downsampled(factor), self.depth.subsample(factor))
    }

    /// Writes the bundle directory, creating it when needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(dir.join(MODEL_FILE), &write_ply_binary(&self.model))?;
        write(
            dir.join(SYMMETRY_FILE),
            &serde_json::to_vec_pretty(&self.model.symmetries)?,
        )?;
        write(dir.join(CAMERA_FILE), &serde_json::to_vec_pretty(&self.intrinsics)?)?;
        write(dir.join(POSES_FILE), &serde_json::to_vec_pretty(&[self.gt_pose])?)?;
        write(dir.join(DEPTH_FILE), &self.depth.to_f32_bytes())
    }

    /// Reads a bundle directory. Model coordinates and symmetry translations
    /// are multiplied by `unit_scale`. A missing symmetry file means `{I}`.
    pub fn load(dir: impl AsRef<Path>, unit_scale: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let mut model = load_model(dir.join(MODEL_FILE), unit_scale)?;
        let sym_path = dir.join(SYMMETRY_FILE);
        if sym_path.exists() {
            model = model.with_symmetries(load_symmetries(&sym_path, unit_scale)?)?;
        } else {
            log::warn!("{} not found, assuming no symmetries", sym_path.display());
        }
        let intrinsics: Intrinsics = serde_json::from_slice(&read(dir.join(CAMERA_FILE))?)?;
        intrinsics.validate()?;
        let poses: Vec<RigidTransform> = serde_json::from_slice(&read(dir.join(POSES_FILE))?)?;
        let Some(&gt_pose) = poses.first() else {
            return Err(Error::Empty(format!("{} holds no pose", POSES_FILE)));
        };
        let depth = DepthMap::from_f32_bytes(intrinsics.width, intrinsics.height, &read(dir.join(DEPTH_FILE))?)?;
        let empty_render = depth.valid_count() == 0;
        Ok(Scene {
            model,
            gt_pose,
            intrinsics,
            depth,
            empty_render,
        })
    }
}

fn write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path.as_ref(), e))
}

fn read(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))
}
