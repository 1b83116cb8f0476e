//! Object models, depth rendering, pose perturbations, PLY I/O and scene
//! bundles.

mod bundle;
mod depth;
mod model;
mod perturb;
mod ply;
mod render;
pub mod synthetic;

pub use bundle::{make_scene, Scene, CAMERA_FILE, DEPTH_FILE, MODEL_FILE, POSES_FILE, SYMMETRY_FILE};
pub use depth::DepthMap;
pub use model::{diameter, ObjectModel};
pub use perturb::{apply_perturbation, fixed_perturbation, sample_perturbation, sample_perturbation_with};
pub use ply::{load_model, load_symmetries, parse_ply, write_ply_ascii, write_ply_binary, PlyMesh};
pub use render::{render_depth, render_depth_with, RenderOptions};
pub use synthetic::{synthetic_camera, synthetic_scene, synthetic_scene_with, FIELD_FACTOR};
