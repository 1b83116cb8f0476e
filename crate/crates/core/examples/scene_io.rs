//! Writing and reading scene bundles and PLY models.

use bdpnp::scene::{load_model, parse_ply, synthetic_scene, write_ply_binary, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("bdpnp-scene-io");
    let scene = synthetic_scene(2, 9);
    scene.save(&dir)?;
    let loaded = Scene::load(&dir, 1.0)?;
    println!(
        "bundle in {}: {} vertices, diameter {:.4} m, pose moved {:.1e} m",
        dir.display(),
        loaded.model.vertices.len(),
        loaded.model.diameter,
        loaded.gt_pose.translation_distance(&scene.gt_pose)
    );

    // the same model in millimeters, scaled back on load
    let mm = bdpnp::scene::ObjectModel::new(
        scene.model.vertices.iter().map(|v| v * 1000.0).collect(),
        scene.model.triangles.clone(),
    )?;
    let path = dir.join("model_mm.ply");
    std::fs::write(&path, write_ply_binary(&mm))?;
    let mesh = parse_ply(&std::fs::read(&path)?)?;
    let back = load_model(&path, 1e-3)?;
    println!(
        "binary PLY: {} faces, diameter after scaling {:.4} m",
        mesh.faces.len(),
        back.diameter
    );
    Ok(())
}
