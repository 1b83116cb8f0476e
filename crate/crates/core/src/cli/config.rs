//! Run configuration: file contents plus flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::args::{CommonArgs, ModeArg};
use super::CliError;
use crate::metrics::EvalConfig;
use crate::refine::{InputMode, OracleConfig, RefinementConfig};
use crate::solver::GradcheckSpec;

/// Offset between an object's perturbation seed and its oracle seed, so the
/// two never share a random stream.
pub const ORACLE_SEED_OFFSET: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub rotation_deg: f64,
    /// Meters.
    pub translation: f64,
    /// Draw Gaussian magnitudes with these sigmas instead of using them
    /// exactly.
    pub sampled: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            translation: 0.05,
            sampled: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Initial rotation errors; empty disables the sweep.
    pub rotation_deg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub inner: Vec<usize>,
    pub outer: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            inner: vec![10, 40],
            outer: vec![1, 2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub problems: usize,
    pub pixels: usize,
    pub views: usize,
    pub gn_iters: usize,
    pub step: f64,
    pub noise: f64,
    pub floor: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        let s = GradcheckSpec::default();
        Self {
            problems: 20,
            pixels: s.pixels,
            views: s.views,
            gn_iters: s.gn_iters,
            step: s.step,
            noise: s.noise,
            floor: s.floor,
            tolerance: 1e-3,
        }
    }
}

impl GradcheckConfig {
    pub fn spec(&self) -> GradcheckSpec {
        GradcheckSpec {
            pixels: self.pixels,
            views: self.views,
            gn_iters: self.gn_iters,
            step: self.step,
            noise: self.noise,
            floor: self.floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Size of the synthetic suite used when no scene bundle is given.
    pub objects: usize,
    pub scene: Option<PathBuf>,
    /// PLY replacing the bundle's or the synthetic model.
    pub model: Option<PathBuf>,
    pub unit_scale: f64,
    /// Left out of the artifacts so they do not depend on where they land.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub perturbation: PerturbationConfig,
    pub refine: RefinementConfig,
    pub oracle: OracleConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            objects: 10,
            scene: None,
            model: None,
            unit_scale: 1.0,
            out: PathBuf::from("out"),
            perturbation: PerturbationConfig::default(),
            refine: RefinementConfig::default(),
            oracle: OracleConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            bench: BenchConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

/// Seeds of object `i`: the root seed plus the index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectSeeds {
    pub scene_index: u64,
    pub perturbation: u64,
    pub oracle: u64,
}

impl RunConfig {
    /// Reads TOML or JSON by extension.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "toml" => toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            "json" => serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            _ => Err(CliError::Input(format!(
                "{}: config must end in .toml or .json",
                path.display()
            ))),
        }
    }

    /// The file named by `--config` (or defaults) with the flags applied on
    /// top, validated.
    pub fn resolve(common: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(common);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, a: &CommonArgs) {
        if let Some(v) = &a.scene {
            self.scene = Some(v.clone());
        }
        if let Some(v) = &a.model {
            self.model = Some(v.clone());
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = a.objects {
            self.objects = v;
        }
        if let Some(v) = a.unit_scale {
            self.unit_scale = v;
        }
        if let Some(v) = a.inner {
            self.refine.inner = v;
        }
        if let Some(v) = a.outer {
            self.refine.outer = v;
        }
        if let Some(v) = a.gn_iters {
            self.refine.solver.iterations = v;
            self.gradcheck.gn_iters = v;
        }
        if let Some(v) = a.views {
            self.refine.views = Some(v);
        }
        if let Some(m) = a.mode {
            self.refine.mode = match m {
                ModeArg::Rgbd => InputMode::Rgbd,
                ModeArg::Rgb => InputMode::Rgb,
            };
        }
        if let Some(v) = a.noise {
            self.oracle.noise_px = v;
        }
        if let Some(v) = a.outliers {
            self.oracle.outlier_rate = v;
        }
        if let Some(v) = &a.out {
            self.out = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        self.refine.validate()?;
        self.oracle.validate()?;
        self.gradcheck.spec().validate()?;
        if self.objects == 0 {
            return bad("objects must be ≥ 1".into());
        }
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return bad(format!("unit_scale must be > 0, got {}", self.unit_scale));
        }
        let p = &self.perturbation;
        if !(p.rotation_deg >= 0.0 && p.rotation_deg < 180.0 && p.translation >= 0.0 && p.translation.is_finite()) {
            return bad("perturbation needs rotation in [0°, 180°) and translation ≥ 0".into());
        }
        if self.sweep.rotation_deg.iter().any(|r| !(*r >= 0.0 && *r < 180.0)) {
            return bad("sweep rotations must be in [0°, 180°)".into());
        }
        let b = &self.bench;
        if b.inner.is_empty() || b.outer.is_empty() || b.inner.iter().chain(&b.outer).any(|&n| n == 0) {
            return bad("bench grids must be non-empty with entries ≥ 1".into());
        }
        if self.gradcheck.problems == 0 || !(self.gradcheck.tolerance > 0.0) {
            return bad("gradcheck needs problems ≥ 1 and tolerance > 0".into());
        }
        if !(self.eval.delta_vis > 0.0 && self.eval.mspd_scale > 0.0) {
            return bad("eval delta_vis and mspd_scale must be > 0".into());
        }
        Ok(())
    }

    pub fn object_seeds(&self, i: usize) -> ObjectSeeds {
        let s = self.seed.wrapping_add(i as u64);
        ObjectSeeds {
            scene_index: i as u64,
            perturbation: s,
            oracle: s.wrapping_add(self.oracle.seed).wrapping_add(ORACLE_SEED_OFFSET),
        }
    }

    /// Oracle noise model of object `i`.
    pub fn oracle_for(&self, i: usize) -> OracleConfig {
        OracleConfig {
            seed: self.object_seeds(i).oracle,
            ..self.oracle
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_parse_and_reject_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("run.toml");
        std::fs::write(
            &toml_path,
            "seed = 3\n[refine]\ninner = 5\n[oracle]\nnoise_px = 1.5\n[sweep]\nrotation_deg = [5.0, 30.0]\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&toml_path).unwrap();
        assert_eq!((cfg.seed, cfg.refine.inner, cfg.refine.outer), (3, 5, 1));
        assert_eq!(cfg.oracle.noise_px, 1.5);
        assert_eq!(cfg.sweep.rotation_deg, vec![5.0, 30.0]);

        let json_path = dir.path().join("run.json");
        std::fs::write(&json_path, r#"{"objects": 4, "refine": {"outer": 4}}"#).unwrap();
        let cfg = RunConfig::from_file(&json_path).unwrap();
        assert_eq!((cfg.objects, cfg.refine.outer, cfg.refine.inner), (4, 4, 40));

        std::fs::write(&toml_path, "seeed = 3\n").unwrap();
        assert!(RunConfig::from_file(&toml_path).is_err());
        std::fs::write(&json_path, r#"{"refine": {"inner": 5, "bogus": 1}}"#).unwrap();
        assert!(RunConfig::from_file(&json_path).is_err());
        assert!(RunConfig::from_file(&dir.path().join("run.yaml")).is_err());
    }

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\n[refine]\ninner = 5\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            seed: Some(9),
            gn_iters: Some(2),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(
            (
                cfg.seed,
                cfg.refine.inner,
                cfg.refine.solver.iterations,
                cfg.gradcheck.gn_iters
            ),
            (9, 5, 2, 2)
        );
    }

    #[test]
    fn validation_runs_before_compute() {
        let zero_iters = CommonArgs {
            gn_iters: Some(0),
            ..CommonArgs::default()
        };
        assert!(matches!(RunConfig::resolve(&zero_iters), Err(CliError::Input(_))));
        let bad_rate = CommonArgs {
            outliers: Some(1.5),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&bad_rate).is_err());
    }

    #[test]
    fn seeds_split_per_object() {
        let cfg = RunConfig {
            seed: 100,
            ..RunConfig::default()
        };
        let (a, b) = (cfg.object_seeds(0), cfg.object_seeds(3));
        assert_eq!((a.perturbation, b.perturbation), (100, 103));
        assert_ne!(a.oracle, a.perturbation);
        assert_eq!(cfg.oracle_for(3).seed, b.oracle);
    }
}
