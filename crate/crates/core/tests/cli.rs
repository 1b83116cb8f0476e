use std::path::{Path, PathBuf};

use bdpnp::cli::{self, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
use bdpnp::geometry::RigidTransform;
use bdpnp::scene::synthetic_scene;
use nalgebra::Vector3;
use serde_json::Value;

fn run(args: &[&str], out: &Path) -> i32 {
    let mut argv: Vec<String> = std::iter::once("bdpnp")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    argv.push("--out".into());
    argv.push(out.to_string_lossy().into_owned());
    cli::run(argv)
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

#[test]
fn invalid_input_exits_one_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["solve", "--iters", "0"], &out), EXIT_INPUT);
    assert_eq!(run(&["refine", "--bogus"], &out), EXIT_INPUT);
    assert_eq!(run(&["refine", "--outliers", "2"], &out), EXIT_INPUT);
    assert_eq!(run(&["refine", "--views", "0"], &out), EXIT_INPUT);
    assert_eq!(run(&["eval", "--pred", "/nonexistent/poses.json"], &out), EXIT_INPUT);
    assert_eq!(run(&["solve", "--config", "/nonexistent/run.toml"], &out), EXIT_INPUT);
    assert!(!out.exists());
    assert_eq!(cli::run(["bdpnp", "--help"]), EXIT_OK);
}

#[test]
fn unknown_config_keys_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[refine]\ninnner = 4\n").unwrap();
    assert_eq!(
        run(&["refine", "--config", cfg.to_str().unwrap()], &tmp.path().join("o")),
        EXIT_INPUT
    );
}

#[test]
fn solve_writes_tagged_results_and_problems_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("solve");
    assert_eq!(
        run(&["solve", "--objects", "2", "--trace", "--save-problems"], &out),
        EXIT_OK
    );
    let report = json(out.join("solve.json"));
    assert_eq!(report["schema"], "bdpnp.solve/1");
    let objects = report["objects"].as_array().unwrap();
    assert_eq!(objects.len(), 2);
    for o in objects {
        assert!(o["rotation_error"].as_f64().unwrap() < 1e-6);
        assert!(o["initial_rotation_error"].as_f64().unwrap() > 0.2);
    }
    let trace = std::fs::read_to_string(out.join("solve_trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2 * 10);
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["schema"], "bdpnp.solve-trace/1");

    // a saved problem solves to the same pose from the file alone
    let again = tmp.path().join("again");
    let problem = out.join("problem_1.json");
    assert_eq!(json(problem.clone())["schema"], "bdpnp.problem/1");
    assert_eq!(run(&["solve", "--problem", problem.to_str().unwrap()], &again), EXIT_OK);
    let a = &json(again.join("solve.json"))["objects"][0];
    assert_eq!(a["pose"], objects[1]["pose"]);
}

#[test]
fn refine_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("refine");
    assert_eq!(
        run(
            &[
                "refine",
                "--objects",
                "3",
                "--inner",
                "8",
                "--noise",
                "1",
                "--outliers",
                "0.1"
            ],
            &out
        ),
        EXIT_OK
    );
    let report = json(out.join("refine.json"));
    assert_eq!(report["schema"], "bdpnp.refine/1");
    assert!(report["median_rotation_error"].as_f64().unwrap() < 0.02);
    let poses = json(out.join("poses.json"));
    assert_eq!(poses["poses"].as_array().unwrap().len(), 3);
    let lines = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3 * 8);

    let ev = tmp.path().join("eval");
    assert_eq!(
        run(
            &[
                "eval",
                "--objects",
                "3",
                "--pred",
                out.join("poses.json").to_str().unwrap()
            ],
            &ev
        ),
        EXIT_OK
    );
    let summary = json(ev.join("summary.json"));
    assert_eq!(summary["schema"], "bdpnp.eval/1");
    let csv = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert!(csv.lines().count() > 3);
    // wrong count of predictions
    assert_eq!(
        run(
            &[
                "eval",
                "--objects",
                "4",
                "--pred",
                out.join("poses.json").to_str().unwrap()
            ],
            &ev
        ),
        EXIT_INPUT
    );
}

fn write_poses(path: &Path, poses: &[RigidTransform]) {
    std::fs::write(path, serde_json::to_vec(&poses).unwrap()).unwrap();
}

#[test]
fn eval_scores_perfect_and_distant_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes: Vec<_> = (0..3).map(|i| synthetic_scene(i, 0)).collect();
    let perfect: Vec<_> = scenes.iter().map(|s| s.gt_pose).collect();
    let pred = tmp.path().join("perfect.json");
    write_poses(&pred, &perfect);
    let out = tmp.path().join("perfect");
    assert_eq!(
        run(&["eval", "--objects", "3", "--pred", pred.to_str().unwrap()], &out),
        EXIT_OK
    );
    let s = json(out.join("summary.json"));
    for k in ["Avg", "MSPD", "VSD", "MSSD"] {
        assert_eq!(s[k].as_f64(), Some(1.0), "{k}");
    }

    // shifted by more than half the diameter along the optical axis
    let far: Vec<_> = scenes
        .iter()
        .map(|s| {
            RigidTransform::new(
                s.gt_pose.rotation,
                s.gt_pose.translation + Vector3::z() * 0.6 * s.model.diameter,
            )
        })
        .collect();
    write_poses(&pred, &far);
    let out = tmp.path().join("far");
    assert_eq!(
        run(&["eval", "--objects", "3", "--pred", pred.to_str().unwrap()], &out),
        EXIT_OK
    );
    assert_eq!(json(out.join("summary.json"))["MSSD"].as_f64(), Some(0.0));
}

#[test]
fn sweep_writes_one_row_per_angle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    assert_eq!(
        run(
            &["refine", "--objects", "2", "--inner", "6", "--sweep", "5,20,40"],
            &out
        ),
        EXIT_OK
    );
    let rows = json(out.join("sweep.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(
        rows.iter()
            .map(|r| r["rotation_deg"].as_f64().unwrap())
            .collect::<Vec<_>>(),
        vec![5.0, 20.0, 40.0]
    );
    // header plus one line per angle and object
    assert_eq!(
        std::fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(),
        1 + 3 * 2
    );
}

#[test]
fn bench_grid_rows_and_inner_monotonicity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    assert_eq!(
        run(
            &["bench", "--objects", "3", "--inner-grid", "1,10", "--outer-grid", "1,2"],
            &out
        ),
        EXIT_OK
    );
    let report = json(out.join("bench.json"));
    assert_eq!(report["schema"], "bdpnp.bench/1");
    let rows = report["rows"].as_array().unwrap();
    let grid: Vec<(u64, u64)> = rows
        .iter()
        .map(|r| (r["outer"].as_u64().unwrap(), r["inner"].as_u64().unwrap()))
        .collect();
    assert_eq!(grid, vec![(1, 1), (1, 10), (2, 1), (2, 10)]);
    let err = |k: usize| rows[k]["median_rotation_error"].as_f64().unwrap();
    // more inner iterations never hurt on a noise-free suite
    assert!(err(1) <= err(0) && err(3) <= err(2));
    assert_eq!(
        std::fs::read_to_string(out.join("bench.csv")).unwrap().lines().count(),
        5
    );
    assert_eq!(
        json(out.join("bench_timings.json"))["rows"].as_array().unwrap().len(),
        4
    );
}

#[test]
fn config_file_drives_outer_and_inner() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"objects": 1, "refine": {"outer": 4, "inner": 40}}"#).unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&["refine", "--config", cfg.to_str().unwrap(), "--inner", "3"], &out),
        EXIT_OK
    );
    let c = &json(out.join("refine.json"))["config"]["refine"];
    assert_eq!((c["outer"].as_u64(), c["inner"].as_u64()), (Some(4), Some(3)));
    let lines = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4 * 3);
}

#[test]
fn gradcheck_passes_and_a_tight_tolerance_fails_numerically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gc");
    assert_eq!(run(&["gradcheck", "--problems", "3"], &out), EXIT_OK);
    let r = json(out.join("gradcheck.json"));
    assert_eq!(
        (r["schema"].as_str(), r["passed"].as_bool()),
        (Some("bdpnp.gradcheck/1"), Some(true))
    );

    let cfg = tmp.path().join("tight.toml");
    std::fs::write(&cfg, "[gradcheck]\ntolerance = 1e-30\n").unwrap();
    assert_eq!(
        run(
            &["gradcheck", "--problems", "2", "--config", cfg.to_str().unwrap()],
            &out
        ),
        EXIT_NUMERICAL
    );
}
