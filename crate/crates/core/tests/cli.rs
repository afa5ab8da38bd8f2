use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magflow::scenario::Scenario;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn magflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magflow"))
        .args(args)
        .env_remove("MAGFLOW_LOG")
        .output()
        .expect("binary runs")
}

fn run_scenario(command: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    magflow(&args)
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn larmor_trajectory_closes() {
    let out = tempfile::tempdir().unwrap();
    let res = run_scenario(
        "integrate",
        &scenario_dir().join("larmor.json"),
        out.path(),
        &[],
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rows = csv_rows(&out.path().join("integrate.csv"));
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert!((last[0] - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    for i in 1..=4 {
        assert!(
            (first[i] - last[i]).abs() < 1e-6,
            "column {i}: {} vs {}",
            first[i],
            last[i]
        );
    }
}

#[test]
fn sec_on_disk_with_area_form_is_constant() {
    let out = tempfile::tempdir().unwrap();
    let res = run_scenario(
        "sec",
        &scenario_dir().join("disk_area_s2.json"),
        out.path(),
        &[],
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("sec.json")).unwrap()).unwrap();
    for key in ["min", "max"] {
        let value = report[key].as_f64().unwrap();
        assert!((value + 3.0).abs() < 1e-6, "{key} = {value}");
    }
    // The report is also echoed on stdout.
    assert_eq!(
        res.stdout,
        std::fs::read(out.path().join("sec.json")).unwrap()
    );
}

#[test]
fn negative_speed_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario_dir().join("disk_area_s2.json")).unwrap();
    let path = write_scenario(
        dir.path(),
        &text.replace("\"speed\": 2.0", "\"speed\": -2.0"),
    );
    let res = run_scenario("sec", &path, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("speed: must be positive"), "{stderr}");
    assert!(!dir.path().join("sec.json").exists());
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_scenario(
        dir.path(),
        r#"{"manifold": {"name": "euclidean", "dim": 2}, "speeed": 1}"#,
    );
    let res = run_scenario("sec", &unknown, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("speeed"));

    let res = run_scenario("sec", &dir.path().join("missing.json"), dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));

    let model = write_scenario(dir.path(), r#"{"manifold": {"name": "klein_bottle"}}"#);
    assert_eq!(
        run_scenario("sec", &model, dir.path(), &[]).status.code(),
        Some(2)
    );

    assert_eq!(magflow(&["no-such-command"]).status.code(), Some(2));
    let larmor = scenario_dir().join("larmor.json");
    assert_eq!(
        run_scenario("sec", &larmor, dir.path(), &["--threads", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run_scenario("integrate", &larmor, dir.path(), &["--tolerance", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Speed 1/2 orbits of the disk with its area form close up with period 4π/√3, not 1.
    let path = write_scenario(
        dir.path(),
        r#"{"manifold": {"name": "poincare_disk"}, "magnetic": {"name": "area_form", "b": 1.0},
            "initial": {"x": [0, 0], "v": [0.25, 0]}, "integrator": {"step": 0.01}, "params": {"period": 1.0}}"#,
    );
    let res = run_scenario("holonomy", &path, dir.path(), &[]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(String::from_utf8_lossy(&res.stderr).contains("closed orbit"));

    // The stereographic chart cannot reach the antipode.
    let path = write_scenario(
        dir.path(),
        r#"{"manifold": {"name": "round_sphere"}, "initial": {"x": [0, 0], "v": [0.5, 0]},
            "integrator": {"step": 0.01}, "params": {"t_max": 4.0, "steps": 4}}"#,
    );
    let res = run_scenario("conjugate-scan", &path, dir.path(), &[]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let cases = [
        ("sec", "disk_area_s2.json", "sec.json"),
        ("anosov-report", "disk_area_s2.json", "anosov-report.json"),
        ("defect", "sphere_defect.json", "defect.json"),
        ("integrate", "larmor.json", "integrate.csv"),
    ];
    for (command, scenario, file) in cases {
        let path = scenario_dir().join(scenario);
        let outputs: Vec<Vec<u8>> = ["1", "4"]
            .iter()
            .map(|threads| {
                let out = tempfile::tempdir().unwrap();
                let res = run_scenario(command, &path, out.path(), &["--threads", threads]);
                assert_eq!(res.status.code(), Some(0));
                std::fs::read(out.path().join(file)).unwrap()
            })
            .collect();
        assert_eq!(
            outputs[0], outputs[1],
            "{command} differs across thread counts"
        );
    }
}

#[test]
fn seed_flag_reproduces_reports() {
    let path = scenario_dir().join("disk_area_s2.json");
    let read = |seed: &str| {
        let out = tempfile::tempdir().unwrap();
        assert_eq!(
            run_scenario("anosov-report", &path, out.path(), &["--seed", seed])
                .status
                .code(),
            Some(0)
        );
        std::fs::read(out.path().join("anosov-report.json")).unwrap()
    };
    assert_eq!(read("9"), read("9"));
}

#[test]
fn output_dir_comes_from_scenario_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested").join("out");
    let text = std::fs::read_to_string(scenario_dir().join("larmor.json")).unwrap();
    let text = text.replacen(
        '{',
        &format!(
            "{{\n  \"output\": {{\"dir\": {:?}}},",
            target.to_str().unwrap()
        ),
        1,
    );
    let path = write_scenario(dir.path(), &text);
    let res = magflow(&["integrate", path.to_str().unwrap()]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(target.join("integrate.csv").exists());
}

#[test]
fn regimes_change_sign_at_unit_speed() {
    let out = tempfile::tempdir().unwrap();
    let res = run_scenario(
        "regimes",
        &scenario_dir().join("regimes.json"),
        out.path(),
        &[],
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rows = csv_rows(&out.path().join("regimes.csv"));
    for row in &rows {
        let (s, max_sec) = (row[0], row[1]);
        assert!((max_sec - (1.0 - s * s)).abs() < 1e-6);
    }
    let top = |s: f64| rows.iter().find(|r| r[0] == s).unwrap()[2];
    assert!((top(2.0) - 3.0_f64.sqrt()).abs() < 0.05 * 3.0_f64.sqrt());
    assert!(top(0.5) < top(2.0) / 4.0);
}

#[test]
fn every_shipped_scenario_validates() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        Scenario::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn schema_command_matches_shipped_schema() {
    let res = magflow(&["schema"]);
    assert_eq!(res.status.code(), Some(0));
    let shipped = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/scenario.schema.json"),
    )
    .unwrap();
    assert_eq!(
        String::from_utf8(res.stdout).unwrap().trim_end(),
        shipped.trim_end()
    );
}
