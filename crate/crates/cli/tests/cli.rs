use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qualdyn_cli::scenario::{Format, Scenario};
use statrs::distribution::{Beta, ContinuousCDF};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn qualdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qualdyn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const REALIZABLE: &str = r#"
version = 1
[economy]
wage = 0.6
payoff_tp = 1.0
cost_fp = 1.0
[[groups]]
id = "a"
proportion = 0.5
cost = { kind = "uniform01" }
[[groups]]
id = "b"
proportion = 0.5
cost = { kind = "uniform01" }
[features]
variant = "score"
[features.groups.a]
y1 = { knots = [[0.0, 0.0], [0.5, 0.0], [1.0, 1.0]] }
y0 = { knots = [[0.0, 0.0], [0.5, 1.0], [1.0, 1.0]] }
[features.groups.b]
y1 = { knots = [[0.0, 0.0], [0.5, 0.0], [1.0, 1.0]] }
y0 = { knots = [[0.0, 0.0], [0.5, 1.0], [1.0, 1.0]] }
"#;

#[test]
fn run_uniform_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let o = qualdyn(&[
        "run",
        "--config",
        &scenario("uniform.toml"),
        "--init",
        "0.6,0.3",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: fixed_point"));
    let text = std::fs::read_to_string(&trace).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["verdict"], "fixed_point");
    assert!((last["summary"]["pi"]["a1"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((last["summary"]["pi"]["a2"].as_f64().unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn run_gaussian_cycle_reports_average() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let o = qualdyn(&[
        "run",
        "--config",
        &scenario("gaussian_cycle.toml"),
        "--init",
        "0.3,0.5",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: limit_cycle"));
    let text = std::fs::read_to_string(&trace).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["verdict"], "limit_cycle");
    assert_eq!(last["summary"]["period"], 2);
    assert!((last["summary"]["cycle_average"]["a1"].as_f64().unwrap() - 0.4).abs() < 1e-9);
}

#[test]
fn missing_wage_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("uniform.toml"))
        .unwrap()
        .replace("wage = 0.6\n", "");
    let path = write(&dir, "bad.toml", &text);
    let o = qualdyn(&["run", "--config", &path]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("economy") && err.contains("wage"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(scenarios().join("uniform.toml")).unwrap();
    let cases = [
        base.replace("cost_fp = 1.0", "cost_fp = 1.0\ncost_tp = 2.0"),
        base.replace("version = 1", "version = 7"),
        base.replace(
            "proportion = 0.5\ncost = { kind = \"uniform01\" }\n\n[features]",
            "proportion = 0.4\ncost = { kind = \"uniform01\" }\n\n[features]",
        ),
        base.replace("a2 = 0.8", "a3 = 0.8"),
        base.replace("wage = 0.6", "wage = -1.0"),
        "this is not a scenario".to_string(),
        String::new(),
    ];
    for (i, text) in cases.iter().enumerate() {
        let path = write(&dir, &format!("case{i}.toml"), text);
        let o = qualdyn(&["find", "--config", &path]);
        assert_eq!(o.status.code(), Some(1), "case {i}: {}", stderr(&o));
        assert!(!stderr(&o).contains("panicked"), "case {i}");
    }
    let o = qualdyn(&["run", "--config", "/no/such/file.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qualdyn(&[
        "run",
        "--config",
        &scenario("uniform.toml"),
        "--init",
        "0.1,0.2,0.3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = qualdyn(&[
        "run",
        "--config",
        &scenario("uniform.toml"),
        "--init",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = qualdyn(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("uniform.toml")).unwrap()
        + "\n[dynamics]\nmax_iters = 1\n";
    let path = write(&dir, "short.toml", &text);
    let o = qualdyn(&["run", "--config", &path, "--init", "0.5,0.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("non_converged"));
}

#[test]
fn sweep_rows_and_decoupling() {
    let o = qualdyn(&[
        "sweep",
        "--config",
        &scenario("uniform.toml"),
        "--grid",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = qualdyn(&[
        "sweep",
        "--config",
        &scenario("uniform.toml"),
        "--grid",
        "11",
        "--decoupled",
    ]);
    let text = stdout(&o);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("delta_"))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(cols.len(), 2);
    for row in reader.records() {
        let row = row.unwrap();
        for &c in &cols {
            assert!(row[c].parse::<f64>().unwrap() >= -1e-9, "{row:?}");
        }
    }

    let o = qualdyn(&[
        "sweep",
        "--config",
        &scenario("bimodal_decoupling.toml"),
        "--grid",
        "11",
        "--decoupled",
    ]);
    let text = stdout(&o);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let col = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "delta_b")
        .unwrap();
    let deltas: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[col].parse().unwrap())
        .collect();
    assert!(
        deltas.iter().any(|d| *d > 1e-6) && deltas.iter().any(|d| *d < -1e-6),
        "{deltas:?}"
    );

    let o = qualdyn(&[
        "sweep",
        "--config",
        &scenario("uniform.toml"),
        "--grid",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn find_uniform_matches_closed_forms() {
    let o = qualdyn(&["find", "--config", &scenario("uniform.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let worst: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max discrepancy: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(worst <= 1e-6);
    let nonzero = text
        .lines()
        .filter(|l| l.starts_with('[') && !l.contains("a1=0.000000000 a2=0.000000000"))
        .count();
    assert_eq!(nonzero, 3, "{text}");
}

#[test]
fn find_realizable_single_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "real.toml", REALIZABLE);
    let out = dir.path().join("eq.csv");
    let o = qualdyn(&["find", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let nonzero: Vec<_> = rows
        .iter()
        .filter(|r| r[1].parse::<f64>().unwrap() > 0.0 || r[2].parse::<f64>().unwrap() > 0.0)
        .collect();
    assert_eq!(nonzero.len(), 1);
    assert!((nonzero[0][1].parse::<f64>().unwrap() - 0.6).abs() < 1e-9);
}

#[test]
fn find_gaussian_boundary_notes_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("gaussian_cycle.toml"))
        .unwrap()
        .replace("cost_fp = 2.0", "cost_fp = 1.0");
    let path = write(&dir, "equal.toml", &text);
    let o = qualdyn(&["find", "--config", &path]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("closed forms not applicable"), "{text}");
    assert!(text.contains("equilibria:"));
}

fn histogram(series: &[(&str, u8, f64, f64)]) -> String {
    let mut out = String::from("group,label,score,count\n");
    for &(g, l, a, b) in series {
        let d = Beta::new(a, b).unwrap();
        for i in 0..100 {
            let (lo, hi) = (i as f64 / 100.0, (i + 1) as f64 / 100.0);
            let count = (1e6 * (d.cdf(hi) - d.cdf(lo))).round() as u64;
            out.push_str(&format!("{g},{l},{lo},{count}\n"));
        }
    }
    out
}

#[test]
fn fit_writes_feature_block() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "h.csv",
        &histogram(&[
            ("g", 0, 2.0, 5.0),
            ("g", 1, 5.0, 2.0),
            ("u", 0, 1.0, 1.0),
            ("u", 1, 1.0, 1.0),
        ]),
    );
    let out = dir.path().join("features.toml");
    let o = qualdyn(&["fit", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let snippet: toml::Value = toml::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let f = &snippet["features"];
    assert_eq!(f["variant"].as_str(), Some("score"));
    let get = |g: &str, y: &str, p: &str| f["groups"][g][y][p].as_float().unwrap();
    assert!(
        (get("g", "y0", "alpha") - 2.0).abs() <= 0.02
            && (get("g", "y0", "beta") - 5.0).abs() <= 0.02
    );
    assert!(
        (get("g", "y1", "alpha") - 5.0).abs() <= 0.02
            && (get("g", "y1", "beta") - 2.0).abs() <= 0.02
    );
    for y in ["y0", "y1"] {
        assert!(
            (get("u", y, "alpha") - 1.0).abs() <= 0.02 && (get("u", y, "beta") - 1.0).abs() <= 0.02
        );
    }
}

#[test]
fn fitted_block_loads_as_scenario_features() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "h.csv",
        &histogram(&[("g", 0, 2.0, 5.0), ("g", 1, 5.0, 2.0)]),
    );
    let o = qualdyn(&["fit", &path]);
    assert_eq!(o.status.code(), Some(0));
    let block: String = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with("g y="))
        .collect::<Vec<_>>()
        .join("\n");
    let text = format!(
        "version = 1\n[economy]\nwage = 0.8\npayoff_tp = 1.0\ncost_fp = 1.0\n[[groups]]\nid = \"g\"\nproportion = 1.0\ncost = {{ kind = \"uniform01\" }}\n{block}\n"
    );
    Scenario::parse(&text, Format::Toml).unwrap();
}

#[test]
fn fit_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(&dir, "m.csv", &histogram(&[("g", 1, 5.0, 2.0)]));
    assert_eq!(qualdyn(&["fit", &missing]).status.code(), Some(1));
    let bad = write(&dir, "b.csv", "group,label,score,count\ng,1,0.0,-1\n");
    let o = qualdyn(&["fit", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn fit_resample_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "h.csv",
        &histogram(&[("g", 0, 2.0, 5.0), ("g", 1, 5.0, 2.0)]),
    );
    let a = qualdyn(&["fit", &path, "--resample", "20000", "--seed", "3"]);
    let b = qualdyn(&["fit", &path, "--resample", "20000", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_suites() {
    for suite in qualdyn_cli::verify::SUITES {
        let o = qualdyn(&["verify", suite]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{suite}:\n{}{}",
            stdout(&o),
            stderr(&o)
        );
        assert!(!stdout(&o).contains("FAIL"));
    }
    assert_eq!(qualdyn(&["verify", "nosuchsuite"]).status.code(), Some(1));
}

#[test]
fn scenarios_round_trip() {
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let original = Scenario::load(&path).unwrap();
        for format in [Format::Toml, Format::Json] {
            let text = original.to_text(format).unwrap();
            let again = Scenario::parse(&text, format).unwrap();
            assert_eq!(original, again, "{} via {format:?}", path.display());
        }
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    let mut reports = Vec::new();
    for i in 0..2 {
        let trace = dir.path().join(format!("t{i}.jsonl"));
        let o = qualdyn(&[
            "run",
            "--config",
            &scenario("bimodal_decoupling.toml"),
            "--init",
            "0.3",
            "--seed",
            "5",
            "--out",
            trace.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        traces.push(std::fs::read(&trace).unwrap());
        reports.push(o.stdout);
        let sweep = qualdyn(&[
            "sweep",
            "--config",
            &scenario("bimodal_decoupling.toml"),
            "--grid",
            "6",
            "--decoupled",
        ]);
        reports.push(sweep.stdout);
    }
    assert_eq!(traces[0], traces[1]);
    assert_eq!(reports[0], reports[2]);
    assert_eq!(reports[1], reports[3]);
}
