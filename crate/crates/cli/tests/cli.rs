use std::path::Path;
use std::process::{Command, Output};

use phasefront_cli::builtin::{builtin, fold_member, names};
use phasefront_cli::scenario::{CheckKind, Model, Resolution, Scenario, SCENARIO_SCHEMA};
use proptest::prelude::*;
use serde_json::Value;

fn phasefront(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasefront"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(name).join("report.json")).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, json: &str) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn list_names_the_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasefront(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["zero", "constant", "base-lift", "figure1", "fold-family", "capacity-sweep", "torus-cliffwall", "duality-suite"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
    assert!(text.lines().count() >= 8);
    assert!(names().all(|n| builtin(n).is_some()));
}

#[test]
fn zero_scenario_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasefront(&["run", "zero"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path(), "zero");
    assert_eq!(r["schema"], "phasefront.report/1");
    assert_eq!(r["passed"], true);
    assert_eq!(r["tolerance"]["action_rel"], 1e-4);
    assert_eq!(r["resolution"]["grid"], 512);
    let s = &r["items"][0]["summary"];
    // only the transversality shift (at most 3.6e-9) moves the levels
    for key in ["rho_one", "rho_pt", "gamma"] {
        assert!(s[key].as_f64().unwrap().abs() <= s["perturbation_error"].as_f64().unwrap() + 1e-12, "{key}");
    }
    assert!(s["selector"]["max_abs_sigma"].as_f64().unwrap() < 1e-8);
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#"{"name": "det", "model": {"type": "fold-family", "count": 3}, "seed": 5, "checks": ["spectral", "selector"]}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(phasefront(&["run", &sc, "--jobs", "1"], &a).status.success());
    assert!(phasefront(&["run", &sc, "--jobs", "3"], &b).status.success());
    assert!(phasefront(&["run", &sc, "--jobs", "1", "--seed", "6"], &c).status.success());
    let read = |d: &Path| std::fs::read(d.join("det").join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(report(&c, "det")["seed"], 6);
}

#[test]
fn schema_violations_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"name": "x", "model": {"type": "fold-family", "count": 2}, "bogus": 1}"#,
        r#"{"schema": "phasefront.scenario/0", "name": "x", "model": {"type": "fold-family", "count": 2}}"#,
        r#"{"name": "x", "model": {"type": "torus-cliffwall", "eps": 0.05}, "checks": ["spectral"]}"#,
        r#"{"name": "x", "model": {"type": "fold-family", "count": 2}, "resolution": {"samples": 64}}"#,
        r#"{"name": "bad name", "model": {"type": "fold-family", "count": 2}}"#,
        r#"{"name": "x", "model": {"type": "hamiltonian", "hamiltonian": {"dim": 2}}}"#,
        "not json",
    ];
    for json in cases {
        let sc = write_scenario(dir.path(), json);
        let out = phasefront(&["run", &sc], dir.path());
        assert_eq!(out.status.code(), Some(2), "{json}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(phasefront(&["run", "no-such-scenario"], dir.path()).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_nonzero_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    // two triple points closer than one 64² cell
    let out = phasefront(&["run", "torus-cliffwall", "--resolution", "64"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path(), "torus-cliffwall");
    assert_eq!(r["passed"], false);
    assert_eq!(r["resolution"]["grid_2d"], 64);
    assert!(r["items"][0]["error"].as_str().unwrap().contains("resolution"));
}

#[test]
fn figure1_plot_marks_selector_caustics_and_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasefront(&["plot", "figure1"], dir.path());
    assert!(out.status.success());
    let root = dir.path().join("figure1");
    let svg = std::fs::read_to_string(root.join("figure1.front.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches(r#"stroke-width="3""#).count(), 1, "one bold selector");
    assert_eq!(svg.matches("<circle").count(), 2, "two caustics");
    assert_eq!(svg.matches("<rect x=").count() - 1, 1, "one Maxwell crossing");
    assert_eq!(svg.matches("<polygon").count(), 4, "four zero-section crossings");
    let csv = std::fs::read_to_string(root.join("figure1.selector.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("q,f,sigma,branch"));
    assert_eq!(csv.lines().count(), 513);
    // plot runs no checks
    assert_eq!(report(dir.path(), "figure1")["check_count"], 0);
}

#[test]
fn min_of_three_mesh_and_strata() {
    let dir = tempfile::tempdir().unwrap();
    assert!(phasefront(&["run", "min-of-three"], dir.path()).status.success());
    let root = dir.path().join("min-of-three");
    let off = std::fs::read_to_string(root.join("min-of-three.off")).unwrap();
    let mut lines = off.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("4OFF"));
    let counts: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), counts[0] + counts[1]);
    assert!(body[..counts[0]].iter().all(|l| l.split_whitespace().count() == 4));
    assert_eq!(body[counts[0]..].iter().filter(|l| l.ends_with("# simplex")).count(), 1);
    let strata = std::fs::read_to_string(root.join("min-of-three.strata.csv")).unwrap();
    assert_eq!(strata.lines().filter(|l| l.starts_with("triple,")).count(), 1);
    let svg = std::fs::read_to_string(root.join("min-of-three.strata.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
    let r = report(dir.path(), "min-of-three");
    assert_eq!(r["items"][0]["summary"]["simplices"], 1);
    assert_eq!(r["tolerance"]["conormal"], 1e-12);
}

#[test]
fn capacity_sweep_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(phasefront(&["run", "capacity-sweep"], dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("capacity-sweep").join("capacity.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("table,amplitude,osc_c0,gamma,bound,admissible"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("sweep,")).count(), 3);
}

#[test]
fn shipped_scenario_files_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(e.unwrap().path()).unwrap();
        Scenario::from_json(&text).unwrap();
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn fold_members_are_independent_streams() {
    assert_eq!(fold_member(3, 4, 0.05), fold_member(3, 4, 0.05));
    assert_ne!(fold_member(3, 4, 0.05), fold_member(3, 5, 0.05));
    assert_ne!(fold_member(3, 4, 0.05), fold_member(4, 4, 0.05));
}

fn model() -> impl Strategy<Value = Model> {
    prop_oneof![
        (1usize..100, 0.001f64..0.2).prop_map(|(count, partner)| Model::FoldFamily { count, partner }),
        (prop::collection::vec(0.001f64..0.2, 1..4), prop::collection::vec(1e-6f64..0.2, 0..6))
            .prop_map(|(amplitudes, decay)| Model::CapacitySweep { amplitudes, decay }),
        (-0.3f64..0.3).prop_map(|eps| Model::TorusCliffwall { eps }),
        (-0.9f64..0.9, -0.9f64..0.9).prop_map(|(x, y)| Model::MinOfThree { at: [x, y] }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn scenarios_round_trip_through_json(m in model(), seed in any::<u64>(), tol in 0.1f64..10.0, n in 256usize..2048) {
        let checks = m.supported_checks().iter().copied().take(2).collect::<Vec<CheckKind>>();
        let sc = Scenario {
            schema: SCENARIO_SCHEMA.into(),
            name: "prop".into(),
            model: m,
            resolution: Resolution { samples: n, steps: 256, grid: n, grid_2d: 64 },
            checks,
            seed,
            tol_scale: tol,
        };
        let text = serde_json::to_string(&sc).unwrap();
        prop_assert_eq!(Scenario::from_json(&text).unwrap(), sc);
    }
}
