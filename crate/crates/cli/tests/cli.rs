use std::process::{Command, Output};

use morinflow::bounds::{ConfinementReport, RhoReport};
use morinflow::genericity::{RankCheck, VersalityReport};
use morinflow::jets::Reconstruction;
use morinflow::patterns::ClassifiedPattern;
use morinflow::sweep::Census;
use morinflow::{ModelSpec, OmegaPattern, StratumLabel};
use morinflow_cli::{DivisorReport, GenposReport, PatternList, PsiReport};
use serde::de::DeserializeOwned;
use serde::Serialize;

const P4: &str = r#"{"kind":"morin","s":4,"x":[0,0,-1],"variant":"PgeqEplus","n":3}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morinflow"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Parses the output as `T` and checks re-serialization is byte-identical.
fn round_trip<T: Serialize + DeserializeOwned>(text: &str) -> T {
    let v: T = serde_json::from_str(text).unwrap();
    assert_eq!(serde_json::to_string(&v).unwrap(), text.trim_end());
    v
}

#[test]
fn divisor_command() {
    let r: DivisorReport = round_trip(&ok(&["divisor", "--model", P4]));
    assert_eq!(r.pattern, OmegaPattern::new(vec![1, 2, 1]).unwrap());
    assert_eq!((r.m, r.m_reduced, r.mu), (4, 1, 3));
    let r: DivisorReport = round_trip(&ok(&["divisor", "--model", P4, "--mu", "floor"]));
    assert_eq!(r.mu, 1);
}

#[test]
fn pattern_commands() {
    let t: PatternList<OmegaPattern> =
        round_trip(&ok(&["patterns", "traversal", "--n", "2", "--singleton"]));
    assert_eq!(t.count, 6);
    let l: PatternList<OmegaPattern> = round_trip(&ok(&["patterns", "local", "--k", "3"]));
    assert_eq!(l.count, 5);
    let p: PatternList<ClassifiedPattern> = round_trip(&ok(&["patterns", "p4"]));
    assert_eq!(p.count, 11);
}

#[test]
fn vandermonde_command() {
    let text = ok(&[
        "vandermonde",
        "--alphas",
        "1,-1",
        "--mults",
        "2,2",
        "--d",
        "4",
    ]);
    assert_eq!(text, "{\"rank\":2,\"expected\":2,\"pass\":true}\n");
    let _: RankCheck = round_trip(&text);
    let csv = ok(&[
        "vandermonde",
        "--alphas",
        "1,-1",
        "--mults",
        "2,3",
        "--d",
        "4",
        "--csv",
    ]);
    assert_eq!(csv, "u^3,u^2,u^1,u^0\n1,1,1,1\n-1,1,-1,1\n3,-2,1,0\n");
}

#[test]
fn check_commands_report_pass() {
    let g: GenposReport = round_trip(&ok(&[
        "genpos",
        "--config",
        r#"{"n":3,"subspaces":[[[1,0,0]],[[0,1,0]]]}"#,
    ]));
    assert!(!g.pass);
    assert_eq!((g.intersection_dimension, g.expected), (0, 0));
    let model = r#"{"kind":"product","factors":[{"alpha":0,"j":2,"x":[0]},{"alpha":5,"j":2,"x":[0]}],"variant":"PgeqEplus","n":2}"#;
    let v: VersalityReport = round_trip(&ok(&["versality", "--model", model]));
    assert!(v.pass);
    let c: ConfinementReport = round_trip(&ok(&[
        "confine", "--k", "2", "--eps", "0.5", "--trials", "2000", "--seed", "3",
    ]));
    assert!(c.pass);
}

#[test]
fn realize_round_trips_through_divisor() {
    let spec = ok(&["realize", "--pattern", "(1,3)", "--local", "4"]);
    let m: ModelSpec = round_trip(&spec);
    let r: DivisorReport = serde_json::from_str(&ok(&["divisor", "--model", spec.trim()])).unwrap();
    assert_eq!(r.pattern.entries(), &[1, 3]);
    assert_eq!(m.degree(), 4);
    let spec = ok(&[
        "realize",
        "--pattern",
        "1,2,1",
        "--traversal",
        "2",
        "--variant",
        "PleqEminus",
    ]);
    let r: DivisorReport = serde_json::from_str(&ok(&["divisor", "--model", spec.trim()])).unwrap();
    assert_eq!(r.pattern.entries(), &[1, 2, 1]);
}

#[test]
fn strata_command() {
    let model = r#"{"kind":"morin","s":2,"x":[0],"variant":"PgeqEplus","n":1}"#;
    let l: StratumLabel = round_trip(&ok(&["strata", "--model", model, "--u", "0"]));
    assert_eq!(l.j, 2);
    let l: StratumLabel = round_trip(&ok(&["strata", "--model", model, "--u", "-1.5"]));
    assert_eq!(l.j, 0);
}

#[test]
fn seeded_commands_are_byte_stable() {
    let args = [
        "sweep", "--model", P4, "--radius", "0.01", "--count", "3000", "--seed", "11",
    ];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let c: Census = round_trip(&a);
    assert_eq!(c.total(), 3000);
    let csv = ok(&[&args[..], &["--csv"]].concat());
    assert!(csv.starts_with("pattern,count,frequency\n\""));
    assert_eq!(csv.lines().count(), c.counts.len() + 1);
    let r: RhoReport = round_trip(&ok(&[
        "rho",
        "--k",
        "3",
        "--samples",
        "5000",
        "--seed",
        "2",
    ]));
    assert_eq!(r.rho_hat, 3.0);
}

#[test]
fn psi_and_reconstruct() {
    let handles = r#"{"field":[{"nvars":2,"terms":[{"coef":1,"exp":[0,0]}]},{"nvars":2,"terms":[{"coef":1,"exp":[1,0]}]}],"z":{"nvars":2,"terms":[{"coef":1,"exp":[0,1]}]}}"#;
    let p: PsiReport = round_trip(&ok(&[
        "psi",
        "--handles",
        handles,
        "--point",
        "2,0",
        "--depth",
        "2",
    ]));
    assert_eq!(p.psi, vec![0.0, 2.0, 1.0]);
    let theta = r#"[{"nvars":2,"terms":[{"coef":1,"exp":[0,1]}]},{"nvars":2,"terms":[{"coef":1,"exp":[1,0]}]},{"nvars":2,"terms":[{"coef":1,"exp":[0,0]}]}]"#;
    let r: Reconstruction = round_trip(&ok(&[
        "reconstruct",
        "--theta",
        theta,
        "--grid",
        "2:2:1,5:5:1",
    ]));
    assert_eq!(r.samples[0].field, vec![1.0, 2.0]);
    let csv = ok(&[
        "reconstruct",
        "--theta",
        theta,
        "--grid",
        "0:1:2,0:1:2",
        "--csv",
    ]);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("x0,x1,v0,v1,residual\n"));
}

#[test]
fn degenerate_points_go_to_stderr() {
    let theta = r#"[{"nvars":2,"terms":[{"coef":1,"exp":[0,1]}]},{"nvars":2,"terms":[]},{"nvars":2,"terms":[]}]"#;
    let out = run(&["reconstruct", "--theta", theta, "--grid", "0:1:3,0:0:1"]);
    assert_eq!(out.status.code(), Some(0));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.matches("RankDeficient").count(), 3);
    let r: Reconstruction = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r.samples.is_empty());
    assert_eq!(r.degenerate.len(), 3);
}

#[test]
fn svg_output() {
    let dir = std::env::temp_dir().join(format!("morinflow-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p4.svg");
    ok(&["patterns", "p4", "--svg", path.to_str().unwrap()]);
    let svg = std::fs::read_to_string(&path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn exit_codes() {
    // Domain errors: exit 1 with the error name.
    for (args, name) in [
        (
            vec![
                "vandermonde",
                "--alphas",
                "1,1",
                "--mults",
                "1,1",
                "--d",
                "3",
            ],
            "InvalidSystem",
        ),
        (
            vec![
                "divisor",
                "--model",
                r#"{"kind":"morin","s":9,"x":[],"variant":"PgeqEplus","n":2}"#,
            ],
            "InvalidSpec",
        ),
        (
            vec!["realize", "--pattern", "(2)", "--local", "3"],
            "Unrealizable",
        ),
        (vec!["strata", "--model", P4, "--u", "0.5"], "NotOnBoundary"),
        (
            vec![
                "sweep",
                "--model",
                r#"{"kind":"product","factors":[{"alpha":0,"j":2,"x":[0]},{"alpha":0.1,"j":2,"x":[0]}],"variant":"PgeqEplus","n":2}"#,
                "--radius",
                "0.5",
                "--count",
                "10",
            ],
            "RadiusTooLarge",
        ),
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains(name),
            "{args:?}"
        );
        assert!(out.stdout.is_empty());
    }
    // Usage errors: exit 2.
    for args in [
        vec!["rho"],
        vec!["frobnicate"],
        vec!["vandermonde", "--alphas", "1", "--mults", "x", "--d", "3"],
        vec!["divisor", "--model", P4, "--csv"],
        vec!["rho", "--k", "2", "--svg", "/tmp/x.svg"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}
