use std::process::{Command, Output};

use clap::Parser;
use specloc::locus;
use specloc_cli::formats;
use specloc_cli::{run, Cli};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specloc"))
        .args(args)
        .env_remove("SPECLOC_RTOL")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Output of the library entry point, for round trips without a process.
fn lib(args: &[&str]) -> String {
    let mut full = vec!["specloc"];
    full.extend_from_slice(args);
    let cli = Cli::try_parse_from(&full).unwrap();
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    run(&cli, &owned).unwrap()
}

#[test]
fn harmonic_example() {
    let text = stdout(&["eig", "--family", "custom", "--potential", "z^2", "--rays", "0,pi", "--range", "0,8"]);
    assert!(text.starts_with("# specloc eig --family custom"));
    let recs = formats::parse_eig(&text).unwrap();
    let got: Vec<f64> = recs.iter().map(|r| r.lambda.re).collect();
    assert_eq!(got.len(), 4, "{got:?}");
    for (g, e) in got.iter().zip([1.0, 3.0, 5.0, 7.0]) {
        assert!((g - e).abs() < 1e-6, "{g} vs {e}");
    }
}

#[test]
fn qes_example() {
    let text = stdout(&["qes", "--n", "1", "--b", "1"]);
    let (q, pts) = formats::parse_qes(&text).unwrap();
    assert_eq!(q.degree(), Some(2));
    let mut lambdas: Vec<f64> = pts.iter().map(|(p, _)| p.lambda.re).collect();
    lambdas.sort_by(f64::total_cmp);
    assert!((lambdas[0] + 3.0).abs() < 1e-10 && (lambdas[1] - 1.0).abs() < 1e-10);
    for (p, e) in &pts {
        // p = z + 1 at λ = 1 and z - 1 at λ = -3.
        let root = if p.lambda.re > 0.0 { -1.0 } else { 1.0 };
        assert!((p.roots[0].re - root).abs() < 1e-10);
        assert!(e.all_small(1e-8));
    }
}

#[test]
fn crossings_table() {
    let text = stdout(&["crossings", "--j", "1", "--bmin", "-12", "--kmax", "5"]);
    let cs = formats::parse_crossings(&text).unwrap();
    assert_eq!(cs.len(), 5);
    for w in cs.windows(2) {
        assert!(w[1].b_k < w[0].b_k);
        assert!((w[1].ratio - 1.0).abs() < (w[0].ratio - 1.0).abs());
    }
}

#[test]
fn output_is_deterministic() {
    let args = ["eig", "--family", "cubic-pt", "--a", "1", "--range", "0,8"];
    assert_eq!(bin(&args).stdout, bin(&args).stdout);
}

#[test]
fn header_records_tolerances_and_env_rtol() {
    let out = Command::new(env!("CARGO_BIN_EXE_specloc"))
        .args(["det", "--family", "cubic-pt", "--a", "0", "--lambda", "1"])
        .env("SPECLOC_RTOL", "1e-9")
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    let rtol: f64 = first.split("rtol=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(rtol, 1e-9, "{first}");
}

#[test]
fn json_output() {
    let text = stdout(&["sectors", "--d", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["invocation"], "specloc sectors --d 3 --format json");
    assert!(v["tolerances"]["rtol"].is_string());
    assert_eq!(v["result"].as_array().unwrap().len(), 5);
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("specloc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sectors.csv");
    let p = path.to_str().unwrap();
    let out = bin(&["sectors", "--d", "2", "--out", p]);
    assert!(out.status.success() && out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(formats::parse_sectors(&text).unwrap().len(), 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn exit_codes() {
    // clap rejects a missing flag.
    assert_eq!(bin(&["qes", "--n", "1"]).status.code(), Some(1));
    // Validation error from the library.
    for (rays, name) in [("0,2pi/5", "AdjacentSectors"), ("0,pi", "RayNotRecessive")] {
        let out = bin(&["eig", "--family", "custom", "--potential", "z^3", "--rays", rays, "--range", "0,1"]);
        assert_eq!(out.status.code(), Some(1));
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], name);
    }
    // Numerical failure.
    let out = bin(&["eig", "--family", "quartic-ii", "--b", "1", "--j", "2", "--box=-4,2,-1,1", "--depth", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "SubdivisionLimit");
}

#[test]
fn round_trips() {
    let p = specloc::Problem::quartic_ii(1.0, 2.0).unwrap();
    let o = specloc::ShootOptions::default();
    let ev = specloc::spectrum::real_eigenvalues(&p, -10.0, 2.0, 480, &o).unwrap();
    let recs = specloc::spectrum::real_records(&p, &ev, &o).unwrap();
    assert_eq!(formats::parse_eig(&formats::eig_csv(&p.family, &recs)).unwrap(), recs);

    let text = lib(&["eig", "--family", "quartic-ii", "--b", "1", "--j", "2", "--box=-4,2,-1,1"]);
    let parsed = formats::parse_eig(&text).unwrap();
    assert_eq!(parsed.len(), 2);
    assert_eq!(formats::eig_csv(&p.family, &parsed), text.split_once('\n').unwrap().1);

    let text = lib(&["qes", "--n", "3", "--b", "-0.7"]);
    let (q, pts) = formats::parse_qes(&text).unwrap();
    assert_eq!(q, specloc::qes::spectral_poly(3, -0.7).q);
    let direct = specloc::qes::qes_points(3, -0.7).unwrap();
    assert_eq!(pts.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>(), direct);

    let text = lib(&["bethe", "--n", "2", "--b", "1.5", "--index", "1"]);
    let b = formats::parse_bethe(&text).unwrap();
    assert_eq!(formats::bethe_csv(&b), text.split_once('\n').unwrap().1);

    let text = lib(&["det", "--family", "cubic-pt", "--a", "2", "--lambda", "0.5"]);
    let d = formats::parse_det(&text).unwrap();
    assert!(d.f_real.is_some());
    assert_eq!(formats::det_csv(&d), text.split_once('\n').unwrap().1);

    let text = lib(&["trace", "--family", "cubic-pt", "--n", "0", "--step", "0.2", "--range", "-4,4"]);
    let traces = locus::from_csv(&text).unwrap();
    assert_eq!(traces.len(), 1);
    assert_eq!(locus::to_csv(&traces).unwrap(), text.split_once('\n').unwrap().1);

    let text = lib(&["reality", "--j", "2", "--b", "1", "--n", "3"]);
    let r = formats::parse_reality(&text).unwrap();
    assert_eq!(r.eigenvalues.len(), 3);
    assert_eq!(formats::reality_csv(&r), text.split_once('\n').unwrap().1);

    let text = lib(&["darboux", "--n", "0", "--b", "2", "--count", "2"]);
    let (d, c) = formats::parse_darboux(&text).unwrap();
    assert_eq!((d.clone(), c.clone()), (specloc::qes::darboux(0, 2.0).unwrap(), c.clone()));
    assert_eq!(formats::darboux_csv(&d, &c), text.split_once('\n').unwrap().1);
}
