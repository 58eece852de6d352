//! End-to-end runs of the `ssnb` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::RgbImage;
use tempfile::TempDir;

fn ssnb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssnb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ssnb(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn numbers(line: &str) -> Vec<f64> {
    line.split(',').map(|f| f.parse().unwrap()).collect()
}

#[test]
fn fit_then_eval_on_support_reproduces_the_fit() {
    let dir = TempDir::new().unwrap();
    let mu = write(
        &dir,
        "mu.csv",
        "weight,x1,x2\n0.25,0,0\n0.25,1,0\n0.25,0,1\n0.25,1,1\n",
    );
    let nu = write(&dir, "nu.csv", "weight,x1,x2\n0.5,0.5,0.2\n0.5,2.0,1.5\n");
    let pot = dir.path().join("pot.csv");
    ok(&[
        "fit",
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--ell",
        "0.2",
        "--L",
        "1.5",
        "--out",
        s(&pot),
    ]);
    let text = fs::read_to_string(&pot).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip_while(|l| !l.starts_with("i,"))
        .skip(1)
        .map(numbers)
        .collect();
    assert_eq!(rows.len(), 4);
    // i,cluster,weight,u,x1,x2,z1,z2
    let query = write(
        &dir,
        "q.csv",
        &format!(
            "x1,x2\n{}\n",
            rows.iter()
                .map(|r| format!("{:?},{:?}", r[4], r[5]))
                .collect::<Vec<_>>()
                .join("\n")
        ),
    );
    let out = ok(&["eval", "--potential", s(&pot), "--points", s(&query)]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("v,g1,g2,cluster"));
    for (line, r) in lines.zip(&rows) {
        let e = numbers(line);
        assert!((e[0] - r[3]).abs() < 1e-6, "v {} vs u {}", e[0], r[3]);
        assert!((e[1] - r[6]).abs() < 1e-6 && (e[2] - r[7]).abs() < 1e-6);
    }
}

#[test]
fn eval_with_wrong_dimension_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let mu = write(&dir, "mu.csv", "weight,x1,x2\n0.5,0,0\n0.5,1,0\n");
    let pot = dir.path().join("pot.csv");
    ok(&["fit", "--mu", s(&mu), "--nu", s(&mu), "--out", s(&pot)]);
    let query = write(&dir, "q.csv", "x1,x2,x3\n0,0,0\n");
    let out = ssnb(&["eval", "--potential", s(&pot), "--points", s(&query)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("dimension 3") && err.contains("dimension 2"),
        "{err}"
    );
}

#[test]
fn univariate_fit_uses_the_isotonic_map() {
    // targets 0 and 3 from knots 0 and 1: with slope at most 1 the best map
    // sends them to 1 and 2, costing ½(1² + 1²) = 1
    let dir = TempDir::new().unwrap();
    let mu = write(&dir, "mu.csv", "weight,x1\n0.5,0\n0.5,1\n");
    let nu = write(&dir, "nu.csv", "weight,x1\n0.5,3\n0.5,0\n");
    let out = ok(&[
        "fit",
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--ell",
        "0",
        "--L",
        "1",
    ]);
    let objective: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("# objective,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((objective - 1.0).abs() < 1e-9, "{objective}");
    assert!(out.lines().any(|l| l == "x,z,weight"));

    let pot = write(&dir, "map.csv", &out);
    let query = write(&dir, "q.csv", "x1\n0\n1\n2\n");
    let evals: Vec<Vec<f64>> = ok(&["eval", "--potential", s(&pot), "--points", s(&query)])
        .lines()
        .skip(1)
        .map(numbers)
        .collect();
    assert!((evals[0][1] - 1.0).abs() < 1e-9 && (evals[1][1] - 2.0).abs() < 1e-9);
    // v(1) − v(0) = ∫_0^1 (1 + t) dt, and the extension keeps slope 1
    assert!((evals[1][0] - evals[0][0] - 1.5).abs() < 1e-9);
    assert!((evals[2][1] - 3.0).abs() < 1e-9);

    let wide = ok(&[
        "fit",
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--ell",
        "0",
        "--L",
        "5",
    ]);
    let objective: f64 = wide
        .lines()
        .find_map(|l| l.strip_prefix("# objective,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(objective.abs() < 1e-9);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let mu = write(&dir, "mu.csv", "weight,x1\n0.5,0\n0.5,zero\n");
    let out = ssnb(&["fit", "--mu", s(&mu), "--nu", s(&mu)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bench1d_is_reproducible() {
    let args = [
        "bench1d", "--n", "10,50", "--L", "0.5,1.5", "--trials", "1", "--seed", "7",
    ];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "n,d,L,ell,K,seed,estimator_error,plugin_error,wall_time_s"
    );
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn semiball_is_reproducible_and_echoes_protocol() {
    let dir = TempDir::new().unwrap();
    let disp = dir.path().join("disp.csv");
    let args = [
        "semiball",
        "--n",
        "10",
        "--d",
        "2",
        "--seed",
        "3",
        "--displacements",
        s(&disp),
    ];
    let a = ok(&args);
    let first = fs::read_to_string(&disp).unwrap();
    assert_eq!(a, ok(&args));
    assert_eq!(first, fs::read_to_string(&disp).unwrap());
    assert!(a.contains("# K,0.4n = 4") && a.contains("# N,50"));
    assert!(first.starts_with("x1,x2,dx1,dx2\n"));
    assert_eq!(first.lines().count(), 51);
    let out = ssnb(&["semiball", "--d", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn color_transfer_keeps_image_geometry() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("src.png");
    let tgt = dir.path().join("tgt.png");
    let out = dir.path().join("out.png");
    RgbImage::from_fn(21, 13, |x, y| {
        image::Rgb([100 + x as u8, 110 + y as u8, 120])
    })
    .save(&src)
    .unwrap();
    RgbImage::from_fn(9, 17, |x, y| image::Rgb([10 * x as u8, 12 * y as u8, 60]))
        .save(&tgt)
        .unwrap();
    let stdout = ok(&[
        "color-transfer",
        "--source",
        s(&src),
        "--target",
        s(&tgt),
        "--ell",
        "0",
        "--L",
        "2",
        "--out",
        s(&out),
        "--palette",
        "8",
        "--recolor",
        "40",
    ]);
    let img = image::open(&out).unwrap();
    assert_eq!((img.width(), img.height()), (21, 13));
    assert_eq!(img.color(), image::ColorType::Rgb8);
    let w: f64 = stdout
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!(w.is_finite() && w >= 0.0);
    let bad = dir.path().join("bad.png");
    fs::write(&bad, b"not a png").unwrap();
    let out = ssnb(&[
        "color-transfer",
        "--source",
        s(&bad),
        "--target",
        s(&tgt),
        "--out",
        s(&out),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
