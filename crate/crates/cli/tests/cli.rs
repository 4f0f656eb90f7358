use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[domain]
radius = 1

[omega]
kind = constant
strength = 0.3

[connection]
kind = su2-gaussian
amplitude = 1
width = 0.5
center = 0.1, 0

[potential]
kind = gaussian
center = 0.1, 0.1
width = 0.3
coeff = 0, 1, 1, 0, 1, 0, 0, -1

[fan]
n_theta = 24
n_alpha = 12

[solver]
step = 0.02
cells = 12
probe_rays = 50
";

fn rayforge(dir: &Path, args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rayforge"));
    cmd.current_dir(dir).args(args);
    if let Some(t) = threads {
        cmd.env("RAYFORGE_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.ini"), SMALL).unwrap();
    dir
}

#[test]
fn xray_is_byte_identical_across_thread_counts() {
    let dir = setup();
    let d = dir.path();
    for (out, threads) in [("one.rsin", "1"), ("four.rsin", "4"), ("again.rsin", "4")] {
        let o = rayforge(d, &["xray", "--scene", "small.ini", "--out", out], Some(threads));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let one = std::fs::read(d.join("one.rsin")).unwrap();
    assert_eq!(one, std::fs::read(d.join("four.rsin")).unwrap());
    assert_eq!(one, std::fs::read(d.join("again.rsin")).unwrap());
    assert_eq!(&one[..4], b"RSIN");
}

#[test]
fn invert_round_trip_and_hash_mismatch() {
    let dir = setup();
    let d = dir.path();
    assert!(rayforge(d, &["xray", "--scene", "small.ini", "--out", "y.rsin"], None).status.success());
    let o = rayforge(d, &["invert", "--sinogram", "y.rsin", "--scene", "small.ini", "--iters", "30", "--out", "q.rayf", "--report", "r.csv"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["q.rayf", "q.rayf_00.pgm", "q.rayf_11.pgm", "r.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }
    assert!(std::fs::read(d.join("q.rayf_01.pgm")).unwrap().starts_with(b"P5\n12 12\n255\n"));
    let report = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(report.starts_with("iteration,objective\n"));

    // the reconstruction is itself a valid gridded potential
    let grid = SMALL.replace(
        "kind = gaussian\ncenter = 0.1, 0.1\nwidth = 0.3\ncoeff = 0, 1, 1, 0, 1, 0, 0, -1\n",
        "kind = grid\npath = q.rayf\n",
    );
    std::fs::write(d.join("grid.ini"), grid).unwrap();
    let o = rayforge(d, &["xray", "--scene", "grid.ini", "--out", "g.rsin"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = rayforge(d, &["invert", "--sinogram", "y.rsin", "--scene", "euclid-disk-b03", "--out", "x.rayf"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash-mismatch"));
}

#[test]
fn strong_field_scene_is_rejected() {
    let dir = setup();
    std::fs::write(dir.path().join("b2.ini"), "[omega]\nkind = constant\nstrength = 2\n").unwrap();
    let o = rayforge(dir.path(), &["xray", "--scene", "b2.ini", "--out", "z.rsin"], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("magnetic convex"));
    assert!(!dir.path().join("z.rsin").exists());
}

#[test]
fn input_errors_exit_two() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("typo.ini"), "[omega]\nkind = constant\nstrenth = 0.2\n").unwrap();
    let o = rayforge(d, &["xray", "--scene", "typo.ini", "--out", "z.rsin"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo.ini:3:1"));
    assert_eq!(rayforge(d, &["xray", "--scene", "missing.ini", "--out", "z.rsin"], None).status.code(), Some(2));
    assert_eq!(rayforge(d, &["xray", "--scene", "small.ini", "--out", "z.rsin"], Some("zero")).status.code(), Some(2));
    assert_eq!(rayforge(d, &["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn geodesic_and_reports() {
    let dir = setup();
    let d = dir.path();
    let o = rayforge(d, &["geodesic", "--scene", "small.ini", "--theta", "0.5", "--alpha", "-0.3"], None);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("s,x1,x2,v1,v2,t\n"));
    assert!(csv.lines().count() > 10);

    let o = rayforge(d, &["xray", "--scene", "euclid-disk-b0", "--step", "0.01", "--out", "f.rsin", "--csv", "f.csv"], None);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(d.join("f.csv")).unwrap().starts_with("j,k,theta,alpha,re,im\n"));

    let o = rayforge(d, &["beam-verify", "--count", "3", "--out", "beam.csv"], None);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(d.join("beam.csv")).unwrap().lines().count(), 4);

    let o = rayforge(d, &["verify-transport", "--scene", "small.ini", "--step", "0.005", "--cells", "5", "--dirs", "4"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));

    let o = rayforge(d, &["selftest", "--only", "1,6"], None);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.matches("PASS").count(), 2);
}
