use std::path::Path;
use std::process::{Command, Output};

fn iris(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iris"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("iris runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = iris(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn reduction_of(table: &str, row: &str) -> f64 {
    let line = table.lines().find(|l| l.starts_with(row)).unwrap();
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn budget_table_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(dir.path(), &["budget", "--wavelength-nm", "1000", "--thickness-um", "300"]);
    let r = reduction_of(&table, "combined");
    assert!((70.0..=150.0).contains(&r), "{table}");

    let table = ok(dir.path(), &["budget", "--thickness-um", "0"]);
    assert_eq!(reduction_of(&table, "transmission"), 1.0);

    let csv = ok(dir.path(), &["budget", "--wavelength-nm", "1070", "--sweep-thickness", "100:500:100"]);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let t: Vec<f64> = rows.iter().map(|r| r.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] < w[0]), "{csv}");
}

#[test]
fn bad_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["budget", "--wavelength-nm", "500"][..],
        &["budget", "--passes", "3"],
        &["budget", "--thickness-um", "-1"],
        &["budget", "--sweep-thickness", "5:1:1"],
        &["bits", "--pixels", "0"],
        &["frobnicate"],
    ] {
        assert_eq!(iris(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bits_table() {
    let dir = tempfile::tempdir().unwrap();
    let bits = |extra: &[&str]| -> u64 {
        let mut args = vec!["bits", "--json"];
        args.extend_from_slice(extra);
        let v: serde_json::Value = serde_json::from_str(&ok(dir.path(), &args)).unwrap();
        v["required_bits"].as_u64().unwrap()
    };
    let base = bits(&["--node", "28nm", "--um-per-px", "1.67", "--gates-per-bit", "4", "--pixels", "4"]);
    assert!((1..=8).contains(&base));
    assert!(bits(&["--um-per-px", "0.5"]) <= base);
    assert!(bits(&["--node", "7nm"]) >= base);
    assert!(bits(&["--area-scale", "0.25"]) >= base);

    let out = iris(dir.path(), &["bits", "--node", "3nm"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["55nm", "28nm", "7nm"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn help_names_units() {
    let dir = tempfile::tempdir().unwrap();
    let expectations: &[(&str, &[&str])] = &[
        ("budget", &["--wavelength-nm", "--thickness-um", "--base-exposure-s", "--sweep-thickness-um"]),
        ("render", &["--wavelength-nm", "--thickness-um", "--um-per-px", "--exposure-s", "--read-noise-dn"]),
        ("inject", &["--center-um", "--area-um2"]),
        ("capture", &["--tile-px", "--overlap-px", "--jitter-px"]),
        ("register", &["--radius-px"]),
        ("stitch", &["--overlap-px", "--radius-px"]),
        ("compare", &["--tile-px", "--min-area-um2"]),
        ("bits", &["--um-per-px"]),
        ("plan", &["--die-width-um", "--grid-pitch-um"]),
    ];
    for (cmd, flags) in expectations {
        let help = ok(dir.path(), &[cmd, "--help"]);
        for flag in *flags {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

/// One shared fixture: synth, two renders, a trojan, comparisons.
#[test]
fn image_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["plan", "--out", "plan.json"]);
    ok(d, &["synth", "--plan", "plan.json", "--seed", "4", "--out", "layout/"]);
    std::fs::write(d.join("optics.json"), r#"{ "noise": { "read_noise_sigma": 655.35, "shot_noise": false, "enabled": true } }"#).unwrap();
    ok(d, &["render", "--layout", "layout/", "--config", "optics.json", "--seed", "1", "--out", "a.pgm"]);
    ok(d, &["render", "--layout", "layout/", "--config", "optics.json", "--seed", "1", "--out", "a2.pgm"]);
    ok(d, &["render", "--layout", "layout/", "--config", "optics.json", "--seed", "2", "--out", "b.pgm"]);

    // metadata: um/px = die width / pixel count
    let side = json(&d.join("a.json"));
    let width = side["width"].as_f64().unwrap();
    let die = json(&d.join("layout/layout.json"))["die_size_um"][0].as_f64().unwrap();
    assert!((side["microns_per_pixel"].as_f64().unwrap() - die / width).abs() < 1e-12);

    // same seed, same bytes
    assert_eq!(std::fs::read(d.join("a.pgm")).unwrap(), std::fs::read(d.join("a2.pgm")).unwrap());

    // zero-area injection leaves the layout untouched
    ok(d, &["inject", "--layout", "layout/", "--center-um", "300,300", "--area-um2", "0", "--delta", "0.5", "--out", "same/"]);
    for f in ["layout.json", "reflectance.pgm"] {
        assert_eq!(std::fs::read(d.join("layout").join(f)).unwrap(), std::fs::read(d.join("same").join(f)).unwrap());
    }

    let out = ok(d, &["register", "--ref", "a.pgm", "--sample", "a.pgm", "--radius", "8"]);
    assert_eq!(out.trim(), "dx=0 dy=0 score=1.000");

    // identical files pass
    let out = iris(d, &["compare", "--ref", "a.pgm", "--sample", "a2.pgm", "--report", "same.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&d.join("same.json"))["confidence"].as_f64(), Some(1.0));

    // noise-only pair passes as well
    assert_eq!(iris(d, &["compare", "--ref", "a.pgm", "--sample", "b.pgm"]).status.code(), Some(0));

    // trojan fixture fails with one anomaly
    ok(d, &["inject", "--layout", "layout/", "--center-um", "250,200", "--area-um2", "25", "--delta", "-0.4", "--out", "trojan/"]);
    ok(d, &["render", "--layout", "trojan/", "--config", "optics.json", "--seed", "2", "--out", "t.pgm"]);
    let out = iris(
        d,
        &["compare", "--ref", "a.pgm", "--sample", "t.pgm", "--tile", "16", "--threshold", "0.85", "--min-area-um2", "9",
          "--report", "fail.json", "--heatmap", "fail.pgm"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&d.join("fail.json"));
    assert_eq!(report["anomalies"].as_array().unwrap().len(), 1);
    assert_eq!(report["verdict"], "fail");
    assert!(std::fs::read(d.join("fail.pgm")).unwrap().starts_with(b"P5"));

    // the same failure below the area floor is only worth a look
    let out = iris(d, &["compare", "--ref", "a.pgm", "--sample", "t.pgm", "--min-area-um2", "5000"]);
    assert_eq!(out.status.code(), Some(4));

    // manifests sit next to outputs and record the seed
    let m = json(&d.join("a.pgm.manifest.json"));
    assert_eq!(m["subcommand"], "render");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["params"]["resolved"]["noise"]["read_noise_sigma"], 655.35);
    assert!(d.join("layout.manifest.json").exists());
}

#[test]
fn capture_and_stitch() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "9", "--out", "layout"]);
    ok(d, &["capture", "--layout", "layout", "--seed", "5", "--out", "tiles"]);
    let index = json(&d.join("tiles/tiles.json"));
    assert_eq!(index["tiles"].as_array().unwrap().len(), 9);
    ok(d, &["stitch", "--tiles", "tiles", "--overlap", "32", "--out", "mosaic.pgm", "--report", "stitch.json"]);
    let report = json(&d.join("stitch.json"));
    let pairs = report["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 12);
    let tiles = index["tiles"].as_array().unwrap();
    let true_at = |pos: &serde_json::Value| -> (i64, i64) {
        let t = tiles.iter().find(|t| &t["grid_pos"] == pos).unwrap();
        (t["true_offset"][0].as_i64().unwrap(), t["true_offset"][1].as_i64().unwrap())
    };
    for p in pairs {
        let (a, b) = (true_at(&p["a"]), true_at(&p["b"]));
        let refined = (p["refined_delta"][0].as_i64().unwrap(), p["refined_delta"][1].as_i64().unwrap());
        assert_eq!(refined, (b.0 - a.0, b.1 - a.1));
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = iris(dir.path(), &["render", "--layout", "missing/", "--out", "x.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), "{ \"wavelength_nm\": 1070,").unwrap();
    let out = iris(dir.path(), &["synth", "--plan", "bad.json", "--out", "l"]);
    assert_eq!(out.status.code(), Some(1));
}
