use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fftasca::io;

fn fftasca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fftasca")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small synthetic dataset into `dir` through the CLI itself.
fn dataset(dir: &Path, replicates: usize, effect: f64) -> (PathBuf, PathBuf) {
    let out = fftasca(&[
        "simulate",
        "--dataset",
        "0",
        "--acquisitions",
        "600",
        "--replicates",
        &replicates.to_string(),
        "--effect-size",
        &effect.to_string(),
        "--seed",
        "3",
        "--out-dir",
        s(dir),
        "--no-timestamp",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("chromatograms.csv"), dir.join("metadata.csv"))
}

fn analyze(data: &Path, meta: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "analyze",
        "--data",
        s(data),
        "--metadata",
        s(meta),
        "--out-dir",
        s(out),
        "--permutations",
        "200",
        "--seed",
        "9",
        "--no-timestamp",
    ];
    args.extend_from_slice(extra);
    fftasca(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_analyze_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, meta) = dataset(tmp.path(), 10, 20.0);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(analyze(&data, &meta, &a, &[]).status.success());
    assert!(analyze(&data, &meta, &b, &[]).status.success());
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert!(fa.iter().any(|(n, _)| n == "anova.csv"));
    assert!(fa.iter().any(|(n, _)| n.starts_with("scores_") && n.ends_with(".svg")));
    assert_eq!(fa, fb);
}

#[test]
fn time_and_frequency_domains_give_identical_p_values() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, meta) = dataset(tmp.path(), 5, 4.0);
    let mut tables = Vec::new();
    for domain in ["freq", "time"] {
        let out = tmp.path().join(domain);
        let run = analyze(&data, &meta, &out, &["--domain", domain]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        let records = io::parse_anova_csv(fs::File::open(out.join("anova.csv")).unwrap()).unwrap();
        io::check_anova(&records).unwrap();
        tables.push(records);
    }
    for (f, t) in tables[0].iter().zip(&tables[1]) {
        assert_eq!(f.term, t.term);
        assert_eq!(f.p_value, t.p_value);
        match (f.f, t.f) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9 * a.abs()),
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, meta) = dataset(tmp.path(), 3, 1.0);

    let missing = analyze(&tmp.path().join("nope.csv"), &meta, &tmp.path().join("o1"), &[]);
    assert_eq!(missing.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "id,0,1\nS001,1.0,abc\n").unwrap();
    assert_eq!(analyze(&bad, &meta, &tmp.path().join("o2"), &[]).status.code(), Some(3));

    let pcmr_freq = analyze(&data, &meta, &tmp.path().join("o3"), &["--pcmr", "--domain", "freq"]);
    assert_eq!(pcmr_freq.status.code(), Some(2));

    let bad_grid = fftasca(&["simulate", "--jitter-grid", "10:0:5", "--out-dir", s(&tmp.path().join("o4"))]);
    assert_eq!(bad_grid.status.code(), Some(2));
}

#[test]
fn simulate_writes_experiment_table_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fftasca(&[
        "simulate",
        "--jitter-grid",
        "0:25:50",
        "--trials",
        "3",
        "--permutations",
        "50",
        "--acquisitions",
        "2000",
        "--out-dir",
        s(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("experiment.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("jitter,trial,z_time,z_freq"));
    assert_eq!(lines.count(), 9);
    let svg = fs::read_to_string(tmp.path().join("experiment.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="series""#).count(), 2);
    assert!(fs::read_to_string(tmp.path().join("run.txt")).unwrap().contains("timestamp"));
}

#[test]
fn transform_round_trip_restores_chromatograms() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = dataset(tmp.path(), 3, 1.0);
    let spectra = tmp.path().join("spectra.csv");
    let back = tmp.path().join("back.csv");
    assert!(fftasca(&["transform", "--input", s(&data), "--output", s(&spectra)]).status.success());
    assert!(fftasca(&["transform", "--inverse", "--input", s(&spectra), "--output", s(&back)]).status.success());
    let (a, b) = (io::read_chromatograms(&data).unwrap(), io::read_chromatograms(&back).unwrap());
    assert_eq!(a.ids, b.ids);
    let scale = a.data.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.data.as_slice().iter().zip(b.data.as_slice()) {
        assert!((x - y).abs() <= 1e-10 * scale);
    }
}

#[test]
fn impute_replaces_zeros_with_cell_means() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("x.csv");
    let meta = tmp.path().join("m.csv");
    fs::write(&data, "id,0,1\nS1,2,5\nS2,0,7\nS3,4,6\nS4,10,1\nS5,12,0\nS6,14,3\n").unwrap();
    fs::write(&meta, "id,G\nS1,a\nS2,a\nS3,a\nS4,b\nS5,b\nS6,b\n").unwrap();
    let out = tmp.path().join("imputed.csv");
    let run = fftasca(&["impute", "--data", s(&data), "--metadata", s(&meta), "--output", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let imputed = io::read_chromatograms(&out).unwrap();
    assert_eq!(imputed.data[(1, 0)], 3.0);
    assert_eq!(imputed.data[(4, 1)], 2.0);
    assert_eq!(imputed.data[(0, 0)], 2.0);
}
