use fftasca::design::{encode, DesignSpec, Factor};
use fftasca::glm::{permutation_test, PermutationOptions};
use fftasca::io::{self, AnovaRecord, Chromatograms};
use fftasca::synth::{generate, SynthConfig};
use fftasca::Error;

fn table() -> fftasca::glm::AnovaTable {
    let a: Vec<usize> = (0..12).map(|i| i / 6).collect();
    let b: Vec<usize> = (0..12).map(|i| (i / 3) % 2).collect();
    let spec = DesignSpec::new(vec![Factor::from_codes("A", &a), Factor::from_codes("B", &b)], vec![(0, 1)]).unwrap();
    let x = fftasca::linalg::ComplexMatrix::from_fn(12, 7, |i, j| {
        num_complex::Complex64::new(((i * 31 + j * 17) % 11) as f64 + a[i] as f64, 0.0)
    });
    permutation_test(&x, &encode(&spec).unwrap(), &PermutationOptions::new(200, 4)).unwrap()
}

#[test]
fn anova_csv_round_trips_and_satisfies_invariants() {
    let t = table();
    let mut buf = Vec::new();
    io::write_anova_csv(&mut buf, &t).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("term,SumSq,PercSumSq,df,MeanSq,F,Pvalue\n"));
    let records = io::parse_anova_csv(buf.as_slice()).unwrap();
    io::check_anova(&records).unwrap();
    let expected: Vec<AnovaRecord> = t.rows.iter().map(AnovaRecord::from).collect();
    assert_eq!(records, expected);
    // Mean, Residuals and Total leave F and Pvalue blank.
    for line in text.lines().filter(|l| l.starts_with("Mean,") || l.starts_with("Residuals,") || l.starts_with("Total,")) {
        assert!(line.ends_with(",,"), "{line}");
    }
}

#[test]
fn tampered_table_is_caught() {
    let mut records: Vec<AnovaRecord> = table().rows.iter().map(AnovaRecord::from).collect();
    records[1].mean_sq *= 2.0;
    assert!(io::check_anova(&records).is_err());
}

#[test]
fn plain_text_table_is_aligned() {
    let text = io::format_anova_text(&table());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("term"));
    let width = lines[0].len();
    assert!(lines[1..].iter().filter(|l| l.starts_with('A')).all(|l| l.len() == width));
}

#[test]
fn dataset_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&SynthConfig {
        jitter_max: 10,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let chrom_path = dir.path().join("c.csv");
    let meta_path = dir.path().join("m.csv");
    io::write_chromatograms(io::create(&chrom_path).unwrap(), &Chromatograms::from_synth(&data)).unwrap();
    io::write_metadata(io::create(&meta_path).unwrap(), &data.sample_ids, &data.design).unwrap();
    let ds = io::load_dataset(&chrom_path, &meta_path).unwrap();
    assert_eq!(ds.ids, data.sample_ids);
    assert_eq!(ds.data, data.x_time);
    assert_eq!(ds.design.factors(), data.design.factors());
}

#[test]
fn missing_file_names_the_path() {
    let err = io::load_dataset("/nonexistent/c.csv", "/nonexistent/m.csv").unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(err.to_string().contains("/nonexistent/c.csv"));
}
