use fftasca::design::encode;
use fftasca::glm::{permutation_test, PermutationOptions};
use fftasca::synth::{generate, p_to_z, SynthConfig, MAX_JITTER};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn noiseless_peak_areas_match_the_gaussian_integral() {
    let config = SynthConfig {
        noise_sd: Some(0.0),
        jitter_max: 20,
        seed: 4,
        ..SynthConfig::default()
    };
    let data = generate(&config).unwrap();
    let sigma = config.peak_sigma;
    for i in 0..data.x_time.rows() {
        let row = data.x_time.row(i);
        for p in 0..config.n_peaks {
            let c = data.position(i, p);
            let lo = (c - 8.0 * sigma).floor() as usize;
            let hi = (c + 8.0 * sigma).ceil() as usize;
            // Trapezoid rule on the unit acquisition grid.
            let area: f64 = (lo..hi).map(|t| 0.5 * (row[t] + row[t + 1])).sum();
            let expected = data.amplitudes[i][p] * sigma * (2.0 * std::f64::consts::PI).sqrt();
            assert!((area - expected).abs() < 0.01 * expected.abs(), "sample {i} peak {p}");
        }
    }
}

#[test]
fn large_effect_reaches_the_permutation_floor_in_time() {
    // Twenty samples: with ten, label swaps alone tie the nominal F often
    // enough to lift p above 1/1001.
    let data = generate(&SynthConfig {
        effect_size: 40.0,
        replicates_per_level: 10,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let table = permutation_test(&data.x_complex(), &encode(&data.design).unwrap(), &PermutationOptions::new(1000, 1)).unwrap();
    assert_eq!(table.p_value("Group").unwrap(), 1.0 / 1001.0);
}

#[test]
fn p_to_z_matches_the_normal_quantile() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut p = 1e-300;
    while p < 1.0 {
        let z = p_to_z(p).unwrap();
        // Compare in the tail that avoids forming 1 - p in the oracle.
        let oracle = -normal.inverse_cdf(p);
        assert!((z - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "p = {p}: {z} vs {oracle}");
        p *= 1.7;
    }
}

#[test]
fn identical_seed_gives_bitwise_identical_data() {
    let config = SynthConfig {
        jitter_max: 35,
        seed: 123,
        ..SynthConfig::default()
    };
    let a = generate(&config).unwrap();
    let b = generate(&config).unwrap();
    let bits = |d: &fftasca::synth::SynthDataset| d.x_time.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jitter_bounds_and_order_hold(jitter in 0usize..=MAX_JITTER, seed in 0u64..u64::MAX) {
        let data = generate(&SynthConfig { jitter_max: jitter, seed, n_acquisitions: 2500, ..SynthConfig::default() }).unwrap();
        prop_assert!(data.applied_jitter.iter().flatten().all(|&j| j <= jitter));
        prop_assert!(data.order_preserved());
        prop_assert_eq!(data.x_time.rows(), 10);
    }
}
