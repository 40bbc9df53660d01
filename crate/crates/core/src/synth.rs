//! Synthetic chromatograms with a designed effect and retention-time jitter.
//!
//! Every sample is a sum of Gaussian peaks plus white noise. A two-level
//! factor shifts the amplitudes of the significant peaks; the remaining peaks
//! vary at random and carry no design information.
//!
//! Amplitudes of the significant peaks are drawn from a correlated Gaussian
//! (rank-2 structure plus an isotropic part) whose mean moves between the two
//! levels along a fixed unit direction `w`. The size of that move is
//!
//! ```text
//! delta = effect_size * sqrt(w' S w) * sqrt(1/n1 + 1/n2)
//! ```
//!
//! with `S` the amplitude covariance, so a two-sample z-test on the projected
//! amplitudes `w' a` has expectation `effect_size`.
//!
//! Jitter moves each peak of each sample by a whole number of acquisitions
//! drawn uniformly from `0..=jitter_max`. Peak centres are spaced widely
//! enough that shifts never change their order, unless
//! [`PeakOrder::Shuffled`] is requested.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::design::{encode, DesignSpec, Factor};
use crate::error::{Error, Result};
use crate::glm::{permutation_test, PermutationOptions};
use crate::linalg::{ComplexMatrix, RealMatrix};
use crate::preprocess::Preprocessing;
use crate::spectral::transform_rows;

/// Largest jitter the generator accepts.
pub const MAX_JITTER: usize = 50;

/// How peak order behaves across samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakOrder {
    #[default]
    Preserved,
    /// Each sample places its peaks in a random order of the centre slots.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_acquisitions: usize,
    pub n_peaks: usize,
    pub n_significant: usize,
    /// Peak standard deviation in acquisitions; `4 sigma` spans one peak.
    pub peak_sigma: f64,
    pub jitter_max: usize,
    pub replicates_per_level: usize,
    /// Expected z of the designed effect, see the module docs.
    pub effect_size: f64,
    /// White noise standard deviation; `None` means 1% of the largest
    /// significant base amplitude.
    pub noise_sd: Option<f64>,
    /// Scale of the base amplitudes.
    pub amplitude: f64,
    /// Between-sample standard deviation of each amplitude.
    pub amplitude_sd: f64,
    pub peak_order: PeakOrder,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_acquisitions: 5000,
            n_peaks: 10,
            n_significant: 5,
            peak_sigma: 5.0,
            jitter_max: 0,
            replicates_per_level: 5,
            effect_size: 3.0,
            noise_sd: None,
            amplitude: 100.0,
            amplitude_sd: 10.0,
            peak_order: PeakOrder::Preserved,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        2 * self.replicates_per_level
    }

    /// Distance between neighbouring peak centres.
    pub fn spacing(&self) -> f64 {
        self.n_acquisitions as f64 / (self.n_peaks + 1) as f64
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_peaks == 0 {
            return fail("at least one peak is required".into());
        }
        if self.n_significant > self.n_peaks {
            return fail(format!(
                "{} significant peaks requested out of {}",
                self.n_significant, self.n_peaks
            ));
        }
        if self.jitter_max > MAX_JITTER {
            return fail(format!("jitter_max {} exceeds {MAX_JITTER}", self.jitter_max));
        }
        if self.replicates_per_level < 2 {
            return fail("at least two replicates per level are required".into());
        }
        if !(self.peak_sigma > 0.0) || !self.effect_size.is_finite() || self.effect_size < 0.0 {
            return fail("peak_sigma must be positive and effect_size non-negative".into());
        }
        if self.noise_sd.is_some_and(|s| !(s >= 0.0)) || !(self.amplitude_sd >= 0.0) {
            return fail("standard deviations must be non-negative".into());
        }
        let needed = 2.0 * (4.0 * self.peak_sigma + self.jitter_max as f64);
        if self.spacing() <= needed {
            return fail(format!(
                "peak spacing {:.1} must exceed 2(4 sigma + jitter_max) = {needed:.1}",
                self.spacing()
            ));
        }
        Ok(())
    }
}

/// Ground truth of one peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTruth {
    pub center: f64,
    pub sigma: f64,
    pub significant: bool,
    /// Expected amplitude at each level of the design factor.
    pub level_means: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub x_time: RealMatrix,
    pub design: DesignSpec,
    pub truth: Vec<PeakTruth>,
    /// Realised amplitude of each peak in each sample, `N x n_peaks`.
    pub amplitudes: Vec<Vec<f64>>,
    /// Shift of each peak in each sample, `N x n_peaks`.
    pub applied_jitter: Vec<Vec<usize>>,
    /// Centre slot each peak occupies in each sample (identity unless shuffled).
    pub slots: Vec<Vec<usize>>,
    pub sample_ids: Vec<String>,
}

impl SynthDataset {
    /// Jittered centre of `peak` in `sample`.
    pub fn position(&self, sample: usize, peak: usize) -> f64 {
        self.truth[self.slots[sample][peak]].center + self.applied_jitter[sample][peak] as f64
    }

    /// True when every sample keeps the peaks in their nominal order.
    pub fn order_preserved(&self) -> bool {
        (0..self.x_time.rows()).all(|i| {
            let pos: Vec<f64> = (0..self.truth.len()).map(|p| self.position(i, p)).collect();
            pos.windows(2).all(|w| w[0] < w[1])
        })
    }

    pub fn x_complex(&self) -> ComplexMatrix {
        self.x_time.to_complex()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws a dataset.
#[allow(clippy::needless_range_loop)]
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_samples();
    let m = config.n_acquisitions;
    let k = config.n_peaks;
    let spacing = config.spacing();
    let half_jitter = config.jitter_max as f64 / 2.0;

    // Dataset-level structure.
    let mut which: Vec<usize> = (0..k).collect();
    which.shuffle(&mut rng);
    let mut significant = vec![false; k];
    for &p in &which[..config.n_significant] {
        significant[p] = true;
    }
    let base: Vec<f64> = (0..k).map(|_| config.amplitude * rng.random_range(0.5..1.5)).collect();
    let sig_idx: Vec<usize> = (0..k).filter(|&p| significant[p]).collect();
    let s = sig_idx.len();

    let psi = 0.5 * config.amplitude_sd * config.amplitude_sd;
    let loadings: Vec<[f64; 2]> = (0..s)
        .map(|_| {
            let l = [normal(&mut rng), normal(&mut rng)];
            let norm = (l[0] * l[0] + l[1] * l[1]).sqrt().max(1e-12);
            let scale = psi.sqrt() / norm;
            [l[0] * scale, l[1] * scale]
        })
        .collect();
    let mut direction: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.0)).collect();
    let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    direction.iter_mut().for_each(|v| *v /= dn);
    // w' S w with S = L L' + psi I.
    let proj: [f64; 2] = [0, 1].map(|r| direction.iter().zip(&loadings).map(|(w, l)| w * l[r]).sum());
    let var_w = proj[0] * proj[0] + proj[1] * proj[1] + psi * direction.iter().map(|v| v * v).sum::<f64>();
    let reps = config.replicates_per_level as f64;
    let delta = config.effect_size * var_w.sqrt() * (2.0 / reps).sqrt();

    let noise_sd = config.noise_sd.unwrap_or_else(|| {
        0.01 * sig_idx.iter().map(|&p| base[p]).fold(0.0, f64::max).max(if s == 0 { config.amplitude } else { 0.0 })
    });

    let truth: Vec<PeakTruth> = (0..k)
        .map(|p| {
            let shift = sig_idx.iter().position(|&q| q == p).map_or(0.0, |i| delta * direction[i]);
            PeakTruth {
                center: spacing * (p + 1) as f64 - half_jitter,
                sigma: config.peak_sigma,
                significant: significant[p],
                level_means: [base[p] + shift / 2.0, base[p] - shift / 2.0],
            }
        })
        .collect();

    let levels: Vec<usize> = (0..n).map(|i| i / config.replicates_per_level).collect();
    let mut amplitudes = Vec::with_capacity(n);
    let mut applied_jitter = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    let mut x = RealMatrix::zeros(n, m);
    let window = (8.0 * config.peak_sigma).ceil() as i64;

    for i in 0..n {
        let z = [normal(&mut rng), normal(&mut rng)];
        let amp: Vec<f64> = (0..k)
            .map(|p| match sig_idx.iter().position(|&q| q == p) {
                Some(si) => {
                    let l = loadings[si];
                    truth[p].level_means[levels[i]] + l[0] * z[0] + l[1] * z[1] + psi.sqrt() * normal(&mut rng)
                }
                None => base[p] + config.amplitude_sd * normal(&mut rng),
            })
            .collect();

        let slot: Vec<usize> = match config.peak_order {
            PeakOrder::Preserved => (0..k).collect(),
            PeakOrder::Shuffled => {
                let mut s: Vec<usize> = (0..k).collect();
                s.shuffle(&mut rng);
                s
            }
        };
        // Resample until the jittered positions keep the slot order.
        let jitter = loop {
            let j: Vec<usize> = (0..k).map(|_| rng.random_range(0..=config.jitter_max)).collect();
            let mut pos: Vec<(usize, f64)> = (0..k).map(|p| (slot[p], truth[slot[p]].center + j[p] as f64)).collect();
            pos.sort_by_key(|&(s, _)| s);
            if pos.windows(2).all(|w| w[0].1 < w[1].1) {
                break j;
            }
        };

        let row = x.row_mut(i);
        for p in 0..k {
            let c = truth[slot[p]].center + jitter[p] as f64;
            let lo = (c as i64 - window).max(0) as usize;
            let hi = ((c as i64 + window).max(0) as usize).min(m - 1);
            let two_var = 2.0 * config.peak_sigma * config.peak_sigma;
            for (t, v) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = t as f64 - c;
                *v += amp[p] * (-d * d / two_var).exp();
            }
        }
        if noise_sd > 0.0 {
            row.iter_mut().for_each(|v| *v += noise_sd * normal(&mut rng));
        }
        amplitudes.push(amp);
        applied_jitter.push(jitter);
        slots.push(slot);
    }

    let names: Vec<&str> = levels.iter().map(|&l| if l == 0 { "A" } else { "B" }).collect();
    let design = DesignSpec::new(vec![Factor::from_labels("Group", &names)], vec![])?;
    Ok(SynthDataset {
        x_time: x,
        design,
        truth,
        amplitudes,
        applied_jitter,
        slots,
        sample_ids: (0..n).map(|i| format!("S{:03}", i + 1)).collect(),
    })
}

/// `z = Phi^-1(1 - p)` for `p` in `(0, 1]`.
pub fn p_to_z(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::DomainError(p));
    }
    // Phi^-1(1 - p) = -Phi^-1(p), which avoids forming 1 - p.
    Ok(-normal_quantile(p))
}

/// Normal quantile, Wichura's AS 241 (PPND16); relative accuracy about 1e-16.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// One trial of the time-versus-frequency comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterTrial {
    pub jitter: usize,
    pub trial: usize,
    pub p_time: f64,
    pub p_freq: f64,
    pub z_time: f64,
    pub z_freq: f64,
}

/// Settings for [`jitter_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub jitter_levels: Vec<usize>,
    pub trials: usize,
    pub permutations: usize,
    /// Applied to each domain's matrix just before the test.
    pub preprocessing: Preprocessing,
    /// Test `|X_k|` instead of the complex spectrum. This discards phase, so
    /// it is not the complex model; it exists to study shift invariance.
    pub magnitude_spectra: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            jitter_levels: (0..=MAX_JITTER).step_by(10).collect(),
            trials: 20,
            permutations: 200,
            preprocessing: Preprocessing::None,
            magnitude_spectra: false,
        }
    }
}

/// Seed of one trial, a pure function of `(master, jitter, trial)`.
pub fn trial_seed(master: u64, jitter: usize, trial: usize) -> u64 {
    let mut z = master ^ ((jitter as u64) << 32) ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_z(p: f64, permutations: usize) -> f64 {
    // p = 1 maps to -infinity; cap it at the mirror of the smallest p.
    let cap = 1.0 - 1.0 / (permutations + 1) as f64;
    p_to_z(p.min(cap)).expect("permutation p-values lie in (0, 1]")
}

/// Runs one trial: generate, then test the design factor on the raw rows and
/// on their spectra with the same permutation seed.
pub fn run_trial(base: &SynthConfig, jitter: usize, trial: usize, opts: &ExperimentOptions) -> Result<JitterTrial> {
    let seed = trial_seed(base.seed, jitter, trial);
    let config = SynthConfig {
        jitter_max: jitter,
        seed,
        ..base.clone()
    };
    let data = generate(&config)?;
    let design = encode(&data.design)?;
    let perm = PermutationOptions::new(opts.permutations, seed);
    let x = data.x_complex();
    let mut spectra = transform_rows(&x)?.into_matrix();
    if opts.magnitude_spectra {
        spectra = spectra.map(|z| Complex64::new(z.norm(), 0.0));
    }
    let time = permutation_test(&opts.preprocessing.apply(&x), &design, &perm)?;
    let freq = permutation_test(&opts.preprocessing.apply(&spectra), &design, &perm)?;
    let p_time = time.p_value("Group").expect("factor is tested");
    let p_freq = freq.p_value("Group").expect("factor is tested");
    Ok(JitterTrial {
        jitter,
        trial,
        p_time,
        p_freq,
        z_time: trial_z(p_time, time.permutations),
        z_freq: trial_z(p_freq, freq.permutations),
    })
}

/// Sweeps the jitter grid; trials run in parallel and come back in grid order.
pub fn jitter_experiment(base: &SynthConfig, opts: &ExperimentOptions) -> Result<Vec<JitterTrial>> {
    base.validate()?;
    for &j in &opts.jitter_levels {
        SynthConfig {
            jitter_max: j,
            ..base.clone()
        }
        .validate()?;
    }
    let jobs: Vec<(usize, usize)> = opts
        .jitter_levels
        .iter()
        .flat_map(|&j| (0..opts.trials).map(move |t| (j, t)))
        .collect();
    jobs.par_iter()
        .map(|&(j, t)| run_trial(base, j, t, opts))
        .collect()
}

/// Mean of a slice; `NaN` when empty.
pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-level averages of an experiment, `(jitter, mean z_time, mean z_freq)`.
pub fn summarize(trials: &[JitterTrial]) -> Vec<(usize, f64, f64)> {
    let mut levels: Vec<usize> = trials.iter().map(|t| t.jitter).collect();
    levels.dedup();
    levels
        .into_iter()
        .map(|j| {
            let zt: Vec<f64> = trials.iter().filter(|t| t.jitter == j).map(|t| t.z_time).collect();
            let zf: Vec<f64> = trials.iter().filter(|t| t.jitter == j).map(|t| t.z_freq).collect();
            (j, mean(&zt), mean(&zf))
        })
        .collect()
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<SynthDataset>();
    check::<Complex64>();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(jitter: usize) -> SynthConfig {
        SynthConfig {
            n_acquisitions: 1200,
            jitter_max: jitter,
            seed: 17,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn degenerate_config_gives_identical_rows() {
        let data = generate(&SynthConfig {
            effect_size: 0.0,
            noise_sd: Some(0.0),
            amplitude_sd: 0.0,
            ..small(0)
        })
        .unwrap();
        for i in 1..data.x_time.rows() {
            assert_eq!(data.x_time.row(i), data.x_time.row(0));
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { n_significant: 11, ..small(0) },
            SynthConfig { jitter_max: 51, ..small(0) },
            SynthConfig { n_acquisitions: 400, ..small(0) },
            SynthConfig { replicates_per_level: 1, ..small(0) },
            SynthConfig { peak_sigma: 0.0, ..small(0) },
            SynthConfig { noise_sd: Some(-1.0), ..small(0) },
        ];
        for c in bad {
            assert!(matches!(generate(&c), Err(Error::ConfigInvalid(_))), "{c:?}");
        }
    }

    #[test]
    fn jitter_stays_in_range_and_preserves_order() {
        for jitter in [0, 7, 50] {
            let data = generate(&SynthConfig { seed: jitter as u64, n_acquisitions: 2000, ..small(jitter) }).unwrap();
            assert!(data.applied_jitter.iter().flatten().all(|&j| j <= jitter));
            assert!(data.order_preserved());
        }
    }

    #[test]
    fn shuffled_order_is_reported() {
        let data = generate(&SynthConfig {
            peak_order: PeakOrder::Shuffled,
            ..small(5)
        })
        .unwrap();
        assert!(!data.order_preserved());
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate(&small(20)).unwrap();
        let b = generate(&small(20)).unwrap();
        assert_eq!(a.x_time, b.x_time);
        assert_eq!(a.applied_jitter, b.applied_jitter);
        let c = generate(&SynthConfig { seed: 18, ..small(20) }).unwrap();
        assert_ne!(a.x_time, c.x_time);
    }

    #[test]
    fn p_to_z_values() {
        assert_eq!(p_to_z(0.5).unwrap(), 0.0);
        assert!((p_to_z(0.0228).unwrap() - 2.0).abs() < 1e-3);
        assert!((p_to_z(1.0 / 1001.0).unwrap() - 3.09).abs() < 1e-2);
        assert!(matches!(p_to_z(0.0), Err(Error::DomainError(_))));
        assert!(matches!(p_to_z(1.5), Err(Error::DomainError(_))));
        assert!(p_to_z(1.0).unwrap().is_infinite());
    }

    #[test]
    fn trial_seeds_differ() {
        let a = trial_seed(1, 0, 0);
        assert_ne!(a, trial_seed(1, 0, 1));
        assert_ne!(a, trial_seed(1, 10, 0));
        assert_ne!(a, trial_seed(2, 0, 0));
        assert_eq!(a, trial_seed(1, 0, 0));
    }
}
