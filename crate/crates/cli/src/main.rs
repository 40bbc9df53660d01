use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use fftasca::asca::{fit_effect, loadings_to_time, real_scores};
use fftasca::design::{encode, Factor, Term};
use fftasca::glm::{
    fit, impute_cell_means, pcmr_permutation_test, permutation_test, zeros_to_missing, AnovaTable,
    PermutationOptions, RowKind, DEFAULT_PERMUTATIONS,
};
use fftasca::io::{self, Chromatograms};
use fftasca::linalg::{ComplexMatrix, RealMatrix};
use fftasca::preprocess::Preprocessing;
use fftasca::spectral::{inverse_rows, transform_rows, SpectrumMatrix};
use fftasca::svg::{emit_svg, PlotStyle, Series};
use fftasca::synth::{self, ExperimentOptions, PeakOrder, SynthConfig};
use fftasca::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "fftasca", version, about = "Frequency-domain ANOVA-simultaneous component analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Permutation ANOVA and component analysis of a designed experiment.
    Analyze(AnalyzeArgs),
    /// Generate synthetic data or run the jitter sensitivity experiment.
    Simulate(SimulateArgs),
    /// Fourier transform a chromatogram file, or invert a spectra file.
    Transform(TransformArgs),
    /// Preview cell-mean replacement of zeros in a peak table.
    Impute(ImputeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Freq,
    Time,
}

#[derive(Args)]
struct Common {
    /// Directory for output files.
    #[arg(long, default_value = "fftasca-out")]
    out_dir: PathBuf,
    /// Omit the timestamp line from run.txt.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Chromatogram (or peak table) CSV.
    #[arg(long)]
    data: PathBuf,
    /// Metadata CSV with one column per factor.
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, value_enum, default_value = "freq")]
    domain: Domain,
    /// Subtract column means before the model.
    #[arg(long, conflicts_with = "autoscale")]
    center: bool,
    /// Centre and scale columns to unit variance.
    #[arg(long)]
    autoscale: bool,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Zeros in the data are missing values (peak tables).
    #[arg(long)]
    peak_table: bool,
    /// Re-impute missing values inside every permutation. Implies --peak-table.
    #[arg(long)]
    pcmr: bool,
    /// Refit without interactions that were not significant.
    #[arg(long)]
    trim: bool,
    /// Components per significant term (default: enough for 95% of its sum of squares).
    #[arg(long)]
    components: Option<usize>,
    /// Interaction between two factors, as NAME:NAME. Repeatable.
    #[arg(long = "interactions", value_name = "A:B")]
    interactions: Vec<String>,
    /// Significance level for trimming and component analysis.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    /// Jitter levels as START:STEP:END.
    #[arg(long, default_value = "0:10:50")]
    jitter_grid: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 200)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().effect_size)]
    effect_size: f64,
    #[arg(long, default_value_t = SynthConfig::default().n_acquisitions)]
    acquisitions: usize,
    /// Samples per level of the two-level factor.
    #[arg(long, default_value_t = SynthConfig::default().replicates_per_level)]
    replicates: usize,
    /// Noise standard deviation (default: 1% of the largest significant amplitude).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Let jitter reorder peaks.
    #[arg(long)]
    shuffle_peaks: bool,
    /// Autoscale both domains before testing.
    #[arg(long)]
    autoscale: bool,
    /// Test magnitude spectra instead of complex spectra.
    #[arg(long)]
    magnitude: bool,
    /// Write one dataset with this jitter instead of running the experiment.
    #[arg(long, value_name = "JITTER")]
    dataset: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TransformArgs {
    /// Chromatogram CSV, or spectra CSV with --inverse.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    inverse: bool,
}

#[derive(Args)]
struct ImputeArgs {
    /// Peak table CSV; zeros are missing.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Parse => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Io => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let result = match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Transform(a) => transform(&a),
        Command::Impute(a) => impute(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("FFTASCA_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::ConfigInvalid(format!("FFTASCA_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(io::create(dir.join(name))?))
}

fn write_run_log(common: &Common, lines: &[String]) -> Result<()> {
    let mut w = create(&common.out_dir, "run.txt")?;
    if !common.no_timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        writeln!(w, "timestamp: {secs}")?;
    }
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_svg(dir: &Path, name: &str, series: &[Series], style: &PlotStyle) -> Result<()> {
    fs::write(dir.join(name), emit_svg(series, style)?)?;
    Ok(())
}

fn parse_interactions(specs: &[String]) -> Result<Vec<(String, String)>> {
    specs
        .iter()
        .map(|s| match s.split_once(':') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(Error::ConfigInvalid(format!("interaction '{s}' is not of the form A:B"))),
        })
        .collect()
}

fn file_stem(term: &str) -> String {
    term.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect()
}

fn run_test(
    x: &ComplexMatrix,
    mask: Option<&fftasca::glm::MissingMask>,
    spec: &fftasca::design::DesignSpec,
    opts: &PermutationOptions,
) -> Result<AnovaTable> {
    let design = encode(spec)?;
    match mask {
        Some(m) => pcmr_permutation_test(x, m, &design, opts),
        None => permutation_test(x, &design, opts),
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let pairs = parse_interactions(&args.interactions)?;
    let peak_table = args.peak_table || args.pcmr;
    if args.pcmr && matches!(args.domain, Domain::Freq) {
        return Err(Error::ConfigInvalid(
            "--pcmr works on peak tables; use --domain time".into(),
        ));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::ConfigInvalid("--alpha must lie in (0, 1)".into()));
    }
    let ds = io::join(io::read_chromatograms(&args.data)?, &io::read_metadata(&args.metadata)?, &pairs)?;
    fs::create_dir_all(&args.common.out_dir)?;
    let out = &args.common.out_dir;
    let n = ds.data.rows();
    let m = ds.data.cols();
    info!("{n} samples x {m} columns");

    let (raw, mask) = if peak_table {
        let (x, mask) = zeros_to_missing(&ds.data);
        info!("{} missing values", mask.count());
        (x.to_complex(), Some(mask))
    } else {
        (ds.x(), None)
    };
    let mut x = match args.domain {
        Domain::Freq => transform_rows(&raw)?.into_matrix(),
        Domain::Time => raw,
    };
    let preprocessing = if args.autoscale {
        Preprocessing::Autoscale
    } else if args.center {
        Preprocessing::Center
    } else {
        Preprocessing::None
    };
    if mask.is_some() && preprocessing != Preprocessing::None {
        warn!("column statistics include the missing entries' placeholder zeros");
    }
    x = preprocessing.apply(&x);

    let opts = PermutationOptions::new(args.permutations, args.seed);
    let mut spec = ds.design.clone();
    let mut table = run_test(&x, if args.pcmr { mask.as_ref() } else { None }, &spec, &opts)?;
    let mut log = vec![
        format!("samples: {n}"),
        format!("columns: {m}"),
        format!("domain: {}", if matches!(args.domain, Domain::Freq) { "freq" } else { "time" }),
        format!("preprocessing: {preprocessing:?}"),
        format!("permutations: {} (exhaustive: {})", table.permutations, table.exhaustive),
        format!("seed: {}", args.seed),
    ];
    io::write_anova_csv(create(out, "anova.csv")?, &table)?;

    if args.trim && !spec.interactions().is_empty() {
        let keep: Vec<(usize, usize)> = spec
            .interactions()
            .iter()
            .enumerate()
            .filter(|&(k, _)| {
                table
                    .effect_rows()
                    .find(|r| r.kind == RowKind::Effect(interaction_term(&spec, k)))
                    .and_then(|r| r.p_value)
                    .is_some_and(|p| p < args.alpha)
            })
            .map(|(_, &pair)| pair)
            .collect();
        let dropped = spec.interactions().len() - keep.len();
        log.push(format!("trimmed interactions: {dropped}"));
        spec = spec.with_interactions(keep)?;
        table = run_test(&x, if args.pcmr { mask.as_ref() } else { None }, &spec, &opts)?;
        io::write_anova_csv(create(out, "anova_trimmed.csv")?, &table)?;
    }

    let text = io::format_anova_text(&table);
    print!("{text}");
    fs::write(out.join("anova.txt"), &text)?;
    for w in &table.warnings {
        warn!("{w}");
        log.push(format!("warning: {w}"));
    }

    // Component analysis of each significant term on the (imputed) matrix.
    let design = encode(&spec)?;
    let x_fit = match (&mask, peak_table) {
        (Some(mask), true) => impute_cell_means(&x, mask, design.cells())?.matrix,
        _ => x.clone(),
    };
    let decomp = fit(&x_fit, &design)?;
    for term in table.significant(args.alpha) {
        let name = design.block(term).map(|b| b.name.clone()).unwrap_or_else(|| term.to_string());
        let stem = file_stem(&name);
        let max_rank = design.dof(term).unwrap_or(1);
        let model = fit_effect(&decomp, term, args.components.map(|r| r.min(max_rank.max(1))))?;
        let r = model.components();
        let scores = real_scores(&model);
        io::write_labelled(create(out, &format!("scores_{stem}.csv"))?, &io::component_header("id", r), &ds.ids, &scores.scores)?;
        // One row per axis position, one column per component.
        let loadings = match args.domain {
            Domain::Freq => io::transpose_real(&loadings_to_time(&model, m)?.series),
            Domain::Time => model.loadings.re(),
        };
        io::write_labelled(
            create(out, &format!("loadings_{stem}.csv"))?,
            &io::component_header("axis", r),
            &ds.axis,
            &loadings,
        )?;
        log.push(format!(
            "{name}: {r} components, explained {:?}%",
            model.explained_percent().iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
        ));
        plot_scores(out, &stem, &name, &scores.scores, factor_for(&spec, term))?;
        let series: Vec<Series> = (0..r)
            .map(|k| Series::line(format!("PC{}", k + 1), loadings.column(k)))
            .collect();
        write_svg(
            out,
            &format!("loadings_{stem}.svg"),
            &series,
            &PlotStyle {
                title: format!("{name} loadings"),
                x_label: "acquisition".into(),
                y_label: "loading".into(),
                ..PlotStyle::default()
            },
        )?;
    }
    write_run_log(&args.common, &log)
}

fn interaction_term(spec: &fftasca::design::DesignSpec, k: usize) -> Term {
    let (a, b) = spec.interactions()[k];
    Term::Interaction(a, b)
}

fn factor_for(spec: &fftasca::design::DesignSpec, term: Term) -> Option<&Factor> {
    match term {
        Term::Factor(i) | Term::Interaction(i, _) => spec.factors().get(i),
        Term::Mean => None,
    }
}

fn plot_scores(out: &Path, stem: &str, name: &str, scores: &RealMatrix, factor: Option<&Factor>) -> Result<()> {
    let second = |i: usize| if scores.cols() > 1 { scores.row(i)[1] } else { 0.0 };
    let series: Vec<Series> = match factor {
        Some(f) => f
            .level_names()
            .iter()
            .enumerate()
            .map(|(level, label)| {
                let pts = (0..scores.rows())
                    .filter(|&i| f.codes()[i] == level)
                    .map(|i| (scores.row(i)[0], second(i)))
                    .collect();
                Series::scatter(label.clone(), pts)
            })
            .collect(),
        None => vec![Series::scatter(name, (0..scores.rows()).map(|i| (scores.row(i)[0], second(i))).collect())],
    };
    write_svg(
        out,
        &format!("scores_{stem}.svg"),
        &series,
        &PlotStyle {
            title: format!("{name} scores"),
            x_label: "PC1".into(),
            y_label: "PC2".into(),
            ..PlotStyle::default()
        },
    )
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::ConfigInvalid(format!("jitter grid '{s}' is not START:STEP:END"));
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [single] => Ok(vec![*single]),
        [start, step, end] if *step > 0 && start <= end => Ok((*start..=*end).step_by(*step).collect()),
        _ => Err(bad()),
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let base = SynthConfig {
        n_acquisitions: args.acquisitions,
        effect_size: args.effect_size,
        replicates_per_level: args.replicates,
        noise_sd: args.noise_sd,
        seed: args.seed,
        peak_order: if args.shuffle_peaks { PeakOrder::Shuffled } else { PeakOrder::Preserved },
        ..SynthConfig::default()
    };
    fs::create_dir_all(&args.common.out_dir)?;
    let out = &args.common.out_dir;
    let mut log = vec![format!("seed: {}", args.seed), format!("effect_size: {}", args.effect_size)];

    if let Some(jitter) = args.dataset {
        let data = synth::generate(&SynthConfig {
            jitter_max: jitter,
            ..base
        })?;
        io::write_chromatograms(create(out, "chromatograms.csv")?, &Chromatograms::from_synth(&data))?;
        io::write_metadata(create(out, "metadata.csv")?, &data.sample_ids, &data.design)?;
        let mut truth = create(out, "truth.csv")?;
        writeln!(truth, "peak,center,sigma,significant,mean_A,mean_B")?;
        for (p, t) in data.truth.iter().enumerate() {
            writeln!(
                truth,
                "{p},{},{},{},{},{}",
                io::fmt_f64(t.center),
                io::fmt_f64(t.sigma),
                t.significant,
                io::fmt_f64(t.level_means[0]),
                io::fmt_f64(t.level_means[1])
            )?;
        }
        truth.flush()?;
        log.push(format!("dataset jitter: {jitter}"));
        println!("wrote {} samples x {} acquisitions", data.x_time.rows(), data.x_time.cols());
        return write_run_log(&args.common, &log);
    }

    let opts = ExperimentOptions {
        jitter_levels: parse_grid(&args.jitter_grid)?,
        trials: args.trials,
        permutations: args.permutations,
        preprocessing: if args.autoscale { Preprocessing::Autoscale } else { Preprocessing::None },
        magnitude_spectra: args.magnitude,
    };
    if opts.trials == 0 {
        return Err(Error::ConfigInvalid("--trials must be positive".into()));
    }
    let trials = synth::jitter_experiment(&base, &opts)?;
    io::write_experiment(create(out, "experiment.csv")?, &trials)?;
    let summary = synth::summarize(&trials);
    println!("jitter  mean_z_time  mean_z_freq");
    for (j, zt, zf) in &summary {
        println!("{j:>6}  {zt:>11.4}  {zf:>11.4}");
    }
    let x: Vec<f64> = summary.iter().map(|s| s.0 as f64).collect();
    write_svg(
        out,
        "experiment.svg",
        &[
            Series::line_xy("time", x.clone(), summary.iter().map(|s| s.1).collect()),
            Series::line_xy("frequency", x, summary.iter().map(|s| s.2).collect()),
        ],
        &PlotStyle {
            title: "Mean z by jitter".into(),
            x_label: "jitter (acquisitions)".into(),
            y_label: "z".into(),
            ..PlotStyle::default()
        },
    )?;
    log.push(format!("jitter grid: {:?}", opts.jitter_levels));
    log.push(format!("trials: {}", opts.trials));
    log.push(format!("permutations: {}", opts.permutations));
    write_run_log(&args.common, &log)
}

fn transform(args: &TransformArgs) -> Result<()> {
    let sink = BufWriter::new(io::create(&args.output)?);
    if args.inverse {
        let (ids, spectra) = io::parse_spectra(io::open(&args.input)?)?;
        let time = inverse_rows(&SpectrumMatrix::new(spectra)?)?;
        let residue = time.max_abs_imag();
        if residue > 1e-8 * time.max_abs().max(f64::MIN_POSITIVE) {
            warn!("inverse has imaginary part up to {residue:e}; writing the real part");
        }
        let axis = (0..time.cols()).map(|t| t.to_string()).collect();
        io::write_chromatograms(sink, &Chromatograms { ids, axis, data: time.re() })
    } else {
        let chrom = io::read_chromatograms(&args.input)?;
        let spectra = transform_rows(&chrom.data.to_complex())?;
        io::write_spectra(sink, &chrom.ids, spectra.matrix())
    }
}

fn impute(args: &ImputeArgs) -> Result<()> {
    let ds = io::join(io::read_chromatograms(&args.data)?, &io::read_metadata(&args.metadata)?, &[])?;
    let (x, mask) = zeros_to_missing(&ds.data);
    let design = encode(&ds.design)?;
    let imputed = impute_cell_means(&x.to_complex(), &mask, design.cells())?;
    for (variable, cell) in &imputed.empty_cells {
        warn!("column {variable}: cell {cell} has no observed value; used the column mean");
    }
    println!("{} of {} values imputed", mask.count(), ds.data.as_slice().len());
    io::write_chromatograms(
        BufWriter::new(io::create(&args.output)?),
        &Chromatograms {
            ids: ds.ids,
            axis: ds.axis,
            data: imputed.matrix.re(),
        },
    )
}
