//! CSV ingestion and serialization.
//!
//! Every file is comma-separated UTF-8 with one header row. Floating-point
//! values are written with 17 significant digits, which round-trips every
//! `f64` exactly.
//!
//! * Chromatograms: `id,<axis labels...>`, one sample per row.
//! * Metadata: `id,<factor names...>`, categorical labels.
//! * Spectra: `id,re_0,im_0,re_1,im_1,...`.
//! * ANOVA tables: `term,SumSq,PercSumSq,df,MeanSq,F,Pvalue`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::design::{DesignSpec, Factor};
use crate::error::{Error, Result};
use crate::glm::{AnovaRow, AnovaTable};
use crate::linalg::{ComplexMatrix, RealMatrix};
use crate::synth::{JitterTrial, SynthDataset};

/// Column names of a serialized ANOVA table, in order.
pub const ANOVA_COLUMNS: [&str; 7] = ["term", "SumSq", "PercSumSq", "df", "MeanSq", "F", "Pvalue"];

/// Formats `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Opens `path`, naming it in the error.
pub fn open(path: impl AsRef<Path>) -> Result<File> {
    let path = path.as_ref();
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Creates `path`, naming it in the error.
pub fn create(path: impl AsRef<Path>) -> Result<File> {
    let path = path.as_ref();
    File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(source)
}

fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(sink)
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Header plus rows of a CSV file, with 1-based line numbers.
struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(source: R) -> Result<Table> {
    let mut records = reader(source).into_records();
    let header = match records.next() {
        Some(r) => r?.iter().map(|s| s.trim().to_string()).collect(),
        None => return Err(parse_error(1, 1, "file is empty")),
    };
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push((line, record.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Table { header, rows })
}

fn check_unique_ids(rows: &[(usize, Vec<String>)]) -> Result<()> {
    let mut seen = HashMap::new();
    for (line, fields) in rows {
        if let Some(first) = seen.insert(fields[0].as_str(), *line) {
            return Err(parse_error(*line, 1, format!("duplicate id '{}' (first on line {first})", fields[0])));
        }
    }
    Ok(())
}

/// Sample signals keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromatograms {
    pub ids: Vec<String>,
    /// Header labels of the signal columns (acquisition indices or times).
    pub axis: Vec<String>,
    pub data: RealMatrix,
}

pub fn parse_chromatograms<R: Read>(source: R) -> Result<Chromatograms> {
    let table = read_table(source)?;
    let m = table.header.len().saturating_sub(1);
    if m == 0 {
        return Err(parse_error(1, 2, "no signal columns"));
    }
    let mut values = Vec::with_capacity(table.rows.len() * m);
    for (row, (line, fields)) in table.rows.iter().enumerate() {
        if fields.len() != m + 1 {
            return Err(Error::RaggedRows {
                row,
                expected: m + 1,
                found: fields.len(),
            });
        }
        for (col, f) in fields.iter().enumerate().skip(1) {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_error(*line, col + 1, format!("'{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(*line, col + 1, "value is not finite"));
            }
            values.push(v);
        }
    }
    if table.rows.is_empty() {
        return Err(parse_error(2, 1, "no samples"));
    }
    check_unique_ids(&table.rows)?;
    Ok(Chromatograms {
        ids: table.rows.iter().map(|(_, f)| f[0].clone()).collect(),
        axis: table.header[1..].to_vec(),
        data: RealMatrix::new(table.rows.len(), m, values)?,
    })
}

pub fn read_chromatograms(path: impl AsRef<Path>) -> Result<Chromatograms> {
    parse_chromatograms(open(path)?)
}

pub fn write_chromatograms<W: Write>(sink: W, chrom: &Chromatograms) -> Result<()> {
    let mut w = writer(sink);
    w.write_record(std::iter::once("id").chain(chrom.axis.iter().map(String::as_str)))?;
    for (i, id) in chrom.ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(chrom.data.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Factor labels keyed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub ids: Vec<String>,
    pub factor_names: Vec<String>,
    /// `labels[i][f]` is sample `i`'s level of factor `f`.
    pub labels: Vec<Vec<String>>,
}

pub fn parse_metadata<R: Read>(source: R) -> Result<Metadata> {
    let table = read_table(source)?;
    let k = table.header.len().saturating_sub(1);
    if k == 0 {
        return Err(parse_error(1, 2, "no factor columns"));
    }
    for (row, (line, fields)) in table.rows.iter().enumerate() {
        if fields.len() != k + 1 {
            return Err(Error::RaggedRows {
                row,
                expected: k + 1,
                found: fields.len(),
            });
        }
        if let Some(col) = fields.iter().position(|f| f.is_empty()) {
            return Err(parse_error(*line, col + 1, "empty cell"));
        }
    }
    check_unique_ids(&table.rows)?;
    Ok(Metadata {
        ids: table.rows.iter().map(|(_, f)| f[0].clone()).collect(),
        factor_names: table.header[1..].to_vec(),
        labels: table.rows.into_iter().map(|(_, f)| f[1..].to_vec()).collect(),
    })
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<Metadata> {
    parse_metadata(open(path)?)
}

pub fn write_metadata<W: Write>(sink: W, ids: &[String], spec: &DesignSpec) -> Result<()> {
    let mut w = writer(sink);
    w.write_record(std::iter::once("id").chain(spec.factors().iter().map(Factor::name)))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(spec.factors().iter().map(|f| f.level_names()[f.codes()[i]].clone()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Signals joined with their design, rows in chromatogram order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub axis: Vec<String>,
    pub data: RealMatrix,
    pub design: DesignSpec,
}

impl Dataset {
    /// The signals embedded as complex values with zero imaginary part.
    pub fn x(&self) -> ComplexMatrix {
        self.data.to_complex()
    }
}

/// Joins signals and metadata on the id column.
///
/// The two files must list exactly the same ids; the error names every id
/// found in only one of them.
pub fn join(chrom: Chromatograms, meta: &Metadata, interactions: &[(String, String)]) -> Result<Dataset> {
    let a: BTreeSet<&str> = chrom.ids.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = meta.ids.iter().map(String::as_str).collect();
    let offenders: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if !offenders.is_empty() {
        return Err(Error::IdMismatch(offenders));
    }
    let index: HashMap<&str, usize> = meta.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let order: Vec<usize> = chrom.ids.iter().map(|id| index[id.as_str()]).collect();
    let factors = meta
        .factor_names
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let labels: Vec<&str> = order.iter().map(|&i| meta.labels[i][f].as_str()).collect();
            Factor::from_labels(name.clone(), &labels)
        })
        .collect();
    let lookup = |name: &str| {
        meta.factor_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownTerm(name.to_string()))
    };
    let pairs = interactions
        .iter()
        .map(|(x, y)| Ok((lookup(x)?, lookup(y)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        ids: chrom.ids,
        axis: chrom.axis,
        data: chrom.data,
        design: DesignSpec::new(factors, pairs)?,
    })
}

/// Reads and joins a chromatogram file and a metadata file.
pub fn load_dataset(chromatograms: impl AsRef<Path>, metadata: impl AsRef<Path>) -> Result<Dataset> {
    join(read_chromatograms(chromatograms)?, &read_metadata(metadata)?, &[])
}

impl Chromatograms {
    /// The signals of a synthetic dataset, with acquisition indices as the axis.
    pub fn from_synth(data: &SynthDataset) -> Self {
        Self {
            ids: data.sample_ids.clone(),
            axis: (0..data.x_time.cols()).map(|t| t.to_string()).collect(),
            data: data.x_time.clone(),
        }
    }
}

/// Writes a jitter experiment as `jitter,trial,z_time,z_freq`.
pub fn write_experiment<W: Write>(sink: W, trials: &[JitterTrial]) -> Result<()> {
    let mut w = writer(sink);
    w.write_record(["jitter", "trial", "z_time", "z_freq"])?;
    for t in trials {
        w.write_record([t.jitter.to_string(), t.trial.to_string(), fmt_f64(t.z_time), fmt_f64(t.z_freq)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes spectra as interleaved real and imaginary columns.
pub fn write_spectra<W: Write>(sink: W, ids: &[String], spectra: &ComplexMatrix) -> Result<()> {
    let mut w = writer(sink);
    let mut header = vec!["id".to_string()];
    for k in 0..spectra.cols() {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        for z in spectra.row(i) {
            rec.push(fmt_f64(z.re));
            rec.push(fmt_f64(z.im));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_spectra<R: Read>(source: R) -> Result<(Vec<String>, ComplexMatrix)> {
    let chrom = parse_chromatograms(source)?;
    let width = chrom.data.cols();
    if width % 2 != 0 {
        return Err(parse_error(1, width + 1, "spectra need paired re/im columns"));
    }
    let data = chrom
        .data
        .as_slice()
        .chunks(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    Ok((chrom.ids, ComplexMatrix::new(chrom.data.rows(), width / 2, data)?))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_anova_csv<W: Write>(sink: W, table: &AnovaTable) -> Result<()> {
    let mut w = writer(sink);
    w.write_record(ANOVA_COLUMNS)?;
    for r in &table.rows {
        w.write_record([
            r.term.clone(),
            fmt_f64(r.sum_sq),
            fmt_f64(r.perc_sum_sq),
            r.df.to_string(),
            fmt_f64(r.mean_sq),
            opt(r.f),
            opt(r.p_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text rendering, for terminals and logs.
pub fn format_anova_text(table: &AnovaTable) -> String {
    let cells: Vec<[String; 7]> = table
        .rows
        .iter()
        .map(|r| {
            [
                r.term.clone(),
                format!("{:.6e}", r.sum_sq),
                format!("{:.2}", r.perc_sum_sq),
                r.df.to_string(),
                format!("{:.6e}", r.mean_sq),
                r.f.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.p_value.map(|v| format!("{v:.6}")).unwrap_or_default(),
            ]
        })
        .collect();
    let mut widths = ANOVA_COLUMNS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |fields: &[&str]| -> String {
        let parts: Vec<String> = fields
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (f, w))| if i == 0 { format!("{f:<w$}") } else { format!("{f:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&ANOVA_COLUMNS);
    out.push('\n');
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&refs));
        out.push('\n');
    }
    out
}

/// One row of an ANOVA CSV as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRecord {
    pub term: String,
    pub sum_sq: f64,
    pub perc_sum_sq: f64,
    pub df: usize,
    pub mean_sq: f64,
    pub f: Option<f64>,
    pub p_value: Option<f64>,
}

impl From<&AnovaRow> for AnovaRecord {
    fn from(r: &AnovaRow) -> Self {
        Self {
            term: r.term.clone(),
            sum_sq: r.sum_sq,
            perc_sum_sq: r.perc_sum_sq,
            df: r.df,
            mean_sq: r.mean_sq,
            f: r.f,
            p_value: r.p_value,
        }
    }
}

pub fn parse_anova_csv<R: Read>(source: R) -> Result<Vec<AnovaRecord>> {
    let table = read_table(source)?;
    if table.header != ANOVA_COLUMNS {
        return Err(parse_error(1, 1, format!("expected header {}", ANOVA_COLUMNS.join(","))));
    }
    table
        .rows
        .iter()
        .map(|(line, f)| {
            if f.len() != ANOVA_COLUMNS.len() {
                return Err(parse_error(*line, f.len() + 1, "wrong number of fields"));
            }
            let num = |c: usize| -> Result<f64> {
                f[c].parse().map_err(|_| parse_error(*line, c + 1, format!("'{}' is not a number", f[c])))
            };
            let maybe = |c: usize| -> Result<Option<f64>> {
                if f[c].is_empty() {
                    Ok(None)
                } else {
                    num(c).map(Some)
                }
            };
            Ok(AnovaRecord {
                term: f[0].clone(),
                sum_sq: num(1)?,
                perc_sum_sq: num(2)?,
                df: f[3].parse().map_err(|_| parse_error(*line, 4, "df is not a count"))?,
                mean_sq: num(4)?,
                f: maybe(5)?,
                p_value: maybe(6)?,
            })
        })
        .collect()
}

/// Checks the structural invariants of a table: row order, blank cells,
/// percentage and mean-square arithmetic, F against the residual mean square
/// and p-value range. Returns a description of the first violation.
pub fn check_anova(records: &[AnovaRecord]) -> std::result::Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    let n = records.len();
    if n < 3 || records[0].term != "Mean" || records[n - 2].term != "Residuals" || records[n - 1].term != "Total" {
        return Err("rows must be Mean, effects..., Residuals, Total".into());
    }
    let total = records[n - 1].sum_sq;
    let ms_e = records[n - 2].mean_sq;
    for (i, r) in records.iter().enumerate() {
        let effect = i > 0 && i < n - 2;
        if !effect && (r.f.is_some() || r.p_value.is_some()) {
            return Err(format!("{}: F and Pvalue must be blank", r.term));
        }
        if effect && r.f.is_none() {
            return Err(format!("{}: F missing", r.term));
        }
        if r.sum_sq < 0.0 || r.df == 0 {
            return Err(format!("{}: negative SumSq or zero df", r.term));
        }
        if total > 0.0 && !close(r.perc_sum_sq, 100.0 * r.sum_sq / total) {
            return Err(format!("{}: PercSumSq inconsistent", r.term));
        }
        if !close(r.mean_sq, r.sum_sq / r.df as f64) {
            return Err(format!("{}: MeanSq inconsistent", r.term));
        }
        if let Some(f) = r.f {
            if !close(f, r.mean_sq / ms_e) {
                return Err(format!("{}: F inconsistent", r.term));
            }
        }
        if let Some(p) = r.p_value {
            if !(p > 0.0 && p <= 1.0) {
                return Err(format!("{}: Pvalue outside (0, 1]", r.term));
            }
        }
    }
    Ok(())
}

/// Writes a real matrix with a leading label column and the given header.
pub fn write_labelled<W: Write>(sink: W, header: &[String], labels: &[String], m: &RealMatrix) -> Result<()> {
    let mut w = writer(sink);
    w.write_record(header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(m.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `header` for a component table: `first,PC1,...,PCr`.
pub fn component_header(first: &str, r: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=r).map(|k| format!("PC{k}")))
        .collect()
}

/// Transposes a `rows x cols` matrix.
pub fn transpose_real(m: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(m.cols(), m.rows());
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            out.row_mut(j)[i] = v;
        }
    }
    out
}
