//! Text artifacts: the quantizer transitions file, CSV tables with `#`
//! comment headers, and `key=value` summaries.
//!
//! Floats are written in the shortest form that parses back to the same
//! bits (exponent notation for very small or large magnitudes).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use quantnoise_core::estimator::{CdfEstimate, CdfPoint, ErrorBounds};
use quantnoise_core::gaussfit::GaussianCdfFit;
use quantnoise_core::servoloop::CalibrationResult;
use quantnoise_core::sinefit::SineFitResult;
use quantnoise_core::{GaussianParams, Matrix, PartitionTable, QuantizerModel};

use crate::error::{Error, Result};

const QUANTIZER_MAGIC: &str = "# quantnoise-transitions v1 K=";

/// Comment lines, a header row and data rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), ..Self::default() }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        // rows are plain numbers and identifiers, so serialization cannot fail
        w.write_record(&self.header).expect("in-memory csv write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory csv write");
        }
        let body = w.into_inner().expect("in-memory csv flush");
        out.push_str(std::str::from_utf8(&body).expect("csv of utf-8 fields"));
        out
    }

    /// Parses text produced by [`Table::render`]; `expect` is the required header.
    pub fn parse(text: &str, expect: &[&str], origin: &Path) -> Result<Self> {
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string())
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::format(origin, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != expect {
            return Err(Error::format(
                origin,
                format!("expected columns {}, found {}", expect.join(","), header.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { comments, header, rows })
    }

    /// Value of `key=` inside the comment lines, if present.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        comment_value(&self.comments, key)
    }
}

fn comment_value<'a>(comments: &'a [String], key: &str) -> Option<&'a str> {
    let needle = format!("{key}=");
    comments.iter().find_map(|c| {
        c.split_whitespace().find_map(|tok| tok.strip_prefix(needle.as_str()))
    })
}

pub fn field<T: FromStr>(value: &str, what: &str, origin: &Path) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::format(origin, format!("cannot parse {what} from {value:?}")))
}

/// Shortest round-trip text for `v`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------- quantizer

pub fn render_quantizer(q: &QuantizerModel) -> String {
    let mut out = format!("{QUANTIZER_MAGIC}{}\n", q.code_count());
    for t in q.transitions() {
        let _ = writeln!(out, "{}", num(*t));
    }
    out
}

pub fn parse_quantizer(text: &str, origin: &Path) -> Result<QuantizerModel> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(origin, "empty quantizer file"))?;
    let k: usize = header
        .strip_prefix(QUANTIZER_MAGIC)
        .ok_or_else(|| Error::format(origin, format!("bad header {header:?}")))
        .and_then(|v| field(v, "K", origin))?;
    let levels = lines
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| field::<f64>(l, "transition level", origin))
        .collect::<Result<Vec<_>>>()?;
    if levels.len() != k + 1 {
        return Err(Error::format(origin, format!("K={k} needs {} levels, found {}", k + 1, levels.len())));
    }
    QuantizerModel::new(levels).map_err(|e| Error::format(origin, e.to_string()))
}

// ------------------------------------------------------------ cdf estimate

pub const ESTIMATE_COLUMNS: [&str; 5] = ["j", "x_j", "L_j", "F_hat", "var_hat"];

pub fn fit_comment(fit: &GaussianCdfFit) -> String {
    format!(
        "fit: mu={} sigma={} maxres={} converged={}",
        num(fit.mean),
        num(fit.sigma),
        num(fit.max_residual),
        fit.converged
    )
}

pub fn estimate_table(est: &CdfEstimate, fit: Option<&GaussianCdfFit>) -> Table {
    let mut t = Table::new(&ESTIMATE_COLUMNS);
    t.comment(format!(
        "records={} tolerance={} k_min={} k_max={}",
        est.records,
        num(est.tolerance),
        est.k_range.start(),
        est.k_range.end()
    ));
    if let Some(fit) = fit {
        t.comment(fit_comment(fit));
    }
    for (j, p) in est.points.iter().enumerate() {
        t.push(vec![(j + 1).to_string(), num(p.x), p.group_size.to_string(), num(p.f), num(p.var)]);
    }
    t
}

/// Fit summary recovered from an estimate file's comment line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub mean: f64,
    pub sigma: f64,
    pub max_residual: f64,
    pub converged: bool,
}

pub fn parse_estimate(text: &str, origin: &Path) -> Result<(CdfEstimate, Option<FitSummary>)> {
    let t = Table::parse(text, &ESTIMATE_COLUMNS, origin)?;
    let get = |key: &str| {
        t.comment_value(key)
            .ok_or_else(|| Error::format(origin, format!("missing `{key}=` comment")))
    };
    let records: u64 = field(get("records")?, "records", origin)?;
    let tolerance: f64 = field(get("tolerance")?, "tolerance", origin)?;
    let k_min: usize = field(get("k_min")?, "k_min", origin)?;
    let k_max: usize = field(get("k_max")?, "k_max", origin)?;
    let mut points = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let x: f64 = field(&row[1], "x_j", origin)?;
        let group_size: usize = field(&row[2], "L_j", origin)?;
        let f: f64 = field(&row[3], "F_hat", origin)?;
        let var: f64 = field(&row[4], "var_hat", origin)?;
        let trials = records * group_size as u64;
        let hits = (f * trials as f64).round() as u64;
        points.push(CdfPoint { x, f, var, group_size, hits, trials });
    }
    let fit = match t.comments.iter().find(|c| c.starts_with("fit:")) {
        None => None,
        Some(line) => {
            let one = std::slice::from_ref(line);
            let val = |key: &str| {
                comment_value(one, key)
                    .ok_or_else(|| Error::format(origin, format!("fit comment lacks `{key}=`")))
            };
            Some(FitSummary {
                mean: field(val("mu")?, "mu", origin)?,
                sigma: field(val("sigma")?, "sigma", origin)?,
                max_residual: field(val("maxres")?, "maxres", origin)?,
                converged: field(val("converged")?, "converged", origin)?,
            })
        }
    };
    let est = CdfEstimate {
        points,
        records,
        tolerance,
        k_range: k_min..=k_max,
        fit: fit.map(|f| GaussianParams { mean: f.mean, sigma: f.sigma }),
    };
    Ok((est, fit))
}

pub fn bounds_table(b: &ErrorBounds) -> Table {
    let mut t = Table::new(&["x", "lower", "upper"]);
    t.comment(format!("delta_eps={}", num(b.delta_eps)));
    for (lo, hi) in b.lower.iter().zip(&b.upper) {
        t.push(vec![num(lo.0), num(lo.1), num(hi.1)]);
    }
    t
}

/// `x,numeric,fitted` density table.
pub fn pdf_table(numeric: &[(f64, f64)], fit: Option<&GaussianParams>) -> Table {
    let mut t = Table::new(&["x", "numeric", "fitted"]);
    for &(x, d) in numeric {
        let fitted = fit.map(|p| num(p.pdf(x))).unwrap_or_default();
        t.push(vec![num(x), num(d), fitted]);
    }
    t
}

// -------------------------------------------------------------- partition

pub fn partition_table(part: &PartitionTable) -> Table {
    let mut t = Table::new(&["j", "x_j", "L_j"]);
    t.comment(format!(
        "tolerance={} k_min={} k_max={} pairs={}",
        num(part.tolerance()),
        part.k_range().start(),
        part.k_range().end(),
        part.pair_count()
    ));
    for (j, g) in part.groups().iter().enumerate() {
        t.push(vec![(j + 1).to_string(), num(g.abscissa), g.len().to_string()]);
    }
    t
}

/// `j,n,k` listing of every pooled pair.
pub fn partition_members_table(part: &PartitionTable) -> Table {
    let mut t = Table::new(&["j", "n", "k"]);
    for (j, g) in part.groups().iter().enumerate() {
        for &(n, k) in &g.members {
            t.push(vec![(j + 1).to_string(), n.to_string(), k.to_string()]);
        }
    }
    t
}

// ----------------------------------------------------- samples and records

pub fn samples_table(x: &Matrix<f64>) -> Table {
    let mut t = Table::new(&["n", "r", "x"]);
    for r in 0..x.records() {
        for (n, v) in x.record(r).iter().enumerate() {
            t.push(vec![n.to_string(), r.to_string(), num(*v)]);
        }
    }
    t
}

pub fn codes_table(codes: &Matrix<u32>, q: &QuantizerModel) -> Table {
    let mut t = Table::new(&["n", "r", "code"]);
    t.comment(format!("K={} quantizer={}", q.code_count(), q.fingerprint()));
    for r in 0..codes.records() {
        for (n, c) in codes.record(r).iter().enumerate() {
            t.push(vec![n.to_string(), r.to_string(), c.to_string()]);
        }
    }
    t
}

/// Reads an `n,r,code` table into an `N × R` matrix.
pub fn parse_codes(text: &str, origin: &Path) -> Result<Matrix<u32>> {
    let t = Table::parse(text, &["n", "r", "code"], origin)?;
    let mut cells = Vec::with_capacity(t.rows.len());
    let (mut samples, mut records) = (0usize, 0usize);
    for row in &t.rows {
        let n: usize = field(&row[0], "n", origin)?;
        let r: usize = field(&row[1], "r", origin)?;
        let c: u32 = field(&row[2], "code", origin)?;
        samples = samples.max(n + 1);
        records = records.max(r + 1);
        cells.push((r, n, c));
    }
    if cells.len() != samples * records {
        return Err(Error::format(origin, "code table is not a complete n × r grid"));
    }
    cells.sort_unstable();
    cells.dedup_by_key(|c| (c.0, c.1));
    if cells.len() != samples * records {
        return Err(Error::format(origin, "duplicate (n, r) cells in code table"));
    }
    Matrix::from_records(samples, records, cells.into_iter().map(|c| c.2).collect())
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn stimulus_table(s: &[f64]) -> Table {
    let mut t = Table::new(&["n", "s"]);
    for (n, v) in s.iter().enumerate() {
        t.push(vec![n.to_string(), num(*v)]);
    }
    t
}

pub fn parse_stimulus(text: &str, origin: &Path) -> Result<Vec<f64>> {
    let t = Table::parse(text, &["n", "s"], origin)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: usize = field(&row[0], "n", origin)?;
            if n != i {
                return Err(Error::format(origin, format!("row {i} has n={n}")));
            }
            field(&row[1], "s", origin)
        })
        .collect()
}

// ----------------------------------------------------------------- fits

pub fn sinefit_comment(fit: &SineFitResult) -> String {
    format!(
        "sinefit: A_hat={} phi0_hat={} offset_hat={}",
        num(fit.amplitude),
        num(fit.phase),
        num(fit.offset())
    )
}

pub fn theta_table(fit: &SineFitResult) -> Table {
    let mut t = Table::new(&["r", "th1", "th2", "th3"]);
    t.comment(sinefit_comment(fit));
    for (r, th) in fit.per_record.iter().enumerate() {
        t.push(vec![r.to_string(), num(th[0]), num(th[1]), num(th[2])]);
    }
    t
}

pub const CALIBRATION_COLUMNS: [&str; 4] = ["k", "T_hat", "iterations", "converged"];

pub fn calibration_table(cal: &CalibrationResult) -> Table {
    let mut t = Table::new(&CALIBRATION_COLUMNS);
    if let Some(line) = cal.line {
        t.comment(format!("line: gain={} offset={}", num(line.gain), num(line.offset)));
        t.comment(format!("max_deviation={}", num(line.max_deviation)));
    }
    for (k, e) in &cal.failures {
        t.comment(format!("failed: k={k} error={}", e.to_string().replace(' ', "_")));
    }
    for e in &cal.entries {
        t.push(vec![e.k.to_string(), num(e.level), e.iterations.to_string(), e.converged.to_string()]);
    }
    t
}

/// `(k, T̂_k, converged)` triples from a calibration table.
pub fn parse_calibration(text: &str, origin: &Path) -> Result<Vec<(usize, f64, bool)>> {
    let t = Table::parse(text, &CALIBRATION_COLUMNS, origin)?;
    t.rows
        .iter()
        .map(|row| {
            Ok((
                field(&row[0], "k", origin)?,
                field(&row[1], "T_hat", origin)?,
                field(&row[3], "converged", origin)?,
            ))
        })
        .collect()
}

// ---------------------------------------------------------------- summary

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn put_num(&mut self, key: &str, value: f64) {
        self.put(key, num(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        text.lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::format(origin, format!("not a key=value line: {l:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Summary)
    }
}

// ------------------------------------------------------------------- io

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_quantizer(path: &Path) -> Result<QuantizerModel> {
    parse_quantizer(&read_text(path)?, path)
}

/// Writes files into one directory and deletes everything it wrote if the
/// run is abandoned before [`ArtifactSet::keep`].
#[derive(Debug)]
pub struct ArtifactSet {
    dir: std::path::PathBuf,
    written: Vec<std::path::PathBuf>,
    keep: bool,
}

impl ArtifactSet {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), keep: false })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<std::path::PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn files(&self) -> &[std::path::PathBuf] {
        &self.written
    }

    pub fn keep(mut self) -> Vec<std::path::PathBuf> {
        self.keep = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for ArtifactSet {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}
