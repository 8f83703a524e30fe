//! Result rows of a sweep and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{io_at, Error, Result};
use crate::predictors::PredictorKind;

pub const STATUS_OK: &str = "ok";

/// One (grid point, method, trial) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub plan: String,
    pub similarity: f64,
    pub num_tasks: usize,
    pub num_workers: usize,
    pub density: f64,
    pub method: PredictorKind,
    pub trial: usize,
    pub seed: u64,
    pub rmse: Option<f64>,
    /// One entry per requested k, in plan order.
    pub ma_k: Vec<(usize, Option<f64>)>,
    pub fallback_fraction: Option<f64>,
    /// `ok` or the error that stopped this trial.
    pub status: String,
    pub duration_ms: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    /// Identity of the row within a sweep, as printed in the CSV.
    pub fn key(&self) -> RowKey {
        RowKey {
            similarity: format_g6(self.similarity),
            num_tasks: self.num_tasks,
            num_workers: self.num_workers,
            density: format_g6(self.density),
            trial: self.trial,
            method: self.method,
        }
    }

    pub fn ma(&self, k: usize) -> Option<f64> {
        self.ma_k.iter().find(|(kk, _)| *kk == k).and_then(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub similarity: String,
    pub num_tasks: usize,
    pub num_workers: usize,
    pub density: String,
    pub trial: usize,
    pub method: PredictorKind,
}

/// `%g` with six significant digits: fixed notation for exponents in
/// [-4, 6), scientific otherwise, trailing zeros dropped.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g6).unwrap_or_default()
}

pub fn header(k_values: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = [
        "plan", "similarity", "num_tasks", "num_workers", "density", "method", "trial", "seed", "rmse",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(k_values.iter().map(|k| format!("ma_{k}")));
    h.extend(["fallback_fraction", "status", "duration_ms"].map(String::from));
    h
}

/// Columns whose contents vary between identical runs.
pub const TIMING_COLUMNS: [&str; 1] = ["duration_ms"];

pub struct ResultWriter<W: Write> {
    inner: csv::Writer<W>,
    k_values: Vec<usize>,
}

impl<W: Write> ResultWriter<W> {
    pub fn new(out: W, k_values: &[usize], write_header: bool) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if write_header {
            inner.write_record(header(k_values))?;
        }
        Ok(Self {
            inner,
            k_values: k_values.to_vec(),
        })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        let mut rec = vec![
            row.plan.clone(),
            format_g6(row.similarity),
            row.num_tasks.to_string(),
            row.num_workers.to_string(),
            format_g6(row.density),
            row.method.to_string(),
            row.trial.to_string(),
            row.seed.to_string(),
            opt(row.rmse),
        ];
        rec.extend(self.k_values.iter().map(|&k| opt(row.ma(k))));
        rec.push(opt(row.fallback_fraction));
        rec.push(row.status.clone());
        rec.push(format_g6(row.duration_ms));
        self.inner.write_record(rec)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Rows from a results file, plus the k values named by its header.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub k_values: Vec<usize>,
    pub rows: Vec<ResultRow>,
}

pub fn read_results(path: &Path) -> Result<ResultTable> {
    read_results_from(std::fs::File::open(path).map_err(|e| io_at(path, e))?, path, false)
}

/// Parses a results CSV. With `tolerate_partial_tail` a malformed final
/// record (a write cut short) is dropped instead of reported.
pub fn read_results_from<R: Read>(reader: R, path: &Path, tolerate_partial_tail: bool) -> Result<ResultTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let Some((head, body)) = records.split_first() else {
        return Err(Error::NoData(format!("{} is empty", path.display())));
    };
    let names: Vec<&str> = head.iter().collect();
    let n = names.len();
    if n < 12 {
        return Err(parse_err(1, "not a results header".into()));
    }
    let k_values = names[9..n - 3]
        .iter()
        .map(|c| c.strip_prefix("ma_").and_then(|k| k.parse().ok()))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| parse_err(1, "expected ma_<k> columns after rmse".into()))?;
    let expected = header(&k_values);
    if names != expected {
        return Err(parse_err(1, format!("unexpected header {:?}", names.join(","))));
    }

    let mut rows = Vec::with_capacity(body.len());
    for (idx, rec) in body.iter().enumerate() {
        let line = rec.position().map_or(0, |p| p.line());
        match parse_row(rec, &k_values) {
            Ok(row) => rows.push(row),
            Err(_) if tolerate_partial_tail && idx + 1 == body.len() => {}
            Err(msg) => return Err(parse_err(line, msg)),
        }
    }
    Ok(ResultTable { k_values, rows })
}

fn parse_row(rec: &csv::StringRecord, k_values: &[usize]) -> std::result::Result<ResultRow, String> {
    let width = 12 + k_values.len();
    if rec.len() != width {
        return Err(format!("expected {width} fields, found {}", rec.len()));
    }
    fn num<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<T, String> {
        field.parse().map_err(|_| format!("{name} {field:?} is not a number"))
    }
    fn maybe(field: &str, name: &str) -> std::result::Result<Option<f64>, String> {
        if field.is_empty() {
            Ok(None)
        } else {
            num(field, name).map(Some)
        }
    }
    let mut ma_k = Vec::with_capacity(k_values.len());
    for (x, &k) in k_values.iter().enumerate() {
        ma_k.push((k, maybe(&rec[9 + x], "ma")?));
    }
    let tail = 9 + k_values.len();
    Ok(ResultRow {
        plan: rec[0].to_string(),
        similarity: num(&rec[1], "similarity")?,
        num_tasks: num(&rec[2], "num_tasks")?,
        num_workers: num(&rec[3], "num_workers")?,
        density: num(&rec[4], "density")?,
        method: rec[5].parse().map_err(|e: Error| e.to_string())?,
        trial: num(&rec[6], "trial")?,
        seed: num(&rec[7], "seed")?,
        rmse: maybe(&rec[8], "rmse")?,
        ma_k,
        fallback_fraction: maybe(&rec[tail], "fallback_fraction")?,
        status: rec[tail + 1].to_string(),
        duration_ms: num(&rec[tail + 2], "duration_ms")?,
    })
}
