//! `worker_id,task_id,accuracy[,num_examples]` files.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{io_at, Error, Result};
use crate::matrix::WorkerTaskMatrix;

pub const MATRIX_HEADER: [&str; 3] = ["worker_id", "task_id", "accuracy"];
pub const COUNT_COLUMN: &str = "num_examples";

/// A matrix read from CSV together with the external ids of its rows and
/// columns, in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedMatrix {
    pub matrix: WorkerTaskMatrix<f64>,
    pub worker_ids: Vec<String>,
    pub task_ids: Vec<String>,
    /// Data rows dropped by the example-count filter.
    pub filtered_rows: usize,
}

pub fn ingest_matrix_csv(path: &Path, min_examples: u64) -> Result<IngestedMatrix> {
    let file = std::fs::File::open(path).map_err(|e| io_at(path, e))?;
    ingest_matrix_reader(file, path, min_examples)
}

/// Parses matrix CSV from any reader; `path` only labels errors.
/// `min_examples > 0` drops rows whose `num_examples` is smaller and requires
/// that column to be present.
pub fn ingest_matrix_reader<R: Read>(reader: R, path: &Path, min_examples: u64) -> Result<IngestedMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(1, "empty file, expected a header".into())),
    };
    let names: Vec<&str> = header.iter().collect();
    let has_counts = match names.as_slice() {
        [w, t, a] if [*w, *t, *a] == MATRIX_HEADER => false,
        [w, t, a, c] if [*w, *t, *a] == MATRIX_HEADER && *c == COUNT_COLUMN => true,
        _ => {
            return Err(parse_err(
                1,
                format!("header must be worker_id,task_id,accuracy[,num_examples], got {:?}", names.join(",")),
            ))
        }
    };
    if min_examples > 0 && !has_counts {
        return Err(Error::Data(format!(
            "{}: an example-count filter needs a {COUNT_COLUMN} column",
            path.display()
        )));
    }
    let width = header.len();

    let mut workers: HashMap<String, usize> = HashMap::new();
    let mut tasks: HashMap<String, usize> = HashMap::new();
    let mut worker_ids = Vec::new();
    let mut task_ids = Vec::new();
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    let mut cells = Vec::new();
    let mut filtered_rows = 0;

    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        let (w, t) = (&rec[0], &rec[1]);
        if w.is_empty() || t.is_empty() {
            return Err(parse_err(line, "empty worker or task id".into()));
        }
        let acc: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(line, format!("accuracy {:?} is not a number", &rec[2])))?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line,
                value: acc,
            });
        }
        if has_counts {
            let n: u64 = rec[3]
                .parse()
                .map_err(|_| parse_err(line, format!("{COUNT_COLUMN} {:?} is not a non-negative integer", &rec[3])))?;
            if n < min_examples {
                filtered_rows += 1;
                continue;
            }
        }
        let wi = intern(&mut workers, &mut worker_ids, w);
        let ti = intern(&mut tasks, &mut task_ids, t);
        match seen.entry((wi, ti)) {
            Entry::Occupied(first) => {
                return Err(Error::Duplicate {
                    path: path.to_path_buf(),
                    line,
                    first_line: *first.get(),
                    worker: w.to_string(),
                    task: t.to_string(),
                })
            }
            Entry::Vacant(slot) => {
                slot.insert(line);
            }
        }
        cells.push((wi, ti, acc));
    }
    if cells.is_empty() {
        return Err(Error::NoData(format!("{} has no accuracy rows", path.display())));
    }
    let matrix = WorkerTaskMatrix::from_cells(worker_ids.len(), task_ids.len(), cells)?;
    Ok(IngestedMatrix {
        matrix,
        worker_ids,
        task_ids,
        filtered_rows,
    })
}

fn intern(map: &mut HashMap<String, usize>, ids: &mut Vec<String>, key: &str) -> usize {
    if let Some(&i) = map.get(key) {
        return i;
    }
    let i = ids.len();
    map.insert(key.to_string(), i);
    ids.push(key.to_string());
    i
}

/// Default ids `w0, w1, ...` and `t0, t1, ...`.
pub fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Writes observed cells in row-major order. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix_csv<W: Write>(
    out: W,
    m: &WorkerTaskMatrix<f64>,
    worker_ids: &[String],
    task_ids: &[String],
) -> Result<()> {
    if worker_ids.len() != m.num_workers() || task_ids.len() != m.num_tasks() {
        return Err(Error::Parameter(format!(
            "{} worker ids and {} task ids for a {}x{} matrix",
            worker_ids.len(),
            task_ids.len(),
            m.num_workers(),
            m.num_tasks()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MATRIX_HEADER)?;
    for (i, j, v) in m.observed_cells() {
        w.write_record([worker_ids[i].as_str(), task_ids[j].as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_matrix_csv(path: &Path, m: &WorkerTaskMatrix<f64>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix_csv(
        file,
        m,
        &default_ids("w", m.num_workers()),
        &default_ids("t", m.num_tasks()),
    )
}
