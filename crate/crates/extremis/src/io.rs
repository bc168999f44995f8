//! CSV tables. Every written table starts with a `# config_hash: <hex>`
//! comment line; readers skip comment lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use extremis_core::contour::ContourPoint;
use extremis_core::env::Condition;
use thiserror::Error;

const HASH_PREFIX: &str = "# config_hash: ";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}, row {row}: `{value}` in column `{column}` is not a number")]
    NotANumber { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

/// Columns of numbers with a header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub config_hash: Option<String>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

pub fn write_csv<I, R>(path: &Path, hash: Option<&str>, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    if let Some(h) = hash {
        writeln!(out, "{HASH_PREFIX}{h}").map_err(io_err(path))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_hash(path: &Path) -> Result<Option<String>, IoError> {
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(io_err(path))?).read_line(&mut first).map_err(io_err(path))?;
    Ok(first.trim_end().strip_prefix(HASH_PREFIX).map(str::to_string))
}

pub fn read_table(path: &Path) -> Result<Table, IoError> {
    let config_hash = read_hash(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for (i, field) in rec.iter().enumerate() {
            let v = field.parse::<f64>().map_err(|_| IoError::NotANumber {
                path: path.to_path_buf(),
                row: row + 1,
                column: header[i].clone(),
                value: field.to_string(),
            })?;
            columns[i].push(v);
        }
    }
    Ok(Table { header, columns, config_hash })
}

fn required<'a>(t: &'a Table, path: &Path, name: &str) -> Result<&'a [f64], IoError> {
    t.column(name).ok_or_else(|| IoError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })
}

pub fn f(v: f64) -> String {
    format!("{v}")
}

pub fn write_conditions(path: &Path, hash: Option<&str>, conds: &[Condition]) -> Result<(), IoError> {
    write_csv(path, hash, &["u", "sigma_u"], conds.iter().map(|c| [f(c.u), f(c.sigma_u)]))
}

pub fn write_contour(path: &Path, hash: Option<&str>, points: &[ContourPoint]) -> Result<(), IoError> {
    write_csv(path, hash, &["theta_deg", "u", "sigma_u"], points.iter().map(|p| [f(p.theta_deg), f(p.cond.u), f(p.cond.sigma_u)]))
}

pub fn read_contour(path: &Path) -> Result<Vec<ContourPoint>, IoError> {
    let t = read_table(path)?;
    let (th, u, s) = (required(&t, path, "theta_deg")?, required(&t, path, "u")?, required(&t, path, "sigma_u")?);
    Ok((0..t.rows()).map(|i| ContourPoint { theta_deg: th[i], cond: Condition::new(u[i], s[i]) }).collect())
}

/// A named column, or the only column of a single-column file.
pub fn read_samples(path: &Path, column: Option<&str>) -> Result<Vec<f64>, IoError> {
    let t = read_table(path)?;
    match column {
        Some(c) => Ok(required(&t, path, c)?.to_vec()),
        None if t.header.len() == 1 => Ok(t.columns[0].clone()),
        None => t.column("max_response_mnm").map(<[f64]>::to_vec).ok_or_else(|| IoError::Format {
            path: path.to_path_buf(),
            message: format!("several columns ({}); choose one", t.header.join(", ")),
        }),
    }
}

pub fn load_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes through a sibling temporary file and a rename, so a reader never
/// sees a half-written file.
pub fn write_json_atomic<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_json(&tmp, value)?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
