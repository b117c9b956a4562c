//! Data ingestion and report emission.
//!
//! Input is CSV with a required header `t,x` or `t,x1,...,xN`; rows are
//! (time, observation vector) with strictly increasing integer-ordered times.
//! Reports go out as CSV (`name,estimate,std_error,reps,seed,wall_time`) or
//! as `key = value` lines. All numbers use 10 significant digits with `.` as
//! the decimal separator regardless of locale.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sim::SimReport;

/// Format with 10 significant digits, deterministically.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..10).contains(&mag) {
        // fixed notation with 10 significant digits
        let decimals = (9 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // trim trailing zeros but keep at least one digit after '.'
        if s.contains('.') {
            let t = s.trim_end_matches('0');
            let t = t.strip_suffix('.').unwrap_or(t);
            t.to_string()
        } else {
            s
        }
    } else {
        format!("{x:.9e}")
    }
}

/// Streaming CSV reader for observation series.
pub struct CsvReader<R: BufRead> {
    lines: std::io::Lines<R>,
    /// Number of observation columns fixed by the header.
    pub cols: usize,
    line_no: usize,
    last_t: Option<f64>,
}

impl<R: BufRead> CsvReader<R> {
    pub fn new(reader: R) -> Result<CsvReader<R>> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(Ok(line)) => {
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                Some(Err(e)) => return Err(Error::data(format!("read failure: {e}"))),
                None => return Err(Error::data("empty input, header required")),
            }
        };
        let fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if fields.len() < 2 || fields[0] != "t" {
            return Err(Error::data(format!(
                "line 1: header must be 't,x' or 't,x1,...', got '{header}'"
            )));
        }
        Ok(CsvReader {
            lines,
            cols: fields.len() - 1,
            line_no: 1,
            last_t: None,
        })
    }

    /// Next data row as (t, observations), or None at end of input.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<Result<(f64, Vec<f64>)>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::data(format!("read failure: {e}")))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_row(&line));
        }
    }

    fn parse_row(&mut self, line: &str) -> Result<(f64, Vec<f64>)> {
        let no = self.line_no;
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != self.cols + 1 {
            return Err(Error::data(format!(
                "line {no}: expected {} fields, got {}",
                self.cols + 1,
                fields.len()
            )));
        }
        let mut parsed = Vec::with_capacity(fields.len());
        for f in &fields {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    return Err(Error::data(format!("line {no}: non-numeric field '{f}'")));
                }
            }
        }
        let t = parsed[0];
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(Error::data(format!(
                    "line {no}: time {t} not increasing after {prev}"
                )));
            }
        }
        self.last_t = Some(t);
        Ok((t, parsed[1..].to_vec()))
    }
}

/// Read a single-column series fully into memory.
pub fn read_series(path: &std::path::Path) -> Result<Vec<f64>> {
    let rows = read_matrix(path)?;
    rows.into_iter()
        .map(|r| {
            if r.len() == 1 {
                Ok(r[0])
            } else {
                Err(Error::data(format!("expected one observation column, got {}", r.len())))
            }
        })
        .collect()
}

/// Read a multi-column series fully into memory.
pub fn read_matrix(path: &std::path::Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = CsvReader::new(std::io::BufReader::new(file))?;
    let mut rows = Vec::new();
    while let Some(row) = reader.next() {
        rows.push(row?.1);
    }
    Ok(rows)
}

/// Report output formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Kv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "kv" => Ok(ReportFormat::Kv),
            other => Err(Error::config(format!("unknown report format '{other}'"))),
        }
    }
}

/// Write reports in the selected format. Field order is fixed.
pub fn emit_report<W: Write>(
    reports: &[SimReport],
    format: ReportFormat,
    out: &mut W,
) -> Result<()> {
    let write = |out: &mut W, s: String| {
        out.write_all(s.as_bytes())
            .map_err(|e| Error::data(format!("write failure: {e}")))
    };
    match format {
        ReportFormat::Csv => {
            write(out, "name,estimate,std_error,reps,seed,wall_time\n".into())?;
            for r in reports {
                write(
                    out,
                    format!(
                        "{},{},{},{},{},{}\n",
                        r.name,
                        fmt_g(r.estimate),
                        fmt_g(r.std_error),
                        r.reps,
                        r.seed,
                        fmt_g(r.wall_time)
                    ),
                )?;
            }
        }
        ReportFormat::Kv => {
            for r in reports {
                write(out, format!("{}.estimate = {}\n", r.name, fmt_g(r.estimate)))?;
                write(out, format!("{}.std_error = {}\n", r.name, fmt_g(r.std_error)))?;
                write(out, format!("{}.reps = {}\n", r.name, r.reps))?;
                write(out, format!("{}.seed = {}\n", r.name, r.seed))?;
                write(out, format!("{}.wall_time = {}\n", r.name, fmt_g(r.wall_time)))?;
            }
        }
    }
    Ok(())
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                idx + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
