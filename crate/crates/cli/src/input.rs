use std::fs;
use std::path::Path;

use quasitest::{Error, Observation, Result, Sample};
use sha2::{Digest, Sha256};

/// How an input CSV is read.
#[derive(Debug, Clone)]
pub struct InputSpec<'a> {
    pub path: &'a Path,
    pub delimiter: u8,
    pub has_header: bool,
}

/// A parsed input file. `lines[i]` is the 1-based file line of observation `i`.
pub struct Input {
    pub sample: Sample,
    pub lines: Vec<usize>,
    pub digest: String,
}

impl Input {
    /// Describes observation `row` for error messages.
    pub fn describe_row(&self, row: usize) -> String {
        match (self.sample.observations().get(row), self.lines.get(row)) {
            (Some(o), Some(line)) => format!("data row {} (line {line}: x = {}, y = {})", row + 1, o.x, o.y),
            _ => format!("row {}", row + 1),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_delta(s: &str, line: usize) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Ok(true),
        "0" | "false" | "f" | "no" => Ok(false),
        other => Err(Error::Parse { line, message: format!("delta must be 0 or 1, got `{other}`") }),
    }
}

fn parse_num(s: &str, col: &str, line: usize) -> Result<f64> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, message: format!("column {col}: `{t}` is not a finite number") }),
    }
}

pub fn read_input(spec: &InputSpec) -> Result<Input> {
    let bytes = fs::read(spec.path).map_err(|e| Error::Io(format!("{}: {e}", spec.path.display())))?;
    let digest = sha256_hex(&bytes);
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(spec.has_header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());

    let (ix, iy, id) = if spec.has_header {
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
        let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let ix = find("x").ok_or_else(|| Error::Parse { line: 1, message: "missing column `x`".into() })?;
        let iy = find("y").ok_or_else(|| Error::Parse { line: 1, message: "missing column `y`".into() })?;
        (ix, iy, find("delta"))
    } else {
        (0, 1, None)
    };

    let mut obs = Vec::new();
    let mut lines = Vec::new();
    let mut any_delta = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, col: &str| {
            rec.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing column {col}") })
        };
        let x = parse_num(field(ix, "x")?, "x", line)?;
        let y = parse_num(field(iy, "y")?, "y", line)?;
        let delta = match id {
            Some(i) => Some(parse_delta(field(i, "delta")?, line)?),
            None if !spec.has_header && rec.len() >= 3 => Some(parse_delta(&rec[2], line)?),
            None => None,
        };
        any_delta |= delta.is_some();
        obs.push(Observation { x, y, delta });
        lines.push(line);
    }
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sample = Sample::from_observations(obs, any_delta)?;
    Ok(Input { sample, lines, digest })
}
