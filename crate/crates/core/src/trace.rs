//! Trace records and their JSON-lines and CSV encodings.
//!
//! CSV columns, in order:
//!
//! ```text
//! t,kind,good,f,phi,misspending,x_bar,w_tilde,z_bar,delta_t,old_price,
//! p_0..p_{n-1},v_0..v_{n-1},x_0..x_{n-1},zone_0..zone_{n-1}
//! ```
//!
//! Empty cells stand for absent optional fields, and the `v_*`/`zone_*`
//! columns are left empty in one-time runs. Failure messages exist only in
//! the JSON encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Init,
    Update,
    Day,
    End,
    Failure,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Init => "init",
            RecordKind::Update => "update",
            RecordKind::Day => "day",
            RecordKind::End => "end",
            RecordKind::Failure => "failure",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "init" => RecordKind::Init,
            "update" => RecordKind::Update,
            "day" => RecordKind::Day,
            "end" => RecordKind::End,
            "failure" => RecordKind::Failure,
            _ => return None,
        })
    }
}

/// A snapshot of the market, emitted at every price update and day boundary.
/// `x` is the demand at `prices`, i.e. after the update on update records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: f64,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub good: Option<usize>,
    pub prices: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_price: Option<f64>,
    pub phi: f64,
    pub misspending: f64,
    pub f: f64,
    pub zones: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Jsonl,
    Csv,
}

/// Receives records as the simulator produces them.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord) -> Result<()>;
}

impl<F: FnMut(&TraceRecord) -> Result<()>> TraceSink for F {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self(rec)
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Streams records to a writer in either encoding.
pub struct TraceWriter<W: Write> {
    out: W,
    format: TraceFormat,
    wrote_header: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, format: TraceFormat) -> Self {
        TraceWriter { out, format, wrote_header: false }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        match self.format {
            TraceFormat::Jsonl => {
                serde_json::to_writer(&mut self.out, rec).map_err(|e| Error::Io(e.into()))?;
                self.out.write_all(b"\n")?;
            }
            TraceFormat::Csv => {
                if !self.wrote_header {
                    writeln!(self.out, "{}", csv_header(rec.prices.len()))?;
                    self.wrote_header = true;
                }
                writeln!(self.out, "{}", csv_row(rec))?;
            }
        }
        Ok(())
    }
}

const CSV_FIXED: [&str; 11] =
    ["t", "kind", "good", "f", "phi", "misspending", "x_bar", "w_tilde", "z_bar", "delta_t", "old_price"];

pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = CSV_FIXED.iter().map(|s| s.to_string()).collect();
    for prefix in ["p", "v", "x", "zone"] {
        cols.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    cols.join(",")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_row(rec: &TraceRecord) -> String {
    let n = rec.prices.len();
    let mut cells = vec![
        rec.t.to_string(),
        rec.kind.as_str().to_string(),
        opt(rec.good),
        rec.f.to_string(),
        rec.phi.to_string(),
        rec.misspending.to_string(),
        opt(rec.x_bar),
        opt(rec.w_tilde),
        opt(rec.z_bar),
        opt(rec.delta_t),
        opt(rec.old_price),
    ];
    cells.extend(rec.prices.iter().map(f64::to_string));
    let padded = |vals: Vec<String>| -> Vec<String> {
        if vals.is_empty() {
            vec![String::new(); n]
        } else {
            vals
        }
    };
    cells.extend(padded(rec.v.iter().map(f64::to_string).collect()));
    cells.extend(rec.x.iter().map(f64::to_string));
    cells.extend(padded(rec.zones.iter().map(usize::to_string).collect()));
    cells.join(",")
}

fn schema(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("line {line}: {msg}"))
}

fn parse_csv_row(line_no: usize, n: usize, line: &str) -> Result<TraceRecord> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != CSV_FIXED.len() + 4 * n {
        return Err(schema(line_no, format!("expected {} cells, found {}", CSV_FIXED.len() + 4 * n, cells.len())));
    }
    let num = |k: usize| -> Result<f64> {
        cells[k].parse().map_err(|_| schema(line_no, format!("column {} is not a number: {:?}", k, cells[k])))
    };
    let opt_num = |k: usize| -> Result<Option<f64>> {
        if cells[k].is_empty() {
            Ok(None)
        } else {
            num(k).map(Some)
        }
    };
    let block = |b: usize| -> Result<Vec<f64>> {
        let start = CSV_FIXED.len() + b * n;
        if cells[start..start + n].iter().all(|c| c.is_empty()) {
            return Ok(Vec::new());
        }
        (start..start + n).map(num).collect()
    };
    let kind = RecordKind::parse(cells[1]).ok_or_else(|| schema(line_no, format!("unknown kind {:?}", cells[1])))?;
    let good =
        if cells[2].is_empty() { None } else { Some(cells[2].parse().map_err(|_| schema(line_no, "bad good index"))?) };
    Ok(TraceRecord {
        t: num(0)?,
        kind,
        good,
        f: num(3)?,
        phi: num(4)?,
        misspending: num(5)?,
        x_bar: opt_num(6)?,
        w_tilde: opt_num(7)?,
        z_bar: opt_num(8)?,
        delta_t: opt_num(9)?,
        old_price: opt_num(10)?,
        prices: block(0)?,
        v: block(1)?,
        x: block(2)?,
        zones: block(3)?.into_iter().map(|z| z as usize).collect(),
        message: None,
    })
}

/// Reads a whole trace, detecting the encoding from the first line.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    let mut csv_width: Option<usize> = None;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        if k == 0 && line.starts_with("t,kind,") {
            let cols = line.split(',').count();
            let n = cols.checked_sub(CSV_FIXED.len()).filter(|r| r % 4 == 0).map(|r| r / 4);
            match n {
                Some(n) if line == csv_header(n) => csv_width = Some(n),
                _ => return Err(schema(1, "unrecognised CSV header")),
            }
            continue;
        }
        let rec = match csv_width {
            Some(n) => parse_csv_row(line_no, n, &line)?,
            None => {
                let mut de = serde_json::Deserializer::from_str(&line);
                serde_path_to_error::deserialize(&mut de).map_err(|e| schema(line_no, e))?
            }
        };
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TraceRecord {
        TraceRecord {
            t: 0.75,
            kind: RecordKind::Update,
            good: Some(1),
            prices: vec![1.5, 0.1 + 0.2],
            v: vec![3.0, 4.25],
            x: vec![1.0, 2.0 / 3.0],
            x_bar: Some(0.9),
            w_tilde: Some(1.01),
            z_bar: Some(-0.11),
            delta_t: Some(0.5),
            old_price: Some(0.31),
            phi: 0.123,
            misspending: 0.456,
            f: 1.25,
            zones: vec![3, 4],
            message: None,
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let mut w = TraceWriter::new(Vec::new(), TraceFormat::Jsonl);
        let a = sample();
        let mut b = sample();
        b.kind = RecordKind::Day;
        b.good = None;
        b.x_bar = None;
        w.record(&a).unwrap();
        w.record(&b).unwrap();
        let bytes = w.into_inner();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(!text.lines().nth(1).unwrap().contains("x_bar"));
        let back = read_trace(&bytes[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut w = TraceWriter::new(Vec::new(), TraceFormat::Csv);
        let a = sample();
        let mut b = sample();
        b.v.clear();
        b.zones.clear();
        b.good = None;
        w.record(&a).unwrap();
        w.record(&b).unwrap();
        let bytes = w.into_inner();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("t,kind,good,f,phi,misspending,x_bar,w_tilde,z_bar,delta_t,old_price,p_0,p_1,v_0"));
        assert_eq!(read_trace(&bytes[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn schema_errors_name_the_line() {
        let good = serde_json::to_string(&sample()).unwrap();
        let bad = good.replace("\"phi\"", "\"psi\"");
        let text = format!("{good}\n{bad}\n");
        match read_trace(text.as_bytes()) {
            Err(Error::Schema(m)) => assert!(m.starts_with("line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
