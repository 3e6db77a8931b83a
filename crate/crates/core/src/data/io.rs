//! JSON-lines and CSV series files.
//!
//! JSON lines: `{"id", "freq", "tier", "values": [x | null], "mask": [0|1]}`,
//! with `tier` 0 for synthetic series and `mask` optional. CSV: one series
//! per column, header row as ids, blank cells masked.

use crate::data::series::TimeSeries;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    #[serde(default = "unknown_freq")]
    freq: String,
    #[serde(default)]
    tier: u8,
    values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<u8>>,
}

fn unknown_freq() -> String {
    "unknown".into()
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn from_record(r: Record, path: &Path, line: usize) -> Result<TimeSeries> {
    let mut mask: Vec<bool> = r.values.iter().map(Option::is_some).collect();
    if let Some(m) = &r.mask {
        if m.len() != r.values.len() {
            return Err(parse_error(path, line, "mask length differs from values"));
        }
        for (o, &flag) in mask.iter_mut().zip(m) {
            *o = *o && flag != 0;
        }
    }
    let tier = match r.tier {
        0 => None,
        t @ 1..=5 => Some(t),
        t => return Err(parse_error(path, line, format!("tier {t} outside 0..=5"))),
    };
    let values = r.values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let s = TimeSeries {
        id: r.id,
        freq: r.freq,
        tier,
        values,
        mask,
    };
    s.validate().map_err(|e| parse_error(path, line, e.to_string()))?;
    Ok(s)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        out.push(from_record(r, path, i + 1)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, series: &[TimeSeries]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl_to(&mut w, series)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_to(mut w: impl Write, series: &[TimeSeries]) -> Result<()> {
    for s in series {
        let all = s.mask.iter().all(|&m| m);
        let r = Record {
            id: s.id.clone(),
            freq: s.freq.clone(),
            tier: s.tier.unwrap_or(0),
            values: s
                .values
                .iter()
                .zip(&s.mask)
                .map(|(&v, &m)| if m { Some(v) } else { None })
                .collect(),
            mask: if all { None } else { Some(s.mask.iter().map(|&m| m as u8).collect()) },
        };
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Columns as series; trailing blank cells are dropped, inner blanks masked.
pub fn load_csv(path: impl AsRef<Path>, freq: &str, tier: Option<u8>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let ids: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_error(path, line, e.to_string()))?;
        if rec.len() > ids.len() {
            return Err(parse_error(path, line, format!("{} cells for {} columns", rec.len(), ids.len())));
        }
        for (c, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(c).unwrap_or("").trim();
            if cell.is_empty() {
                col.push(None);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("column {}: not a number: {cell:?}", ids[c])))?;
                col.push(Some(v));
            }
        }
    }
    let mut out = Vec::with_capacity(ids.len());
    for (id, mut col) in ids.into_iter().zip(cols) {
        while col.last() == Some(&None) {
            col.pop();
        }
        let mask: Vec<bool> = col.iter().map(Option::is_some).collect();
        let s = TimeSeries {
            id,
            freq: freq.to_string(),
            tier,
            values: col.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
            mask,
        };
        if s.observed_count() == 0 {
            log::warn!("column {} has no values; skipped", s.id);
            continue;
        }
        out.push(s);
    }
    Ok(out)
}

/// Load by extension: `.csv` as columns, anything else as JSON lines.
pub fn load_series(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_csv(path, "unknown", None),
        _ => load_jsonl(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_with_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let mut s = TimeSeries::new("a", "hourly", Some(2), vec![1.0, 2.5, -3.0]);
        s.mask[1] = false;
        s.values[1] = 0.0;
        let syn = TimeSeries::synthetic("b", vec![0.1; 4]);
        write_jsonl(&p, &[s.clone(), syn.clone()]).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), vec![s, syn]);
    }

    #[test]
    fn jsonl_malformed_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let mut f = File::create(&p).unwrap();
        writeln!(f, r#"{{"id":"a","values":[1,2]}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","values":[1,"x"]}}"#).unwrap();
        drop(f);
        match load_jsonl(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_columns_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "x,y\n1,4\n,5\n3,\n").unwrap();
        let s = load_csv(&p, "daily", None).unwrap();
        assert_eq!(s[0].values, vec![1.0, 0.0, 3.0]);
        assert_eq!(s[0].mask, vec![true, false, true]);
        assert_eq!(s[1].values, vec![4.0, 5.0]);
        std::fs::write(&p, "x,y\n1,4\n2,oops\n").unwrap();
        match load_csv(&p, "daily", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
