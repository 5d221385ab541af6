//! Long-format CSV dataset exchange and the report tables.
//!
//! Data CSV: header `t,i,j,value`, one row per frame and cell, 0-based
//! indices. Mask CSV: header `i,j,inside` with `inside` in {0, 1}. Import
//! requires every cell of every frame exactly once; the grid shape is
//! inferred from the largest indices. Coordinates are not carried by CSV, so
//! imports sit on the unit grid.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use surfcast::grid::{FtsDataset, GridDomain, Mask, SurfaceField};
use surfcast::pipeline::RollingReport;
use surfcast::simulate::StudyResult;
use surfcast::{Dataset, Field};

use crate::errors::{CliError, CliResult, PathContext};

/// Formats a float the way `Display` does: the shortest string that parses
/// back to the same bits, so written tables are deterministic and lossless.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn export_data_csv(path: &Path, ds: &Dataset) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,i,j,value")?;
    let (n1, n2) = ds.domain().shape();
    for (t, frame) in ds.frames().iter().enumerate() {
        for i in 0..n1 {
            for j in 0..n2 {
                writeln!(w, "{t},{i},{j},{}", num(frame.values()[[i, j]]))?;
            }
        }
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn export_mask_csv(path: &Path, mask: &Mask) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "i,j,inside")?;
    let (n1, n2) = mask.shape();
    for i in 0..n1 {
        for j in 0..n2 {
            writeln!(w, "{i},{j},{}", mask.is_inside(i, j) as u8)?;
        }
    }
    w.flush().at_path(path)?;
    Ok(())
}

fn check_header(record: &csv::StringRecord, expected: &[&str], what: &str) -> CliResult<()> {
    let got: Vec<&str> = record.iter().map(|f| f.trim()).collect();
    if got != expected {
        return Err(CliError::data(format!(
            "csv::import: {what} header is {:?}, expected {:?}",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    line: u64,
    what: &str,
) -> CliResult<T> {
    let raw = record.get(idx).ok_or_else(|| {
        CliError::data(format!("csv::import: line {line}: missing {what} column"))
    })?;
    raw.trim().parse::<T>().map_err(|_| {
        CliError::data(format!("csv::import: line {line}: cannot parse {what} from {raw:?}"))
    })
}

pub fn import_data_csv(path: &Path) -> CliResult<(Vec<Field>, usize, usize)> {
    const OP: &str = "csv::import_data";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .at_path(path)?;
    check_header(reader.headers().at_path(path)?, &["t", "i", "j", "value"], "data")?;

    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    let (mut max_t, mut max_i, mut max_j) = (0usize, 0usize, 0usize);
    for result in reader.records() {
        let record = result.at_path(path)?;
        let line = record.position().map_or(0, |p| p.line());
        let t: usize = parse_field(&record, 0, line, "t")?;
        let i: usize = parse_field(&record, 1, line, "i")?;
        let j: usize = parse_field(&record, 2, line, "j")?;
        let v: f64 = parse_field(&record, 3, line, "value")?;
        max_t = max_t.max(t);
        max_i = max_i.max(i);
        max_j = max_j.max(j);
        rows.push((t, i, j, v));
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{OP}: no data rows")));
    }
    let (t_len, n1, n2) = (max_t + 1, max_i + 1, max_j + 1);

    let mut slots: Vec<Option<f64>> = vec![None; t_len * n1 * n2];
    for (t, i, j, v) in rows {
        let slot = &mut slots[(t * n1 + i) * n2 + j];
        if slot.is_some() {
            return Err(CliError::data(format!("{OP}: duplicate cell (t={t}, i={i}, j={j})")));
        }
        *slot = Some(v);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        let t = missing / (n1 * n2);
        let i = missing / n2 % n1;
        let j = missing % n2;
        return Err(CliError::data(format!(
            "{OP}: missing cell (t={t}, i={i}, j={j}) on the inferred {n1}x{n2}x{t_len} grid"
        )));
    }

    let frames: Vec<Field> = (0..t_len)
        .map(|t| {
            let values: Vec<f64> = (0..n1 * n2)
                .map(|c| slots[t * n1 * n2 + c].expect("completeness checked above"))
                .collect();
            SurfaceField::new(
                Array2::from_shape_vec((n1, n2), values).expect("length matches by construction"),
            )
        })
        .collect();
    Ok((frames, n1, n2))
}

pub fn import_mask_csv(path: &Path, n1: usize, n2: usize) -> CliResult<Mask> {
    const OP: &str = "csv::import_mask";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .at_path(path)?;
    check_header(reader.headers().at_path(path)?, &["i", "j", "inside"], "mask")?;

    let mut slots: Vec<Option<bool>> = vec![None; n1 * n2];
    for result in reader.records() {
        let record = result.at_path(path)?;
        let line = record.position().map_or(0, |p| p.line());
        let i: usize = parse_field(&record, 0, line, "i")?;
        let j: usize = parse_field(&record, 1, line, "j")?;
        let raw: String = parse_field(&record, 2, line, "inside")?;
        let inside = match raw.as_str() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(CliError::data(format!(
                    "{OP}: line {line}: inside is {other:?}, expected 0/1/true/false"
                )))
            }
        };
        if i >= n1 || j >= n2 {
            return Err(CliError::data(format!(
                "{OP}: cell (i={i}, j={j}) outside the {n1}x{n2} data grid"
            )));
        }
        let slot = &mut slots[i * n2 + j];
        if slot.is_some() {
            return Err(CliError::data(format!("{OP}: duplicate cell (i={i}, j={j})")));
        }
        *slot = Some(inside);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(CliError::data(format!(
            "{OP}: missing cell (i={}, j={}) on the {n1}x{n2} data grid",
            missing / n2,
            missing % n2
        )));
    }
    let inside =
        Array2::from_shape_vec((n1, n2), slots.into_iter().map(Option::unwrap).collect())
            .expect("length matches by construction");
    Ok(Mask::new(inside)?)
}

pub fn assemble_dataset(frames: Vec<Field>, n1: usize, n2: usize, mask: Option<Mask>) -> CliResult<Dataset> {
    let domain = GridDomain::unit(n1, n2)?;
    Ok(FtsDataset::new(domain, frames, mask, None)?)
}

/// Quotes a free-text field CSV-style when it contains a delimiter, quote, or
/// newline.
fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_study_replications(path: &Path, result: &StudyResult<f64>) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "method,T,b,rep,covered,band_size,seed")?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method.name(),
            r.t_len,
            r.block_size,
            r.rep,
            r.covered as u8,
            num(r.band_size),
            r.seed
        )?;
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn write_study_aggregates(path: &Path, result: &StudyResult<f64>) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "method,T,b,n_ok,n_failed,coverage,ci_low,ci_high,mean_band_size")?;
    for a in &result.aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            a.method.name(),
            a.t_len,
            a.block_size,
            a.n_ok,
            a.n_failed,
            num(a.coverage),
            num(a.ci_low),
            num(a.ci_high),
            num(a.mean_band_size)
        )?;
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn write_study_failures(path: &Path, result: &StudyResult<f64>) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "method,T,b,rep,seed,message")?;
    for f in &result.failures {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            f.method.map_or("", |m| m.name()),
            f.t_len,
            f.block_size,
            f.rep,
            f.seed,
            csv_text(&f.message)
        )?;
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn write_rolling_shifts(path: &Path, report: &RollingReport<f64>) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "shift,covered,band_size,seed")?;
    for s in &report.shifts {
        writeln!(w, "{},{},{},{}", s.shift, s.covered as u8, num(s.band_size), s.seed)?;
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn write_rolling_failures(path: &Path, report: &RollingReport<f64>) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "shift,seed,message")?;
    for f in &report.failures {
        writeln!(w, "{},{},{}", f.shift, f.seed, csv_text(&f.message))?;
    }
    w.flush().at_path(path)?;
    Ok(())
}
