//! Dataset CSV format.
//!
//! ```text
//! # system: msd_chain_20
//! # sample_time: 5.0000000000000000e-2
//! # contiguous: true
//! # seed: 7
//! # process_variances: 1.0e-4;1.0e-4
//! # measurement_variances: 2.0e-3
//! x0,x1,x_next0,x_next1,u0,y0
//! ...
//! ```
//!
//! Values are written with 17 significant digits so a round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::dataset::{Dataset, Provenance, Record};
use super::system::Dims;
use crate::error::{Error, Result};

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

pub fn write_csv<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# system: {}", d.provenance.system)?;
    writeln!(out, "# sample_time: {}", fmt_f64(d.sample_time))?;
    writeln!(out, "# contiguous: {}", d.contiguous)?;
    if let Some(seed) = d.provenance.seed {
        writeln!(out, "# seed: {seed}")?;
    }
    writeln!(out, "# process_variances: {}", fmt_list(&d.provenance.process_variances))?;
    writeln!(
        out,
        "# measurement_variances: {}",
        fmt_list(&d.provenance.measurement_variances)
    )?;
    let mut w = csv::Writer::from_writer(out);
    let Dims { n_x, n_u, n_y } = d.dims;
    let header: Vec<String> = (0..n_x)
        .map(|i| format!("x{i}"))
        .chain((0..n_x).map(|i| format!("x_next{i}")))
        .chain((0..n_u).map(|i| format!("u{i}")))
        .chain((0..n_y).map(|i| format!("y{i}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in &d.records {
        let row = r
            .x
            .iter()
            .chain(&r.x_next)
            .chain(&r.u)
            .chain(&r.y)
            .map(|v| fmt_f64(*v));
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_csv(d, std::io::BufWriter::new(file))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_list(s: &str, line: usize) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad number {v:?}: {e}"),
            })
        })
        .collect()
}

/// Splits `name` into role prefix and channel index, e.g. `x_next3` → (`x_next`, 3).
fn parse_column(name: &str) -> Option<(&str, usize)> {
    let pos = name.find(|c: char| c.is_ascii_digit())?;
    let (role, idx) = name.split_at(pos);
    Some((role, idx.parse().ok()?))
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut provenance = Provenance::default();
    let mut sample_time = None;
    let mut contiguous = false;
    let mut body_start = 0;
    let mut header_line = 1;
    for (i, line) in text.lines().enumerate() {
        let Some(meta) = line.strip_prefix('#') else {
            header_line = i + 1;
            break;
        };
        body_start += line.len() + 1;
        let line_no = i + 1;
        let Some((key, value)) = meta.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "system" => provenance.system = value.to_string(),
            "sample_time" => {
                sample_time = Some(value.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad sample time: {e}"),
                })?)
            }
            "contiguous" => contiguous = value == "true",
            "seed" => {
                provenance.seed = Some(value.parse().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad seed: {e}"),
                })?)
            }
            "process_variances" => provenance.process_variances = parse_list(value, line_no)?,
            "measurement_variances" => {
                provenance.measurement_variances = parse_list(value, line_no)?
            }
            _ => {}
        }
    }
    let body = text.get(body_start..).unwrap_or("");
    if body.trim().is_empty() {
        return Err(Error::Parse {
            line: header_line,
            message: "missing header row".into(),
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    let mut counts = [0usize; 4];
    const ROLES: [&str; 4] = ["x", "x_next", "u", "y"];
    let mut expected_role = 0;
    for name in header.iter() {
        let (role, idx) = parse_column(name.trim()).ok_or_else(|| Error::Parse {
            line: header_line,
            message: format!("unrecognized column {name:?}"),
        })?;
        let r = ROLES
            .iter()
            .position(|x| *x == role)
            .ok_or_else(|| Error::Parse {
                line: header_line,
                message: format!("unknown column role {role:?}"),
            })?;
        if r < expected_role || idx != counts[r] {
            return Err(Error::Parse {
                line: header_line,
                message: format!("column {name:?} out of order"),
            });
        }
        expected_role = r;
        counts[r] += 1;
    }
    if counts[0] != counts[1] {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "{} state columns but {} next-state columns",
                counts[0], counts[1]
            ),
        });
    }
    let dims = Dims {
        n_x: counts[0],
        n_u: counts[2],
        n_y: counts[3],
    };
    let width = header.len();

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = header_line + row.position().map_or(0, |p| p.line() as usize) - 1;
        if row.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", row.len()),
            });
        }
        let vals = row
            .iter()
            .map(|v| {
                v.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("bad number {v:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (x, rest) = vals.split_at(dims.n_x);
        let (x_next, rest) = rest.split_at(dims.n_x);
        let (u, y) = rest.split_at(dims.n_u);
        records.push(Record {
            x: x.to_vec(),
            x_next: x_next.to_vec(),
            u: u.to_vec(),
            y: y.to_vec(),
        });
    }
    Ok(Dataset {
        records,
        dims,
        sample_time: sample_time.unwrap_or(1.0),
        contiguous,
        provenance,
    })
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_csv(&fs::read_to_string(path)?)
}
