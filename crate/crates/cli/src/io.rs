//! Small file helpers shared by the commands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(rolpv::Error::from)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, hint: &str) -> CliResult<T> {
    require(path, hint)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        source: rolpv::Error::Parse {
            line: e.line(),
            message: e.to_string(),
        },
    })
}

pub fn read_dataset(path: &Path, hint: &str) -> CliResult<rolpv::datagen::Dataset> {
    require(path, hint)?;
    rolpv::datagen::import_csv(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Header-led CSV of input samples; every column is one input channel.
pub fn read_inputs(path: &Path) -> rolpv::Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| parse_error(0, e))?;
    let width = reader.headers().map_err(|e| parse_error(1, e))?.len();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_error(line, e))?;
        if rec.len() != width {
            return Err(rolpv::Error::Parse {
                line,
                message: format!("expected {width} columns, got {}", rec.len()),
            });
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_error(line, e))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(rolpv::Error::Parse {
            line: 1,
            message: "no input samples".into(),
        });
    }
    Ok(rows)
}

fn parse_error(line: usize, e: impl std::fmt::Display) -> rolpv::Error {
    rolpv::Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_inputs(path: &Path, inputs: &[Vec<f64>]) -> CliResult<()> {
    let n_u = inputs.first().map_or(0, Vec::len);
    let mut s = (0..n_u).map(|i| format!("u{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for u in inputs {
        s.push_str(&u.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

/// Two-column `epoch,loss` log.
pub fn write_loss_log(path: &Path, losses: &[f64]) -> CliResult<()> {
    let mut s = String::from("epoch,loss\n");
    for (k, l) in losses.iter().enumerate() {
        s.push_str(&format!("{k},{}\n", fmt_f64(*l)));
    }
    write_text(path, &s)
}

pub fn read_loss_log(path: &Path) -> rolpv::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let (_, v) = line.split_once(',').ok_or_else(|| parse_error(i + 1, "missing comma"))?;
            v.parse().map_err(|e| parse_error(i + 1, e))
        })
        .collect()
}

/// Rows of `columns` under `header`; `None` cells are left empty.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<Option<f64>>]) -> CliResult<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| c.map(fmt_f64).unwrap_or_default()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        let u = vec![vec![0.1, -2.0], vec![1e-300, 3.5]];
        write_inputs(&p, &u).unwrap();
        assert_eq!(read_inputs(&p).unwrap(), u);
    }

    #[test]
    fn ragged_input_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        fs::write(&p, "u0,u1\n1,2\n3\n").unwrap();
        assert!(matches!(read_inputs(&p), Err(rolpv::Error::Parse { line: 3, .. })));
    }

    #[test]
    fn loss_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let l = vec![1.0, 0.123456789012345678, 1e-17];
        write_loss_log(&p, &l).unwrap();
        assert_eq!(read_loss_log(&p).unwrap(), l);
    }
}
