//! Scenario files, stage logs and audit reports on disk.
//!
//! A stage log is JSON Lines: a `LogHeader` on the first line, then one
//! `StageRecord` per tick. Every number in it is an integer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use boxpromo_core::log::{LogHeader, StageRecord, SCHEMA, SCHEMA_VERSION};
use boxpromo_core::scenario::Scenario;
use boxpromo_core::verifier::AuditReport;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{shipped, Error};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T, Error> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: line + e.line().saturating_sub(1),
        detail: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse(path, 1, &text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// A scenario from a file path, or else from the shipped set by name.
pub fn load_scenario(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    let scenario: Scenario = if path.exists() {
        read_json(path)?
    } else {
        shipped::get(arg).ok_or_else(|| Error::UnknownScenario(arg.into()))??
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn read_audit(path: &Path) -> Result<AuditReport, Error> {
    read_json(path)
}

/// Appends records to a stage log as they are produced.
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, Error> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = LogWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.line(header)?;
        Ok(w)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<(), Error> {
        serde_json::to_writer(&mut self.out, value).expect("serializable");
        self.out.write_all(b"\n").map_err(io_err(&self.path))
    }

    pub fn record(&mut self, rec: &StageRecord) -> Result<(), Error> {
        self.line(rec)
    }

    pub fn finish(mut self) -> Result<(), Error> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

pub fn write_log(path: &Path, header: &LogHeader, records: &[StageRecord]) -> Result<(), Error> {
    let mut w = LogWriter::create(path, header)?;
    for r in records {
        w.record(r)?;
    }
    w.finish()
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<StageRecord>), Error> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: LogHeader = match lines.next() {
        Some((_, line)) => parse(path, 1, &line.map_err(io_err(path))?)?,
        None => return Err(Error::Parse { path: path.to_path_buf(), line: 1, detail: "empty log".into() }),
    };
    if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("expected {SCHEMA} version {SCHEMA_VERSION}, found {} version {}", header.schema, header.version),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse(path, i + 1, &line)?);
    }
    Ok((header, records))
}
