// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Result emission: CSV or JSON lines, plus `summary.json`.

use std::fs::File;
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::OutputFormat;
use super::run::{ResultRow, RunOutput};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["trial", "step", "quantity", "value"];
pub const SUMMARY_FILE: &str = "summary.json";

pub fn results_file_name(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::Json => "results.jsonl",
    }
}

/// A parsed CSV row; provenance lives in `summary.json` for this format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub trial: u64,
    pub step: u64,
    pub quantity: String,
    pub value: Value,
}

/// Header plus one line per row; the value cell holds the JSON encoding of
/// the value.
pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.trial.to_string(),
            r.step.to_string(),
            r.quantity.clone(),
            serde_json::to_string(&r.value)?,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json_lines<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad integer {:?} in column {}", &rec[i], CSV_HEADER[i])))
        };
        out.push(CsvRecord {
            trial: parse(0)?,
            step: parse(1)?,
            quantity: rec[2].to_string(),
            value: serde_json::from_str(&rec[3])?,
        });
    }
    Ok(out)
}

pub fn read_json_lines<R: BufRead>(r: R) -> Result<Vec<ResultRow>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: OutputFormat, w: W) -> Result<()> {
    match format {
        OutputFormat::Csv => write_csv(rows, w),
        OutputFormat::Json => write_json_lines(rows, w),
    }
}

/// Writes `rows` to the file at `path`.
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    write_rows(rows, format, BufWriter::new(File::create(path)?))
}

/// Writes the results file and `summary.json` into `dir`, creating it if
/// needed. Returns the results path.
pub fn write_run(output: &RunOutput, format: OutputFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(results_file_name(format));
    emit_results(&output.rows, format, &path)?;
    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    std::fs::write(dir.join(SUMMARY_FILE), summary)?;
    Ok(path)
}
