//! Writing run reports to disk: CSV tables, a JSON report, SVG plots and a
//! manifest of every written file with its SHA-256.

pub mod csv;
pub mod svg;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::run::{sha256_hex, RunReport};

/// One output file in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

pub trait Emitter: Send + Sync {
    fn name(&self) -> &'static str;
    fn render(&self, report: &RunReport) -> Result<Vec<OutputFile>>;
}

pub struct CsvEmitter;
pub struct SvgEmitter;

impl Emitter for CsvEmitter {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn render(&self, report: &RunReport) -> Result<Vec<OutputFile>> {
        let mut files = vec![
            OutputFile { name: "report.csv".into(), contents: csv::report(report) },
            OutputFile { name: "report.json".into(), contents: report_json(report)? },
        ];
        if !report.traces.is_empty() {
            files.push(OutputFile { name: "trace.csv".into(), contents: csv::traces(&report.traces) });
        }
        if let Some(s) = &report.sweep {
            files.push(OutputFile { name: "sweep.csv".into(), contents: csv::sweep(s) });
            files.push(OutputFile { name: "crossings.csv".into(), contents: csv::crossings(s) });
        }
        Ok(files)
    }
}

impl Emitter for SvgEmitter {
    fn name(&self) -> &'static str {
        "svg"
    }

    fn render(&self, report: &RunReport) -> Result<Vec<OutputFile>> {
        let mut files = Vec::new();
        for t in &report.traces {
            files.extend(svg::trace_panels(t));
        }
        if let Some(s) = &report.sweep {
            files.push(svg::sweep_panel(s));
        }
        Ok(files)
    }
}

pub fn default_registry() -> Registry<dyn Emitter> {
    let mut reg: Registry<dyn Emitter> = Registry::new("output format");
    reg.register("csv", Arc::new(CsvEmitter));
    reg.register("svg", Arc::new(SvgEmitter));
    reg
}

/// Structured report; infinities become `null` next to an `infinite` flag.
pub fn report_json(report: &RunReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|s| s + "\n")
        .map_err(|e| Error::input(format!("report serialization: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub scenario_sha256: String,
    pub tool: String,
    pub version: String,
    pub files: Vec<ManifestEntry>,
}

/// Renders every requested format without touching the filesystem.
pub fn render(report: &RunReport, formats: &[String]) -> Result<Vec<OutputFile>> {
    let reg = default_registry();
    let mut files = Vec::new();
    for f in formats {
        files.extend(reg.get(f)?.render(report)?);
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    files.dedup_by(|a, b| a.name == b.name);
    Ok(files)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Writes the requested formats and `manifest.json` into `dir`.
pub fn emit(report: &RunReport, dir: &Path, formats: &[String]) -> Result<Manifest> {
    let files = render(report, formats)?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for f in &files {
        let path: PathBuf = dir.join(&f.name);
        std::fs::write(&path, &f.contents).map_err(|e| io_err(&path, e))?;
        entries.push(ManifestEntry {
            file: f.name.clone(),
            bytes: f.contents.len(),
            sha256: sha256_hex(f.contents.as_bytes()),
        });
    }
    let manifest = Manifest {
        scenario: report.provenance.scenario.clone(),
        scenario_sha256: report.provenance.scenario_sha256.clone(),
        tool: report.provenance.tool.to_string(),
        version: report.provenance.version.to_string(),
        files: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}
