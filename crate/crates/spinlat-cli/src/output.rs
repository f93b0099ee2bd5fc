//! Output files, the run manifest and exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Failure classes, one exit code each.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl From<spinlat::Error> for CliError {
    fn from(e: spinlat::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    exit_code: i32,
    message: &'a str,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    parameters: &'a serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_clock_seconds: f64,
    residuals: &'a BTreeMap<String, f64>,
    status: &'a str,
    error: Option<ErrorRecord<'a>>,
}

/// Collects written files and diagnostics for the manifest.
pub struct Run {
    command: String,
    dir: PathBuf,
    parameters: serde_json::Value,
    pub seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    residuals: BTreeMap<String, f64>,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, dir: &Path, parameters: serde_json::Value) -> Self {
        Run {
            command: command.to_string(),
            dir: dir.to_path_buf(),
            parameters,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            residuals: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_string(), value);
    }

    fn target(&mut self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        Ok(p)
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.target(name)?;
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let p = self.target(name)?;
        fs::write(&p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(p)
    }

    pub fn text(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let p = self.target(name)?;
        fs::write(&p, body)?;
        Ok(p)
    }

    /// Writes `manifest.json`; on failure also prints the error record to
    /// stderr. Returns the exit code.
    pub fn finish(self, outcome: &CliResult<()>) -> i32 {
        let error = outcome.as_ref().err().map(|e| ErrorRecord { kind: e.kind(), exit_code: e.exit_code(), message: e.message() });
        let code = error.as_ref().map_or(0, |e| e.exit_code);
        let show = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let manifest = RunManifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            parameters: &self.parameters,
            seed: self.seed,
            inputs: show(&self.inputs),
            outputs: show(&self.outputs),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            residuals: &self.residuals,
            status: if error.is_some() { "error" } else { "ok" },
            error,
        };
        if let Some(e) = &manifest.error {
            eprintln!("{}", serde_json::to_string(e).expect("error record serializes"));
        }
        let written = fs::create_dir_all(&self.dir)
            .and_then(|_| fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"));
        if let Err(e) = written {
            eprintln!("could not write manifest: {e}");
            return code.max(3);
        }
        code
    }
}
