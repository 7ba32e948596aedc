use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub struct Output {
    dir: PathBuf,
    format: Format,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    results: T,
}

impl Output {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Rows as `<stem>.csv` with a header, or as a JSON array in `<stem>.json`.
    pub fn table<R: Serialize>(&self, stem: &str, rows: &[R]) -> Result<PathBuf, CliError> {
        let (path, writer) = self.create(&format!("{stem}.{}", self.format.extension()))?;
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(writer);
                for row in rows {
                    w.serialize(row)
                        .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
                }
                w.flush().map_err(|e| CliError::io(&path, e))?;
            }
            Format::Json => {
                let mut w = writer;
                serde_json::to_writer_pretty(&mut w, rows)
                    .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
                w.flush().map_err(|e| CliError::io(&path, e))?;
            }
        }
        Ok(path)
    }

    /// `summary.json` with version, seed, resolved config and results, plus
    /// the resolved config as `resolved_config.toml`.
    pub fn summary<T: Serialize>(
        &self,
        command: &str,
        config: &RunConfig,
        results: T,
    ) -> Result<PathBuf, CliError> {
        let toml_path = self.dir.join("resolved_config.toml");
        std::fs::write(&toml_path, config.to_toml()?).map_err(|e| CliError::io(&toml_path, e))?;
        let (path, mut writer) = self.create("summary.json")?;
        let summary = Summary {
            version: VERSION,
            command,
            seed: config.seed,
            config,
            results,
        };
        serde_json::to_writer_pretty(&mut writer, &summary)
            .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
        writer
            .write_all(b"\n")
            .map_err(|e| CliError::io(&path, e))?;
        writer.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
