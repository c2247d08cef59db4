//! JSON and CSV emission with a schema version stamp.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub struct Emitter {
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Emitter {
    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(File::create(path).with_context(|| format!("creating `{}`", path.display()))?),
            None => Box::new(io::stdout().lock()),
        })
    }

    /// Writes `body` (an object) with `schema_version`, `command` and `seed` added.
    pub fn json(&self, command: &str, body: Value) -> Result<()> {
        let mut obj = match body {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        obj.insert("schema_version".into(), SCHEMA_VERSION.into());
        obj.insert("command".into(), command.into());
        obj.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        let mut w = self.sink()?;
        serde_json::to_writer_pretty(&mut w, &Value::Object(obj))?;
        writeln!(w)?;
        Ok(())
    }

    /// Writes a `# schema_version: N` line, then a header and rows.
    pub fn csv(&self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = self.sink()?;
        writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }
}
