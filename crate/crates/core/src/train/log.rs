use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub phase: String,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

/// Collects step records and optionally streams them as JSON lines.
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    sink: Option<(BufWriter<File>, std::path::PathBuf)>,
    start: Instant,
}

impl Default for TrainLog {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TrainLog {
    pub fn in_memory() -> Self {
        TrainLog {
            records: Vec::new(),
            sink: None,
            start: Instant::now(),
        }
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TrainLog {
            records: Vec::new(),
            sink: Some((BufWriter::new(f), path.to_path_buf())),
            start: Instant::now(),
        })
    }

    pub fn record(&mut self, phase: &str, step: usize, loss: f64, lr: f64) -> Result<()> {
        let rec = LogRecord {
            phase: phase.to_string(),
            step,
            loss,
            lr,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        };
        if let Some((w, path)) = &mut self.sink {
            let line = serde_json::to_string(&rec)?;
            writeln!(w, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some((w, path)) = &mut self.sink {
            w.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        Ok(())
    }
}
