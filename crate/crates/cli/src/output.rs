//! Result files. Every file but the timestamp line is a pure function of the
//! config and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use caflow_core::flow::{csv_rows, curve_rows, DensityFlow};
use serde::Serialize;

use crate::error::CliError;

pub struct Writer {
    dir: PathBuf,
    reproducible: bool,
}

impl Writer {
    pub fn new(dir: &Path, reproducible: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            reproducible,
        })
    }

    fn timestamp(&self) -> Option<u64> {
        if self.reproducible {
            return None;
        }
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }

    fn csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let mut file = BufWriter::new(File::create(self.dir.join(name))?);
        if let Some(ts) = self.timestamp() {
            writeln!(file, "# generated_unix={ts}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn results_csv(&self, id: &str, flow: &DensityFlow) -> Result<(), CliError> {
        let rows = flow
            .curves
            .iter()
            .flat_map(|c| c.points.iter())
            .flat_map(|e| csv_rows(id, e));
        self.csv("results.csv", rows)
    }

    pub fn convergence_csv(&self, id: &str, flow: &DensityFlow) -> Result<(), CliError> {
        self.csv("convergence.csv", curve_rows(id, flow))
    }

    pub fn json<T: Serialize>(&self, name: &str, id: &str, body: &T) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "experiment_id": id,
            "generated_unix": self.timestamp(),
            "report": body,
        });
        let mut file = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut file, &doc)?;
        writeln!(file)?;
        Ok(())
    }
}
