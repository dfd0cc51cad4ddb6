use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Telemetry of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    pub loss_d: f64,
    pub loss_c: f64,
    pub loss_g: f64,
    pub loss_g_adversarial: f64,
    pub loss_g_identity: f64,
    pub real_score: f64,
    pub fake_score: f64,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        [
            self.loss_d,
            self.loss_c,
            self.loss_g,
            self.loss_g_adversarial,
            self.loss_g_identity,
            self.real_score,
            self.fake_score,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl fmt::Display for StepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iteration={} loss_d={:.6} loss_c={:.6} loss_g={:.6} loss_g_adv={:.6} loss_g_id={:.6} d_real={:.6} d_fake={:.6}",
            self.iteration,
            self.loss_d,
            self.loss_c,
            self.loss_g,
            self.loss_g_adversarial,
            self.loss_g_identity,
            self.real_score,
            self.fake_score
        )
    }
}

/// Plain-text log with one `key=value` record per line.
pub struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(RunLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn record(&mut self, line: impl fmt::Display) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_key_value_lines() {
        let r = StepReport {
            iteration: 3,
            loss_d: 1.0,
            loss_c: 2.0,
            loss_g: 3.0,
            loss_g_adversarial: 1.5,
            loss_g_identity: 1.5,
            real_score: 0.5,
            fake_score: 0.25,
        };
        let line = r.to_string();
        assert!(line.starts_with("iteration=3 loss_d=1.000000"));
        assert_eq!(line.split(' ').count(), 8);
        assert!(line.split(' ').all(|kv| kv.split_once('=').is_some()));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.log");
        let mut log = RunLog::create(&p).unwrap();
        log.record(r).unwrap();
        log.record(r).unwrap();
        log.flush().unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap().lines().count(), 2);
    }
}
