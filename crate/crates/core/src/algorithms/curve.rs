use std::fmt::Write as _;
use std::path::Path;

use crate::Error;
use crate::Result;

pub const RESULTS_HEADER: &str = "trial,env_steps,episode_return,train_epochs,seconds";

/// One completed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// 1-based.
    pub trial: usize,
    /// Cumulative environment steps taken in trials (exploration excluded).
    pub env_steps: usize,
    pub episode_return: f64,
    /// Model training epochs run during this trial.
    pub train_epochs: usize,
    /// Cumulative simulated environment time, `env_steps * dt`.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    pub fn returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.episode_return).collect()
    }

    /// Mean return over the last `n` trials (fewer if the curve is shorter).
    pub fn mean_last(&self, n: usize) -> Option<f64> {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|r| r.episode_return).sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.trial, r.env_steps, r.episode_return, r.train_epochs, r.seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == RESULTS_HEADER => {}
            other => return Err(Error::parse(format!("expected header `{RESULTS_HEADER}`, found {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(format!("line {}: expected 5 fields, found {}", i + 2, f.len())));
            }
            let bad = |what: &str| Error::parse(format!("line {}: bad {what}", i + 2));
            rows.push(CurveRow {
                trial: f[0].parse().map_err(|_| bad("trial"))?,
                env_steps: f[1].parse().map_err(|_| bad("env_steps"))?,
                episode_return: f[2].parse().map_err(|_| bad("episode_return"))?,
                train_epochs: f[3].parse().map_err(|_| bad("train_epochs"))?,
                seconds: f[4].parse().map_err(|_| bad("seconds"))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
