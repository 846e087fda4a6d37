//! CSV rows emitted by the experiment runner.
//!
//! Schema: `experiment,n,rho,h,statistic,value,stderr,samples,seed,verdict`.
//! Empty cells mean "not applicable".

use std::fmt;
use std::path::Path;

use crate::error::Result;

pub const HEADER: [&str; 10] = ["experiment", "n", "rho", "h", "statistic", "value", "stderr", "samples", "seed", "verdict"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A hypothesis monitor went red; the statistic is not judged.
    Invalid,
    /// Descriptive value without a criterion.
    Info,
}

impl Verdict {
    pub fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Invalid => "invalid",
            Verdict::Info => "info",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub n: Option<u32>,
    pub rho: Option<f64>,
    pub h: Option<f64>,
    pub statistic: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub verdict: Verdict,
}

impl Row {
    pub fn new(experiment: &str, statistic: impl Into<String>, value: f64, samples: usize, seed: u64) -> Self {
        Row {
            experiment: experiment.to_string(),
            n: None,
            rho: None,
            h: None,
            statistic: statistic.into(),
            value,
            stderr: None,
            samples,
            seed,
            verdict: Verdict::Info,
        }
    }

    pub fn n(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn stderr(mut self, s: f64) -> Self {
        self.stderr = Some(s);
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    pub fn judged(self, ok: bool) -> Self {
        self.verdict(Verdict::of(ok))
    }

    fn fields(&self) -> [String; 10] {
        // Debug keeps exact round-trip and switches to exponent form for tiny/huge values
        let num = |v: f64| format!("{v:?}");
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        [
            self.experiment.clone(),
            self.n.map(|v| v.to_string()).unwrap_or_default(),
            opt(self.rho),
            opt(self.h),
            self.statistic.clone(),
            num(self.value),
            opt(self.stderr),
            self.samples.to_string(),
            self.seed.to_string(),
            self.verdict.to_string(),
        ]
    }
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Rows whose verdict is `Fail` or `Invalid`.
pub fn failures(rows: &[Row]) -> Vec<&Row> {
    rows.iter().filter(|r| matches!(r.verdict, Verdict::Fail | Verdict::Invalid)).collect()
}
