//! Metric records and their CSV / JSON-lines encodings.
//!
//! CSV columns: `run,seed,epoch,split,metric,value,seconds`. Values use the
//! shortest representation that round-trips, so rerunning a seeded
//! experiment reproduces every column except `seconds`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "run,seed,epoch,split,metric,value,seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Accuracy,
    CrossEntropy,
    Perplexity,
    MeanDepth,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Accuracy => "accuracy",
            Metric::CrossEntropy => "cross_entropy",
            Metric::Perplexity => "perplexity",
            Metric::MeanDepth => "mean_depth",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy)
    }

    /// True when `a` beats `b` under this metric.
    pub fn improves(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::Mse,
            Metric::Accuracy,
            Metric::CrossEntropy,
            Metric::Perplexity,
            Metric::MeanDepth,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::parse("metric", format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::parse("split", format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run: String,
    pub seed: u64,
    pub epoch: usize,
    pub split: Split,
    pub metric: Metric,
    pub value: f64,
    pub seconds: f64,
}

impl MetricsRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:?},{:.3}",
            self.run, self.seed, self.epoch, self.split, self.metric, self.value, self.seconds
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse("metrics row", format!("expected 7 columns in `{line}`")));
        }
        let bad = |e: &dyn fmt::Display| Error::parse("metrics row", format!("{e} in `{line}`"));
        Ok(Self {
            run: f[0].to_string(),
            seed: f[1].parse().map_err(|e| bad(&e))?,
            epoch: f[2].parse().map_err(|e| bad(&e))?,
            split: f[3].parse()?,
            metric: f[4].parse()?,
            value: f[5].parse().map_err(|e| bad(&e))?,
            seconds: f[6].parse().map_err(|e| bad(&e))?,
        })
    }
}

pub fn write_csv(out: &mut impl Write, records: &[MetricsRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn write_json_lines(out: &mut impl Write, records: &[MetricsRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.json_line())?;
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::parse("metrics file", format!("expected header `{CSV_HEADER}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRecord::parse_csv_line)
        .collect()
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(value: f64) -> MetricsRecord {
        MetricsRecord {
            run: "synthetic-eirehn-h10".into(),
            seed: 3,
            epoch: 12,
            split: Split::Val,
            metric: Metric::Mse,
            value,
            seconds: 1.25,
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![record(0.001234), record(1e-300)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(parse_csv(&text).unwrap(), recs);
    }

    #[test]
    fn json_line_fields() {
        let line = record(0.5).json_line();
        assert!(line.contains("\"metric\":\"mse\""));
        assert!(line.contains("\"split\":\"val\""));
        let back: MetricsRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record(0.5));
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(parse_csv("nope\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\na,b,c\n")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nr,1,1,val,loss,0.1,0.0\n")).is_err());
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(Metric::Accuracy.improves(0.9, 0.8));
        assert!(Metric::Mse.improves(0.1, 0.2));
    }

    proptest! {
        #[test]
        fn value_column_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let r = record(v);
            prop_assert_eq!(MetricsRecord::parse_csv_line(&r.csv_line()).unwrap().value, v);
        }
    }
}
