//! Per-second class probabilities produced by a model or an ensemble.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use autodiff::Tensor;

use crate::error::{format_err, invalid, Error, Result};
use crate::remap::marginals_unchecked;

const HEADER: &str = "# sleepnet-prediction 1";

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrack {
    pub record_id: String,
    /// `[wake, apnea, normal sleep, target arousal]` per second.
    pub probs: Vec<[f64; 4]>,
    /// Seconds of real data at the start of the track.
    pub valid_length_s: usize,
}

impl PredictionTrack {
    pub fn from_tensor(record_id: &str, probs: &Tensor, valid_length_s: usize) -> Result<Self> {
        if probs.shape().len() != 2 || probs.channels() != 4 {
            return Err(invalid(format!("expected 4 × N probabilities, got {:?}", probs.shape())));
        }
        let n = probs.len();
        if valid_length_s > n {
            return Err(invalid("valid length exceeds the prediction length"));
        }
        Ok(Self {
            record_id: record_id.to_string(),
            probs: (0..n)
                .map(|t| [probs.get2(0, t), probs.get2(1, t), probs.get2(2, t), probs.get2(3, t)])
                .collect(),
            valid_length_s,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn arousal(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| marginals_unchecked(p).arousal).collect()
    }

    pub fn apnea(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| marginals_unchecked(p).apnea).collect()
    }

    pub fn sleep(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| marginals_unchecked(p).sleep).collect()
    }

    /// Text form: header, `record_id`, `valid_length_s`, then one line of
    /// four probabilities per second. Values print in shortest round-trip
    /// form, so reading back is exact.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.probs.len() * 80);
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "record_id {}", self.record_id);
        let _ = writeln!(out, "valid_length_s {}", self.valid_length_s);
        for p in &self.probs {
            let _ = writeln!(out, "{} {} {} {}", p[0], p[1], p[2], p[3]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(format_err("not a prediction file"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().unwrap_or_default();
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| format_err(format!("prediction file lacks `{key}`")))
        };
        let record_id = field("record_id")?;
        let valid_length_s = field("valid_length_s")?
            .parse()
            .map_err(|_| format_err("bad valid_length_s"))?;
        let mut probs = Vec::new();
        for (i, line) in lines.enumerate() {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format_err(format!("bad probability line {}", i + 4)))?;
            let row: [f64; 4] = v
                .try_into()
                .map_err(|_| format_err(format!("line {} needs four values", i + 4)))?;
            probs.push(row);
        }
        if valid_length_s > probs.len() {
            return Err(format_err("valid length exceeds the prediction length"));
        }
        Ok(Self {
            record_id,
            probs,
            valid_length_s,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let t = PredictionTrack {
            record_id: "r1".into(),
            probs: vec![[0.1, 0.2, 0.3, 0.4], [1.0 / 3.0, 1.0 / 6.0, 0.25, 0.25]],
            valid_length_s: 1,
        };
        assert_eq!(PredictionTrack::parse(&t.render()).unwrap(), t);
    }

    #[test]
    fn marginals_follow_columns() {
        let t = PredictionTrack {
            record_id: "r".into(),
            probs: vec![[0.1, 0.2, 0.3, 0.4]],
            valid_length_s: 1,
        };
        assert_eq!(t.arousal(), vec![0.4]);
        assert_eq!(t.apnea(), vec![0.2]);
        assert!((t.sleep()[0] - 0.9).abs() < 1e-15);
    }
}
