//! Adjusted geometric mean of the three metrics and everything built on it.
//!
//! ```text
//! GM_t = ( [100 acc - t1]+ * [100 sim - t2]+ * min([t3 - pp]+, [pp - t4]+) )^(1/3)
//! ```

mod fit;
mod report;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_gm_params, gm_gradient, FitConfig, FitResult};
pub use report::{evaluate, EvaluationSuite, MetricReport, RecordScore, REPORT_FORMAT_VERSION, REPORT_SCHEMA};
pub use select::{select_checkpoint, write_trajectory_csv, TrajectoryPoint};

/// The four thresholds of the adjusted geometric mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmParams {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl Default for GmParams {
    /// `(63, 71, 97, -37)`, fit on human preferences over Yelp and
    /// literature transfer outputs.
    fn default() -> Self {
        GmParams {
            t1: 63.0,
            t2: 71.0,
            t3: 97.0,
            t4: -37.0,
        }
    }
}

impl GmParams {
    pub fn new(t1: f64, t2: f64, t3: f64, t4: f64) -> Result<Self> {
        let p = GmParams { t1, t2, t3, t4 };
        p.validate()?;
        Ok(p)
    }

    /// Thresholds must be finite and `t3 > t4`; otherwise the perplexity
    /// factor is identically zero.
    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite GM threshold in {self}")));
        }
        if self.t3 <= self.t4 {
            return Err(Error::Invalid(format!("GM thresholds need t3 > t4, got {self}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.t1, self.t2, self.t3, self.t4]
    }

    pub fn from_array(t: [f64; 4]) -> Self {
        GmParams {
            t1: t[0],
            t2: t[1],
            t3: t[2],
            t4: t[3],
        }
    }
}

impl fmt::Display for GmParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.t1, self.t2, self.t3, self.t4)
    }
}

impl FromStr for GmParams {
    type Err = Error;

    /// Parses `t1,t2,t3,t4`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("cannot parse GM threshold {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let t: [f64; 4] = values
            .try_into()
            .map_err(|v: Vec<f64>| Error::Invalid(format!("expected 4 GM thresholds, got {}", v.len())))?;
        let p = GmParams::from_array(t);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Sentence,
    Corpus,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Sentence => "sentence",
            Granularity::Corpus => "corpus",
        })
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "corpus" => Ok(Granularity::Corpus),
            other => Err(Error::Invalid(format!("unknown granularity {other:?}"))),
        }
    }
}

/// Accuracy, similarity and perplexity of one sentence or one corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub acc: f64,
    pub sim: f64,
    pub pp: f64,
    #[serde(default)]
    pub granularity: Granularity,
}

impl MetricTriple {
    /// Checked constructor: `acc` in [0, 1], `sim` in [-1, 1], `pp >= 1`.
    pub fn new(acc: f64, sim: f64, pp: f64, granularity: Granularity) -> Result<Self> {
        let m = MetricTriple {
            acc,
            sim,
            pp,
            granularity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.acc) {
            return Err(Error::Invalid(format!("acc {} outside [0, 1]", self.acc)));
        }
        if !(-1.0..=1.0).contains(&self.sim) {
            return Err(Error::Invalid(format!("sim {} outside [-1, 1]", self.sim)));
        }
        if !(self.pp >= 1.0 && self.pp.is_finite()) {
            return Err(Error::Invalid(format!("pp {} is not a finite value >= 1", self.pp)));
        }
        Ok(())
    }
}

/// The three clamped factors of the geometric mean.
pub(crate) fn gm_factors(m: &MetricTriple, p: &GmParams) -> [f64; 3] {
    [
        (100.0 * m.acc - p.t1).max(0.0),
        (100.0 * m.sim - p.t2).max(0.0),
        (p.t3 - m.pp).max(0.0).min((m.pp - p.t4).max(0.0)),
    ]
}

/// Adjusted geometric mean; 0 whenever any clamped factor is 0.
pub fn gm_score(m: &MetricTriple, p: &GmParams) -> f64 {
    let [a, s, f] = gm_factors(m, p);
    (a * s * f).cbrt()
}

/// A human preference between two outputs: `winner` was judged better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner: MetricTriple,
    pub loser: MetricTriple,
    pub annotation_id: String,
}

/// `max(0, 1 - GM(winner) + GM(loser))`.
pub fn gm_hinge_loss(p: &GmParams, pair: &PreferencePair) -> f64 {
    (1.0 - gm_score(&pair.winner, p) + gm_score(&pair.loser, p)).max(0.0)
}

/// Reads preference pairs from JSON lines, skipping blank lines.
pub fn load_preference_pairs(path: impl AsRef<std::path::Path>) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: PreferencePair =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if pair.winner.granularity != pair.loser.granularity {
            return Err(Error::parse(path, i + 1, "winner and loser have different granularities"));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}
