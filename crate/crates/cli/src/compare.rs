//! Metric-by-metric comparison of a report against a golden file.
//!
//! Tolerances are `abs:<x>` (|actual - golden| <= x) or `rel:<x>`
//! (|actual - golden| <= x * |golden|); a bare number is absolute. A
//! tolerance file holds `metric = tolerance` lines, and the key `default`
//! applies to metrics without their own line.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToleranceError {
    #[error("invalid tolerance `{0}` (use abs:<x>, rel:<x> or a number)")]
    Value(String),
    #[error("line {0}: expected `metric = tolerance`")]
    Syntax(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Abs(f64),
    Rel(f64),
}

impl Tolerance {
    pub fn accepts(self, actual: f64, golden: f64) -> bool {
        let diff = (actual - golden).abs();
        match self {
            Tolerance::Abs(t) => diff <= t,
            Tolerance::Rel(t) => diff <= t * golden.abs(),
        }
    }
}

impl FromStr for Tolerance {
    type Err = ToleranceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ToleranceError::Value(s.to_string());
        let s = s.trim();
        let (make, num): (fn(f64) -> Tolerance, &str) = if let Some(x) = s.strip_prefix("abs:") {
            (Tolerance::Abs, x)
        } else if let Some(x) = s.strip_prefix("rel:") {
            (Tolerance::Rel, x)
        } else {
            (Tolerance::Abs, s)
        };
        let x: f64 = num.trim().parse().map_err(|_| err())?;
        if x.is_nan() || x < 0.0 || x.is_infinite() {
            return Err(err());
        }
        Ok(make(x))
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Abs(x) => write!(f, "abs:{x}"),
            Tolerance::Rel(x) => write!(f, "rel:{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub default: Tolerance,
    pub per_metric: BTreeMap<String, Tolerance>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            default: Tolerance::Rel(1e-9),
            per_metric: BTreeMap::new(),
        }
    }
}

impl Tolerances {
    pub fn parse(text: &str) -> Result<Tolerances, ToleranceError> {
        let mut t = Tolerances::default();
        for (i, raw) in text.lines().enumerate() {
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or(ToleranceError::Syntax(i + 1))?;
            t.set(k.trim(), v.parse()?);
        }
        Ok(t)
    }

    pub fn set(&mut self, metric: &str, tol: Tolerance) {
        if metric == "default" {
            self.default = tol;
        } else {
            self.per_metric.insert(metric.to_string(), tol);
        }
    }

    pub fn get(&self, metric: &str) -> Tolerance {
        self.per_metric.get(metric).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub metric: String,
    pub golden: f64,
    /// `None` when the report lacks the metric.
    pub actual: Option<f64>,
    pub tolerance: Tolerance,
    pub pass: bool,
}

/// Checks every golden metric against the report.
pub fn compare(
    actual: &BTreeMap<String, f64>,
    golden: &BTreeMap<String, f64>,
    tol: &Tolerances,
) -> Vec<Verdict> {
    golden
        .iter()
        .map(|(metric, &g)| {
            let a = actual.get(metric).copied();
            let tolerance = tol.get(metric);
            Verdict {
                metric: metric.clone(),
                golden: g,
                actual: a,
                tolerance,
                pass: a.is_some_and(|a| tolerance.accepts(a, g)),
            }
        })
        .collect()
}

pub fn table(verdicts: &[Verdict]) -> String {
    let mut s = String::from("verdict metric golden actual tolerance\n");
    for v in verdicts {
        let actual = v
            .actual
            .map_or_else(|| "missing".to_string(), |a| a.to_string());
        s += &format!(
            "{} {} {} {} {}\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.metric,
            v.golden,
            actual,
            v.tolerance
        );
    }
    s
}
