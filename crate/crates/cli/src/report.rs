//! The `report.json` format and the CSV files written next to it.

use std::collections::BTreeMap;

use lanesim::kernels::{KernelKind, KernelRun};
use lanesim::perf::{self, RooflinePoint, SimReport};
use lanesim::MachineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative error above which a kernel output counts as a mismatch.
pub const FUNCTIONAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a JSON object of metrics")]
    NotObject,
    #[error("metric `{0}` is not a number")]
    NotNumber(String),
}

/// Roofline analysis and functional verdict of a kernel run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub intensity: f64,
    pub delta: f64,
    pub bound: f64,
    pub loss_pct: f64,
    pub max_rel_error: f64,
    pub functional_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub kernel: Option<KernelKind>,
    pub seed: Option<u64>,
    pub machine: MachineConfig,
    pub analysis: Option<Analysis>,
    pub report: SimReport,
}

impl RunRecord {
    pub fn from_kernel(run: &KernelRun, machine: &MachineConfig) -> Self {
        let size = match run.spec.kind {
            KernelKind::Matmul { n, .. } | KernelKind::Daxpy { n, .. } => n,
            KernelKind::Dconv { w, .. } => w,
        };
        RunRecord {
            label: format!("{}.n{size}.l{}", run.spec.kind.name(), machine.lanes),
            kernel: Some(run.spec.kind),
            seed: Some(run.spec.seed),
            machine: machine.clone(),
            analysis: Some(Analysis {
                intensity: run.intensity,
                delta: run.delta,
                bound: run.bound,
                loss_pct: run.loss_pct,
                max_rel_error: run.max_rel_error,
                functional_pass: run.passed(FUNCTIONAL_TOLERANCE),
            }),
            report: run.report.clone(),
        }
    }

    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = self.report.metrics();
        if let Some(a) = &self.analysis {
            m.insert("intensity".into(), a.intensity);
            m.insert("bound".into(), a.bound);
            m.insert("loss_pct".into(), a.loss_pct);
            m.insert("max_rel_error".into(), a.max_rel_error);
        }
        m
    }

    pub fn roofline_point(&self) -> Option<RooflinePoint> {
        self.analysis.as_ref().map(|a| {
            RooflinePoint::new(
                self.machine.lanes,
                a.intensity,
                a.bound,
                self.report.performance,
            )
        })
    }

    pub fn functional_pass(&self) -> bool {
        self.analysis.as_ref().is_none_or(|a| a.functional_pass)
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub runs: Vec<RunRecord>,
    /// Flat metrics for golden comparisons. A single run uses bare names;
    /// several runs prefix each name with the run label.
    pub metrics: BTreeMap<String, f64>,
}

impl ReportFile {
    pub fn new(runs: Vec<RunRecord>) -> Self {
        let mut metrics = BTreeMap::new();
        if let [only] = runs.as_slice() {
            metrics = only.metrics();
        } else {
            for r in &runs {
                for (k, v) in r.metrics() {
                    metrics.insert(format!("{}.{k}", r.label), v);
                }
            }
        }
        ReportFile { runs, metrics }
    }

    pub fn roofline_csv(&self) -> String {
        let points: Vec<RooflinePoint> = self
            .runs
            .iter()
            .filter_map(RunRecord::roofline_point)
            .collect();
        perf::roofline_csv(&points)
    }

    /// Utilization timeline; several runs get a leading `run` column.
    pub fn util_csv(&self) -> String {
        if let [only] = self.runs.as_slice() {
            return perf::util_csv(&only.report.utilization);
        }
        let mut s = format!("run,{}\n", perf::UTIL_HEADER);
        for r in &self.runs {
            for w in &r.report.utilization {
                s += &format!(
                    "{},{},{},{}\n",
                    r.label,
                    w.start,
                    w.unit.as_str(),
                    w.utilization
                );
            }
        }
        s
    }
}

/// Reads the metrics of a report or golden file: the `metrics` object when
/// present, otherwise the top-level object itself.
pub fn load_metrics(text: &str) -> Result<BTreeMap<String, f64>, ReportError> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let obj = v.as_object().ok_or(ReportError::NotObject)?;
    let obj = match obj.get("metrics") {
        Some(m) => m.as_object().ok_or(ReportError::NotObject)?,
        None => obj,
    };
    obj.iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|x| (k.clone(), x))
                .ok_or_else(|| ReportError::NotNumber(k.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_nested_metrics() {
        let flat = load_metrics(r#"{"cycles": 10, "performance": 1.5}"#).unwrap();
        assert_eq!(flat["cycles"], 10.0);
        let nested = load_metrics(r#"{"runs": [], "metrics": {"cycles": 3}}"#).unwrap();
        assert_eq!(nested.len(), 1);
        assert!(matches!(load_metrics("[1]"), Err(ReportError::NotObject)));
        assert!(matches!(
            load_metrics(r#"{"a": "x"}"#),
            Err(ReportError::NotNumber(k)) if k == "a"
        ));
        assert!(load_metrics("{").is_err());
    }
}
