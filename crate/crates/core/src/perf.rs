//! Roofline and issue-rate model, and the measurement layer that turns a
//! simulation into utilization, dpflop/cycle and loss against the bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MachineConfig;
use crate::kernels::KernelKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfError {
    #[error("need at least two matching issues to measure a gap, found {0}")]
    TooFewIssues(usize),
    #[error("intensity must be positive, got {0}")]
    Intensity(f64),
}

/// Peak compute, memory bandwidth and issue gap of a machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflineModel {
    pub lanes: usize,
    /// Peak performance in dpflop/cycle.
    pub peak: f64,
    /// Memory bandwidth in bytes/cycle.
    pub bandwidth: f64,
    /// Cycles between successive vector FMA issues.
    pub delta: f64,
}

impl RooflineModel {
    pub fn new(lanes: usize, delta: f64) -> Self {
        RooflineModel {
            lanes,
            peak: 2.0 * lanes as f64,
            bandwidth: 4.0 * lanes as f64,
            delta,
        }
    }

    pub fn from_config(cfg: &MachineConfig, delta: f64) -> Self {
        RooflineModel {
            lanes: cfg.lanes,
            peak: cfg.peak_dpflop_per_cycle(),
            bandwidth: cfg.mem_bytes_per_cycle() as f64,
            delta,
        }
    }

    /// Intensity at which the machine becomes compute bound.
    pub fn ridge(&self) -> f64 {
        self.peak / self.bandwidth
    }

    /// `min(peak, bandwidth * I)`.
    pub fn roofline(&self, intensity: f64) -> f64 {
        self.peak.min(self.bandwidth * intensity)
    }

    /// Issue-rate limit `(32 / delta) * I` of the matrix multiplication:
    /// each FMA of `n` elements carries `2n` flops and `I = n / 16`.
    pub fn issue_bound(&self, intensity: f64) -> f64 {
        32.0 / self.delta * intensity
    }

    /// Achievable performance for a kernel of the given kind and intensity.
    pub fn bound(&self, kind: BoundKind, intensity: f64) -> Result<f64, PerfError> {
        if intensity.is_nan() || intensity <= 0.0 {
            return Err(PerfError::Intensity(intensity));
        }
        let r = self.roofline(intensity);
        Ok(match kind {
            BoundKind::IssueLimited => r.min(self.issue_bound(intensity)),
            BoundKind::Roofline => r,
        })
    }
}

/// Whether the issue-rate line applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    IssueLimited,
    Roofline,
}

impl BoundKind {
    pub fn for_kernel(kind: &KernelKind) -> Self {
        match kind {
            KernelKind::Matmul { .. } => BoundKind::IssueLimited,
            _ => BoundKind::Roofline,
        }
    }
}

/// Performance loss against the bound, in percent.
pub fn loss_pct(measured: f64, bound: f64) -> f64 {
    100.0 * (1.0 - measured / bound)
}

/// Gap statistics between successive matching issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueGap {
    pub mean: f64,
    pub max: u64,
    /// Most frequent gap; ties resolve to the smaller gap.
    pub mode: u64,
    pub count: usize,
}

/// Gaps between consecutive issue cycles, skipping the first gap as
/// warm-up when more than one is available.
pub fn measure_issue_gap(cycles: &[u64]) -> Result<IssueGap, PerfError> {
    if cycles.len() < 2 {
        return Err(PerfError::TooFewIssues(cycles.len()));
    }
    let gaps: Vec<u64> = cycles.windows(2).map(|w| w[1] - w[0]).collect();
    let steady = if gaps.len() > 1 {
        &gaps[1..]
    } else {
        &gaps[..]
    };
    gap_stats(steady).ok_or(PerfError::TooFewIssues(cycles.len()))
}

/// Statistics of a list of gaps; `None` when it is empty.
pub fn gap_stats(steady: &[u64]) -> Option<IssueGap> {
    if steady.is_empty() {
        return None;
    }
    let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
    for &g in steady {
        *hist.entry(g).or_default() += 1;
    }
    let mode = hist
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(g, _)| *g)
        .unwrap_or_default();
    Some(IssueGap {
        mean: steady.iter().sum::<u64>() as f64 / steady.len() as f64,
        max: steady.iter().copied().max().unwrap_or_default(),
        mode,
        count: steady.len(),
    })
}

/// Units reported in the utilization timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitName {
    Fpu,
    Mul,
    Alu,
    Vlsu,
    Sldu,
}

impl UnitName {
    pub const ALL: [UnitName; 5] = [
        UnitName::Fpu,
        UnitName::Mul,
        UnitName::Alu,
        UnitName::Vlsu,
        UnitName::Sldu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitName::Fpu => "fpu",
            UnitName::Mul => "mul",
            UnitName::Alu => "alu",
            UnitName::Vlsu => "vlsu",
            UnitName::Sldu => "sldu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilWindow {
    pub start: u64,
    pub unit: UnitName,
    pub utilization: f64,
}

/// Counters of properties that must hold in every cycle. All stay zero in a
/// correct simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounters {
    /// Bank-cycles with more than one grant.
    pub bank_multi_grant: u64,
    /// Port cycles moving more than the port width.
    pub port_overflow: u64,
    /// Lane-cycles where the multiplier and the FPU both accepted.
    pub mul_fpu_overlap: u64,
    /// Operand reads that saw a word not written by the expected producer.
    pub chaining: u64,
    /// Measured performance above the bound.
    pub above_bound: u64,
}

impl InvariantCounters {
    pub fn total(&self) -> u64 {
        self.bank_multi_grant
            + self.port_overflow
            + self.mul_fpu_overlap
            + self.chaining
            + self.above_bound
    }
}

/// Everything a run measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub lanes: usize,
    pub cycles: u64,
    pub dpflops: u64,
    /// dpflop per cycle.
    pub performance: f64,
    pub peak: f64,
    /// `performance / peak`.
    pub fpu_utilization: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub scalar_instructions: usize,
    pub vector_instructions: usize,
    /// Gap between vector FMA dispatches, when measured.
    pub issue_gap: Option<IssueGap>,
    pub bank_conflicts: u64,
    pub stalls: BTreeMap<String, u64>,
    pub invariants: InvariantCounters,
    pub util_window: u64,
    pub utilization: Vec<UtilWindow>,
}

impl SimReport {
    pub fn memory_bytes(&self) -> u64 {
        self.bytes_read + self.bytes_written
    }

    /// Scalar metrics by name, for golden comparisons.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("lanes".into(), self.lanes as f64);
        m.insert("cycles".into(), self.cycles as f64);
        m.insert("dpflops".into(), self.dpflops as f64);
        m.insert("performance".into(), self.performance);
        m.insert("fpu_utilization".into(), self.fpu_utilization);
        m.insert("bytes_read".into(), self.bytes_read as f64);
        m.insert("bytes_written".into(), self.bytes_written as f64);
        m.insert("bank_conflicts".into(), self.bank_conflicts as f64);
        m.insert(
            "invariant_violations".into(),
            self.invariants.total() as f64,
        );
        if let Some(g) = &self.issue_gap {
            m.insert("issue_gap_mode".into(), g.mode as f64);
            m.insert("issue_gap_mean".into(), g.mean);
            m.insert("issue_gap_max".into(), g.max as f64);
        }
        m
    }
}

/// One row of `roofline.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub lanes: usize,
    pub intensity: f64,
    pub bound: f64,
    pub measured: f64,
    pub loss_pct: f64,
}

impl RooflinePoint {
    pub fn new(lanes: usize, intensity: f64, bound: f64, measured: f64) -> Self {
        RooflinePoint {
            lanes,
            intensity,
            bound,
            measured,
            loss_pct: loss_pct(measured, bound),
        }
    }
}

pub const ROOFLINE_HEADER: &str = "lanes,intensity,bound,measured,loss_pct";
pub const UTIL_HEADER: &str = "window_start,unit,utilization";

pub fn roofline_csv(points: &[RooflinePoint]) -> String {
    let mut s = format!("{ROOFLINE_HEADER}\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.lanes, p.intensity, p.bound, p.measured, p.loss_pct
        );
    }
    s
}

pub fn util_csv(windows: &[UtilWindow]) -> String {
    let mut s = format!("{UTIL_HEADER}\n");
    for w in windows {
        let _ = writeln!(s, "{},{},{}", w.start, w.unit.as_str(), w.utilization);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn issue_line_slope() {
        let m = RooflineModel::new(16, 5.0);
        assert_eq!(m.issue_bound(1.0), 6.4);
        assert_eq!(m.bound(BoundKind::IssueLimited, 1.0).unwrap(), 6.4);
    }

    #[test]
    fn compute_plateau() {
        let m = RooflineModel::new(2, 5.0);
        assert_eq!(m.bound(BoundKind::IssueLimited, 16.0).unwrap(), 4.0);
        assert_eq!(m.bound(BoundKind::Roofline, 1e12).unwrap(), 4.0);
        assert_eq!(m.ridge(), 0.5);
        assert!(m.bound(BoundKind::Roofline, 0.0).is_err());
    }

    #[test]
    fn loss() {
        assert_eq!(loss_pct(5.0, 5.0), 0.0);
        assert!((loss_pct(31.1, 32.0) - 2.8125).abs() < 1e-12);
    }

    #[test]
    fn gap_statistics() {
        let g = measure_issue_gap(&[0, 3, 8, 13, 18, 25, 30]).unwrap();
        assert_eq!(g.mode, 5);
        assert_eq!(g.max, 7);
        assert_eq!(g.count, 5);
        assert!((g.mean - 27.0 / 5.0).abs() < 1e-12);
        assert_eq!(measure_issue_gap(&[4]), Err(PerfError::TooFewIssues(1)));
        assert_eq!(measure_issue_gap(&[1, 2]).unwrap().mode, 1);
    }

    #[test]
    fn csv_headers() {
        let r = roofline_csv(&[RooflinePoint::new(4, 2.0, 8.0, 6.0)]);
        assert_eq!(r, "lanes,intensity,bound,measured,loss_pct\n4,2,8,6,25\n");
        let u = util_csv(&[UtilWindow {
            start: 100,
            unit: UnitName::Fpu,
            utilization: 0.5,
        }]);
        assert_eq!(u, "window_start,unit,utilization\n100,fpu,0.5\n");
    }
}
