//! Expected calibration error over scored spans.
//!
//! Bin `m` (1-based) of `M` covers confidences in `((m-1)/M, m/M]`; a
//! confidence of exactly 0 goes to bin 1 so every span is counted. Each bin
//! keeps additive sufficient statistics (count, number correct, confidence
//! sum), so partial results over disjoint span sets merge exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which spans enter the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpanFilter {
    /// Every predicted span (ECE_ALL).
    #[serde(rename = "ALL")]
    All,
    /// Spans whose label is not `O` (ECE_NO).
    #[serde(rename = "NO")]
    NonOutside,
}

impl SpanFilter {
    pub fn keeps(self, is_outside: bool) -> bool {
        match self {
            SpanFilter::All => true,
            SpanFilter::NonOutside => !is_outside,
        }
    }
}

/// One span prepared for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub confidence: f64,
    pub correct: bool,
    pub is_outside: bool,
}

pub fn assign_bin(confidence: f64, bins: usize) -> Result<usize> {
    if bins < 1 {
        return Err(Error::Config("need at least one bin".into()));
    }
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::Range(format!(
            "confidence {confidence} outside [0, 1]"
        )));
    }
    let m = bins as f64;
    // ceil(c * M) can land one bin high or low after rounding; settle it
    // against the same interval bounds the report prints.
    let mut b = ((confidence * m).ceil() as usize).clamp(1, bins);
    if b > 1 && confidence <= (b - 1) as f64 / m {
        b -= 1;
    } else if b < bins && confidence > b as f64 / m {
        b += 1;
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinAccumulator {
    pub count: usize,
    pub correct: usize,
    pub confidence_sum: f64,
}

/// Per-bin sufficient statistics for one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct EceAccumulator {
    bins: Vec<BinAccumulator>,
}

impl EceAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 1 {
            return Err(Error::Config("need at least one bin".into()));
        }
        Ok(EceAccumulator {
            bins: vec![BinAccumulator::default(); bins],
        })
    }

    pub fn add(&mut self, confidence: f64, correct: bool) -> Result<()> {
        let m = assign_bin(confidence, self.bins.len())?;
        let bin = &mut self.bins[m - 1];
        bin.count += 1;
        bin.correct += usize::from(correct);
        bin.confidence_sum += confidence;
        Ok(())
    }

    pub fn merge(&mut self, other: &EceAccumulator) -> Result<()> {
        if other.bins.len() != self.bins.len() {
            return Err(Error::Usage("cannot merge different bin counts".into()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.correct += b.correct;
            a.confidence_sum += b.confidence_sum;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn bins(&self) -> &[BinAccumulator] {
        &self.bins
    }

    pub fn finish(&self) -> Result<EceResult> {
        let n = self.total();
        if n == 0 {
            return Err(Error::EmptyEvaluation("no spans after filtering".into()));
        }
        let m = self.bins.len();
        let mut weighted_gap = 0.0;
        let bins = self
            .bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (accuracy, mean_confidence) = if b.count == 0 {
                    (None, None)
                } else {
                    let c = b.count as f64;
                    let acc = b.correct as f64 / c;
                    let mc = b.confidence_sum / c;
                    weighted_gap += c * (acc - mc).abs();
                    (Some(acc), Some(mc))
                };
                BinStats {
                    m: i + 1,
                    lower: i as f64 / m as f64,
                    upper: (i + 1) as f64 / m as f64,
                    count: b.count,
                    accuracy,
                    mean_confidence,
                }
            })
            .collect();
        Ok(EceResult {
            n,
            ece: weighted_gap / n as f64,
            bins,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub m: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
}

impl BinStats {
    pub fn gap(&self) -> Option<f64> {
        Some(self.accuracy? - self.mean_confidence?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceResult {
    pub n: usize,
    pub ece: f64,
    pub bins: Vec<BinStats>,
}

/// ECE of the spans passing `filter`.
pub fn compute_ece(scored: &[ScoredOutcome], bins: usize, filter: SpanFilter) -> Result<EceResult> {
    let mut acc = EceAccumulator::new(bins)?;
    for s in scored.iter().filter(|s| filter.keeps(s.is_outside)) {
        acc.add(s.confidence, s.correct)?;
    }
    acc.finish()
}

/// Counts of what was left out of an evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCounts {
    /// Candidates dropped because they did not decode.
    pub dropped_candidates: usize,
    /// Examples whose top-1 candidate did not decode.
    pub decode_errors: usize,
    /// Spans with no usable AggSpan context.
    pub degenerate_spans: usize,
}

impl ExcludedCounts {
    pub fn merge(&mut self, other: &ExcludedCounts) {
        self.dropped_candidates += other.dropped_candidates;
        self.decode_errors += other.decode_errors;
        self.degenerate_spans += other.degenerate_spans;
    }
}

/// Span-level micro P/R/F1 over non-O spans with exact matching. Diagnostic only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanF1 {
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SpanF1 {
    pub fn new(predicted: usize, gold: usize, matched: usize) -> Self {
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = div(matched, predicted);
        let recall = div(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        SpanF1 {
            predicted,
            gold,
            matched,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: String,
    pub bins: usize,
    /// Spans evaluated under ALL.
    pub n: usize,
    pub ece_all: f64,
    pub ece_no: Option<f64>,
    pub n_no: usize,
    pub bins_all: Vec<BinStats>,
    pub bins_no: Option<Vec<BinStats>>,
    pub excluded_counts: ExcludedCounts,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub span_f1: Option<SpanF1>,
}

impl CalibrationReport {
    /// Build both variants. With `require_no`, an empty non-O set is an error;
    /// otherwise ECE_NO is left out.
    pub fn build(
        method: impl Into<String>,
        scored: &[ScoredOutcome],
        bins: usize,
        require_no: bool,
        excluded_counts: ExcludedCounts,
    ) -> Result<Self> {
        let all = compute_ece(scored, bins, SpanFilter::All)?;
        let no = match compute_ece(scored, bins, SpanFilter::NonOutside) {
            Ok(r) => Some(r),
            Err(Error::EmptyEvaluation(_)) if !require_no => None,
            Err(e) => return Err(e),
        };
        Ok(CalibrationReport {
            method: method.into(),
            bins,
            n: all.n,
            ece_all: all.ece,
            ece_no: no.as_ref().map(|r| r.ece),
            n_no: no.as_ref().map_or(0, |r| r.n),
            bins_all: all.bins,
            bins_no: no.map(|r| r.bins),
            excluded_counts,
            span_f1: None,
        })
    }
}

/// Reliability-diagram rows as CSV.
pub fn reliability_table(bins: &[BinStats]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("m,lower,upper,count,accuracy,mean_confidence,gap\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.m,
            b.lower,
            b.upper,
            b.count,
            opt(b.accuracy),
            opt(b.mean_confidence),
            opt(b.gap())
        );
    }
    out
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanSd {
            mean,
            sd,
            runs: values.len(),
        })
    }
}
