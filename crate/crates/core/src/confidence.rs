//! Span-level confidence estimators over a beam.
//!
//! * `Span`: product of the span's unit probabilities in the top-1 candidate.
//! * `AggSpan`: the span's probability averaged over the unique left contexts
//!   found in the top-k candidates, weighted by each context's probability.
//! * `AggSeq`: probability mass of the top-k candidates whose segmentation
//!   contains the span, relative to the mass of all top-k candidates.
//! * `AdaAggSeq`: `AggSeq` over `k' = max(2, min(a + b, k))` candidates, where
//!   `a` counts the non-`O` spans of the top-1 candidate.
//!
//! Candidates that failed to decode were already removed from the beam and
//! take part in neither numerator nor denominator.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beam::{force_score_indices, tag_indices, BeamCandidate, BeamResult};
use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::refmodel::Scorer;
use crate::seqlabel::{segment_spans, InputText, LabeledSpan, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Span,
    AggSpan,
    AggSeq,
    AdaAggSeq,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Span,
        Method::AggSpan,
        Method::AggSeq,
        Method::AdaAggSeq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Span => "Span",
            Method::AggSpan => "AggSpan",
            Method::AggSeq => "AggSeq",
            Method::AdaAggSeq => "AdaAggSeq",
        }
    }

    /// Span and AggSpan read per-unit log-probabilities.
    pub fn needs_unit_logprobs(self) -> bool {
        matches!(self, Method::Span | Method::AggSpan)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}")))
    }
}

/// Where AggSpan gets `p(span | context)` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggSpanMode {
    /// Teacher-force the span after every unique context in the beam.
    #[default]
    Rescoring,
    /// Use recorded log-probabilities of the candidates that contain the span
    /// pattern; only their contexts take part.
    Trace,
}

impl fmt::Display for AggSpanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggSpanMode::Rescoring => "rescoring",
            AggSpanMode::Trace => "trace",
        })
    }
}

impl FromStr for AggSpanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescoring" => Ok(AggSpanMode::Rescoring),
            "trace" => Ok(AggSpanMode::Trace),
            _ => Err(Error::Usage(format!("unknown AggSpan mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodConfig {
    pub method: Method,
    pub k: usize,
    /// Offset added to the non-O span count (AdaAggSeq only).
    pub b: usize,
    pub aggspan_mode: AggSpanMode,
}

impl MethodConfig {
    pub fn new(method: Method, k: usize) -> Self {
        MethodConfig {
            method,
            k,
            b: 1,
            aggspan_mode: AggSpanMode::Rescoring,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.method == Method::AdaAggSeq && self.k < 2 {
            return Err(Error::Config("AdaAggSeq needs k >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceScore {
    pub value: f64,
    pub method: Method,
    pub span: LabeledSpan,
    /// The number of ranks actually consulted.
    pub effective_k: usize,
}

fn top1_spans(x: &InputText, beam: &BeamResult) -> Result<Vec<LabeledSpan>> {
    if x.id != beam.id {
        return Err(Error::Usage(format!(
            "beam {:?} paired with input {:?}",
            beam.id, x.id
        )));
    }
    let top1 = beam.top1()?;
    segment_spans(x.words(), &top1.tags).map_err(|e| Error::Decode(e.to_string()))
}

fn require_top1_span(x: &InputText, beam: &BeamResult, span: &LabeledSpan) -> Result<()> {
    if top1_spans(x, beam)?.contains(span) {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "span {span:?} is not part of the top-1 segmentation"
        )))
    }
}

fn ratio(log_num: f64, log_den: f64) -> f64 {
    if log_num == f64::NEG_INFINITY {
        0.0
    } else {
        (log_num - log_den).exp().clamp(0.0, 1.0)
    }
}

fn span_prob_unchecked(top1: &BeamCandidate, span: &LabeledSpan) -> Result<ConfidenceScore> {
    Ok(ConfidenceScore {
        value: top1
            .range_logprob(span.start, span.end)?
            .exp()
            .clamp(0.0, 1.0),
        method: Method::Span,
        span: span.clone(),
        effective_k: 1,
    })
}

/// Probability of the span's units under the top-1 context.
pub fn span_prob(x: &InputText, beam: &BeamResult, span: &LabeledSpan) -> Result<ConfidenceScore> {
    require_top1_span(x, beam, span)?;
    span_prob_unchecked(beam.top1()?, span)
}

fn agg_span_unchecked(
    x: &InputText,
    beam: &BeamResult,
    span: &LabeledSpan,
    scorer: Option<&dyn Scorer>,
    k: usize,
    mode: AggSpanMode,
) -> Result<ConfidenceScore> {
    let pattern = span.pattern();
    let mut seen: HashSet<&[Tag]> = HashSet::new();
    let mut log_weights = Vec::new();
    let mut log_joint = Vec::new();

    match mode {
        AggSpanMode::Rescoring => {
            let scorer = scorer
                .ok_or_else(|| Error::Usage("AggSpan rescoring mode needs a scorer".into()))?;
            let cond = scorer.condition(x)?;
            let continuation = tag_indices(scorer, &pattern)?;
            for c in beam.within_rank(k) {
                let prefix = &c.tags.tags()[..span.start];
                if !seen.insert(prefix) {
                    continue;
                }
                let lw = c.range_logprob(0, span.start)?;
                let forced = force_score_indices(
                    cond.as_ref(),
                    &tag_indices(scorer, prefix)?,
                    &continuation,
                )?;
                log_weights.push(lw);
                log_joint.push(lw + forced.iter().sum::<f64>());
            }
        }
        AggSpanMode::Trace => {
            for c in beam.within_rank(k) {
                if c.tags.tags()[span.start..span.end] != pattern[..] {
                    continue;
                }
                let prefix = &c.tags.tags()[..span.start];
                if !seen.insert(prefix) {
                    continue;
                }
                let lw = c.range_logprob(0, span.start)?;
                log_weights.push(lw);
                log_joint.push(lw + c.range_logprob(span.start, span.end)?);
            }
        }
    }
    let log_den = log_sum_exp(&log_weights);
    if log_den == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!(
            "no usable context for span [{}, {}) of {:?}",
            span.start, span.end, beam.id
        )));
    }
    Ok(ConfidenceScore {
        value: ratio(log_sum_exp(&log_joint), log_den),
        method: Method::AggSpan,
        span: span.clone(),
        effective_k: k.min(beam.max_rank()),
    })
}

/// Span probability marginalized over the unique contexts of the top-k candidates.
pub fn agg_span(
    x: &InputText,
    beam: &BeamResult,
    span: &LabeledSpan,
    scorer: Option<&dyn Scorer>,
    k: usize,
    mode: AggSpanMode,
) -> Result<ConfidenceScore> {
    require_top1_span(x, beam, span)?;
    agg_span_unchecked(x, beam, span, scorer, k, mode)
}

fn agg_seq_unchecked(
    x: &InputText,
    beam: &BeamResult,
    span: &LabeledSpan,
    k: usize,
    method: Method,
) -> Result<ConfidenceScore> {
    let mut all = Vec::new();
    let mut containing = Vec::new();
    for c in beam.within_rank(k) {
        all.push(c.total_logprob);
        // candidates in the beam are well-formed, so this cannot fail
        if segment_spans(x.words(), &c.tags)?.contains(span) {
            containing.push(c.total_logprob);
        }
    }
    Ok(ConfidenceScore {
        value: ratio(log_sum_exp(&containing), log_sum_exp(&all)),
        method,
        span: span.clone(),
        effective_k: k.min(beam.max_rank()),
    })
}

/// Relative probability mass of the top-k candidates that contain the span.
pub fn agg_seq(
    x: &InputText,
    beam: &BeamResult,
    span: &LabeledSpan,
    k: usize,
) -> Result<ConfidenceScore> {
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    require_top1_span(x, beam, span)?;
    agg_seq_unchecked(x, beam, span, k, Method::AggSeq)
}

/// `k' = max(2, min(a + b, k))`.
pub fn adaptive_k(a: usize, b: usize, k: usize) -> Result<usize> {
    if k < 2 {
        return Err(Error::Config(format!("adaptive k needs k >= 2, got {k}")));
    }
    Ok(a.saturating_add(b).min(k).max(2))
}

/// AggSeq over an adaptive number of candidates.
pub fn ada_agg_seq(
    x: &InputText,
    beam: &BeamResult,
    span: &LabeledSpan,
    k: usize,
    b: usize,
) -> Result<ConfidenceScore> {
    require_top1_span(x, beam, span)?;
    let kp = adaptive_k(beam.top1()?.tags.non_o_spans(), b, k)?;
    agg_seq_unchecked(x, beam, span, kp, Method::AdaAggSeq)
}

/// Scores for every span of the top-1 candidate under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExample {
    pub scores: Vec<ConfidenceScore>,
    /// Spans skipped because no usable context existed (trace-mode AggSpan).
    pub degenerate: Vec<LabeledSpan>,
}

/// Score every span of the top-1 candidate, left to right.
pub fn score_all(
    x: &InputText,
    beam: &BeamResult,
    cfg: &MethodConfig,
    scorer: Option<&dyn Scorer>,
) -> Result<ScoredExample> {
    cfg.validate()?;
    let spans = top1_spans(x, beam)?;
    let top1 = beam.top1()?;
    if cfg.method.needs_unit_logprobs() && top1.unit_logprobs.is_none() {
        return Err(Error::Usage(format!(
            "{} needs unit log-probabilities, which {:?} does not carry",
            cfg.method, beam.id
        )));
    }
    let mut out = ScoredExample {
        scores: Vec::with_capacity(spans.len()),
        degenerate: Vec::new(),
    };
    let non_o = top1.tags.non_o_spans();
    for span in spans {
        let score = match cfg.method {
            Method::Span => span_prob_unchecked(top1, &span),
            Method::AggSpan => agg_span_unchecked(x, beam, &span, scorer, cfg.k, cfg.aggspan_mode),
            Method::AggSeq => agg_seq_unchecked(x, beam, &span, cfg.k, Method::AggSeq),
            Method::AdaAggSeq => {
                let kp = adaptive_k(non_o, cfg.b, cfg.k)?;
                agg_seq_unchecked(x, beam, &span, kp, Method::AdaAggSeq)
            }
        };
        match score {
            Ok(s) => out.scores.push(s),
            Err(Error::Degenerate(_)) => out.degenerate.push(span),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One line of a scored-spans JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpanRecord {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub phrase: String,
    pub method: Method,
    pub confidence: f64,
    pub effective_k: usize,
    pub correct: Option<bool>,
}

impl ScoredSpanRecord {
    pub fn new(id: &str, score: &ConfidenceScore) -> Self {
        ScoredSpanRecord {
            id: id.to_string(),
            start: score.span.start,
            end: score.span.end,
            label: score.span.label.clone(),
            phrase: score.span.phrase.clone(),
            method: score.method,
            confidence: score.value,
            effective_k: score.effective_k,
            correct: None,
        }
    }

    pub fn span(&self) -> LabeledSpan {
        LabeledSpan {
            start: self.start,
            end: self.end,
            label: self.label.clone(),
            phrase: self.phrase.clone(),
        }
    }
}
