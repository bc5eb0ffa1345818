//! Width-k beam search over word units and teacher-forced rescoring.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refmodel::{Conditioned, Scorer};
use crate::seqlabel::{decode_si, InputText, LabelSet, Tag, TagSequence};

/// Tolerance for `total_logprob` against the sum of `unit_logprobs`.
pub const TOTAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamCandidate {
    /// 1-based position in the beam.
    pub rank: usize,
    pub tags: TagSequence,
    /// One log-probability per word. `None` when the producer only exposed
    /// whole-sequence scores.
    pub unit_logprobs: Option<Vec<f64>>,
    pub total_logprob: f64,
}

impl BeamCandidate {
    /// Sum of unit log-probabilities over `[start, end)`.
    pub fn range_logprob(&self, start: usize, end: usize) -> Result<f64> {
        let lp = self
            .unit_logprobs
            .as_ref()
            .ok_or_else(|| Error::Usage("candidate carries no unit log-probabilities".into()))?;
        Ok(lp[start..end].iter().sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub id: String,
    /// Beam size requested.
    pub k: usize,
    /// Well-formed candidates in rank order.
    pub candidates: Vec<BeamCandidate>,
    /// Candidates removed while loading because they could not be decoded.
    pub dropped: usize,
}

impl BeamResult {
    /// The rank-1 candidate, if it survived decoding.
    pub fn top1(&self) -> Result<&BeamCandidate> {
        self.candidates
            .first()
            .filter(|c| c.rank == 1)
            .ok_or_else(|| {
                Error::Decode(format!("top-1 candidate of {:?} is not decodable", self.id))
            })
    }

    /// Well-formed candidates among the first `k` ranks.
    pub fn within_rank(&self, k: usize) -> impl Iterator<Item = &BeamCandidate> {
        self.candidates.iter().filter(move |c| c.rank <= k)
    }

    /// Highest rank present in the beam, counting dropped candidates.
    pub fn max_rank(&self) -> usize {
        self.candidates
            .iter()
            .map(|c| c.rank)
            .max()
            .unwrap_or(0)
            .max(self.candidates.len() + self.dropped)
    }
}

#[derive(Clone)]
struct Hypothesis {
    tags: Vec<usize>,
    logprobs: Vec<f64>,
    total: f64,
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then_with(|| a.tags.cmp(&b.tags))
}

/// Standard beam search without length normalization.
///
/// Zero-probability extensions are never kept, so every candidate has a
/// positive score. Ties are broken by lexicographic tag-index order.
pub fn beam_search<S: Scorer + ?Sized>(scorer: &S, x: &InputText, k: usize) -> Result<BeamResult> {
    if k < 1 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let cond = scorer.condition(x)?;
    let mut beam = vec![Hypothesis {
        tags: Vec::new(),
        logprobs: Vec::new(),
        total: 0.0,
    }];
    for _ in 0..x.len() {
        let mut next = Vec::new();
        for h in &beam {
            for (t, lp) in cond.next_logprobs(&h.tags)?.into_iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut ext = h.clone();
                ext.tags.push(t);
                ext.logprobs.push(lp);
                ext.total += lp;
                next.push(ext);
            }
        }
        next.sort_by(by_score);
        next.truncate(k);
        beam = next;
    }
    let tag_set = scorer.tags();
    let candidates = beam
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            Ok(BeamCandidate {
                rank: i + 1,
                tags: TagSequence::new(h.tags.iter().map(|&t| tag_set[t].clone()).collect())?,
                unit_logprobs: Some(h.logprobs),
                total_logprob: h.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if candidates.is_empty() {
        return Err(Error::Degenerate(format!(
            "no positive-probability output for {:?}",
            x.id
        )));
    }
    Ok(BeamResult {
        id: x.id.clone(),
        k,
        candidates,
        dropped: 0,
    })
}

pub(crate) fn tag_indices<S: Scorer + ?Sized>(scorer: &S, tags: &[Tag]) -> Result<Vec<usize>> {
    tags.iter()
        .map(|t| {
            scorer
                .tag_index(t)
                .ok_or_else(|| Error::Format(format!("tag {t} is unknown to the scorer")))
        })
        .collect()
}

pub(crate) fn force_score_indices(
    cond: &dyn Conditioned,
    prefix: &[usize],
    continuation: &[usize],
) -> Result<Vec<f64>> {
    if prefix.len() + continuation.len() > cond.len() {
        return Err(Error::Alignment(format!(
            "prefix {} + continuation {} exceeds {} words",
            prefix.len(),
            continuation.len(),
            cond.len()
        )));
    }
    let mut ctx = prefix.to_vec();
    let mut out = Vec::with_capacity(continuation.len());
    for &t in continuation {
        out.push(cond.next_logprobs(&ctx)?[t]);
        ctx.push(t);
    }
    Ok(out)
}

/// Teacher-forced log-probabilities of `continuation` after `prefix`.
pub fn force_score<S: Scorer + ?Sized>(
    scorer: &S,
    x: &InputText,
    prefix: &[Tag],
    continuation: &[Tag],
) -> Result<Vec<f64>> {
    let cond = scorer.condition(x)?;
    force_score_indices(
        cond.as_ref(),
        &tag_indices(scorer, prefix)?,
        &tag_indices(scorer, continuation)?,
    )
}

/// One candidate of a predictions record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub rank: usize,
    pub tags: Vec<String>,
    pub unit_logprobs: Option<Vec<f64>>,
    pub total_logprob: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub malformed: bool,
}

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub n_words: usize,
    pub k: usize,
    pub candidates: Vec<CandidateRecord>,
}

impl PredictionRecord {
    pub fn from_beam(beam: &BeamResult, n_words: usize) -> Self {
        PredictionRecord {
            id: beam.id.clone(),
            n_words,
            k: beam.k,
            candidates: beam
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    rank: c.rank,
                    tags: c.tags.to_units(),
                    unit_logprobs: c.unit_logprobs.clone(),
                    total_logprob: c.total_logprob,
                    malformed: false,
                })
                .collect(),
        }
    }

    /// Decode every candidate, dropping the ones that are flagged, do not
    /// decode, or carry inconsistent scores.
    pub fn into_beam(self, labels: &LabelSet) -> Result<BeamResult> {
        if self.k < 1 || self.candidates.is_empty() || self.candidates.len() > self.k {
            return Err(Error::Format(format!(
                "record {:?} has {} candidates for k = {}",
                self.id,
                self.candidates.len(),
                self.k
            )));
        }
        let mut records = self.candidates;
        records.sort_by_key(|c| c.rank);
        if records.windows(2).any(|w| w[0].rank == w[1].rank) || records[0].rank < 1 {
            return Err(Error::Format(format!(
                "record {:?} has invalid ranks",
                self.id
            )));
        }
        let mut candidates: Vec<BeamCandidate> = Vec::with_capacity(records.len());
        let mut dropped = 0;
        for rec in records {
            match decode_candidate(rec, self.n_words, labels) {
                Some(c) if !candidates.iter().any(|o| o.tags == c.tags) => candidates.push(c),
                _ => dropped += 1,
            }
        }
        Ok(BeamResult {
            id: self.id,
            k: self.k,
            candidates,
            dropped,
        })
    }
}

fn decode_candidate(rec: CandidateRecord, n: usize, labels: &LabelSet) -> Option<BeamCandidate> {
    if rec.malformed || !rec.total_logprob.is_finite() {
        return None;
    }
    let tags = decode_si(&rec.tags, n, labels).ok()?;
    if let Some(lp) = &rec.unit_logprobs {
        let sum: f64 = lp.iter().sum();
        if lp.len() != n || (sum - rec.total_logprob).abs() > TOTAL_TOLERANCE {
            return None;
        }
    }
    Some(BeamCandidate {
        rank: rec.rank,
        tags,
        unit_logprobs: rec.unit_logprobs,
        total_logprob: rec.total_logprob,
    })
}
