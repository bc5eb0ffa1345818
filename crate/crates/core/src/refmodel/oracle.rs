//! Exact marginals by constrained forward recursion, plus brute-force enumeration.

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::seqlabel::{InputText, LabeledSpan, Tag, TagSequence};

use super::{HmmParams, Scorer};

/// Default bound on `|tags|^n` for [`enumerate_all`].
pub const ENUMERATION_CAP: usize = 200_000;

/// `ln` of the total joint mass of all tag paths allowed by `allowed(pos, tag)`.
fn constrained_log_mass(
    params: &HmmParams,
    obs: &[usize],
    allowed: impl Fn(usize, usize) -> bool,
) -> f64 {
    let t = params.num_tags();
    let mut alpha: Vec<f64> = (0..t)
        .map(|j| {
            if allowed(0, j) {
                params.log_initial(j) + params.log_emission(j, obs[0])
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut terms = vec![0.0; t];
    for (w, &o) in obs.iter().enumerate().skip(1) {
        alpha = (0..t)
            .map(|j| {
                if !allowed(w, j) {
                    return f64::NEG_INFINITY;
                }
                for (i, term) in terms.iter_mut().enumerate() {
                    *term = alpha[i] + params.log_transition(i, j);
                }
                log_sum_exp(&terms) + params.log_emission(j, o)
            })
            .collect();
    }
    log_sum_exp(&alpha)
}

/// `ln p(x)` under the HMM.
pub fn log_likelihood(params: &HmmParams, x: &InputText) -> Result<f64> {
    let obs = params.observations(x)?;
    Ok(constrained_log_mass(params, &obs, |_, _| true))
}

fn constrained_marginal(
    params: &HmmParams,
    x: &InputText,
    start: usize,
    pattern: &[Tag],
    blocked_next: Option<&Tag>,
) -> Result<f64> {
    let end = start + pattern.len();
    if pattern.is_empty() || end > x.len() {
        return Err(Error::Range(format!(
            "pattern [{start}, {end}) outside a {}-word input",
            x.len()
        )));
    }
    let obs = params.observations(x)?;
    let log_z = constrained_log_mass(params, &obs, |_, _| true);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!(
            "input {:?} has zero probability",
            x.id
        )));
    }
    let pattern: Option<Vec<usize>> = pattern.iter().map(|tag| params.tag_index(tag)).collect();
    let Some(pattern) = pattern else {
        return Ok(0.0);
    };
    let blocked_next = blocked_next.and_then(|tag| params.tag_index(tag));
    let log_m = constrained_log_mass(params, &obs, |w, tag| {
        if (start..end).contains(&w) {
            tag == pattern[w - start]
        } else if w == end {
            Some(tag) != blocked_next
        } else {
            true
        }
    });
    Ok((log_m - log_z).exp().clamp(0.0, 1.0))
}

/// Posterior that the tags at `start..start + pattern.len()` equal `pattern`.
pub fn exact_tag_pattern_marginal(
    params: &HmmParams,
    x: &InputText,
    start: usize,
    pattern: &[Tag],
) -> Result<f64> {
    constrained_marginal(params, x, start, pattern, None)
}

/// Posterior that words `[start, end)` carry exactly the span's tag pattern
/// (`B-l I-l ...`, or `O`), with no constraint on the following tag.
pub fn exact_pattern_marginal(
    params: &HmmParams,
    x: &InputText,
    span: &LabeledSpan,
) -> Result<f64> {
    span.check_against(x.words())?;
    constrained_marginal(params, x, span.start, &span.pattern(), None)
}

/// Posterior that the segmentation contains the span: the pattern holds and
/// the tag right after it does not extend it.
pub fn exact_span_marginal(params: &HmmParams, x: &InputText, span: &LabeledSpan) -> Result<f64> {
    span.check_against(x.words())?;
    let continuation = (!span.is_outside()).then(|| Tag::I(span.label.clone()));
    constrained_marginal(
        params,
        x,
        span.start,
        &span.pattern(),
        continuation.as_ref(),
    )
}

/// Every positive-probability tag sequence with its posterior, in
/// lexicographic tag-index order.
///
/// Normalizes by the enumerated total rather than the forward pass, so it
/// stays independent of the recursions above.
pub fn enumerate_all(
    params: &HmmParams,
    x: &InputText,
    cap: usize,
) -> Result<Vec<(TagSequence, f64)>> {
    let t = params.num_tags();
    let n = x.len();
    let total = u32::try_from(n)
        .ok()
        .and_then(|n| t.checked_pow(n))
        .filter(|&c| c <= cap)
        .ok_or_else(|| Error::Capacity(format!("{t}^{n} tag sequences exceed the cap of {cap}")))?;
    let obs = params.observations(x)?;

    let mut paths = Vec::new();
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let mut lp = params.log_initial(idx[0]) + params.log_emission(idx[0], obs[0]);
        for w in 1..n {
            lp += params.log_transition(idx[w - 1], idx[w]) + params.log_emission(idx[w], obs[w]);
        }
        if lp > f64::NEG_INFINITY {
            paths.push((idx.clone(), lp));
        }
        // odometer, last position fastest
        for w in (0..n).rev() {
            idx[w] += 1;
            if idx[w] < t {
                break;
            }
            idx[w] = 0;
        }
    }
    let log_z = log_sum_exp(&paths.iter().map(|(_, lp)| *lp).collect::<Vec<_>>());
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!(
            "input {:?} has zero probability",
            x.id
        )));
    }
    paths
        .into_iter()
        .map(|(idx, lp)| {
            let tags = idx.iter().map(|&i| params.tag_set()[i].clone()).collect();
            Ok((TagSequence::new(tags)?, (lp - log_z).exp()))
        })
        .collect()
}
