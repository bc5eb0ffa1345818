//! A first-order HMM over BIO tags that emits words.
//!
//! The HMM is small enough to solve exactly, which makes it a reference
//! model: its conditionals drive beam search like any other [`Scorer`], and
//! its exact marginals are the ground truth the beam estimators converge to.
//! All chains are computed in log space.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{ln, log_normalize, log_sum_exp};
use crate::seqlabel::{InputText, LabelSet, Tag};

mod oracle;
mod presets;
mod sample;
mod scorer;

pub use oracle::{
    enumerate_all, exact_pattern_marginal, exact_span_marginal, exact_tag_pattern_marginal,
    log_likelihood, ENUMERATION_CAP,
};
pub use presets::{preset, random_hmm, PRESETS};
pub use sample::{sample_corpus, SampleConfig};
pub use scorer::{perturb_temperature, Conditioned, Scorer, Tempered};

const ROW_TOLERANCE: f64 = 1e-9;

/// On-disk model layout: linear-space probability tables, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub tag_set: Vec<Tag>,
    pub vocab: Vec<String>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HmmParams {
    file: ModelFile,
    word_index: HashMap<String, usize>,
    log_initial: Vec<f64>,
    log_transition: Vec<Vec<f64>>,
    log_emission: Vec<Vec<f64>>,
}

fn check_row(name: &str, row: &[f64], width: usize) -> Result<()> {
    if row.len() != width {
        return Err(Error::Config(format!(
            "{name} has {} entries, expected {width}",
            row.len()
        )));
    }
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::Config(format!("{name} has invalid probability {p}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Config(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl HmmParams {
    pub fn new(file: ModelFile) -> Result<Self> {
        let t = file.tag_set.len();
        if t == 0 || file.vocab.is_empty() {
            return Err(Error::Config("empty tag set or vocabulary".into()));
        }
        for (i, tag) in file.tag_set.iter().enumerate() {
            if file.tag_set[..i].contains(tag) {
                return Err(Error::Config(format!("duplicate tag {tag}")));
            }
        }
        let mut word_index = HashMap::new();
        for (i, w) in file.vocab.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary word {w:?}")));
            }
            if word_index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        check_row("initial", &file.initial, t)?;
        if file.transition.len() != t || file.emission.len() != t {
            return Err(Error::Config(
                "one transition and emission row per tag".into(),
            ));
        }
        for (i, row) in file.transition.iter().enumerate() {
            check_row(&format!("transition row {}", file.tag_set[i]), row, t)?;
        }
        for (i, row) in file.emission.iter().enumerate() {
            check_row(
                &format!("emission row {}", file.tag_set[i]),
                row,
                file.vocab.len(),
            )?;
        }
        for (j, tag) in file.tag_set.iter().enumerate() {
            if !tag.may_follow(None) && file.initial[j] > 0.0 {
                return Err(Error::Config(format!("{tag} cannot start a sequence")));
            }
            for (i, prev) in file.tag_set.iter().enumerate() {
                if !tag.may_follow(Some(prev)) && file.transition[i][j] > 0.0 {
                    return Err(Error::Config(format!(
                        "transition {prev} -> {tag} must be 0"
                    )));
                }
            }
        }
        let log_rows = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().copied().map(ln).collect())
                .collect()
        };
        Ok(HmmParams {
            log_initial: file.initial.iter().copied().map(ln).collect(),
            log_transition: log_rows(&file.transition),
            log_emission: log_rows(&file.emission),
            word_index,
            file,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        HmmParams::new(crate::io::read_json(path)?)
    }

    pub fn model_file(&self) -> &ModelFile {
        &self.file
    }

    pub fn tag_set(&self) -> &[Tag] {
        &self.file.tag_set
    }

    pub fn vocab(&self) -> &[String] {
        &self.file.vocab
    }

    pub fn num_tags(&self) -> usize {
        self.file.tag_set.len()
    }

    /// Task labels appearing in the tag set.
    pub fn labels(&self) -> LabelSet {
        LabelSet::new(self.file.tag_set.iter().filter_map(Tag::label))
            .expect("tags carry validated labels")
    }

    pub(crate) fn initial(&self) -> &[f64] {
        &self.file.initial
    }

    pub(crate) fn transition(&self) -> &[Vec<f64>] {
        &self.file.transition
    }

    pub(crate) fn emission(&self) -> &[Vec<f64>] {
        &self.file.emission
    }

    pub(crate) fn log_initial(&self, t: usize) -> f64 {
        self.log_initial[t]
    }

    pub(crate) fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from][to]
    }

    pub(crate) fn log_emission(&self, t: usize, word: usize) -> f64 {
        self.log_emission[t][word]
    }

    pub fn observations(&self, x: &InputText) -> Result<Vec<usize>> {
        x.words()
            .iter()
            .map(|w| {
                self.word_index
                    .get(w)
                    .copied()
                    .ok_or_else(|| Error::Vocab(w.clone()))
            })
            .collect()
    }

    /// `beta[w][t] = ln p(x_{w+1..n} | tag_w = t)`.
    pub(crate) fn log_backward(&self, obs: &[usize]) -> Vec<Vec<f64>> {
        let t = self.num_tags();
        let n = obs.len();
        let mut beta = vec![vec![0.0; t]; n];
        let mut terms = vec![0.0; t];
        for w in (0..n.saturating_sub(1)).rev() {
            for from in 0..t {
                for (to, term) in terms.iter_mut().enumerate() {
                    *term = self.log_transition[from][to]
                        + self.log_emission[to][obs[w + 1]]
                        + beta[w + 1][to];
                }
                beta[w][from] = log_sum_exp(&terms);
            }
        }
        beta
    }

    fn tag_indices(&self, tags: &[Tag]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|tag| {
                self.tag_index(tag)
                    .ok_or_else(|| Error::Format(format!("tag {tag} is not in the model tag set")))
            })
            .collect()
    }
}

impl Scorer for HmmParams {
    fn tags(&self) -> &[Tag] {
        &self.file.tag_set
    }

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>> {
        let obs = self.observations(x)?;
        let log_beta = self.log_backward(&obs);
        Ok(Box::new(HmmConditioned {
            params: self,
            obs,
            log_beta,
        }))
    }
}

struct HmmConditioned<'a> {
    params: &'a HmmParams,
    obs: Vec<usize>,
    log_beta: Vec<Vec<f64>>,
}

impl Conditioned for HmmConditioned<'_> {
    fn len(&self) -> usize {
        self.obs.len()
    }

    fn next_logprobs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let w = prefix.len();
        if w >= self.obs.len() {
            return Err(Error::Alignment(format!(
                "prefix of length {w} leaves nothing to score in a {}-word input",
                self.obs.len()
            )));
        }
        let p = self.params;
        let mut scores: Vec<f64> = (0..p.num_tags())
            .map(|t| {
                let prior = match prefix.last() {
                    None => p.log_initial(t),
                    Some(&prev) => p.log_transition(prev, t),
                };
                prior + p.log_emission(t, self.obs[w]) + self.log_beta[w][t]
            })
            .collect();
        if log_normalize(&mut scores) == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!(
                "context of length {w} has zero probability"
            )));
        }
        Ok(scores)
    }
}

/// Exact posterior of the tag at `prefix.len()` given the whole input and the prefix.
pub fn posterior_next_tag(params: &HmmParams, x: &InputText, prefix: &[Tag]) -> Result<Vec<f64>> {
    let prefix = params.tag_indices(prefix)?;
    let cond = params.condition(x)?;
    Ok(cond
        .next_logprobs(&prefix)?
        .into_iter()
        .map(f64::exp)
        .collect())
}
