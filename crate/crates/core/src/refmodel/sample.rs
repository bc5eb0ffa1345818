use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seqlabel::{GoldAnnotation, InputText, TagSequence};

use super::HmmParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleConfig {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Example ids are `{id_prefix}{index:06}`.
    pub id_prefix: String,
}

impl SampleConfig {
    pub fn new(count: usize, min_len: usize, max_len: usize, seed: u64) -> Self {
        SampleConfig {
            count,
            min_len,
            max_len,
            seed,
            id_prefix: String::new(),
        }
    }
}

fn weighted(row: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(row).map_err(|e| Error::Config(format!("cannot sample from row: {e}")))
}

/// Draw i.i.d. sentences and their tag paths from the HMM joint.
pub fn sample_corpus(
    params: &HmmParams,
    cfg: &SampleConfig,
) -> Result<Vec<(InputText, GoldAnnotation)>> {
    if cfg.count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "invalid length range [{}, {}]",
            cfg.min_len, cfg.max_len
        )));
    }
    let initial = weighted(params.initial())?;
    let transition = params
        .transition()
        .iter()
        .map(|r| weighted(r))
        .collect::<Result<Vec<_>>>()?;
    let emission = params
        .emission()
        .iter()
        .map(|r| weighted(r))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let n = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tag = initial.sample(&mut rng);
        let mut tags = Vec::with_capacity(n);
        let mut words = Vec::with_capacity(n);
        for w in 0..n {
            if w > 0 {
                tag = transition[tag].sample(&mut rng);
            }
            tags.push(params.tag_set()[tag].clone());
            words.push(params.vocab()[emission[tag].sample(&mut rng)].clone());
        }
        let id = format!("{}{i:06}", cfg.id_prefix);
        out.push((
            InputText::new(id.clone(), words)?,
            GoldAnnotation {
                id,
                tags: TagSequence::new(tags)?,
            },
        ));
    }
    Ok(out)
}
