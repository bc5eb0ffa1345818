use std::sync::Arc;

use crate::error::{Error, Result};
use crate::logspace::log_normalize;
use crate::seqlabel::{InputText, Tag};

/// An autoregressive conditional distribution over the next output unit.
///
/// Tags are addressed by their index in [`Scorer::tags`]. A scorer is first
/// conditioned on a full input (the "encoder" pass), after which next-unit
/// distributions can be queried for arbitrary prefixes.
pub trait Scorer: Send + Sync {
    fn tags(&self) -> &[Tag];

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>>;

    fn tag_index(&self, tag: &Tag) -> Option<usize> {
        self.tags().iter().position(|t| t == tag)
    }
}

/// A scorer bound to one input.
pub trait Conditioned {
    /// Number of output units (words).
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalized log-probabilities of the tag at position `prefix.len()`.
    fn next_logprobs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn tags(&self) -> &[Tag] {
        (**self).tags()
    }

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>> {
        (**self).condition(x)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn tags(&self) -> &[Tag] {
        (**self).tags()
    }

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>> {
        (**self).condition(x)
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn tags(&self) -> &[Tag] {
        (**self).tags()
    }

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>> {
        (**self).condition(x)
    }
}

/// Every conditional raised to `1/tau` and renormalized.
#[derive(Debug, Clone)]
pub struct Tempered<S> {
    inner: S,
    tau: f64,
}

impl<S> Tempered<S> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

/// Sharpen (`tau < 1`) or flatten (`tau > 1`) a scorer. `tau = 1` is the identity.
pub fn perturb_temperature<S: Scorer>(scorer: S, tau: f64) -> Result<Tempered<S>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(Tempered { inner: scorer, tau })
}

impl<S: Scorer> Scorer for Tempered<S> {
    fn tags(&self) -> &[Tag] {
        self.inner.tags()
    }

    fn condition<'a>(&'a self, x: &InputText) -> Result<Box<dyn Conditioned + 'a>> {
        Ok(Box::new(TemperedConditioned {
            inner: self.inner.condition(x)?,
            tau: self.tau,
        }))
    }
}

struct TemperedConditioned<'a> {
    inner: Box<dyn Conditioned + 'a>,
    tau: f64,
}

impl Conditioned for TemperedConditioned<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn next_logprobs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut lp = self.inner.next_logprobs(prefix)?;
        if self.tau != 1.0 {
            lp.iter_mut().for_each(|x| *x /= self.tau);
            log_normalize(&mut lp);
        }
        Ok(lp)
    }
}
