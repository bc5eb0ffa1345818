//! Span-level confidence estimation for generative sequence labeling.
//!
//! A labeling model emits one BIO tag per input word; beam search over the
//! model yields a ranked list of candidate tag sequences. From that list this
//! crate derives a confidence for every span of the best candidate
//! ([`confidence`]) and measures how well those confidences are calibrated
//! with expected calibration error ([`calibration`]).
//!
//! [`refmodel`] provides an HMM whose posteriors are exactly computable. It
//! plugs into the decoder like any other [`Scorer`] and supplies the exact
//! marginals the beam estimators converge to as the beam covers the output
//! space.

pub mod beam;
pub mod calibration;
pub mod confidence;
pub mod error;
pub mod io;
pub mod logspace;
pub mod pipeline;
pub mod refmodel;
pub mod seqlabel;

pub use beam::{beam_search, force_score, BeamCandidate, BeamResult};
pub use calibration::{assign_bin, compute_ece, CalibrationReport, SpanFilter};
pub use confidence::{score_all, AggSpanMode, ConfidenceScore, Method, MethodConfig};
pub use error::{Error, Result};
pub use refmodel::{HmmParams, Scorer};
pub use seqlabel::{InputText, LabeledSpan, Tag, TagSequence};
