//! Inputs, BIO tag sequences and labeled spans.
//!
//! Output units follow the sentinel+tag layout: one tag unit per input word,
//! with the word's sentinel implied by its position. That keeps every
//! candidate in a beam positionally aligned with the input, so spans from
//! different candidates can be compared by `(start, end, label, phrase)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label carried by spans built from `O` words.
pub const OUTSIDE: &str = "O";

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label != OUTSIDE
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(String),
    I(String),
}

impl Tag {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::O => None,
            Tag::B(l) | Tag::I(l) => Some(l),
        }
    }

    /// Whether `self` may directly follow `prev` (`None` = sequence start).
    pub fn may_follow(&self, prev: Option<&Tag>) -> bool {
        match self {
            Tag::O | Tag::B(_) => true,
            Tag::I(label) => match prev {
                Some(Tag::B(p)) | Some(Tag::I(p)) => p == label,
                _ => false,
            },
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(l) => write!(f, "B-{l}"),
            Tag::I(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let (kind, label) = s
            .split_once('-')
            .ok_or_else(|| Error::Format(format!("unknown tag {s:?}")))?;
        if !valid_label(label) {
            return Err(Error::Format(format!("bad label in tag {s:?}")));
        }
        match kind {
            "B" => Ok(Tag::B(label.to_string())),
            "I" => Ok(Tag::I(label.to_string())),
            _ => Err(Error::Format(format!("unknown tag {s:?}"))),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The closed set of task labels (excluding `O`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(BTreeSet<String>);

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for l in labels {
            let l = l.into();
            if !valid_label(&l) {
                return Err(Error::Format(format!("invalid label {l:?}")));
            }
            set.insert(l);
        }
        Ok(LabelSet(set))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parse a tag string and reject labels outside the set.
    pub fn parse_tag(&self, s: &str) -> Result<Tag> {
        let tag: Tag = s.parse()?;
        match tag.label() {
            Some(l) if !self.contains(l) => Err(Error::Format(format!(
                "label {l:?} is not in the label set"
            ))),
            _ => Ok(tag),
        }
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(s: LabelSet) -> Self {
        s.0.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputText {
    pub id: String,
    words: Vec<String>,
}

impl InputText {
    pub fn new(id: impl Into<String>, words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Usage(
                "input text must have at least one word".into(),
            ));
        }
        if let Some(w) = words
            .iter()
            .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return Err(Error::Format(format!("invalid word {w:?}")));
        }
        Ok(InputText {
            id: id.into(),
            words,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A BIO-well-formed tag sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TagSequence(Vec<Tag>);

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        let mut prev = None;
        for (i, t) in tags.iter().enumerate() {
            if !t.may_follow(prev) {
                return Err(Error::Format(format!(
                    "{t} at position {i} does not continue a span"
                )));
            }
            prev = Some(t);
        }
        Ok(TagSequence(tags))
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The output units (one tag string per word).
    pub fn to_units(&self) -> Vec<String> {
        self.0.iter().map(Tag::to_string).collect()
    }

    /// Number of maximal B/I runs.
    pub fn non_o_spans(&self) -> usize {
        self.0.iter().filter(|t| matches!(t, Tag::B(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub phrase: String,
}

impl LabeledSpan {
    pub fn is_outside(&self) -> bool {
        self.label == OUTSIDE
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// The tag pattern this span occupies at `[start, end)`.
    pub fn pattern(&self) -> Vec<Tag> {
        if self.is_outside() {
            return vec![Tag::O; self.len()];
        }
        (self.start..self.end)
            .map(|i| {
                if i == self.start {
                    Tag::B(self.label.clone())
                } else {
                    Tag::I(self.label.clone())
                }
            })
            .collect()
    }

    /// Check bounds and phrase against an input.
    pub fn check_against(&self, words: &[String]) -> Result<()> {
        if self.start >= self.end || self.end > words.len() {
            return Err(Error::Range(format!(
                "span [{}, {}) outside a {}-word input",
                self.start,
                self.end,
                words.len()
            )));
        }
        if self.is_outside() && self.len() != 1 {
            return Err(Error::Range("O spans cover exactly one word".into()));
        }
        if !self.is_outside() && !valid_label(&self.label) {
            return Err(Error::Format(format!("invalid label {:?}", self.label)));
        }
        if words[self.start..self.end].join(" ") != self.phrase {
            return Err(Error::Range(format!(
                "phrase {:?} does not match words [{}, {})",
                self.phrase, self.start, self.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub id: String,
    pub tags: TagSequence,
}

/// Split a tag sequence into labeled spans: each maximal B/I run is one span
/// and each `O` word is a span of its own.
pub fn segment_spans(words: &[String], tags: &TagSequence) -> Result<Vec<LabeledSpan>> {
    if words.len() != tags.len() {
        return Err(Error::Alignment(format!(
            "{} tags for {} words",
            tags.len(),
            words.len()
        )));
    }
    let tags = tags.tags();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        let (label, end) = match &tags[i] {
            Tag::O => (OUTSIDE.to_string(), i + 1),
            Tag::B(l) => {
                let mut end = i + 1;
                while end < tags.len() && matches!(&tags[end], Tag::I(m) if m == l) {
                    end += 1;
                }
                (l.clone(), end)
            }
            // TagSequence::new rejects this
            Tag::I(_) => return Err(Error::Format(format!("I tag opens a span at {i}"))),
        };
        spans.push(LabeledSpan {
            start: i,
            end,
            label,
            phrase: words[i..end].join(" "),
        });
        i = end;
    }
    Ok(spans)
}

/// Inverse of [`segment_spans`].
pub fn spans_to_tags(spans: &[LabeledSpan]) -> Result<TagSequence> {
    let mut tags = Vec::new();
    for s in spans {
        if s.start != tags.len() {
            return Err(Error::Alignment(format!(
                "span at {} does not continue from {}",
                s.start,
                tags.len()
            )));
        }
        tags.extend(s.pattern());
    }
    TagSequence::new(tags)
}

pub fn sentinel(i: usize) -> String {
    format!("<s{i}>")
}

/// Input side of the sentinel+tag format: `<s_i>` before each word.
pub fn encode_si(words: &[String]) -> Result<Vec<String>> {
    if words.is_empty() {
        return Err(Error::Usage("cannot encode an empty input".into()));
    }
    Ok(words
        .iter()
        .enumerate()
        .flat_map(|(i, w)| [sentinel(i), w.clone()])
        .collect())
}

/// Decode one tag unit per word back into a tag sequence.
pub fn decode_si<S: AsRef<str>>(units: &[S], n: usize, labels: &LabelSet) -> Result<TagSequence> {
    if units.len() != n {
        return Err(Error::Alignment(format!(
            "{} output units for {n} words",
            units.len()
        )));
    }
    let tags = units
        .iter()
        .map(|u| labels.parse_tag(u.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    TagSequence::new(tags)
}

/// Gold spans for one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSpans {
    pub id: String,
    pub spans: Vec<LabeledSpan>,
}

impl GoldSpans {
    pub fn from_annotation(input: &InputText, gold: &GoldAnnotation) -> Result<Self> {
        if input.id != gold.id {
            return Err(Error::Usage(format!(
                "gold id {:?} does not match input {:?}",
                gold.id, input.id
            )));
        }
        Ok(GoldSpans {
            id: gold.id.clone(),
            spans: segment_spans(input.words(), &gold.tags)?,
        })
    }

    pub fn non_o(&self) -> usize {
        self.spans.iter().filter(|s| !s.is_outside()).count()
    }
}

/// Exact match: gold must hold a span with the same position, phrase and label.
pub fn match_span(pred_id: &str, pred: &LabeledSpan, gold: &GoldSpans) -> Result<bool> {
    if pred_id != gold.id {
        return Err(Error::Usage(format!(
            "prediction {pred_id:?} matched against gold {:?}",
            gold.id
        )));
    }
    Ok(gold.spans.iter().any(|g| g == pred))
}

/// One line of a gold JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: String,
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

impl GoldRecord {
    pub fn new(input: &InputText, gold: &GoldAnnotation) -> Self {
        GoldRecord {
            id: input.id.clone(),
            words: input.words().to_vec(),
            tags: gold.tags.to_units(),
        }
    }

    pub fn parse(&self, labels: &LabelSet) -> Result<(InputText, GoldAnnotation)> {
        let input = InputText::new(self.id.clone(), self.words.clone())?;
        let tags = decode_si(&self.tags, input.len(), labels)?;
        let gold = GoldAnnotation {
            id: self.id.clone(),
            tags,
        };
        Ok((input, gold))
    }
}
