//! Built-in models.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seqlabel::Tag;

use super::{HmmParams, ModelFile};

pub const PRESETS: &[&str] = &["ambiguous-loc", "tiny"];

pub fn preset(name: &str) -> Result<HmmParams> {
    match name {
        "ambiguous-loc" => ambiguous_loc(),
        "tiny" => tiny(),
        _ => Err(Error::Config(format!(
            "unknown preset {name:?} (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let z: f64 = weights.iter().sum();
    weights.iter().map(|w| w / z).collect()
}

fn sparse_row(vocab: &[&str], entries: &[(&str, f64)]) -> Vec<f64> {
    let mut row = vec![0.0; vocab.len()];
    for (w, p) in entries {
        let i = vocab
            .iter()
            .position(|v| v == w)
            .expect("preset word in vocab");
        row[i] += p;
    }
    normalized(&row)
}

fn tags(spec: &str) -> Vec<Tag> {
    spec.split_whitespace()
        .map(|t| t.parse().expect("preset tag"))
        .collect()
}

/// Restaurant-search style queries with two labels whose boundaries compete
/// over the words "in", "the", "area" and "near": each can be outside, open a
/// location, or continue one.
fn ambiguous_loc() -> Result<HmmParams> {
    let vocab = [
        "do", "you", "have", "listings", "of", "any", "find", "show", "me", "a", "good", "places",
        "open", "late", "in", "the", "area", "near", "diners", "thai", "pizza", "sushi", "burgers",
        "downtown", "city", "town", "here", "north",
    ];
    let outside = sparse_row(
        &vocab,
        &[
            ("do", 0.07),
            ("you", 0.07),
            ("have", 0.07),
            ("listings", 0.05),
            ("of", 0.08),
            ("any", 0.05),
            ("find", 0.07),
            ("show", 0.05),
            ("me", 0.07),
            ("a", 0.06),
            ("good", 0.05),
            ("places", 0.06),
            ("open", 0.04),
            ("late", 0.03),
            ("in", 0.07),
            ("the", 0.07),
            ("area", 0.02),
            ("near", 0.03),
            ("diners", 0.02),
        ],
    );
    let b_loc = sparse_row(
        &vocab,
        &[
            ("in", 0.18),
            ("the", 0.12),
            ("near", 0.14),
            ("area", 0.06),
            ("downtown", 0.15),
            ("city", 0.06),
            ("town", 0.06),
            ("here", 0.1),
            ("north", 0.13),
        ],
    );
    let i_loc = sparse_row(
        &vocab,
        &[
            ("the", 0.3),
            ("area", 0.3),
            ("city", 0.1),
            ("town", 0.1),
            ("downtown", 0.05),
            ("here", 0.05),
            ("north", 0.1),
        ],
    );
    let b_cui = sparse_row(
        &vocab,
        &[
            ("diners", 0.25),
            ("thai", 0.2),
            ("pizza", 0.2),
            ("sushi", 0.15),
            ("burgers", 0.15),
            ("the", 0.05),
        ],
    );
    let i_cui = sparse_row(
        &vocab,
        &[
            ("diners", 0.3),
            ("pizza", 0.2),
            ("burgers", 0.2),
            ("sushi", 0.15),
            ("thai", 0.15),
        ],
    );
    // O, B-Location, I-Location, B-Cuisine, I-Cuisine
    let file = ModelFile {
        tag_set: tags("O B-Location I-Location B-Cuisine I-Cuisine"),
        vocab: vocab.iter().map(|w| w.to_string()).collect(),
        initial: normalized(&[0.8, 0.1, 0.0, 0.1, 0.0]),
        transition: vec![
            normalized(&[0.75, 0.12, 0.0, 0.13, 0.0]),
            normalized(&[0.35, 0.03, 0.55, 0.07, 0.0]),
            normalized(&[0.4, 0.05, 0.45, 0.1, 0.0]),
            normalized(&[0.6, 0.2, 0.0, 0.05, 0.15]),
            normalized(&[0.6, 0.25, 0.0, 0.05, 0.1]),
        ],
        emission: vec![outside, b_loc, i_loc, b_cui, i_cui],
    };
    HmmParams::new(file)
}

/// Three tags over four words; small enough to enumerate long inputs.
fn tiny() -> Result<HmmParams> {
    HmmParams::new(ModelFile {
        tag_set: tags("O B-X I-X"),
        vocab: ["a", "b", "c", "d"].iter().map(|w| w.to_string()).collect(),
        initial: vec![0.6, 0.4, 0.0],
        transition: vec![
            vec![0.6, 0.4, 0.0],
            vec![0.3, 0.2, 0.5],
            vec![0.5, 0.2, 0.3],
        ],
        emission: vec![
            vec![0.5, 0.3, 0.1, 0.1],
            vec![0.1, 0.5, 0.3, 0.1],
            vec![0.1, 0.2, 0.3, 0.4],
        ],
    })
}

/// A random HMM over `O` plus `B-Lk`/`I-Lk` for `n_labels` labels and words
/// `w0..`. Rows are peaked Dirichlet-like draws with BIO-illegal entries zeroed.
pub fn random_hmm<R: Rng + ?Sized>(rng: &mut R, n_labels: usize, vocab_size: usize) -> HmmParams {
    let mut tag_set = vec![Tag::O];
    for l in 0..n_labels {
        tag_set.push(Tag::B(format!("L{l}")));
        tag_set.push(Tag::I(format!("L{l}")));
    }
    let mut draw = |len: usize, allowed: &dyn Fn(usize) -> bool| -> Vec<f64> {
        let w: Vec<f64> = (0..len)
            .map(|i| {
                if allowed(i) {
                    let e = -(1.0 - rng.gen::<f64>()).ln();
                    e * e + 1e-3
                } else {
                    0.0
                }
            })
            .collect();
        normalized(&w)
    };
    let initial = draw(tag_set.len(), &|j| tag_set[j].may_follow(None));
    let transition = (0..tag_set.len())
        .map(|i| draw(tag_set.len(), &|j| tag_set[j].may_follow(Some(&tag_set[i]))))
        .collect();
    let emission = (0..tag_set.len())
        .map(|_| draw(vocab_size, &|_| true))
        .collect();
    HmmParams::new(ModelFile {
        vocab: (0..vocab_size).map(|i| format!("w{i}")).collect(),
        tag_set,
        initial,
        transition,
        emission,
    })
    .expect("random rows are valid")
}
