//! Stage workflows behind the `spanconf` subcommands.
//!
//! Stages communicate only through files (gold JSONL, model JSON,
//! predictions JSONL, scored-spans JSONL, report JSON/CSV), so predictions
//! from an external model can enter at the decode boundary. Per-example work
//! runs on a bounded worker pool; outputs are written in input order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_search, PredictionRecord};
use crate::calibration::{
    reliability_table, CalibrationReport, ExcludedCounts, MeanSd, ScoredOutcome, SpanF1,
};
use crate::confidence::{score_all, AggSpanMode, Method, MethodConfig, ScoredSpanRecord};
use crate::error::{Error, Result};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, write_text};
use crate::refmodel::{
    enumerate_all, exact_pattern_marginal, exact_span_marginal, perturb_temperature, preset,
    sample_corpus, HmmParams, SampleConfig, Scorer, ENUMERATION_CAP,
};
use crate::seqlabel::{
    match_span, segment_spans, GoldAnnotation, GoldRecord, GoldSpans, InputText, LabelSet,
    LabeledSpan,
};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_ADAPTIVE_K: usize = 10;
pub const DEFAULT_B: usize = 1;
pub const DEFAULT_BINS: usize = 10;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

pub fn load_labels(labels: Option<&Path>, model: Option<&HmmParams>) -> Result<LabelSet> {
    match (labels, model) {
        (Some(path), _) => read_json(path),
        (None, Some(m)) => Ok(m.labels()),
        (None, None) => Err(Error::Usage(
            "a label set is required: pass --labels or --model".into(),
        )),
    }
}

pub fn load_gold(path: &Path, labels: &LabelSet) -> Result<Vec<(InputText, GoldAnnotation)>> {
    let records: Vec<GoldRecord> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Format(format!(
                    "duplicate id {:?} in {}",
                    r.id,
                    path.display()
                )));
            }
            r.parse(labels)
        })
        .collect()
}

fn write_gold(path: &Path, corpus: &[(InputText, GoldAnnotation)]) -> Result<()> {
    let records: Vec<GoldRecord> = corpus.iter().map(|(x, g)| GoldRecord::new(x, g)).collect();
    write_jsonl(path, &records)
}

fn load_scorer(model: &Path, tau: f64) -> Result<(HmmParams, f64)> {
    let params = HmmParams::load(model)?;
    perturb_temperature(&params, tau)?;
    Ok((params, tau))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub preset: Option<String>,
    pub model_spec: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub model: PathBuf,
    pub labels: PathBuf,
    pub splits: Vec<(String, PathBuf, usize)>,
}

fn split_seed(seed: u64, split: u64) -> u64 {
    seed ^ split.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_synth(cfg: &SynthConfig) -> Result<SynthSummary> {
    let params = match (&cfg.preset, &cfg.model_spec) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => HmmParams::load(path)?,
        _ => {
            return Err(Error::Config(
                "give exactly one of a preset name or a model spec".into(),
            ))
        }
    };
    let splits = [
        ("train", cfg.train),
        ("validation", cfg.validation),
        ("test", cfg.test),
    ];
    if splits.iter().any(|(_, c)| *c == 0) {
        return Err(Error::Config(
            "every split needs a count of at least 1".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let model = cfg.out_dir.join("model.json");
    let labels = cfg.out_dir.join("labels.json");
    write_json(&model, params.model_file())?;
    write_json(&labels, &params.labels())?;
    let mut written = Vec::new();
    for (i, (name, count)) in splits.into_iter().enumerate() {
        let corpus = sample_corpus(
            &params,
            &SampleConfig {
                count,
                min_len: cfg.min_len,
                max_len: cfg.max_len,
                seed: split_seed(cfg.seed, i as u64),
                id_prefix: format!("{name}-"),
            },
        )?;
        let path = cfg.out_dir.join(format!("{name}.jsonl"));
        write_gold(&path, &corpus)?;
        info!("wrote {count} {name} examples to {}", path.display());
        written.push((name.to_string(), path, count));
    }
    Ok(SynthSummary {
        model,
        labels,
        splits: written,
    })
}

// ---------------------------------------------------------------- decode

#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub model: PathBuf,
    pub gold: PathBuf,
    pub out: PathBuf,
    pub k: usize,
    pub tau: f64,
    /// Beam wide enough to hold every tag sequence.
    pub exhaustive: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeSummary {
    pub examples: usize,
    pub candidates: usize,
}

pub fn exhaustive_k(num_tags: usize, n: usize) -> Result<usize> {
    u32::try_from(n)
        .ok()
        .and_then(|n| num_tags.checked_pow(n))
        .filter(|&c| c <= ENUMERATION_CAP)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{num_tags}^{n} tag sequences exceed the cap of {ENUMERATION_CAP}"
            ))
        })
}

pub fn run_decode(cfg: &DecodeConfig) -> Result<DecodeSummary> {
    let (params, tau) = load_scorer(&cfg.model, cfg.tau)?;
    let scorer = perturb_temperature(&params, tau)?;
    let gold = load_gold(&cfg.gold, &params.labels())?;
    if cfg.k < 1 && !cfg.exhaustive {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let records = pool(cfg.workers)?.install(|| {
        gold.par_iter()
            .map(|(x, _)| {
                let k = if cfg.exhaustive {
                    exhaustive_k(params.num_tags(), x.len())?
                } else {
                    cfg.k
                };
                let beam = beam_search(&scorer, x, k)?;
                Ok(PredictionRecord::from_beam(&beam, x.len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_jsonl(&cfg.out, &records)?;
    let candidates = records.iter().map(|r| r.candidates.len()).sum();
    info!(
        "decoded {} examples into {}",
        records.len(),
        cfg.out.display()
    );
    Ok(DecodeSummary {
        examples: records.len(),
        candidates,
    })
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub predictions: PathBuf,
    pub gold: PathBuf,
    pub model: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// `None` picks 5, or 10 for AdaAggSeq.
    pub k: Option<usize>,
    pub b: usize,
    pub aggspan_mode: AggSpanMode,
    pub tau: f64,
    pub workers: usize,
    pub out: PathBuf,
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct EstimateSummary {
    pub examples: usize,
    pub records: usize,
    pub excluded: ExcludedCounts,
}

impl EstimateConfig {
    pub fn method_config(&self, method: Method) -> MethodConfig {
        let default_k = if method == Method::AdaAggSeq {
            DEFAULT_ADAPTIVE_K
        } else {
            DEFAULT_K
        };
        MethodConfig {
            method,
            k: self.k.unwrap_or(default_k),
            b: self.b,
            aggspan_mode: self.aggspan_mode,
        }
    }
}

pub fn run_estimate(cfg: &EstimateConfig) -> Result<EstimateSummary> {
    if cfg.methods.is_empty() {
        return Err(Error::Usage("no estimation method selected".into()));
    }
    let needs_scorer =
        cfg.methods.contains(&Method::AggSpan) && cfg.aggspan_mode == AggSpanMode::Rescoring;
    let params = match &cfg.model {
        Some(path) => Some(HmmParams::load(path)?),
        None if needs_scorer => {
            return Err(Error::Usage("AggSpan rescoring mode needs --model".into()))
        }
        None => None,
    };
    let scorer = params
        .as_ref()
        .map(|p| perturb_temperature(p, cfg.tau))
        .transpose()?;
    let labels = load_labels(cfg.labels.as_deref(), params.as_ref())?;
    let inputs: HashMap<String, InputText> = load_gold(&cfg.gold, &labels)?
        .into_iter()
        .map(|(x, _)| (x.id.clone(), x))
        .collect();
    let predictions: Vec<PredictionRecord> = read_jsonl(&cfg.predictions)?;
    if predictions.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "{} holds no predictions",
            cfg.predictions.display()
        )));
    }
    let method_cfgs: Vec<MethodConfig> =
        cfg.methods.iter().map(|&m| cfg.method_config(m)).collect();
    for mc in &method_cfgs {
        mc.validate()?;
    }
    let scorer_ref = scorer.as_ref().map(|s| s as &dyn Scorer);

    struct ExampleOut {
        records: Vec<ScoredSpanRecord>,
        excluded: ExcludedCounts,
    }
    let outs = pool(cfg.workers)?.install(|| {
        predictions
            .into_par_iter()
            .map(|rec| -> Result<ExampleOut> {
                let x = inputs.get(&rec.id).ok_or_else(|| {
                    Error::Usage(format!(
                        "prediction {:?} has no input in the gold file",
                        rec.id
                    ))
                })?;
                if rec.n_words != x.len() {
                    return Err(Error::Alignment(format!(
                        "prediction {:?} covers {} words, input has {}",
                        rec.id,
                        rec.n_words,
                        x.len()
                    )));
                }
                let beam = rec.into_beam(&labels)?;
                let mut out = ExampleOut {
                    records: Vec::new(),
                    excluded: ExcludedCounts {
                        dropped_candidates: beam.dropped,
                        ..Default::default()
                    },
                };
                for mc in &method_cfgs {
                    match score_all(x, &beam, mc, scorer_ref) {
                        Ok(scored) => {
                            out.excluded.degenerate_spans += scored.degenerate.len();
                            out.records.extend(
                                scored
                                    .scores
                                    .iter()
                                    .map(|s| ScoredSpanRecord::new(&x.id, s)),
                            );
                        }
                        Err(Error::Decode(_)) => {
                            out.excluded.decode_errors = 1;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summary = EstimateSummary {
        examples: outs.len(),
        ..Default::default()
    };
    let mut records = Vec::new();
    for o in outs {
        summary.excluded.merge(&o.excluded);
        records.extend(o.records);
    }
    summary.records = records.len();
    write_jsonl(&cfg.out, &records)?;
    if let Some(path) = &cfg.diagnostics {
        write_json(path, &summary)?;
    }
    info!(
        "scored {} spans from {} examples into {}",
        summary.records,
        summary.examples,
        cfg.out.display()
    );
    Ok(summary)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    /// One scored-spans file per run (seed).
    pub scored: Vec<PathBuf>,
    /// Optional estimate diagnostics, matched to `scored` by position.
    pub diagnostics: Vec<PathBuf>,
    pub gold: PathBuf,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub bins: usize,
    /// Fail when no non-O span is left; otherwise ECE_NO is omitted.
    pub require_no: bool,
    pub out: PathBuf,
    pub csv_dir: Option<PathBuf>,
    /// Write the scored spans of a single run back out with `correct` filled.
    pub annotated_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub source: String,
    pub reports: Vec<CalibrationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub ece_all: MeanSd,
    pub ece_no: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub bins: usize,
    pub runs: Vec<RunReport>,
    pub summary: Vec<MethodSummary>,
}

/// Fill `correct` on each record by exact match against the gold spans.
pub fn annotate(records: &mut [ScoredSpanRecord], gold: &HashMap<String, GoldSpans>) -> Result<()> {
    for r in records {
        let g = gold.get(&r.id).ok_or_else(|| {
            Error::Usage(format!("scored span id {:?} is not in the gold file", r.id))
        })?;
        r.correct = Some(match_span(&r.id, &r.span(), g)?);
    }
    Ok(())
}

fn span_f1(records: &[&ScoredSpanRecord], gold: &HashMap<String, GoldSpans>) -> SpanF1 {
    let predicted: Vec<_> = records
        .iter()
        .filter(|r| r.label != crate::seqlabel::OUTSIDE)
        .collect();
    let matched = predicted.iter().filter(|r| r.correct == Some(true)).count();
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let gold_count = ids
        .iter()
        .filter_map(|id| gold.get(*id))
        .map(GoldSpans::non_o)
        .sum();
    SpanF1::new(predicted.len(), gold_count, matched)
}

pub fn run_evaluate(cfg: &EvaluateConfig) -> Result<EvaluationReport> {
    if cfg.scored.is_empty() {
        return Err(Error::Usage("no scored-spans file given".into()));
    }
    if !cfg.diagnostics.is_empty() && cfg.diagnostics.len() != cfg.scored.len() {
        return Err(Error::Usage(
            "give one diagnostics file per scored file".into(),
        ));
    }
    if cfg.annotated_out.is_some() && cfg.scored.len() != 1 {
        return Err(Error::Usage(
            "--annotated-out needs exactly one scored file".into(),
        ));
    }
    let model = cfg.model.as_deref().map(HmmParams::load).transpose()?;
    let labels = load_labels(cfg.labels.as_deref(), model.as_ref())?;
    let gold: HashMap<String, GoldSpans> = load_gold(&cfg.gold, &labels)?
        .iter()
        .map(|(x, g)| Ok((x.id.clone(), GoldSpans::from_annotation(x, g)?)))
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    for (i, path) in cfg.scored.iter().enumerate() {
        let mut records: Vec<ScoredSpanRecord> = read_jsonl(path)?;
        if records.is_empty() {
            return Err(Error::EmptyEvaluation(format!(
                "{} is empty",
                path.display()
            )));
        }
        annotate(&mut records, &gold)?;
        let excluded = match cfg.diagnostics.get(i) {
            Some(d) => read_json::<EstimateSummary>(d)?.excluded,
            None => ExcludedCounts::default(),
        };
        let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
        methods.sort();
        methods.dedup();
        let mut reports = Vec::new();
        for m in methods {
            let subset: Vec<&ScoredSpanRecord> = records.iter().filter(|r| r.method == m).collect();
            let outcomes: Vec<ScoredOutcome> = subset
                .iter()
                .map(|r| ScoredOutcome {
                    confidence: r.confidence,
                    correct: r.correct == Some(true),
                    is_outside: r.label == crate::seqlabel::OUTSIDE,
                })
                .collect();
            let mut report = CalibrationReport::build(
                m.name(),
                &outcomes,
                cfg.bins,
                cfg.require_no,
                excluded.clone(),
            )?;
            report.span_f1 = Some(span_f1(&subset, &gold));
            if let Some(dir) = &cfg.csv_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("run{i}"));
                write_text(
                    &dir.join(format!("{stem}.{m}.all.csv")),
                    &reliability_table(&report.bins_all),
                )?;
                if let Some(bins_no) = &report.bins_no {
                    write_text(
                        &dir.join(format!("{stem}.{m}.no.csv")),
                        &reliability_table(bins_no),
                    )?;
                }
            }
            reports.push(report);
        }
        if let Some(out) = &cfg.annotated_out {
            write_jsonl(out, &records)?;
        }
        runs.push(RunReport {
            source: path.display().to_string(),
            reports,
        });
    }

    let mut summary: Vec<MethodSummary> = Vec::new();
    let mut names: Vec<&str> = runs
        .iter()
        .flat_map(|r| r.reports.iter().map(|c| c.method.as_str()))
        .collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let reps: Vec<&CalibrationReport> = runs
            .iter()
            .filter_map(|r| r.reports.iter().find(|c| c.method == name))
            .collect();
        let all: Vec<f64> = reps.iter().map(|r| r.ece_all).collect();
        let no: Vec<f64> = reps.iter().filter_map(|r| r.ece_no).collect();
        summary.push(MethodSummary {
            method: name.to_string(),
            ece_all: MeanSd::of(&all).expect("at least one run"),
            ece_no: if no.len() == reps.len() {
                MeanSd::of(&no)
            } else {
                None
            },
        });
    }
    let report = EvaluationReport {
        bins: cfg.bins,
        runs,
        summary,
    };
    write_json(&cfg.out, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- oracle

/// `ID:START:END:LABEL`, e.g. `test-000003:4:6:Location`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanQuery {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl std::str::FromStr for SpanQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.rsplitn(4, ':').collect();
        let bad = || Error::Range(format!("malformed span request {s:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(SpanQuery {
            label: parts[0].to_string(),
            end: parts[1].parse().map_err(|_| bad())?,
            start: parts[2].parse().map_err(|_| bad())?,
            id: parts[3].to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub model: PathBuf,
    pub gold: PathBuf,
    /// Spans of the top-1 candidates in this file; the model's own top-1 otherwise.
    pub predictions: Option<PathBuf>,
    pub spans: Vec<SpanQuery>,
    /// Cross-check every marginal by enumeration.
    pub exhaustive: bool,
    pub workers: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub phrase: String,
    pub pattern_marginal: f64,
    pub span_marginal: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub enum_pattern_marginal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub enum_span_marginal: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub spans: usize,
    /// Largest DP-vs-enumeration difference, when cross-checked.
    pub max_abs_diff: Option<f64>,
}

fn oracle_record(
    params: &HmmParams,
    x: &InputText,
    span: LabeledSpan,
    exhaustive: bool,
) -> Result<OracleRecord> {
    let pattern_marginal = exact_pattern_marginal(params, x, &span)?;
    let span_marginal = exact_span_marginal(params, x, &span)?;
    let (enum_pattern_marginal, enum_span_marginal) = if exhaustive {
        let all = enumerate_all(params, x, ENUMERATION_CAP)?;
        let pattern = span.pattern();
        let mut p = 0.0;
        let mut s = 0.0;
        for (seq, q) in &all {
            if seq.tags()[span.start..span.end] == pattern[..] {
                p += q;
            }
            if segment_spans(x.words(), seq)?.contains(&span) {
                s += q;
            }
        }
        (Some(p), Some(s))
    } else {
        (None, None)
    };
    Ok(OracleRecord {
        id: x.id.clone(),
        start: span.start,
        end: span.end,
        label: span.label,
        phrase: span.phrase,
        pattern_marginal,
        span_marginal,
        enum_pattern_marginal,
        enum_span_marginal,
    })
}

pub fn run_oracle(cfg: &OracleConfig) -> Result<OracleSummary> {
    let params = HmmParams::load(&cfg.model)?;
    let labels = params.labels();
    let gold = load_gold(&cfg.gold, &labels)?;
    let by_id: HashMap<&str, &InputText> = gold.iter().map(|(x, _)| (x.id.as_str(), x)).collect();

    let mut jobs: Vec<(&InputText, LabeledSpan)> = Vec::new();
    if !cfg.spans.is_empty() {
        for q in &cfg.spans {
            let x = by_id
                .get(q.id.as_str())
                .ok_or_else(|| Error::Usage(format!("no input with id {:?}", q.id)))?;
            if q.start >= q.end || q.end > x.len() {
                return Err(Error::Range(format!(
                    "span [{}, {}) outside the {}-word input {:?}",
                    q.start,
                    q.end,
                    x.len(),
                    q.id
                )));
            }
            jobs.push((
                x,
                LabeledSpan {
                    start: q.start,
                    end: q.end,
                    label: q.label.clone(),
                    phrase: x.words()[q.start..q.end].join(" "),
                },
            ));
        }
    } else if let Some(path) = &cfg.predictions {
        for rec in read_jsonl::<PredictionRecord>(path)? {
            let x = by_id
                .get(rec.id.as_str())
                .ok_or_else(|| Error::Usage(format!("no input with id {:?}", rec.id)))?;
            let beam = rec.into_beam(&labels)?;
            match beam.top1() {
                Ok(top1) => {
                    for s in segment_spans(x.words(), &top1.tags)? {
                        jobs.push((x, s));
                    }
                }
                Err(Error::Decode(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    } else {
        for (x, _) in &gold {
            let beam = beam_search(&params, x, 1)?;
            for s in segment_spans(x.words(), &beam.top1()?.tags)? {
                jobs.push((x, s));
            }
        }
    }

    let records = pool(cfg.workers)?.install(|| {
        jobs.into_par_iter()
            .map(|(x, span)| oracle_record(&params, x, span, cfg.exhaustive))
            .collect::<Result<Vec<_>>>()
    })?;
    write_jsonl(&cfg.out, &records)?;
    let max_abs_diff = cfg.exhaustive.then(|| {
        records
            .iter()
            .flat_map(|r| {
                [
                    (r.pattern_marginal - r.enum_pattern_marginal.unwrap_or(f64::NAN)).abs(),
                    (r.span_marginal - r.enum_span_marginal.unwrap_or(f64::NAN)).abs(),
                ]
            })
            .fold(0.0, f64::max)
    });
    Ok(OracleSummary {
        spans: records.len(),
        max_abs_diff,
    })
}
