use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use spanconf_ffi::*;

fn cstrings(words: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = words.iter().map(|w| CString::new(*w).unwrap()).collect();
    let ptrs = owned.iter().map(|c| c.as_ptr()).collect();
    (owned, ptrs)
}

fn last_error() -> String {
    let p = spanconf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn preset_model(name: &str) -> *mut SpanconfModel {
    let name = CString::new(name).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { spanconf_model_preset(name.as_ptr(), &mut model) },
        SpanconfStatus::Ok
    );
    model
}

fn search(model: *const SpanconfModel, words: &[&str], k: usize) -> *mut SpanconfBeam {
    let (_owned, ptrs) = cstrings(words);
    let id = CString::new("ex").unwrap();
    let mut beam = ptr::null_mut();
    let status = unsafe {
        spanconf_beam_search(
            model,
            id.as_ptr(),
            ptrs.as_ptr(),
            ptrs.len(),
            k,
            1.0,
            &mut beam,
        )
    };
    assert_eq!(status, SpanconfStatus::Ok);
    beam
}

fn config(method: SpanconfMethod, k: usize) -> SpanconfMethodConfig {
    SpanconfMethodConfig {
        method,
        k,
        b: 1,
        aggspan_mode: SpanconfAggSpanMode::Rescoring,
        tau: 1.0,
    }
}

#[test]
fn decode_and_score() {
    let model = preset_model("ambiguous-loc");
    let words = ["find", "thai", "places", "in", "the", "area"];
    let beam = search(model, &words, 5);
    let mut n = 0;
    assert_eq!(
        unsafe { spanconf_beam_len(beam, &mut n) },
        SpanconfStatus::Ok
    );
    assert!((1..=5).contains(&n));

    let mut scores = [0.0f64; 16];
    for method in [
        SpanconfMethod::Span,
        SpanconfMethod::AggSpan,
        SpanconfMethod::AggSeq,
        SpanconfMethod::AdaAggSeq,
    ] {
        let mut spans = 0;
        let cfg = config(method, 5);
        let status = unsafe {
            spanconf_score(
                beam,
                model,
                &cfg,
                scores.as_mut_ptr(),
                scores.len(),
                &mut spans,
            )
        };
        assert_eq!(status, SpanconfStatus::Ok, "{method:?}: {}", last_error());
        assert!(spans >= 1 && spans <= words.len());
        assert!(scores[..spans].iter().all(|c| (0.0..=1.0).contains(c)));
    }

    // AggSeq at k = 1 is exactly one for every span
    let mut spans = 0;
    let cfg = config(SpanconfMethod::AggSeq, 1);
    unsafe {
        spanconf_score(
            beam,
            ptr::null(),
            &cfg,
            scores.as_mut_ptr(),
            scores.len(),
            &mut spans,
        )
    };
    assert!(scores[..spans].iter().all(|&c| c == 1.0));

    // a short buffer still reports the full count
    let mut short = [0.0f64; 1];
    let mut total = 0;
    let cfg = config(SpanconfMethod::Span, 5);
    assert_eq!(
        unsafe { spanconf_score(beam, ptr::null(), &cfg, short.as_mut_ptr(), 1, &mut total) },
        SpanconfStatus::Ok
    );
    assert_eq!(total, spans);

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { spanconf_score_json(beam, model, &cfg, &mut json) },
        SpanconfStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { spanconf_string_free(json) };
    let records: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(records.as_array().unwrap().len(), spans);
    assert_eq!(records[0]["method"], "Span");

    unsafe {
        spanconf_beam_free(beam);
        spanconf_model_free(model);
    }
}

#[test]
fn predictions_round_trip() {
    let model = preset_model("tiny");
    let words = ["a", "b", "c", "d"];
    let beam = search(model, &words, 4);
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { spanconf_beam_to_json(beam, &mut json) },
        SpanconfStatus::Ok
    );

    let (_owned, ptrs) = cstrings(&words);
    let mut back = ptr::null_mut();
    let status =
        unsafe { spanconf_beam_from_prediction(model, json, ptrs.as_ptr(), ptrs.len(), &mut back) };
    assert_eq!(status, SpanconfStatus::Ok, "{}", last_error());
    let mut again = ptr::null_mut();
    assert_eq!(
        unsafe { spanconf_beam_to_json(back, &mut again) },
        SpanconfStatus::Ok
    );
    assert_eq!(unsafe { CStr::from_ptr(json) }, unsafe {
        CStr::from_ptr(again)
    });

    // word count must agree with the record
    let mut bad = ptr::null_mut();
    let status = unsafe { spanconf_beam_from_prediction(model, json, ptrs.as_ptr(), 3, &mut bad) };
    assert_eq!(status, SpanconfStatus::Data);
    assert!(bad.is_null());

    unsafe {
        spanconf_string_free(json);
        spanconf_string_free(again);
        spanconf_beam_free(back);
        spanconf_beam_free(beam);
        spanconf_model_free(model);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut model = ptr::null_mut();
    let bad = CString::new("{\"tag_set\": []}").unwrap();
    assert_eq!(
        unsafe { spanconf_model_from_json(bad.as_ptr(), &mut model) },
        SpanconfStatus::Data
    );
    assert!(last_error().contains("model JSON"));

    let name = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { spanconf_model_preset(name.as_ptr(), &mut model) },
        SpanconfStatus::Usage
    );
    assert_eq!(
        unsafe { spanconf_model_preset(ptr::null(), &mut model) },
        SpanconfStatus::InvalidArgument
    );

    let m = preset_model("tiny");
    let (_owned, ptrs) = cstrings(&["zebra"]);
    let id = CString::new("x").unwrap();
    let mut beam = ptr::null_mut();
    let status =
        unsafe { spanconf_beam_search(m, id.as_ptr(), ptrs.as_ptr(), 1, 3, 1.0, &mut beam) };
    assert_eq!(status, SpanconfStatus::Data);
    let (_owned, ptrs) = cstrings(&["a"]);
    let status =
        unsafe { spanconf_beam_search(m, id.as_ptr(), ptrs.as_ptr(), 1, 3, -1.0, &mut beam) };
    assert_eq!(status, SpanconfStatus::Usage);

    let mut k = 0;
    assert_eq!(
        unsafe { spanconf_adaptive_k(0, 1, 10, &mut k) },
        SpanconfStatus::Ok
    );
    assert_eq!(k, 2);
    assert_eq!(
        unsafe { spanconf_adaptive_k(0, 1, 1, &mut k) },
        SpanconfStatus::Usage
    );
    unsafe { spanconf_model_free(m) };

    // success clears the previous message
    assert_eq!(
        unsafe { spanconf_adaptive_k(3, 1, 10, &mut k) },
        SpanconfStatus::Ok
    );
    assert!(spanconf_last_error().is_null());
}

#[test]
fn ece_matches_hand_value() {
    let conf = [0.95, 0.95, 0.45, 0.05];
    let correct = [1u8, 0, 1, 0];
    let mut ece = 0.0;
    assert_eq!(
        unsafe { spanconf_ece(conf.as_ptr(), correct.as_ptr(), 4, 10, &mut ece) },
        SpanconfStatus::Ok
    );
    assert!((ece - 0.375).abs() < 1e-12);
    assert_eq!(
        unsafe { spanconf_ece(conf.as_ptr(), correct.as_ptr(), 4, 0, &mut ece) },
        SpanconfStatus::Usage
    );
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/spanconf.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "typedef struct SpanconfModel SpanconfModel;",
        "typedef struct SpanconfBeam SpanconfBeam;",
        "SPANCONF_STATUS_CAPACITY = 4",
        "spanconf_model_from_json(",
        "spanconf_model_free(",
        "spanconf_beam_search(",
        "spanconf_beam_from_prediction(",
        "spanconf_score(",
        "spanconf_ece(",
        "spanconf_adaptive_k(",
        "spanconf_last_error(void)",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compile a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let deps = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib_dir = deps.parent().unwrap();
    if !lib_dir.join("libspanconf_ffi.a").exists() {
        eprintln!("static library not built; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "spanconf.h"
int main(void) {
    SpanconfModel *m = NULL;
    if (spanconf_model_preset("ambiguous-loc", &m) != SPANCONF_STATUS_OK) return 10;
    const char *words[] = {"any", "sushi", "near", "downtown"};
    SpanconfBeam *b = NULL;
    if (spanconf_beam_search(m, "c", words, 4, 5, 2.0, &b) != SPANCONF_STATUS_OK) return 11;
    SpanconfMethodConfig cfg = {SPANCONF_METHOD_AGG_SEQ, 5, 1, SPANCONF_AGG_SPAN_MODE_RESCORING, 2.0};
    double conf[8];
    size_t n = 0;
    if (spanconf_score(b, m, &cfg, conf, 8, &n) != SPANCONF_STATUS_OK) return 12;
    for (size_t i = 0; i < n; i++) if (conf[i] < 0.0 || conf[i] > 1.0) return 13;
    if (spanconf_model_preset("missing", &m) != SPANCONF_STATUS_USAGE) return 14;
    if (spanconf_last_error() == NULL) return 15;
    printf("%zu\n", n);
    spanconf_beam_free(b);
    spanconf_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(lib_dir.join("libspanconf_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C program exited with {:?}",
        out.status.code()
    );
    let n: usize = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(n >= 1);
}
