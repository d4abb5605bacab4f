use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use c2f_core::corpus::IngestSchema;
use c2f_core::pipeline::run::{self, WorkDir};
use c2f_core::pipeline::RunConfig;
use c2f_core::synth;
use c2f_ffi::*;

fn tiny_work(root: &Path) -> WorkDir {
    let mut cfg = RunConfig::desk();
    cfg.aspect_lda.iterations = 20;
    cfg.aspect_lda.burn_in = 10;
    cfg.aspect_decoder.train.epochs = 1;
    cfg.sketch_decoder.train.epochs = 1;
    cfg.review_decoder.train.epochs = 1;
    cfg.orchestrator.joint.epochs = 1;
    let input = root.join("desk.jsonl");
    std::fs::write(&input, synth::to_jsonl(&synth::desk_reviews(40, 8, 8, 3))).unwrap();
    let work = WorkDir::new(root.join("work"));
    run::prepare(&input, &IngestSchema::default(), &cfg, &work).unwrap();
    run::fit_aspects(&work, &cfg).unwrap();
    run::build_sketches(&work, &cfg).unwrap();
    run::train_model(&work, &cfg, false, None, None).unwrap();
    work
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(c2f_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn open_generate_free() {
    let dir = tempfile::tempdir().unwrap();
    let work = tiny_work(dir.path());
    let w = CString::new(work.root.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { c2f_model_open(w.as_ptr(), ptr::null(), &mut h) }, C2fStatus::Ok);
    assert!(!h.is_null());
    assert_eq!(unsafe { c2f_model_num_aspects(h) }, 5);

    let (u, i) = (CString::new("u0").unwrap(), CString::new("i0").unwrap());
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { c2f_generate(h, u.as_ptr(), i.as_ptr(), 4, 0, &mut json) }, C2fStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { c2f_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let aspects = v["aspects"].as_array().unwrap();
    assert!(!aspects.is_empty() && aspects.len() <= 5);
    assert_eq!(v["sentences"].as_array().unwrap().len(), aspects.len());
    assert_eq!(v["unk"], false);

    // same request, same answer
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { c2f_generate(h, u.as_ptr(), i.as_ptr(), 4, 0, &mut again) }, C2fStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(again) }.to_str().unwrap(), text);
    unsafe { c2f_string_free(again) };

    // unknown user falls back to the UNK embedding
    let stranger = CString::new("nobody").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { c2f_generate(h, stranger.as_ptr(), i.as_ptr(), 4, 2, &mut out) }, C2fStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    assert_eq!(v["unk"], true);
    unsafe { c2f_string_free(out) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { c2f_generate(h, u.as_ptr(), i.as_ptr(), 9, 0, &mut bad) }, C2fStatus::Data);
    assert!(bad.is_null());
    assert!(last_error().contains("rating 9"), "{}", last_error());

    unsafe { c2f_model_free(h) };
}

#[test]
fn bad_model_path_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let work = tiny_work(dir.path());
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let w = CString::new(work.root.to_str().unwrap()).unwrap();
    let m = CString::new(junk.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { c2f_model_open(w.as_ptr(), m.as_ptr(), &mut h) }, C2fStatus::Data);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/c2f.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "c2f_model_open",
        "c2f_model_free",
        "c2f_generate",
        "c2f_string_free",
        "c2f_last_error",
        "c2f_version",
        "c2f_model_num_aspects",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
