//! Handle lifecycle, run and replay through the C entry points.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use switchbench_ffi::*;

fn core_fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn last_error() -> String {
    let p = sb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_config(dir: &Path) -> CString {
    let text = format!(
        r#"task = "coqa"
dataset = {:?}
sample_size = 6
turns = 4
workers = 2
cache_root = "cache"
output_dir = "out"

[backends.mock]
kind = "mock"
script = {:?}

[[models]]
name = "alpha"
backend = "mock"

[[models]]
name = "beta"
backend = "mock"
"#,
        core_fixture("mock/coqa.jsonl"),
        core_fixture("mock/advantage_script.json"),
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn run_then_replay_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path());
    let mut config: *mut SbConfig = ptr::null_mut();
    assert_eq!(
        unsafe { sb_config_load(path.as_ptr(), &mut config) },
        SbStatus::Ok
    );

    let mut counts = SbRunCounts::default();
    assert_eq!(unsafe { sb_run(config, &mut counts) }, SbStatus::Ok);
    assert_eq!(
        (counts.planned, counts.completed, counts.failed),
        (24, 24, 0)
    );

    let mut again = SbRunCounts::default();
    assert_eq!(unsafe { sb_run(config, &mut again) }, SbStatus::Ok);
    assert_eq!((again.skipped, again.generation_calls), (24, 0));

    let (alpha, beta) = (
        CString::new("alpha").unwrap(),
        CString::new("beta").unwrap(),
    );
    let mut r = SbReplayResult::default();
    assert_eq!(
        unsafe { sb_replay(config, alpha.as_ptr(), beta.as_ptr(), &mut r) },
        SbStatus::Ok
    );
    assert_eq!(r.n, 6);
    assert!((r.delta - 0.1).abs() < 1e-12);
    assert!(r.flagged);

    let mut same = SbReplayResult::default();
    assert_eq!(
        unsafe { sb_replay(config, alpha.as_ptr(), alpha.as_ptr(), &mut same) },
        SbStatus::Ok
    );
    assert_eq!((same.delta, same.flagged), (0.0, false));

    let ghost = CString::new("ghost").unwrap();
    assert_eq!(
        unsafe { sb_replay(config, alpha.as_ptr(), ghost.as_ptr(), &mut r) },
        SbStatus::Failed
    );
    assert!(last_error().contains("ghost"));
    unsafe { sb_config_free(config) };
}

#[test]
fn null_and_malformed_arguments_are_reported() {
    let mut lo = 0.0;
    let mut hi = 0.0;
    let status = unsafe { sb_bca_ci(ptr::null(), 4, 100, 0, 0.95, &mut lo, &mut hi) };
    assert_eq!(status, SbStatus::NullPointer);
    assert_eq!(last_error(), "samples is null");

    let bad = [0xffu8, 0];
    let mut f1 = 0.0;
    let status = unsafe { sb_token_f1(bad.as_ptr().cast::<c_char>(), ptr::null(), 0, &mut f1) };
    assert_eq!(status, SbStatus::InvalidUtf8);

    let mut mu = 0.0;
    assert_eq!(
        unsafe { sb_factor_mu(ptr::null(), &mut mu) },
        SbStatus::NullPointer
    );
    assert_eq!(unsafe { sb_factor_len(ptr::null()) }, 0);
    unsafe { sb_config_free(ptr::null_mut()) };
}

#[test]
fn factor_fit_from_fixture_file() {
    let path = CString::new(core_fixture("coqa_delta.csv")).unwrap();
    let mut model: *mut SbFactorModel = ptr::null_mut();
    assert_eq!(
        unsafe { sb_factor_fit_file(path.as_ptr(), &mut model) },
        SbStatus::Ok
    );
    assert_eq!(unsafe { sb_factor_len(model) }, 9);
    let (mut r2, mut loo) = (0.0, 0.0);
    assert_eq!(
        unsafe { sb_factor_r2(model, &mut r2, &mut loo) },
        SbStatus::Ok
    );
    assert!(
        (r2 - 0.83).abs() < 0.02 && (loo - 0.70).abs() < 0.03,
        "{r2} {loo}"
    );
    let mut sum = 0.0;
    for i in 0..9 {
        let mut a = 0.0;
        assert_eq!(unsafe { sb_factor_alpha(model, i, &mut a) }, SbStatus::Ok);
        sum += a;
    }
    assert!(sum.abs() < 1e-12);
    unsafe { sb_factor_free(model) };
}

#[test]
fn constant_effects_have_undefined_r2() {
    let names: Vec<CString> = ["a", "b", "c"]
        .iter()
        .map(|n| CString::new(*n).unwrap())
        .collect();
    let ptrs: Vec<*const c_char> = names.iter().map(|n| n.as_ptr()).collect();
    let values = [f64::NAN, 0.2, 0.2, 0.2, f64::NAN, 0.2, 0.2, 0.2, f64::NAN];
    let mut model: *mut SbFactorModel = ptr::null_mut();
    assert_eq!(
        unsafe { sb_factor_fit(ptrs.as_ptr(), values.as_ptr(), 3, &mut model) },
        SbStatus::Ok
    );
    let (mut r2, mut loo) = (-1.0, -1.0);
    assert_eq!(
        unsafe { sb_factor_r2(model, &mut r2, &mut loo) },
        SbStatus::Undefined
    );
    assert_eq!((r2, loo), (-1.0, -1.0));
    unsafe { sb_factor_free(model) };
}
