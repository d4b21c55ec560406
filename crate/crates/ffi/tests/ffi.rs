use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use npg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(npg_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn lifecycle_and_improvement() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(npg_model_preset(cstr("single-queue").as_ptr(), 0.0, &mut model), NpgStatus::Ok);
        let mut eps = 0.0;
        assert_eq!(npg_model_capacity_margin(model, &mut eps), NpgStatus::Ok);
        assert!(eps > 0.0);
        let mut mdp = ptr::null_mut();
        assert_eq!(npg_model_truncate(model, 20, &mut mdp), NpgStatus::Ok);
        let (mut n, mut m) = (0usize, 0usize);
        assert_eq!(npg_mdp_shape(mdp, &mut n, &mut m), NpgStatus::Ok);
        assert_eq!((n, m), (21, 2));

        let mut pi0 = ptr::null_mut();
        assert_eq!(npg_policy_maxweight(model, mdp, 0.1, &mut pi0), NpgStatus::Ok);
        let mut row = [0.0; 2];
        assert_eq!(npg_policy_row(pi0, 3, row.as_mut_ptr(), 2), NpgStatus::Ok);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
        assert_eq!(npg_policy_row(pi0, 3, row.as_mut_ptr(), 1), NpgStatus::BufferTooSmall);
        assert_eq!(npg_policy_row(pi0, 99, row.as_mut_ptr(), 2), NpgStatus::InvalidArgument);

        let mut j0 = 0.0;
        let mut values = vec![0.0; n];
        assert_eq!(npg_evaluate(mdp, pi0, &mut j0, values.as_mut_ptr(), n), NpgStatus::Ok);
        assert_eq!(values[0], 0.0);
        let mut pi = ptr::null_mut();
        assert_eq!(npg_run_constant_step(mdp, pi0, 20, 2.0, &mut pi), NpgStatus::Ok);
        let (mut j, mut j_star) = (0.0, 0.0);
        assert_eq!(npg_evaluate(mdp, pi, &mut j, ptr::null_mut(), 0), NpgStatus::Ok);
        assert_eq!(npg_mdp_optimal_average_reward(mdp, &mut j_star), NpgStatus::Ok);
        assert!(j0 <= j + 1e-12 && j <= j_star + 1e-9, "{j0} {j} {j_star}");
        assert_eq!(last_error(), "");

        npg_policy_free(pi);
        npg_policy_free(pi0);
        npg_mdp_free(mdp);
        npg_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(npg_model_preset(ptr::null(), 0.0, &mut model), NpgStatus::NullPointer);
        assert!(last_error().contains("name"));
        assert_eq!(npg_model_preset(cstr("bogus").as_ptr(), 0.0, &mut model), NpgStatus::InvalidArgument);
        assert!(last_error().contains("bogus"));
        assert!(model.is_null());
        let bad = [0xffu8, 0];
        assert_eq!(npg_model_preset(bad.as_ptr() as *const c_char, 0.0, &mut model), NpgStatus::InvalidUtf8);
        let json = r#"{"arrivals":[{"pairs":[[0,0.5],[1,0.6]]}],"services":[],"reward":"MeanQueue"}"#;
        assert_ne!(npg_model_from_json(cstr(json).as_ptr(), &mut model), NpgStatus::Ok);
        assert_eq!(npg_mdp_shape(ptr::null(), ptr::null_mut(), ptr::null_mut()), NpgStatus::NullPointer);
        npg_model_free(ptr::null_mut());
        npg_string_free(ptr::null_mut());
    }
}

#[test]
fn model_json_round_trip() {
    let model = npg_core::gsse::Preset::Nsystem.build(npg_core::gsse::RewardKind::MeanQueue).unwrap();
    let json = serde_json::to_string(model.params()).unwrap();
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(npg_model_from_json(cstr(&json).as_ptr(), &mut handle), NpgStatus::Ok, "{}", last_error());
        let mut eps = 0.0;
        assert_eq!(npg_model_capacity_margin(handle, &mut eps), NpgStatus::Ok);
        assert!(eps > 0.0);
        npg_model_free(handle);
    }
}

#[test]
fn verify_returns_report() {
    let toml = "model = \"single-queue\"\ntruncation = 20\nt_grid = [4, 8]\nregret_trials = 10\n";
    unsafe {
        let mut json = ptr::null_mut();
        let mut passed: c_int = -1;
        assert_eq!(npg_verify(cstr(toml).as_ptr(), &mut json, &mut passed), NpgStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        npg_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["model"], "single-queue");
        assert_eq!(passed == 1, v["passed"].as_bool().unwrap());
        assert_eq!(npg_verify(cstr("t_grid = [3, 2]\n").as_ptr(), &mut json, &mut passed), NpgStatus::Config);
        assert!(last_error().contains("config:1:"), "{}", last_error());
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(npg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(header_dir().join("npg.h")).expect("build script writes the header");
    for name in [
        "npg_last_error",
        "npg_string_free",
        "npg_model_preset",
        "npg_model_from_json",
        "npg_model_truncate",
        "npg_policy_maxweight",
        "npg_evaluate",
        "npg_run_constant_step",
        "npg_verify",
        "typedef struct NpgModel NpgModel",
        "NPG_STATUS_PANIC = 8",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Directory holding the shared library: `target/<profile>`, two levels above the test binary.
fn library_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?.to_path_buf();
    let name = format!("{}npg_ffi{}", std::env::consts::DLL_PREFIX, std::env::consts::DLL_SUFFIX);
    dir.join(&name).exists().then_some(dir)
}

#[test]
fn c_program_compiles_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("c_smoke.c");
    let tmp = tempfile::tempdir().unwrap();
    let syntax = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_dir())
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let Some(lib) = library_dir() else {
        eprintln!("shared library not built; checked syntax only");
        return;
    };
    let exe = tmp.path().join("c_smoke");
    let build = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(header_dir())
        .arg(&src)
        .arg("-o")
        .arg(&exe)
        .arg("-L")
        .arg(&lib)
        .arg("-lnpg_ffi")
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib).env("DYLD_LIBRARY_PATH", &lib).output().unwrap();
    assert!(run.status.success(), "{}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    let fields: Vec<&str> = std::str::from_utf8(&run.stdout).unwrap().split_whitespace().collect();
    assert_eq!(&fields[..2], ["21", "2"]);
}
