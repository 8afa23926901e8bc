use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use sbbts_core::calib::heston_qmle;
use sbbts_core::sbbts::{generate, load_checkpoint};
use sbbts_core::stochastic::{simulate_heston, GaussianNoise, HestonParams, RandomSource};
use sbbts_ffi::*;

const SMALL: &str = "outer_iterations = 1\nn_epoch = 2\nbatch_size = 8\nd_model = 8\nn_head = 2\nn_pi = 4\n";

fn last_error() -> String {
    let p = sbbts_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn toy_values(n_paths: usize, n_dates: usize) -> Vec<f64> {
    let mut rng = RandomSource::new(5).rng();
    let mut out = Vec::with_capacity(n_paths * n_dates);
    for _ in 0..n_paths {
        let mut x = 0.0;
        for i in 0..n_dates {
            if i > 0 {
                x += 0.3 * rng.standard_normal();
            }
            out.push(x);
        }
    }
    out
}

fn train_small() -> *mut SbbtsModel {
    let values = toy_values(16, 5);
    let cfg = CString::new(SMALL).unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { sbbts_model_train(values.as_ptr(), 16, 5, 1, cfg.as_ptr(), 7, &mut model) };
    assert_eq!(st, SbbtsStatus::Ok);
    assert!(!model.is_null());
    model
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(sbbts_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut model = ptr::null_mut();
    let st = unsafe { sbbts_model_load(ptr::null(), &mut model) };
    assert_eq!(st, SbbtsStatus::NullPointer);
    assert!(last_error().contains("path"));
    assert!(model.is_null());
    assert_eq!(unsafe { sbbts_model_dim(ptr::null()) }, 0);
    unsafe { sbbts_model_free(ptr::null_mut()) };
}

#[test]
fn missing_file_is_io_error() {
    let p = CString::new("/nonexistent/dir/model.ckpt").unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { sbbts_model_load(p.as_ptr(), &mut model) };
    assert_eq!(st, SbbtsStatus::Io);
    assert!(last_error().contains("/nonexistent/dir/model.ckpt"));
}

#[test]
fn bad_config_is_config_error() {
    let values = toy_values(4, 5);
    let cfg = CString::new("no_such_field = 1").unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { sbbts_model_train(values.as_ptr(), 4, 5, 1, cfg.as_ptr(), 1, &mut model) };
    assert_eq!(st, SbbtsStatus::Config);
    assert!(last_error().contains("no_such_field"));
}

#[test]
fn train_generate_save_load() {
    let model = train_small();
    unsafe {
        assert_eq!(sbbts_model_dim(model), 1);
        assert_eq!(sbbts_model_n_dates(model), 5);

        let mut small = vec![0.0; 9];
        let st = sbbts_model_generate(model, 2, 3, small.as_mut_ptr(), small.len());
        assert_eq!(st, SbbtsStatus::BufferTooSmall);

        let mut buf = vec![0.0; 30];
        assert_eq!(sbbts_model_generate(model, 6, 3, buf.as_mut_ptr(), buf.len()), SbbtsStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(sbbts_model_save(model, cpath.as_ptr()), SbbtsStatus::Ok);

        // Reloaded handle and the core library agree with the original.
        let mut back = ptr::null_mut();
        assert_eq!(sbbts_model_load(cpath.as_ptr(), &mut back), SbbtsStatus::Ok);
        let mut again = vec![0.0; 30];
        assert_eq!(sbbts_model_generate(back, 6, 3, again.as_mut_ptr(), again.len()), SbbtsStatus::Ok);
        assert_eq!(buf, again);

        let core_model = load_checkpoint(Path::new(&path)).unwrap();
        let core = generate(&core_model, 6, RandomSource::new(3).named("generate")).unwrap();
        assert_eq!(core.values(), &buf[..]);

        sbbts_model_free(back);
        sbbts_model_free(model);
    }
}

#[test]
fn qmle_matches_core() {
    let p = HestonParams { kappa: 2.0, theta: 0.04, xi_vol: 0.3, rho: -0.5, r: 0.02, v0: 0.04 };
    let mut rng = RandomSource::new(11).rng();
    let path = simulate_heston(&p, 500, 1.0 / 252.0, 100.0, &mut rng).unwrap();
    let (x, v) = (path.x, path.v);
    let mut out = [0.0; SBBTS_HESTON_PARAMS];
    let st = unsafe { sbbts_heston_qmle(x.as_ptr(), v.as_ptr(), x.len(), 1.0 / 252.0, out.as_mut_ptr()) };
    assert_eq!(st, SbbtsStatus::Ok);
    let q = heston_qmle(&x, &v, 1.0 / 252.0).unwrap().params;
    assert_eq!(out, [q.kappa, q.theta, q.xi_vol, q.rho, q.r, q.v0]);

    let short = [1.0, 1.1];
    let st = unsafe { sbbts_heston_qmle(short.as_ptr(), short.as_ptr(), 2, 0.01, out.as_mut_ptr()) };
    assert_eq!(st, SbbtsStatus::Data);
}

#[test]
fn var_es_through_abi() {
    let r: Vec<f64> = (0..100).map(|k| (k as f64 - 50.0) / 100.0).collect();
    let (mut var, mut es) = (0.0, 0.0);
    assert_eq!(unsafe { sbbts_var_es(r.as_ptr(), r.len(), 0.95, &mut var, &mut es) }, SbbtsStatus::Ok);
    assert!(var > 0.0 && es >= var);
    assert_eq!(unsafe { sbbts_var_es(r.as_ptr(), 0, 0.95, &mut var, &mut es) }, SbbtsStatus::Data);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("sbbts.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "sbbts_version",
        "sbbts_last_error",
        "sbbts_model_train",
        "sbbts_model_load",
        "sbbts_model_save",
        "sbbts_model_free",
        "sbbts_model_dim",
        "sbbts_model_n_dates",
        "sbbts_model_generate",
        "sbbts_heston_qmle",
        "sbbts_var_es",
        "SBBTS_STATUS_OK",
        "SBBTS_HESTON_PARAMS",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        match std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .status()
        {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("skipping {compiler} syntax check: {e}"),
        }
    }
}
