//! Exercises the C ABI exactly as a foreign caller would: through raw
//! pointers and status codes, cross-checked against the native API.

use std::ffi::{CStr, CString};
use std::ptr;

use qkd_ffi::*;

fn preset(name: &str) -> *mut QkdConfig {
    let name = CString::new(name).unwrap();
    let mut cfg: *mut QkdConfig = ptr::null_mut();
    let status = unsafe { qkd_config_preset(name.as_ptr(), &mut cfg) };
    assert_eq!(status, QkdStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(qkd_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn preset_probabilities_match_core() {
    let cfg = preset("fig5");
    let mut probs = [0.0f64; 4];
    let status = unsafe { qkd_joint_probabilities(cfg, 0.0, 0.0, probs.as_mut_ptr()) };
    assert_eq!(status, QkdStatus::Ok);
    let sum: f64 = probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);

    let core_cfg = qkd_core::config::ConfigSource::preset("fig5")
        .unwrap()
        .resolve()
        .unwrap();
    let core = qkd_core::polarization::joint_probabilities_closed_form(
        &core_cfg.entanglement,
        &core_cfg.pbs_a,
        &core_cfg.pbs_b,
        &qkd_core::AnalyzerSetting::parallel(0.0),
    );
    for (i, pair) in qkd_core::DetectorPair::ALL.into_iter().enumerate() {
        assert_eq!(probs[i], core.get(pair));
    }
    unsafe { qkd_config_free(cfg) };
}

#[test]
fn rates_and_protocols_match_core() {
    let cfg = preset("fig5");
    let mut alpha = 0.0f64;
    assert_eq!(
        unsafe { qkd_config_alpha_a(cfg, &mut alpha) },
        QkdStatus::Ok
    );
    assert!((alpha - 0.25).abs() < 1e-12);

    let mut totals = [0.0f64; 4];
    assert_eq!(
        unsafe { qkd_singles_rates(cfg, 0.0, 0.0, totals.as_mut_ptr()) },
        QkdStatus::Ok
    );
    let mut tr = [0.0f64; 4];
    let mut acc = [0.0f64; 4];
    let mut tot = [0.0f64; 4];
    assert_eq!(
        unsafe {
            qkd_coincidence_rates(
                cfg,
                0.0,
                0.0,
                tr.as_mut_ptr(),
                acc.as_mut_ptr(),
                tot.as_mut_ptr(),
            )
        },
        QkdStatus::Ok
    );
    for i in 0..4 {
        assert!((tr[i] + acc[i] - tot[i]).abs() < 1e-12);
    }

    let core_cfg = qkd_core::config::ConfigSource::preset("fig5")
        .unwrap()
        .resolve()
        .unwrap();
    let mut result = QkdProtocolResult {
        sifted_key: 0.0,
        qber: 0.0,
        qabr: 0.0,
    };
    assert_eq!(
        unsafe { qkd_protocol_eval(cfg, QkdProtocol::Bb84, 0.0, &mut result) },
        QkdStatus::Ok
    );
    let core = qkd_core::protocols::bb84(&core_cfg, 0.0);
    assert_eq!(result.sifted_key, core.sifted_key);
    assert_eq!(result.qber, core.qber);
    assert_eq!(result.qabr, core.qabr.unwrap());

    let mut sec = QkdSecurityResult {
        s: 0.0,
        s_prime: 0.0,
        w_param: 0.0,
        s_norm: 0.0,
        w_norm: 0.0,
    };
    assert_eq!(
        unsafe { qkd_security_eval(cfg, 0.0, &mut sec) },
        QkdStatus::Ok
    );
    let core_sec = qkd_core::security::evaluate(&core_cfg, 0.0).unwrap();
    assert_eq!(sec.s, core_sec.s);
    assert_eq!(sec.w_norm, core_sec.w_norm);

    unsafe { qkd_config_free(cfg) };
}

#[test]
fn config_loads_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("link.cfg");
    std::fs::write(
        &path,
        "source.lambda_p_khz = 700\ntiming.window_ns = 4\ntiming.duration = 10\n",
    )
    .unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut cfg: *mut QkdConfig = ptr::null_mut();
    assert_eq!(
        unsafe { qkd_config_load(c_path.as_ptr(), &mut cfg) },
        QkdStatus::Ok
    );
    let mut probs = [0.0f64; 4];
    assert_eq!(
        unsafe { qkd_joint_probabilities(cfg, 0.0, 0.0, probs.as_mut_ptr()) },
        QkdStatus::Ok
    );
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    unsafe { qkd_config_free(cfg) };

    let missing = CString::new("/does/not/exist.cfg").unwrap();
    assert_eq!(
        unsafe { qkd_config_load(missing.as_ptr(), &mut cfg) },
        QkdStatus::IoError
    );
}

#[test]
fn config_set_applies_and_validates() {
    let cfg = preset("fig5");
    let key = CString::new("source.alpha_a").unwrap();
    let good = CString::new("0.5").unwrap();
    assert_eq!(
        unsafe { qkd_config_set(cfg, key.as_ptr(), good.as_ptr()) },
        QkdStatus::Ok
    );
    let mut alpha = 0.0f64;
    unsafe { qkd_config_alpha_a(cfg, &mut alpha) };
    assert!((alpha - 0.5).abs() < 1e-12);

    // A bad value is rejected and the handle keeps its previous state.
    let bad = CString::new("1.7").unwrap();
    let status = unsafe { qkd_config_set(cfg, key.as_ptr(), bad.as_ptr()) };
    assert_eq!(status, QkdStatus::InvalidArgument);
    assert!(last_error().contains("alpha_a"));
    unsafe { qkd_config_alpha_a(cfg, &mut alpha) };
    assert!((alpha - 0.5).abs() < 1e-12);

    let junk_key = CString::new("source.lambd_p").unwrap();
    assert_eq!(
        unsafe { qkd_config_set(cfg, junk_key.as_ptr(), good.as_ptr()) },
        QkdStatus::ParseError
    );
    unsafe { qkd_config_free(cfg) };
}

#[test]
fn null_and_unknown_inputs_are_reported() {
    let mut cfg: *mut QkdConfig = ptr::null_mut();
    assert_eq!(
        unsafe { qkd_config_preset(ptr::null(), &mut cfg) },
        QkdStatus::NullPointer
    );
    let name = CString::new("fig99").unwrap();
    assert_eq!(
        unsafe { qkd_config_preset(name.as_ptr(), &mut cfg) },
        QkdStatus::UnknownPreset
    );
    assert!(last_error().contains("fig99"));

    let mut probs = [0.0f64; 4];
    assert_eq!(
        unsafe { qkd_joint_probabilities(ptr::null(), 0.0, 0.0, probs.as_mut_ptr()) },
        QkdStatus::NullPointer
    );

    let real = preset("fig5");
    assert_eq!(
        unsafe { qkd_joint_probabilities(real, 0.0, 0.0, ptr::null_mut()) },
        QkdStatus::NullPointer
    );
    unsafe { qkd_config_free(real) };
    unsafe { qkd_config_free(ptr::null_mut()) };
}

#[test]
fn correction_round_trip() {
    let mut out = QkdCorrectionResult {
        passes: 0,
        converged: 0,
        corrected_key: 0.0,
        residual_qber: 0.0,
        residual_qabr: 0.0,
    };
    assert_eq!(
        unsafe { qkd_correct(1e5, 0.1, 0.12, 0.01, &mut out) },
        QkdStatus::Ok
    );
    let core = qkd_core::correction::correct(1e5, 0.1, 0.12, 0.01).unwrap();
    assert_eq!(out.passes, core.passes);
    assert_eq!(out.converged, 1);
    assert_eq!(out.corrected_key, core.corrected_key);
    assert_eq!(out.residual_qabr, core.residual_qabr);

    assert_eq!(
        unsafe { qkd_correct(1e5, 0.7, 0.7, 0.01, &mut out) },
        QkdStatus::Uncorrectable
    );
}

#[test]
fn simulation_is_reproducible_and_matches_core() {
    let cfg = preset("fig5");
    let mut a = QkdEventTally {
        singles: [0; 4],
        coincidences: [0; 4],
        true_coincidences: [0; 4],
        live_time: [0.0; 2],
        duration: 0.0,
        seed: 0,
    };
    let mut b = a;
    assert_eq!(
        unsafe { qkd_simulate(cfg, 0.0, 0.0, 0.5, 99, &mut a) },
        QkdStatus::Ok
    );
    assert_eq!(
        unsafe { qkd_simulate(cfg, 0.0, 0.0, 0.5, 99, &mut b) },
        QkdStatus::Ok
    );
    assert_eq!(a.singles, b.singles);
    assert_eq!(a.coincidences, b.coincidences);

    let core_cfg = qkd_core::config::ConfigSource::preset("fig5")
        .unwrap()
        .resolve()
        .unwrap();
    let core = qkd_core::montecarlo::simulate(
        &core_cfg,
        &qkd_core::AnalyzerSetting::parallel(0.0),
        0.5,
        99,
    );
    for (i, det) in qkd_core::Detector::ALL.into_iter().enumerate() {
        assert_eq!(a.singles[i], core.singles[det]);
    }
    for (i, pair) in qkd_core::DetectorPair::ALL.into_iter().enumerate() {
        assert_eq!(a.coincidences[i], core.coincidences[pair]);
        assert_eq!(a.true_coincidences[i], core.true_coincidences[pair]);
    }

    assert_eq!(
        unsafe { qkd_simulate(cfg, 0.0, 0.0, -1.0, 0, &mut a) },
        QkdStatus::InvalidArgument
    );
    unsafe { qkd_config_free(cfg) };
}

#[test]
fn generated_header_covers_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qkd.h"))
        .expect("generated header present");
    for symbol in [
        "qkd_config_preset",
        "qkd_config_load",
        "qkd_config_set",
        "qkd_config_free",
        "qkd_joint_probabilities",
        "qkd_singles_rates",
        "qkd_coincidence_rates",
        "qkd_protocol_eval",
        "qkd_security_eval",
        "qkd_correct",
        "qkd_simulate",
        "qkd_last_error_message",
        "QkdStatus",
        "QkdEventTally",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}

#[test]
fn c_program_links_and_runs() {
    // End-to-end ABI check: compile a small C client against the generated
    // header and the shared library, then run it.
    let exe_dir = std::env::current_exe().unwrap();
    let lib_dir = exe_dir.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = lib_dir.join("libqkd_ffi.so");
    if !lib.exists() {
        // `cargo test` links tests against the rlib and may skip the
        // cdylib; build it on demand.
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let build = std::process::Command::new(cargo)
            .args(["build", "-p", "qkd-ffi"])
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .output()
            .expect("cargo available");
        assert!(
            build.status.success(),
            "cargo build -p qkd-ffi failed: {}",
            String::from_utf8_lossy(&build.stderr)
        );
    }
    assert!(lib.exists(), "cdylib not found at {}", lib.display());
    let include_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let src = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/smoke.c");
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");

    let compile = std::process::Command::new("cc")
        .args([src, "-I", include_dir, "-L"])
        .arg(&lib_dir)
        .args(["-lqkd_ffi", "-lm", "-o"])
        .arg(&bin)
        .output()
        .expect("cc available");
    assert!(
        compile.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = std::process::Command::new(&bin)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "smoke binary failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("sum=1.000000"), "stdout: {stdout}");
}
