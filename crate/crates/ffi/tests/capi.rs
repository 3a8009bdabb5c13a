use scgl_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = scgl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn renorm_constant_matches_core() {
    let mut c = 0.0;
    assert_eq!(unsafe { scgl_renorm_constant(32, 1.0, &mut c) }, ScglStatus::Ok);
    assert_eq!(c, scgl::ou::renorm_constant(32, 1.0).unwrap().value);
    assert_eq!(unsafe { scgl_renorm_constant(32, -1.0, &mut c) }, ScglStatus::Config);
    assert!(!last_error().is_empty());
}

#[test]
fn hermite_low_degree() {
    let z = ScglComplex { re: 0.3, im: -1.2 };
    let mut h = ScglComplex { re: 0.0, im: 0.0 };
    assert_eq!(unsafe { scgl_hermite(1, 1, z, 0.5, &mut h) }, ScglStatus::Ok);
    // H_{1,1}(z, c) = |z|² − c.
    assert!((h.re - (0.09 + 1.44 - 0.5)).abs() < 1e-14);
    assert!(h.im.abs() < 1e-14);
}

#[test]
fn field_set_get_and_norm() {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { scgl_field_new(8, 0, &mut f) }, ScglStatus::Ok);
    assert_eq!(unsafe { scgl_field_cutoff(f) }, 8);
    let v = ScglComplex { re: 2.0, im: 0.0 };
    assert_eq!(unsafe { scgl_field_set(f, 0, 0, v) }, ScglStatus::Ok);
    assert_ne!(unsafe { scgl_field_set(f, 9, 0, v) }, ScglStatus::Ok);
    let mut back = ScglComplex { re: 0.0, im: 0.0 };
    assert_eq!(unsafe { scgl_field_get(f, 0, 0, &mut back) }, ScglStatus::Ok);
    assert_eq!(back, v);
    // A constant lives in the lowest block only: every norm equals |c|.
    let mut norm = 0.0;
    assert_eq!(unsafe { scgl_field_besov_norm(f, -0.5, f64::INFINITY, f64::INFINITY, &mut norm) }, ScglStatus::Ok);
    assert!((norm - 2.0).abs() < 1e-12, "{norm}");
    unsafe { scgl_field_free(f) };
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.wcgl").to_str().unwrap()).unwrap();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(scgl_field_new(4, 0, &mut f), ScglStatus::Ok);
        assert_eq!(scgl_field_set(f, 1, -2, ScglComplex { re: 0.5, im: 0.25 }), ScglStatus::Ok);
        assert_eq!(scgl_field_write_snapshot(f, path.as_ptr(), 0.75, 42), ScglStatus::Ok);
        let mut g = ptr::null_mut();
        let (mut t, mut seed) = (0.0, 0u64);
        assert_eq!(scgl_field_read_snapshot(path.as_ptr(), &mut g, &mut t, &mut seed), ScglStatus::Ok);
        assert_eq!((t, seed), (0.75, 42));
        let mut v = ScglComplex { re: 0.0, im: 0.0 };
        assert_eq!(scgl_field_get(g, 1, -2, &mut v), ScglStatus::Ok);
        assert_eq!(v, ScglComplex { re: 0.5, im: 0.25 });
        scgl_field_free(f);
        scgl_field_free(g);
    }
    let missing = CString::new(dir.path().join("none.wcgl").to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { scgl_field_read_snapshot(missing.as_ptr(), &mut g, ptr::null_mut(), ptr::null_mut()) },
        ScglStatus::Io
    );
    assert!(g.is_null());
}

#[test]
fn solver_matches_core_run() {
    let toml = "n = 8\nh = 1e-3\nT = 0.01\nseed = 3\nu0_amplitude = 1.0\n";
    let cfg = scgl::config::SolverConfig::from_toml_str(toml).unwrap();
    let want = scgl::solver::run_replica(&cfg, 2).unwrap().final_state.solution();
    let text = CString::new(toml).unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(scgl_solver_new(text.as_ptr(), 2, &mut s), ScglStatus::Ok);
        assert_eq!(scgl_solver_advance(s, 10), ScglStatus::Ok);
        let mut t = 0.0;
        assert_eq!(scgl_solver_time(s, &mut t), ScglStatus::Ok);
        assert!((t - 0.01).abs() < 1e-12);
        let mut u = ptr::null_mut();
        assert_eq!(scgl_solver_solution(s, &mut u), ScglStatus::Ok);
        for m in [(0, 0), (1, 0), (-3, 2)] {
            let mut v = ScglComplex { re: 0.0, im: 0.0 };
            scgl_field_get(u, m.0, m.1, &mut v);
            assert_eq!(v, want.get(m).into());
        }
        scgl_field_free(u);
        scgl_solver_free(s);
    }
}

#[test]
fn bad_config_and_nulls() {
    let bad = CString::new("bogus = 1").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { scgl_solver_new(bad.as_ptr(), 0, &mut s) }, ScglStatus::Config);
    assert!(s.is_null());
    assert_eq!(unsafe { scgl_solver_new(ptr::null(), 0, &mut s) }, ScglStatus::NullPointer);
    assert_eq!(unsafe { scgl_solver_advance(ptr::null_mut(), 1) }, ScglStatus::NullPointer);
    assert_eq!(unsafe { scgl_field_cutoff(ptr::null()) }, 0);
    unsafe {
        scgl_field_free(ptr::null_mut());
        scgl_solver_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scgl.h")).unwrap();
    for name in [
        "scgl_last_error_message",
        "scgl_version",
        "scgl_renorm_constant",
        "scgl_hermite",
        "scgl_field_new",
        "scgl_field_free",
        "scgl_field_cutoff",
        "scgl_field_set",
        "scgl_field_get",
        "scgl_field_besov_norm",
        "scgl_field_write_snapshot",
        "scgl_field_read_snapshot",
        "scgl_solver_new",
        "scgl_solver_free",
        "scgl_solver_advance",
        "scgl_solver_time",
        "scgl_solver_solution",
        "typedef struct ScglField ScglField",
        "SCGL_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler found, header compile check skipped");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"scgl.h\"\nint main(void) { double c; ScglStatus s = scgl_renorm_constant(16, 1.0, &c); return s == SCGL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
