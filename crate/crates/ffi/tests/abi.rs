use std::ffi::{CStr, CString};
use std::ptr;

use nps_ffi::*;

const CONFIG: &str = r#"
[grid]
nx = 8
ny = 8
[params]
eps = 0.05
[bc]
gamma1 = 1.0
gamma2 = 2.0
W = 0.5
[time]
dt = 0.001
t_end = 0.01
"#;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        nps_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn new_sim(text: &str) -> (NpsStatus, *mut NpsSimulation) {
    let c = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    let st = unsafe { nps_simulation_new(c.as_ptr(), &mut h) };
    (st, h)
}

#[test]
fn lifecycle_and_field_access() {
    let (st, h) = new_sim(CONFIG);
    assert_eq!(st, NpsStatus::Ok);
    unsafe {
        let (mut nx, mut ny) = (0usize, 0usize);
        assert_eq!(nps_simulation_grid(h, &mut nx, &mut ny), NpsStatus::Ok);
        assert_eq!((nx, ny), (8, 8));
        assert_eq!(nps_simulation_advance(h, 0.005), NpsStatus::Ok);
        let mut t = 0.0;
        nps_simulation_time(h, &mut t);
        assert_eq!(t, 0.005);

        let mut c1 = vec![0.0; 64];
        let mut n = 0usize;
        assert_eq!(nps_simulation_copy_field(h, NpsField::C1, c1.as_mut_ptr(), c1.len(), &mut n), NpsStatus::Ok);
        assert_eq!(n, 64);
        assert!(c1.iter().all(|v| *v > 0.0));
        let mut ux = vec![0.0; 10];
        assert_eq!(nps_simulation_copy_field(h, NpsField::Ux, ux.as_mut_ptr(), ux.len(), &mut n), NpsStatus::BufferTooSmall);
        assert_eq!(n, 72);
        assert!(last_error().contains("72"));

        let mut d = [0.0; NPS_DIAGNOSTICS_LEN];
        assert_eq!(nps_simulation_diagnostics(h, d.as_mut_ptr()), NpsStatus::Ok);
        assert!((d[0] - 0.005).abs() < 1e-15 && d[1].is_finite());

        assert_eq!(nps_simulation_advance(h, 0.001), NpsStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("x.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(nps_simulation_save(h, path.as_ptr()), NpsStatus::Ok);
        assert!(dir.path().join("x.ckpt").metadata().unwrap().len() > 64 * 8);
        nps_simulation_free(h);
    }
}

#[test]
fn errors_are_reported() {
    let (st, h) = new_sim(&CONFIG.replace("nx = 8", "nx = 8\nnz = 3"));
    assert_eq!(st, NpsStatus::Config);
    assert!(h.is_null());
    assert!(last_error().contains("nz"), "{}", last_error());
    unsafe {
        assert_eq!(nps_simulation_new(ptr::null(), &mut ptr::null_mut()), NpsStatus::NullPointer);
        assert_eq!(nps_simulation_advance(ptr::null_mut(), 1.0), NpsStatus::NullPointer);
        nps_simulation_free(ptr::null_mut());
        assert!(!CStr::from_ptr(nps_version()).to_str().unwrap().is_empty());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nps.h")).unwrap();
    for name in [
        "nps_version",
        "nps_last_error",
        "nps_simulation_new",
        "nps_simulation_free",
        "nps_simulation_advance",
        "nps_simulation_time",
        "nps_simulation_grid",
        "nps_simulation_copy_field",
        "nps_simulation_diagnostics",
        "nps_simulation_save",
        "typedef struct NpsSimulation NpsSimulation",
        "NPS_STATUS_SOLVER = 3",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else { return };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"nps.h\"\nint main(void) { NpsSimulation *s = 0; return nps_simulation_advance(s, 1.0) == NPS_STATUS_OK; }\n").unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
