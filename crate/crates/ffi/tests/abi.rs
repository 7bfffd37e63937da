use aklt_prep_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn lattice(spec: &str) -> *mut AkltLattice {
    let s = CString::new(spec).unwrap();
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { aklt_lattice_parse(s.as_ptr(), &mut l) }, AkltStatus::Ok);
    l
}

fn last_error() -> String {
    let mut needed = 0;
    unsafe {
        aklt_last_error(ptr::null_mut(), 0, &mut needed);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(aklt_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()), AkltStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_string()
    }
}

#[test]
fn prepare_through_handles() {
    let l = lattice("bethe_tree:3x1");
    unsafe {
        assert_eq!(aklt_lattice_num_sites(l), 4);
        let mut p = ptr::null_mut();
        assert_eq!(aklt_prepare(l, AkltStrategy::BsmCorrected, 1.0, 7, 0, &mut p), AkltStatus::Ok);
        let n = aklt_prepared_num_qubits(p);
        assert_eq!(aklt_prepared_num_fusions(p), 3);
        let mut f = 0.0;
        assert_eq!(aklt_prepared_fidelity(p, &mut f), AkltStatus::Ok);
        assert!(f > 1.0 - 1e-8);
        let (mut re, mut im) = (vec![0.0; 1 << n], vec![0.0; 1 << n]);
        assert_eq!(aklt_prepared_amplitudes(p, re.as_mut_ptr(), im.as_mut_ptr(), re.len()), AkltStatus::Ok);
        let norm: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(aklt_prepared_amplitudes(p, re.as_mut_ptr(), im.as_mut_ptr(), 3), AkltStatus::BufferTooSmall);
        let mut needed = 0;
        assert_eq!(aklt_prepared_to_json(p, ptr::null_mut(), 0, &mut needed), AkltStatus::Ok);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(aklt_prepared_to_json(p, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), AkltStatus::Ok);
        let json = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(json.contains("\"prepared/v1\""));
        aklt_prepared_free(p);
        aklt_lattice_free(l);
    }
}

#[test]
fn errors_map_to_codes() {
    let l = lattice("hex_patch:1x1");
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(aklt_prepare(l, AkltStrategy::BsmCorrected, 1.0, 0, 0, &mut p), AkltStatus::CycleDetected);
        assert!(p.is_null());
        assert!(last_error().contains("cycle"));
        let bad = CString::new("moebius:3").unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(aklt_lattice_parse(bad.as_ptr(), &mut q), AkltStatus::Parse);
        assert_eq!(aklt_lattice_parse(ptr::null(), &mut q), AkltStatus::NullPointer);
        assert_eq!(aklt_prepared_fidelity(ptr::null(), &mut 0.0), AkltStatus::NullPointer);
        aklt_lattice_free(l);
    }
}

#[test]
fn scalar_entry_points() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(aklt_string_order(1.0, 6, AkltAxis::Z, &mut v), AkltStatus::Ok);
        assert!((v - 4.0 / 9.0).abs() < 1e-12);
        assert_eq!(aklt_povm_completeness_defect(2, &mut v), AkltStatus::Ok);
        assert!(v < 1e-10);
        assert_eq!(aklt_povm_completeness_defect(4, &mut v), AkltStatus::Ok);
        assert!(v > 1e-3);
        assert!(CStr::from_ptr(aklt_version()).to_str().unwrap().starts_with("0."));
    }
}

#[test]
fn singlet_hexagon_never_frustrates() {
    let l = lattice("hex_patch:1x1");
    unsafe {
        let mut k = 99;
        for o in ["xxxxxx", "yyyyyy", "zzzzzz", "xyzxyz"] {
            let s = CString::new(o).unwrap();
            assert_eq!(aklt_frustration(l, s.as_ptr(), &mut k), AkltStatus::Ok);
            assert_eq!(k, 0);
        }
        aklt_lattice_free(l);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/aklt_prep.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct AkltPrepared AkltPrepared;"));
}
