//! C ABI over `aklt_prep`. Objects are opaque handles released with their
//! `_free` function. Every fallible call returns an `AkltStatus`; the
//! message of the last failure on the calling thread is available through
//! `aklt_last_error`.

use aklt_prep::graphstate::{completeness_defect, frustration, PovmOutcome};
use aklt_prep::io::PreparedDoc;
use aklt_prep::lattice::{from_json, make_lattice, LatticeSpec, SiteGraph};
use aklt_prep::mps::string_order_tm;
use aklt_prep::pauli::Axis;
use aklt_prep::protocol::{prepare, PreparedState, Strategy};
use aklt_prep::qstate::fidelity;
use aklt_prep::vbs::vbs_state;
use aklt_prep::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AkltStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    QubitCap = 4,
    CycleDetected = 5,
    Frustrated = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AkltStrategy {
    BsmCorrected = 0,
    BsmRandombond = 1,
    HtDecorated = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AkltAxis {
    X = 0,
    Y = 1,
    Z = 2,
}

/// A site graph.
pub struct AkltLattice {
    graph: SiteGraph,
}

/// A prepared state with its input graph.
pub struct AkltPrepared {
    input: SiteGraph,
    state: PreparedState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> AkltStatus {
    match e {
        Error::QubitCap { .. } => AkltStatus::QubitCap,
        Error::CycleDetected => AkltStatus::CycleDetected,
        Error::Frustrated { .. } => AkltStatus::Frustrated,
        Error::Parse(_) | Error::Json(_) | Error::UnknownFormat(_) => AkltStatus::Parse,
        Error::InvalidParameter(_) | Error::InvalidProfile(_) | Error::Unsupported(_) => AkltStatus::InvalidArgument,
        _ => AkltStatus::Internal,
    }
}

struct Fail(AkltStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AkltStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AkltStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AkltStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside aklt_prep".into());
            AkltStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(AkltStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Copy `s` plus a NUL into `buf`. `needed` receives the full size.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if !needed.is_null() {
        needed.write(s.len() + 1);
    }
    if buf.is_null() {
        return if len == 0 { Ok(()) } else { Err(null("buf")) };
    }
    if len < s.len() + 1 {
        return Err(Fail(AkltStatus::BufferTooSmall, format!("need {} bytes, got {len}", s.len() + 1)));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    buf.add(s.len()).write(0);
    Ok(())
}

fn axis(a: AkltAxis) -> Axis {
    match a {
        AkltAxis::X => Axis::X,
        AkltAxis::Y => Axis::Y,
        AkltAxis::Z => Axis::Z,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aklt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn aklt_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> AkltStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    guard(|| copy_str(&msg, buf, len, needed))
}

/// Build a lattice from a compact spec such as `hex_patch:1x2`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_lattice_parse(spec: *const c_char, out: *mut *mut AkltLattice) -> AkltStatus {
    guard(|| {
        let s: LatticeSpec = text(spec, "spec")?.parse()?;
        let graph = make_lattice(&s)?;
        put(out, Box::into_raw(Box::new(AkltLattice { graph })), "out")
    })
}

/// Build a lattice from a `sitegraph/v1` document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_lattice_from_json(json: *const c_char, out: *mut *mut AkltLattice) -> AkltStatus {
    guard(|| {
        let graph = from_json(text(json, "json")?)?;
        put(out, Box::into_raw(Box::new(AkltLattice { graph })), "out")
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `l` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aklt_lattice_num_sites(l: *const AkltLattice) -> usize {
    l.as_ref().map_or(0, |l| l.graph.num_vertices())
}

/// Number of virtual qubits, or 0 for a null handle.
///
/// # Safety
/// `l` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aklt_lattice_num_qubits(l: *const AkltLattice) -> usize {
    l.as_ref().map_or(0, |l| l.graph.total_qubits())
}

/// # Safety
/// `l` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aklt_lattice_free(l: *mut AkltLattice) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Number of frustrated independent cycles for an outcome given as one
/// letter per site (`x`, `y`, `z`, `-` for boundary qubits).
///
/// # Safety
/// `l` must be a live handle, `outcome` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_frustration(l: *const AkltLattice, outcome: *const c_char, out: *mut usize) -> AkltStatus {
    guard(|| {
        let l = l.as_ref().ok_or_else(|| null("lattice"))?;
        let o = PovmOutcome::parse(&l.graph, text(outcome, "outcome")?)?;
        put(out, frustration(&l.graph, &o), "out")
    })
}

/// Run the preparation protocol with the random stream `(seed, run)`.
///
/// # Safety
/// `l` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepare(
    l: *const AkltLattice,
    strategy: AkltStrategy,
    deformation: f64,
    seed: u64,
    run: u64,
    out: *mut *mut AkltPrepared,
) -> AkltStatus {
    guard(|| {
        let l = l.as_ref().ok_or_else(|| null("lattice"))?;
        let strategy = match strategy {
            AkltStrategy::BsmCorrected => Strategy::BsmCorrected,
            AkltStrategy::BsmRandombond => Strategy::BsmRandombond,
            AkltStrategy::HtDecorated => Strategy::HtDecorated,
        };
        let state = prepare(&l.graph, strategy, deformation, seed, run)?;
        put(out, Box::into_raw(Box::new(AkltPrepared { input: l.graph.clone(), state })), "out")
    })
}

/// Qubit count of the prepared register, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_num_qubits(p: *const AkltPrepared) -> usize {
    p.as_ref().map_or(0, |p| p.state.state.num_qubits())
}

/// Number of fusion outcomes drawn, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_num_fusions(p: *const AkltPrepared) -> usize {
    p.as_ref().map_or(0, |p| p.state.transcript.len())
}

/// Copy the amplitudes (qubit 0 most significant) into `re` and `im`,
/// each of length `len` = 2^num_qubits.
///
/// # Safety
/// `p` must be a live handle; `re` and `im` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_amplitudes(p: *const AkltPrepared, re: *mut f64, im: *mut f64, len: usize) -> AkltStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("prepared"))?;
        let amps = p.state.state.amplitudes();
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        if len < amps.len() {
            return Err(Fail(AkltStatus::BufferTooSmall, format!("need {} amplitudes, got {len}", amps.len())));
        }
        for (k, c) in amps.iter().enumerate() {
            re.add(k).write(c.re);
            im.add(k).write(c.im);
        }
        Ok(())
    })
}

/// Fidelity with the reference state built by explicit projection on the
/// realized graph.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_fidelity(p: *const AkltPrepared, out: *mut f64) -> AkltStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("prepared"))?;
        let reference = vbs_state(&p.state.realized_graph, p.state.deformation)?;
        put(out, fidelity(&p.state.state, &reference)?, "out")
    })
}

/// Serialize as `prepared/v1` JSON. Call with a null `buf` and `len = 0`
/// to learn the size through `needed`.
///
/// # Safety
/// `p` must be a live handle; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_to_json(p: *const AkltPrepared, buf: *mut c_char, len: usize, needed: *mut usize) -> AkltStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("prepared"))?;
        copy_str(&PreparedDoc::new(&p.input, &p.state, None).to_json(), buf, len, needed)
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aklt_prepared_free(p: *mut AkltPrepared) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// String order parameter from the transfer matrices.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_string_order(a: f64, r: usize, ax: AkltAxis, out: *mut f64) -> AkltStatus {
    guard(|| put(out, string_order_tm(a, r, axis(ax))?, "out"))
}

/// Largest entry of the POVM completeness sum minus the symmetric
/// projector, for spin `two_s / 2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aklt_povm_completeness_defect(two_s: usize, out: *mut f64) -> AkltStatus {
    guard(|| put(out, completeness_defect(two_s)?, "out"))
}
