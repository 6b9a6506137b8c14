//! C ABI over the metastab library.
//!
//! Every fallible call returns an `MsStatus`; on failure the message is kept per thread and
//! can be read with `ms_last_error_message`. Matrices cross the boundary as row-major
//! interleaved (re, im) doubles, `2 * d * d` values for a `d x d` matrix. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use metastab::cli::{ExperimentConfig, ResultRecord, CODE_HASH};
use metastab::functionals;
use metastab::linalg::{c, CMat};
use metastab::lindblad::{kms_detailed_balance_residual, Lindbladian, LindbladOptions};
use metastab::pauli_ham::{
    diagonalize, gibbs_state, single_qubit_jump_set, DensityMatrix, HamiltonianFile, HamiltonianSpec, Spectrum,
};
use metastab::random::component_rng;
use metastab::spectral::FilterParams;
use metastab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Resource = 4,
    NonHermitian = 5,
    Numeric = 6,
    Singular = 7,
    Quadrature = 8,
    Config = 9,
    Io = 10,
    GateFailed = 11,
    Panic = 12,
}

impl From<&Error> for MsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => MsStatus::Dimension,
            Error::Resource(_) => MsStatus::Resource,
            Error::Invalid(_) => MsStatus::InvalidArgument,
            Error::NonHermitian(_) => MsStatus::NonHermitian,
            Error::Numeric(_) => MsStatus::Numeric,
            Error::Singular { .. } => MsStatus::Singular,
            Error::Quadrature { .. } => MsStatus::Quadrature,
            Error::Config(_) | Error::Json(_) => MsStatus::Config,
            Error::Io(_) => MsStatus::Io,
        }
    }
}

/// Hamiltonian with its eigendecomposition.
pub struct MsHamiltonian {
    spec: HamiltonianSpec,
    spectrum: Spectrum,
}

/// Lindbladian with single-qubit Pauli jumps, together with its Gibbs state.
pub struct MsLindbladian {
    generator: Lindbladian,
    gibbs: DensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type Failure = (MsStatus, String);

fn fail(status: MsStatus, msg: &str) -> Failure {
    (status, msg.to_string())
}

fn lib(e: Error) -> Failure {
    (MsStatus::from(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MsStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(MsStatus::NullPointer, "null output pointer"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(MsStatus::NullPointer, "null handle"))
}

unsafe fn read_matrix(data: *const f64, len: usize, d: usize) -> Result<CMat, Failure> {
    if data.is_null() {
        return Err(fail(MsStatus::NullPointer, "null matrix buffer"));
    }
    if len != 2 * d * d {
        return Err(fail(MsStatus::Dimension, &format!("expected {} doubles, got {len}", 2 * d * d)));
    }
    let v = std::slice::from_raw_parts(data, len);
    Ok(CMat::from_fn(d, d, |i, j| c(v[2 * (i * d + j)], v[2 * (i * d + j) + 1])))
}

unsafe fn write_matrix(m: &CMat, out: *mut f64, len: usize) -> Result<(), Failure> {
    let d = m.nrows();
    if out.is_null() {
        return Err(fail(MsStatus::NullPointer, "null output buffer"));
    }
    if len != 2 * d * d {
        return Err(fail(MsStatus::Dimension, &format!("expected {} doubles, got {len}", 2 * d * d)));
    }
    let v = std::slice::from_raw_parts_mut(out, len);
    for i in 0..d {
        for j in 0..d {
            v[2 * (i * d + j)] = m[(i, j)].re;
            v[2 * (i * d + j) + 1] = m[(i, j)].im;
        }
    }
    Ok(())
}

/// Library version and code hash, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(format!("{} ({})", env!("CARGO_PKG_VERSION"), CODE_HASH)).unwrap())
        .as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
/// `len` bytes) and returns its full length without the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ms_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a Hamiltonian from its JSON description (preset or explicit term list).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_hamiltonian_from_json(json: *const c_char, out: *mut *mut MsHamiltonian) -> MsStatus {
    guard(|| {
        let text = str_arg(json)?;
        let slot = out_arg(out)?;
        let file: HamiltonianFile = serde_json::from_str(text).map_err(|e| fail(MsStatus::Config, &e.to_string()))?;
        let spec = file.build().map_err(lib)?;
        let spectrum = diagonalize(&spec).map_err(lib)?;
        *slot = Box::into_raw(Box::new(MsHamiltonian { spec, spectrum }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from `ms_hamiltonian_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_hamiltonian_free(h: *mut MsHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_hamiltonian_num_qubits(h: *const MsHamiltonian, out: *mut usize) -> MsStatus {
    guard(|| {
        *out_arg(out)? = handle(h)?.spec.n;
        Ok(())
    })
}

/// Writes the 2^n eigenvalues in ascending order.
///
/// # Safety
/// `h` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_hamiltonian_energies(h: *const MsHamiltonian, out: *mut f64, len: usize) -> MsStatus {
    guard(|| {
        let h = handle(h)?;
        let e = &h.spectrum.energies;
        if out.is_null() {
            return Err(fail(MsStatus::NullPointer, "null output buffer"));
        }
        if len != e.len() {
            return Err(fail(MsStatus::Dimension, &format!("expected {} doubles, got {len}", e.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(e);
        Ok(())
    })
}

/// Lindbladian with X, Y, Z jumps on each listed qubit (all qubits when `qubits` is null).
/// A non-positive `sigma` selects 1/beta.
///
/// # Safety
/// `h` must be a live handle, `qubits` null or `n_qubits` readable values, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ms_lindbladian_new(
    h: *const MsHamiltonian,
    beta: f64,
    sigma: f64,
    eta: f64,
    qubits: *const usize,
    n_qubits: usize,
    out: *mut *mut MsLindbladian,
) -> MsStatus {
    guard(|| {
        let h = handle(h)?;
        let slot = out_arg(out)?;
        let region: Vec<usize> =
            if qubits.is_null() { (0..h.spec.n).collect() } else { std::slice::from_raw_parts(qubits, n_qubits).to_vec() };
        if region.iter().any(|&q| q >= h.spec.n) {
            return Err(fail(MsStatus::InvalidArgument, "jump qubit out of range"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(fail(MsStatus::InvalidArgument, "eta must be positive"));
        }
        let fp = FilterParams::new(beta, if sigma > 0.0 { Some(sigma) } else { None }).map_err(lib)?;
        let jumps: Vec<CMat> = single_qubit_jump_set(h.spec.n, &region).iter().map(|p| p.to_matrix()).collect();
        let generator = Lindbladian::build(&h.spectrum, &jumps, fp, eta, LindbladOptions::default()).map_err(lib)?;
        let gibbs = gibbs_state(&h.spectrum, beta).map_err(lib)?;
        *slot = Box::into_raw(Box::new(MsLindbladian { generator, gibbs }));
        Ok(())
    })
}

/// # Safety
/// `l` must be null or a handle from `ms_lindbladian_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_lindbladian_free(l: *mut MsLindbladian) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// # Safety
/// `l` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_lindbladian_dim(l: *const MsLindbladian, out: *mut usize) -> MsStatus {
    guard(|| {
        *out_arg(out)? = handle(l)?.generator.dim();
        Ok(())
    })
}

/// # Safety
/// `l` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_lindbladian_num_jumps(l: *const MsLindbladian, out: *mut usize) -> MsStatus {
    guard(|| {
        *out_arg(out)? = handle(l)?.generator.locals.len();
        Ok(())
    })
}

/// Trace norm of L applied to the Gibbs state.
///
/// # Safety
/// `l` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_fixed_point_residual(l: *const MsLindbladian, out: *mut f64) -> MsStatus {
    guard(|| {
        let l = handle(l)?;
        *out_arg(out)? = l.generator.stationarity(l.gibbs.matrix());
        Ok(())
    })
}

/// Largest KMS self-adjointness defect of the dissipative part over random operator pairs.
///
/// # Safety
/// `l` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_kms_residual(l: *const MsLindbladian, trials: usize, seed: u64, out: *mut f64) -> MsStatus {
    guard(|| {
        let l = handle(l)?;
        let slot = out_arg(out)?;
        let mut rng = component_rng(seed, 0);
        let mut worst = 0.0f64;
        for loc in &l.generator.locals {
            worst = worst.max(kms_detailed_balance_residual(&|o| loc.apply_adj(o), &l.gibbs, trials.max(1), &mut rng));
        }
        *slot = worst;
        Ok(())
    })
}

/// out = L[x] for an arbitrary d x d matrix x.
///
/// # Safety
/// `l` must be a live handle; `x` and `out` must hold `len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn ms_lindbladian_apply(l: *const MsLindbladian, x: *const f64, out: *mut f64, len: usize) -> MsStatus {
    guard(|| {
        let l = handle(l)?;
        let m = read_matrix(x, len, l.generator.dim())?;
        write_matrix(&l.generator.apply(&m), out, len)
    })
}

unsafe fn state_for(l: &MsLindbladian, jump: usize, rho: *const f64, len: usize) -> Result<DensityMatrix, Failure> {
    if jump >= l.generator.locals.len() {
        return Err(fail(MsStatus::InvalidArgument, "jump index out of range"));
    }
    DensityMatrix::new(read_matrix(rho, len, l.generator.dim())?).map_err(lib)
}

/// Entropy production of jump `jump` (ordered X, Y, Z per qubit) at a full-rank state.
///
/// # Safety
/// `l` must be a live handle, `rho` must hold `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_entropy_production(
    l: *const MsLindbladian,
    jump: usize,
    rho: *const f64,
    len: usize,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let l = handle(l)?;
        let slot = out_arg(out)?;
        let sigma = state_for(l, jump, rho, len)?;
        *slot = functionals::entropy_production(&l.generator.locals[jump], &sigma).map_err(lib)?;
        Ok(())
    })
}

/// Fisher information of jump `jump` with `s_nodes` Gauss-Legendre nodes (0 selects 64).
///
/// # Safety
/// `l` must be a live handle, `rho` must hold `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_fisher_information(
    l: *const MsLindbladian,
    jump: usize,
    rho: *const f64,
    len: usize,
    s_nodes: usize,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let l = handle(l)?;
        let slot = out_arg(out)?;
        let sigma = state_for(l, jump, rho, len)?;
        let nodes = if s_nodes == 0 { functionals::DEFAULT_S_NODES } else { s_nodes };
        *slot = functionals::fisher_information(&l.generator.locals[jump], &sigma, nodes).map_err(lib)?;
        Ok(())
    })
}

/// Runs one experiment config and returns the result record as a JSON string to be
/// released with `ms_string_free`. Returns `GateFailed` (with the record) when a gate fails.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_run_config_json(config: *const c_char, strict: bool, out: *mut *mut c_char) -> MsStatus {
    let mut gates_ok = true;
    let status = guard(|| {
        let text = str_arg(config)?;
        let slot = out_arg(out)?;
        *slot = ptr::null_mut();
        let cfg = ExperimentConfig::parse(text).and_then(|c| c.resolve()).map_err(lib)?;
        let outcome = metastab::cli::run_experiment(&cfg).map_err(lib)?;
        gates_ok = outcome.passed(strict);
        let record =
            ResultRecord { config: cfg, code_hash: CODE_HASH.into(), outputs: outcome.outputs, gates: outcome.gates, pass: gates_ok };
        let json = serde_json::to_string(&record).map_err(|e| fail(MsStatus::Numeric, &e.to_string()))?;
        *slot = CString::new(json).map_err(|e| fail(MsStatus::Numeric, &e.to_string()))?.into_raw();
        Ok(())
    });
    if status == MsStatus::Ok && !gates_ok {
        set_error("one or more gates failed".into());
        return MsStatus::GateFailed;
    }
    status
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
