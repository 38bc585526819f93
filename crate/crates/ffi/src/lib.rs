//! C ABI over `eafe-ocp`.
//!
//! Every entry point returns an [`EafeStatus`]; on failure the message is
//! kept per thread and can be fetched with [`eafe_last_error_message`].
//! Meshes and solutions are opaque heap handles released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eafe_ocp::control::{self, ProblemSpec, Scheme, SolutionPair};
use eafe_ocp::eafe::ReactionMode;
use eafe_ocp::fem::{constant_scalar, CoefficientField};
use eafe_ocp::mesh::{build_unit_square_with, DiagonalConvention, TriMesh, DEFAULT_VERTEX_CAP};
use eafe_ocp::verify::{certify_m_matrix, check_desired_state_bounds, Sign};
use eafe_ocp::{eafe, problems, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EafeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Capacity = 3,
    Geometry = 4,
    Singular = 5,
    Certification = 6,
    Coefficient = 7,
    Precondition = 8,
    BufferTooSmall = 9,
    Io = 10,
    Panic = 11,
    Internal = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EafeScheme {
    Eafe = 0,
    Galerkin = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EafeDiagonal {
    LowerLeftUpperRight = 0,
    UpperLeftLowerRight = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EafeField {
    Adjoint = 0,
    State = 1,
    Control = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EafeExample {
    BoundaryLayer = 0,
    InteriorLayer = 1,
    Smooth = 2,
}

/// Opaque triangulation of the unit square.
pub struct EafeMesh(TriMesh);

/// Opaque discrete optimality pair with recovered control.
pub struct EafeSolution(SolutionPair);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> EafeStatus {
    match err {
        Error::Capacity(_) => EafeStatus::Capacity,
        Error::Geometry(_) => EafeStatus::Geometry,
        Error::Singular { .. } => EafeStatus::Singular,
        Error::Certification { .. } => EafeStatus::Certification,
        Error::Coefficient(_) => EafeStatus::Coefficient,
        Error::Spec(_) => EafeStatus::Precondition,
        Error::Index(_) | Error::Data(_) | Error::Parse(_) | Error::EmptyRegion(_) => EafeStatus::InvalidArgument,
        Error::Io(_) | Error::Json(_) => EafeStatus::Io,
        Error::Assembly(_) => EafeStatus::Internal,
    }
}

struct Fail(EafeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> EafeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EafeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            EafeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(EafeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn scheme(s: EafeScheme) -> Scheme {
    match s {
        EafeScheme::Eafe => Scheme::Eafe,
        EafeScheme::Galerkin => Scheme::Galerkin,
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn eafe_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Evaluates the Bernoulli function `x / (e^x - 1)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eafe_bernoulli(x: f64, out: *mut f64) -> EafeStatus {
    guard(|| write_out(out, eafe::bernoulli(x)?, "out"))
}

/// Builds the level-`level` unit-square mesh with `2^level` segments per side.
///
/// # Safety
/// `out` must be a valid pointer; the handle must be released with
/// [`eafe_mesh_free`].
#[no_mangle]
pub unsafe extern "C" fn eafe_mesh_new(level: u32, diagonal: EafeDiagonal, out: *mut *mut EafeMesh) -> EafeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let diagonal = match diagonal {
            EafeDiagonal::LowerLeftUpperRight => DiagonalConvention::LowerLeftUpperRight,
            EafeDiagonal::UpperLeftLowerRight => DiagonalConvention::UpperLeftLowerRight,
        };
        let mesh = build_unit_square_with(level, diagonal, DEFAULT_VERTEX_CAP)?;
        out.write(Box::into_raw(Box::new(EafeMesh(mesh))));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle from [`eafe_mesh_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eafe_mesh_free(mesh: *mut EafeMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn eafe_mesh_counts(
    mesh: *const EafeMesh,
    num_vertices: *mut usize,
    num_triangles: *mut usize,
) -> EafeStatus {
    guard(|| {
        let m = &deref(mesh, "mesh")?.0;
        write_out(num_vertices, m.num_vertices(), "num_vertices")?;
        write_out(num_triangles, m.num_triangles(), "num_triangles")
    })
}

/// Copies vertex coordinates as interleaved `x, y` pairs; `len` counts doubles.
///
/// # Safety
/// `mesh` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eafe_mesh_vertices(mesh: *const EafeMesh, out: *mut f64, len: usize) -> EafeStatus {
    guard(|| {
        let m = &deref(mesh, "mesh")?.0;
        let need = 2 * m.num_vertices();
        if out.is_null() {
            return Err(null("out"));
        }
        if len < need {
            return Err(Fail(EafeStatus::BufferTooSmall, format!("need {need} doubles, got {len}")));
        }
        let flat: Vec<f64> = m.vertices().iter().flatten().copied().collect();
        ptr::copy_nonoverlapping(flat.as_ptr(), out, need);
        Ok(())
    })
}

unsafe fn finish_solve(
    mesh: *const EafeMesh,
    spec: impl FnOnce() -> Result<ProblemSpec, Fail>,
    s: EafeScheme,
    out: *mut *mut EafeSolution,
) -> EafeStatus {
    guard(|| {
        let m = &deref(mesh, "mesh")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = control::solve(m, &spec()?, scheme(s))?;
        out.write(Box::into_raw(Box::new(EafeSolution(sol))));
        Ok(())
    })
}

/// Solves the desired-state problem with constant coefficients and constant
/// desired state `y_d`, homogeneous Dirichlet data and lumped reaction.
///
/// # Safety
/// `mesh` must be a live handle and `out` valid; release the result with
/// [`eafe_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn eafe_solve_desired_state(
    mesh: *const EafeMesh,
    eps: f64,
    zeta_x: f64,
    zeta_y: f64,
    gamma: f64,
    beta: f64,
    y_d: f64,
    s: EafeScheme,
    out: *mut *mut EafeSolution,
) -> EafeStatus {
    finish_solve(
        mesh,
        || {
            let coeff = CoefficientField::constant(eps, [zeta_x, zeta_y], gamma).with_beta(beta);
            Ok(ProblemSpec::desired_state(coeff, constant_scalar(y_d)).with_reaction(ReactionMode::Lumped))
        },
        s,
        out,
    )
}

/// Solves one of the manufactured examples with exact Dirichlet traces.
///
/// # Safety
/// As for [`eafe_solve_desired_state`].
#[no_mangle]
pub unsafe extern "C" fn eafe_solve_example(
    mesh: *const EafeMesh,
    example: EafeExample,
    eps: f64,
    s: EafeScheme,
    out: *mut *mut EafeSolution,
) -> EafeStatus {
    finish_solve(
        mesh,
        || {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Fail(EafeStatus::InvalidArgument, format!("eps must be positive, got {eps}")));
            }
            let problem = match example {
                EafeExample::BoundaryLayer => problems::boundary_layer(eps),
                EafeExample::InteriorLayer => problems::interior_layer(eps),
                EafeExample::Smooth => problems::smooth(),
            };
            Ok(ProblemSpec::manufactured(&problem))
        },
        s,
        out,
    )
}

/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn eafe_solution_free(sol: *mut EafeSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Reports the vertex count and certified relative residual of a solve.
///
/// # Safety
/// `sol` must be a live handle and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn eafe_solution_info(sol: *const EafeSolution, len: *mut usize, residual: *mut f64) -> EafeStatus {
    guard(|| {
        let s = &deref(sol, "sol")?.0;
        write_out(len, s.y_bar.len(), "len")?;
        write_out(residual, s.residual, "residual")
    })
}

/// Copies one nodal field into `out`, which must hold `len` doubles.
///
/// # Safety
/// `sol` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eafe_solution_field(
    sol: *const EafeSolution,
    field: EafeField,
    out: *mut f64,
    len: usize,
) -> EafeStatus {
    guard(|| {
        let s = &deref(sol, "sol")?.0;
        let values = match field {
            EafeField::Adjoint => &s.p_bar,
            EafeField::State => &s.y_bar,
            EafeField::Control => &s.u_bar,
        };
        if out.is_null() {
            return Err(null("out"));
        }
        if len < values.len() {
            return Err(Fail(EafeStatus::BufferTooSmall, format!("need {} doubles, got {len}", values.len())));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        Ok(())
    })
}

/// Checks the desired-state bounds of a constant-`y_d` solution; the sign
/// branch follows the sign of `y_d`.
///
/// # Safety
/// `mesh` and `sol` must be live handles from the same level and the out
/// pointers valid.
#[no_mangle]
pub unsafe extern "C" fn eafe_check_bounds(
    mesh: *const EafeMesh,
    sol: *const EafeSolution,
    y_d: f64,
    ok: *mut bool,
    max_violation: *mut f64,
) -> EafeStatus {
    guard(|| {
        let m = &deref(mesh, "mesh")?.0;
        let s = &deref(sol, "sol")?.0;
        let sign = if y_d >= 0.0 { Sign::Nonneg } else { Sign::Nonpos };
        let report = check_desired_state_bounds(m, s, &constant_scalar(y_d), sign)?;
        write_out(ok, report.ok, "ok")?;
        write_out(max_violation, report.max_violation, "max_violation")
    })
}

/// Checks the M-matrix property of the interior operator for constant
/// coefficients.
///
/// # Safety
/// `mesh` must be a live handle and `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn eafe_certify_m_matrix(
    mesh: *const EafeMesh,
    eps: f64,
    zeta_x: f64,
    zeta_y: f64,
    gamma: f64,
    s: EafeScheme,
    passed: *mut bool,
) -> EafeStatus {
    guard(|| {
        let m = &deref(mesh, "mesh")?.0;
        let coeff = CoefficientField::constant(eps, [zeta_x, zeta_y], gamma);
        let a = control::assemble_operator(m, &coeff, scheme(s), ReactionMode::Lumped)?;
        let interior = m.interior_vertices();
        write_out(passed, certify_m_matrix(&a.submatrix(&interior, &interior))?.passed, "passed")
    })
}
