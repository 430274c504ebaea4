//! The functional right-hand side of the system:
//!
//! ```text
//! F1(phi, psi) = q(psi(0)) phi(0)
//! F2(phi, psi) = beta(psi(-tau)) phi(-tau) G(psi) - mu psi(0)
//! G(psi)       = g(x2, psi(0)) exp( int_0^tau (d - D1 g)(y(s), psi(-s)) ds )
//! ```
//!
//! with `tau = tau(psi)` and `y` from the nested maturation solve. The
//! exponent integral uses composite Simpson on the maturation substeps (with
//! the substep midpoints from the dense output); the partial interval ending
//! at `tau` gets the same 3-point rule.

use thiserror::Error;

use crate::history::{History, HistoryError};
use crate::maturation::{self, MaturationError, MaturationResult};
use crate::model::{DerivedBounds, ModelError, ModelSpec};

#[derive(Debug, Clone, Error)]
pub enum RhsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Maturation(#[from] MaturationError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("non-finite right-hand side component {0}")]
    NonFinite(&'static str),
}

/// One evaluation of `F`, with the delay and functional used.
#[derive(Debug, Clone, Copy)]
pub struct RhsValue {
    /// dw/dt
    pub f1: f64,
    /// dv/dt
    pub f2: f64,
    pub tau_used: f64,
    pub calg_used: f64,
}

/// Exponent integral of G over `[0, tau]` for a completed maturation solve.
fn exponent_integral(mat: &MaturationResult, psi: &History, spec: &ModelSpec) -> Result<f64, RhsError> {
    let h = spec.h();
    let kernel = |s: f64| -> Result<f64, RhsError> {
        let y = mat.y_traj.eval(s)?;
        let v = psi.eval((-s).clamp(-h, 0.0))?;
        Ok(spec.eval_kernel(y, v)?)
    };
    let simpson = |a: f64, b: f64| -> Result<f64, RhsError> {
        Ok((b - a) / 6.0 * (kernel(a)? + 4.0 * kernel(0.5 * (a + b))? + kernel(b)?))
    };
    let mut acc = 0.0;
    let times = mat.y_traj.node_times();
    for w in times.windows(2) {
        if w[1] <= mat.tau {
            acc += simpson(w[0], w[1])?;
        } else {
            if mat.tau - w[0] > 1e-15 * mat.tau.max(1.0) {
                acc += simpson(w[0], mat.tau)?;
            }
            break;
        }
    }
    Ok(acc)
}

/// `G(psi)` reusing an existing maturation solve; `psi0` is the value used
/// for the leading factor `g(x2, psi(0))`.
pub fn calg_with(mat: &MaturationResult, psi: &History, psi0: f64, spec: &ModelSpec) -> Result<f64, RhsError> {
    let lead = spec.eval_g(spec.params.x2, psi0)?;
    let v = lead * exponent_integral(mat, psi, spec)?.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RhsError::NonFinite("calG"))
    }
}

/// `G(psi)` with a fresh maturation solve.
pub fn calg(psi: &History, spec: &ModelSpec, dt_y: f64) -> Result<f64, RhsError> {
    let mat = maturation::solve(psi, spec, dt_y)?;
    calg_with(&mat, psi, psi.eval(0.0)?, spec)
}

/// Evaluate `F` where the point values at the segment endpoint are supplied
/// separately from the segment (the method of steps evaluates stages at
/// states that are not yet committed to the trajectory). The delayed
/// evaluations and the maturation solve read the segments.
pub fn rhs_f_at(
    seg_w: &History,
    seg_v: &History,
    w_point: f64,
    v_point: f64,
    spec: &ModelSpec,
    dt_y: f64,
) -> Result<RhsValue, RhsError> {
    let mat = maturation::solve(seg_v, spec, dt_y)?;
    let calg_used = calg_with(&mat, seg_v, v_point, spec)?;
    let tau = mat.tau;
    let v_delay = seg_v.eval(-tau)?;
    spec.check_v_range(v_delay)?;
    let w_delay = seg_w.eval(-tau)?;
    let f1 = spec.eval_q(v_point)? * w_point;
    let f2 = spec.eval_beta(v_delay)? * w_delay * calg_used - spec.params.mu * v_point;
    if !f1.is_finite() {
        return Err(RhsError::NonFinite("F1"));
    }
    if !f2.is_finite() {
        return Err(RhsError::NonFinite("F2"));
    }
    Ok(RhsValue {
        f1,
        f2,
        tau_used: tau,
        calg_used,
    })
}

/// `F(phi, psi)` for two prehistories on `[-h, 0]`, sharing one maturation
/// solve between the delay, the functional and the delayed evaluations.
pub fn rhs_f(phi: &History, psi: &History, spec: &ModelSpec, dt_y: f64) -> Result<RhsValue, RhsError> {
    rhs_f_at(phi, psi, phi.eval(0.0)?, psi.eval(0.0)?, spec, dt_y)
}

/// Closed-form Lipschitz constant for the delay functional:
/// `(L^2 (h^{1/2} + h^{-1/2}) int_0^h t e^{Lt} dt + L sqrt(h)) / eps`
/// with the integral `(h/L - 1/L^2) e^{Lh} + 1/L^2` for `L > 0` and `h^2/2`
/// for `L = 0`.
pub fn tau_lip_bound(spec: &ModelSpec, l: f64) -> f64 {
    let h = spec.h();
    let integral = if l > 0.0 {
        (h / l - 1.0 / (l * l)) * (l * h).exp() + 1.0 / (l * l)
    } else {
        0.5 * h * h
    };
    (l * l * (h.sqrt() + 1.0 / h.sqrt()) * integral + l * h.sqrt()) / spec.params.eps
}

/// Upper bound for G: `K e^{h M_k}`.
pub fn calg_bound(spec: &ModelSpec, bounds: &DerivedBounds) -> f64 {
    spec.params.k * (spec.h() * bounds.m_k).exp()
}
