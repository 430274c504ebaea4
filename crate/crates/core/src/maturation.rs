//! The nested maturation problem: integrate `y'(s) = -g(y(s), phi(-s))`,
//! `y(0) = x2` backward in elapsed time and locate the threshold delay
//! `tau(phi)` with `y(tau) = x1`.
//!
//! Under the model assumptions `y' ` lies between `-K` and `-eps`, so `y`
//! crosses `x1` strictly inside `(0, h]` and the crossing is unique. The
//! integrator is fixed-step RK4 with cubic Hermite dense output; the root is
//! found by bisection on the dense output.

use thiserror::Error;

use crate::history::{History, HistoryError, WindowEval};
use crate::model::{ModelError, ModelSpec};

#[derive(Debug, Clone, Error)]
pub enum MaturationError {
    #[error("maturity left the ball around x2 at s={s}: y={y} (|y - x2| > b)")]
    BallExit { s: f64, y: f64 },
    #[error("y never reached x1 before s=h: min y={min_y}")]
    NoBracket { min_y: f64 },
    #[error("dense output is not strictly decreasing at node {index}")]
    NotMonotone { index: usize },
    #[error("prehistory domain is [{a}, {b}], expected [-{h}, 0]")]
    BadDomain { a: f64, b: f64, h: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Backward trajectory, delay and solve diagnostics.
#[derive(Debug, Clone)]
pub struct MaturationResult {
    /// maturity vs elapsed backward time, on `[0, s_end]`
    pub y_traj: History,
    pub tau: f64,
    pub n_steps: usize,
    pub root_iterations: usize,
}

/// Default nested step size: at least 50 RK4 steps before the earliest
/// possible crossing at `(x2 - x1)/K`.
pub fn default_dt_y(spec: &ModelSpec) -> f64 {
    spec.maturity_gap() / (50.0 * spec.params.k)
}

/// Integrate the backward maturation ODE for the prehistory `phi` (domain
/// `[-h, 0]`). Stops one step after `y` first reaches `x1`, capped at `s = h`.
/// Dense output is cubic Hermite with slopes from the ODE right-hand side.
pub fn solve_y(phi: &History, spec: &ModelSpec, dt_y: f64) -> Result<History, MaturationError> {
    let h = spec.h();
    let tol = 1e-9 * h;
    if (phi.a() + h).abs() > tol || phi.b().abs() > tol {
        return Err(MaturationError::BadDomain {
            a: phi.a(),
            b: phi.b(),
            h,
        });
    }
    let x1 = spec.params.x1;
    let x2 = spec.params.x2;
    let b = spec.params.b;

    // phi(-s), clamped to the domain for the float fuzz at s = h
    let phi_at = |s: f64| -> Result<f64, MaturationError> {
        let t = (-s).clamp(-h, 0.0);
        let v = phi.eval(t)?;
        spec.check_v_range(v)?;
        Ok(v)
    };
    let f = |s: f64, y: f64| -> Result<f64, MaturationError> { Ok(-spec.eval_g(y, phi_at(s)?)?) };

    let mut times = vec![0.0];
    let mut values = vec![x2];
    let mut derivs = vec![f(0.0, x2)?];
    let mut s = 0.0;
    let mut y = x2;
    let mut crossings_left = 1usize;

    loop {
        let dt = dt_y.min(h - s);
        if dt <= 1e-15 * h {
            break;
        }
        let k1 = *derivs.last().unwrap();
        let k2 = f(s + 0.5 * dt, y + 0.5 * dt * k1)?;
        let k3 = f(s + 0.5 * dt, y + 0.5 * dt * k2)?;
        let k4 = f(s + dt, y + dt * k3)?;
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += dt;
        if (y - x2).abs() > b {
            return Err(MaturationError::BallExit { s, y });
        }
        times.push(s);
        values.push(y);
        derivs.push(f(s, y)?);
        if y <= x1 {
            if crossings_left == 0 {
                break;
            }
            crossings_left -= 1;
        }
        if s >= h - 1e-15 * h {
            break;
        }
    }
    Ok(History::from_nodes(times, values, derivs)?)
}

/// Locate `tau` with `y(tau) = x1` on the dense output by bisection.
/// Requires the node values to be strictly decreasing (guaranteed when
/// `y' <= -eps`); the root is then unique. Returns `(tau, iterations)`.
pub fn find_tau(y_traj: &History, x1: f64) -> Result<(f64, usize), MaturationError> {
    let values = y_traj.node_values();
    let times = y_traj.node_times();
    for (i, w) in values.windows(2).enumerate() {
        if w[1] >= w[0] {
            return Err(MaturationError::NotMonotone { index: i + 1 });
        }
    }
    let x2 = values[0];
    if x2 <= x1 {
        return Err(MaturationError::NoBracket { min_y: x2 });
    }
    let Some(j) = values.iter().position(|&v| v <= x1) else {
        return Err(MaturationError::NoBracket {
            min_y: values.iter().copied().fold(f64::INFINITY, f64::min),
        });
    };
    if values[j] == x1 {
        return Ok((times[j], 0));
    }
    let value_tol = 1e-12 * (x2 - x1);
    let mut lo = times[j - 1];
    let mut hi = times[j];
    let mut iterations = 0usize;
    loop {
        let mid = 0.5 * (lo + hi);
        let r = y_traj.eval(mid)? - x1;
        iterations += 1;
        if r.abs() <= value_tol || hi - lo <= 1e-14 {
            return Ok((mid, iterations));
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if iterations > 200 {
            return Ok((mid, iterations));
        }
    }
}

/// Full maturation solve: backward trajectory plus the delay.
pub fn solve(phi: &History, spec: &ModelSpec, dt_y: f64) -> Result<MaturationResult, MaturationError> {
    let y_traj = solve_y(phi, spec, dt_y)?;
    let (tau, root_iterations) = find_tau(&y_traj, spec.params.x1)?;
    Ok(MaturationResult {
        n_steps: y_traj.n_segments(),
        y_traj,
        tau,
        root_iterations,
    })
}

/// Exponential growth bound for the backward trajectory:
/// `[x2 + (|g(x2, phi(0))| + 2 sup|phi| + L x2) t] e^{L t}`.
pub fn y_growth_bound(phi: &History, spec: &ModelSpec, l_g: f64, t: f64) -> Result<f64, MaturationError> {
    let g0 = spec.eval_g(spec.params.x2, phi.eval(0.0)?)?.abs();
    let grow = g0 + 2.0 * phi.sup_norm() + l_g * spec.params.x2;
    Ok((spec.params.x2 + grow * t) * (l_g * t).exp())
}

/// Worst violation of the two-history estimate
/// `|y_phi(t) - y_psi(t)| <= L sup|phi - psi| t e^{L t}`
/// over `t` in `[0, min(tau_phi, tau_psi)]`. Negative margin means the
/// estimate holds with room to spare.
pub fn y_history_lip_margin(
    phi: &History,
    psi: &History,
    spec: &ModelSpec,
    l_g: f64,
    dt_y: f64,
) -> Result<f64, MaturationError> {
    let a = solve(phi, spec, dt_y)?;
    let b = solve(psi, spec, dt_y)?;
    let sup_diff = phi.sub(psi)?.sup_norm();
    let t_end = a.tau.min(b.tau);
    let mut margin = f64::NEG_INFINITY;
    let n = 256;
    for i in 0..=n {
        let t = t_end * i as f64 / n as f64;
        let lhs = (a.y_traj.eval(t)? - b.y_traj.eval(t)?).abs();
        let rhs = l_g * sup_diff * t * (l_g * t).exp();
        margin = margin.max(lhs - rhs);
    }
    Ok(margin)
}
