//! Functions on a finite window represented as piecewise cubic Hermite
//! interpolants.
//!
//! A [`History`] stores node times, values and derivatives; between nodes it
//! is the cubic with matching endpoint data. Values are continuous across
//! nodes by construction and the derivative at a shared node is single-valued.
//! The L2 and H1 norms are computed by 4-point Gauss-Legendre quadrature per
//! segment, which is exact for the degree-6 integrand of a squared cubic; the
//! sup norm and the derivative sup (Lipschitz bound) are computed exactly per
//! segment from the polynomial coefficients rather than by sampling.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::expr::{EvalError, Expr};

#[derive(Debug, Clone, Error)]
pub enum HistoryError {
    #[error("evaluation time {t} outside domain [{a}, {b}]")]
    OutOfDomain { t: f64, a: f64, b: f64 },
    #[error("invalid node data: {0}")]
    BadNodes(String),
    #[error("domains differ: [{0}, {1}] vs [{2}, {3}]")]
    DomainMismatch(f64, f64, f64, f64),
    #[error("history does not cover [{lo}, {hi}] (domain [{a}, {b}])")]
    InsufficientCoverage { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("expression evaluation failed at t={t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error("csv: {0}")]
    Csv(String),
}

/// 4-point Gauss-Legendre rule on [-1, 1]; exact through degree 7.
const GL4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.34785484513745385),
    (-0.33998104358485626, 0.6521451548625461),
    (0.33998104358485626, 0.6521451548625461),
    (0.8611363115940526, 0.34785484513745385),
];

/// Pointwise view of a function on the window `[-h, 0]`. The nested
/// maturation solve and the right-hand side only read values, so the solver
/// can pass trajectory views without materializing a [`History`] per stage.
pub type WindowEval<'a> = &'a dyn Fn(f64) -> Result<f64, HistoryError>;

/// Piecewise cubic Hermite function on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    times: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// Value at `t` of the cubic with data `(t0, v0, d0)` and `(t1, v1, d1)`.
pub(crate) fn hermite_value(t0: f64, v0: f64, d0: f64, t1: f64, v1: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * v0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * v1
        + (s3 - s2) * h * d1
}

/// Derivative at `t` of the cubic with data `(t0, v0, d0)` and `(t1, v1, d1)`.
pub(crate) fn hermite_deriv(t0: f64, v0: f64, d0: f64, t1: f64, v1: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s) * (v0 - v1) / h
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (3.0 * s2 - 2.0 * s) * d1
}

/// Cubic coefficients in the local variable `u = t - t0`.
#[derive(Debug, Clone, Copy)]
struct SegCubic {
    c0: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    len: f64,
}

impl SegCubic {
    fn value(&self, u: f64) -> f64 {
        self.c0 + u * (self.c1 + u * (self.c2 + u * self.c3))
    }

    fn deriv(&self, u: f64) -> f64 {
        self.c1 + u * (2.0 * self.c2 + u * 3.0 * self.c3)
    }

    /// Real roots of the derivative inside the open interval (0, len).
    fn deriv_roots(&self) -> [Option<f64>; 2] {
        let a = 3.0 * self.c3;
        let b = 2.0 * self.c2;
        let c = self.c1;
        let scale = a.abs().max(b.abs()).max(c.abs());
        let mut out = [None, None];
        if scale == 0.0 {
            return out;
        }
        let inside = |u: f64| u > 0.0 && u < self.len;
        if a.abs() <= 1e-14 * scale {
            if b != 0.0 {
                let u = -c / b;
                if inside(u) {
                    out[0] = Some(u);
                }
            }
            return out;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return out;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let (u1, u2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
        if inside(u1) {
            out[0] = Some(u1);
        }
        if inside(u2) && u2 != u1 {
            out[1] = Some(u2);
        }
        out
    }
}

impl History {
    /// Build from explicit node data. Times must be strictly increasing with
    /// at least two nodes; all data must be finite.
    pub fn from_nodes(times: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Result<History, HistoryError> {
        if times.len() < 2 {
            return Err(HistoryError::BadNodes("need at least two nodes".into()));
        }
        if times.len() != values.len() || times.len() != derivs.len() {
            return Err(HistoryError::BadNodes("times/values/derivs length mismatch".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HistoryError::BadNodes("node times not strictly increasing".into()));
        }
        if times
            .iter()
            .chain(values.iter())
            .chain(derivs.iter())
            .any(|x| !x.is_finite())
        {
            return Err(HistoryError::BadNodes("non-finite node data".into()));
        }
        Ok(History { times, values, derivs })
    }

    /// Sample an expression of one variable on `n_nodes` equispaced nodes.
    /// Node derivatives come from central differences of the samples, with
    /// second-order one-sided differences at the endpoints.
    pub fn from_expr(e: &Expr, a: f64, b: f64, n_nodes: usize) -> Result<History, HistoryError> {
        if n_nodes < 2 {
            return Err(HistoryError::BadNodes("need at least two nodes".into()));
        }
        if !(b > a) {
            return Err(HistoryError::BadNodes(format!("empty domain [{a}, {b}]")));
        }
        let n = n_nodes - 1;
        let dt = (b - a) / n as f64;
        let mut times = Vec::with_capacity(n_nodes);
        let mut values = Vec::with_capacity(n_nodes);
        for i in 0..=n {
            let t = if i == n { b } else { a + i as f64 * dt };
            let v = e.eval(&[t]).map_err(|source| HistoryError::Eval { t, source })?;
            times.push(t);
            values.push(v);
        }
        let mut derivs = vec![0.0; n_nodes];
        if n_nodes == 2 {
            let d = (values[1] - values[0]) / dt;
            derivs[0] = d;
            derivs[1] = d;
        } else {
            for i in 1..n {
                derivs[i] = (values[i + 1] - values[i - 1]) / (2.0 * dt);
            }
            derivs[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt);
            derivs[n] = (3.0 * values[n] - 4.0 * values[n - 1] + values[n - 2]) / (2.0 * dt);
        }
        History::from_nodes(times, values, derivs)
    }

    /// Constant function `c` on `[a, b]`.
    pub fn constant(c: f64, a: f64, b: f64) -> History {
        History {
            times: vec![a, b],
            values: vec![c, c],
            derivs: vec![0.0, 0.0],
        }
    }

    pub fn a(&self) -> f64 {
        self.times[0]
    }

    pub fn b(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn span(&self) -> f64 {
        self.b() - self.a()
    }

    pub fn node_times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn n_segments(&self) -> usize {
        self.times.len() - 1
    }

    fn boundary_tol(&self) -> f64 {
        1e-9 * self.span()
    }

    /// Index of the segment covering `t` (already clamped to the domain).
    fn segment_index(&self, t: f64) -> usize {
        let n = self.times.len();
        // partition_point returns the count of nodes <= t
        let idx = self.times.partition_point(|&x| x <= t);
        idx.clamp(1, n - 1) - 1
    }

    fn segment(&self, i: usize) -> SegCubic {
        let h = self.times[i + 1] - self.times[i];
        let v0 = self.values[i];
        let v1 = self.values[i + 1];
        let d0 = self.derivs[i];
        let d1 = self.derivs[i + 1];
        let slope = (v1 - v0) / h;
        SegCubic {
            c0: v0,
            c1: d0,
            c2: (3.0 * slope - 2.0 * d0 - d1) / h,
            c3: (d0 + d1 - 2.0 * slope) / (h * h),
            len: h,
        }
    }

    fn clamp_domain(&self, t: f64) -> Result<f64, HistoryError> {
        let (a, b) = (self.a(), self.b());
        if t < a - self.boundary_tol() || t > b + self.boundary_tol() {
            return Err(HistoryError::OutOfDomain { t, a, b });
        }
        Ok(t.clamp(a, b))
    }

    /// Value of the covering Hermite segment at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, HistoryError> {
        let t = self.clamp_domain(t)?;
        let i = self.segment_index(t);
        // return stored data verbatim at nodes
        if t == self.times[i] {
            return Ok(self.values[i]);
        }
        if t == self.times[i + 1] {
            return Ok(self.values[i + 1]);
        }
        Ok(self.segment(i).value(t - self.times[i]))
    }

    /// Derivative of the covering Hermite segment at `t`.
    pub fn eval_deriv(&self, t: f64) -> Result<f64, HistoryError> {
        let t = self.clamp_domain(t)?;
        let i = self.segment_index(t);
        if t == self.times[i] {
            return Ok(self.derivs[i]);
        }
        if t == self.times[i + 1] {
            return Ok(self.derivs[i + 1]);
        }
        Ok(self.segment(i).deriv(t - self.times[i]))
    }

    fn integral_of_square(&self, f: impl Fn(&SegCubic, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_segments() {
            let seg = self.segment(i);
            let half = 0.5 * seg.len;
            let mid = half;
            let mut s = 0.0;
            for (x, w) in GL4 {
                let u = mid + half * x;
                let y = f(&seg, u);
                s += w * y * y;
            }
            acc += half * s;
        }
        acc
    }

    /// L2 norm, exact for the piecewise cubic.
    pub fn l2_norm(&self) -> f64 {
        self.integral_of_square(|seg, u| seg.value(u)).sqrt()
    }

    /// L2 norm of the derivative, exact.
    pub fn l2_norm_deriv(&self) -> f64 {
        self.integral_of_square(|seg, u| seg.deriv(u)).sqrt()
    }

    /// `sqrt(l2^2 + l2_deriv^2)`.
    pub fn h1_norm(&self) -> f64 {
        let a = self.integral_of_square(|seg, u| seg.value(u));
        let b = self.integral_of_square(|seg, u| seg.deriv(u));
        (a + b).sqrt()
    }

    /// Exact maximum of |value| over the domain.
    pub fn sup_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n_segments() {
            let seg = self.segment(i);
            m = m.max(seg.value(0.0).abs()).max(seg.value(seg.len).abs());
            for r in seg.deriv_roots().into_iter().flatten() {
                m = m.max(seg.value(r).abs());
            }
        }
        m
    }

    /// Exact sup of |derivative| over the domain. The segment derivative is a
    /// quadratic; its extrema sit at the endpoints or the vertex.
    pub fn lip_bound(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n_segments() {
            let seg = self.segment(i);
            m = m.max(seg.deriv(0.0).abs()).max(seg.deriv(seg.len).abs());
            if seg.c3 != 0.0 {
                let vertex = -seg.c2 / (3.0 * seg.c3);
                if vertex > 0.0 && vertex < seg.len {
                    m = m.max(seg.deriv(vertex).abs());
                }
            }
        }
        m
    }

    /// Minimum and maximum of the value over the domain (exact).
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n_segments() {
            let seg = self.segment(i);
            for v in [seg.value(0.0), seg.value(seg.len)] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            for r in seg.deriv_roots().into_iter().flatten() {
                let v = seg.value(r);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Resample on a node mesh that must cover the same domain. Exact when
    /// `mesh` contains every breakpoint of `self`.
    pub fn resample_on(&self, mesh: &[f64]) -> Result<History, HistoryError> {
        let mut values = Vec::with_capacity(mesh.len());
        let mut derivs = Vec::with_capacity(mesh.len());
        for &t in mesh {
            values.push(self.eval(t)?);
            derivs.push(self.eval_deriv(t)?);
        }
        History::from_nodes(mesh.to_vec(), values, derivs)
    }

    /// Pointwise difference `self - other` on the merged node mesh. Both
    /// histories must share the domain. Exact for matching domains since each
    /// merged interval lies inside one segment of each operand.
    pub fn sub(&self, other: &History) -> Result<History, HistoryError> {
        let tol = self.boundary_tol().max(other.boundary_tol());
        if (self.a() - other.a()).abs() > tol || (self.b() - other.b()).abs() > tol {
            return Err(HistoryError::DomainMismatch(self.a(), self.b(), other.a(), other.b()));
        }
        let mesh = merge_meshes(&self.times, &other.times, tol.max(1e-12 * self.span()));
        let mut values = Vec::with_capacity(mesh.len());
        let mut derivs = Vec::with_capacity(mesh.len());
        for &t in &mesh {
            values.push(self.eval(t)? - other.eval(t)?);
            derivs.push(self.eval_deriv(t)? - other.eval_deriv(t)?);
        }
        History::from_nodes(mesh, values, derivs)
    }

    /// Uniform scaling of values and derivatives.
    pub fn scale(&self, c: f64) -> History {
        History {
            times: self.times.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            derivs: self.derivs.iter().map(|d| c * d).collect(),
        }
    }

    /// Exact restriction to `[lo, hi]`, keeping interior nodes and sampling
    /// Hermite data at the cut points (a cubic is determined by value and
    /// derivative at two points, so clipping introduces no error).
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<History, HistoryError> {
        let tol = self.boundary_tol();
        if lo < self.a() - tol || hi > self.b() + tol || !(hi > lo) {
            return Err(HistoryError::InsufficientCoverage {
                lo,
                hi,
                a: self.a(),
                b: self.b(),
            });
        }
        let lo_c = lo.clamp(self.a(), self.b());
        let hi_c = hi.clamp(self.a(), self.b());
        let dedupe = 1e-12 * self.span().max(hi_c - lo_c);
        let mut times = vec![lo_c];
        for &t in &self.times {
            if t > lo_c + dedupe && t < hi_c - dedupe {
                times.push(t);
            }
        }
        times.push(hi_c);
        let mut values = Vec::with_capacity(times.len());
        let mut derivs = Vec::with_capacity(times.len());
        for &t in &times {
            values.push(self.eval(t)?);
            derivs.push(self.eval_deriv(t)?);
        }
        History::from_nodes(times, values, derivs)
    }

    /// Translate the time axis by `offset`.
    pub fn shift(&self, offset: f64) -> History {
        History {
            times: self.times.iter().map(|t| t + offset).collect(),
            values: self.values.clone(),
            derivs: self.derivs.clone(),
        }
    }

    /// Serialize as CSV with columns `t,value,derivative`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value,derivative")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.values[i], self.derivs[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<History, HistoryError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| HistoryError::Csv(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != "t,value,derivative" {
                    return Err(HistoryError::Csv(format!(
                        "expected header 't,value,derivative', got '{line}'"
                    )));
                }
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |name: &str| -> Result<f64, HistoryError> {
                fields
                    .next()
                    .ok_or_else(|| HistoryError::Csv(format!("line {}: missing {name}", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| HistoryError::Csv(format!("line {}: {name}: {e}", lineno + 1)))
            };
            times.push(next("t")?);
            values.push(next("value")?);
            derivs.push(next("derivative")?);
        }
        History::from_nodes(times, values, derivs)
    }
}

/// Sorted union of two node meshes, deduplicated within `tol`.
pub(crate) fn merge_meshes(a: &[f64], b: &[f64], tol: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => {
                if x <= y {
                    i += 1;
                    x
                } else {
                    j += 1;
                    y
                }
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => break,
        };
        match out.last() {
            Some(&last) if t - last <= tol => {}
            _ => out.push(t),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn expr1(src: &str) -> Expr {
        Expr::parse(src, &["t"]).unwrap()
    }

    #[test]
    fn constant_from_expr() {
        let h = History::from_expr(&expr1("1"), -1.0, 0.0, 5).unwrap();
        for t in [-1.0, -0.77, -0.5, -0.1, 0.0] {
            assert_eq!(h.eval(t).unwrap(), 1.0);
            assert_eq!(h.eval_deriv(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_reproduction() {
        let h = History::from_expr(&expr1("t"), -1.0, 0.0, 5).unwrap();
        assert!((h.eval(-0.5).unwrap() - (-0.5)).abs() < 1e-15);
        assert!((h.eval_deriv(-0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((h.eval(-0.25).unwrap() - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn cubic_interpolation_error_bounded() {
        let h = History::from_expr(&expr1("t^3"), -1.0, 0.0, 9).unwrap();
        assert!((h.eval(-0.5).unwrap() - (-0.125)).abs() <= 1e-6);
        // off-node point: FD node derivatives carry an O(dt^2) error, so the
        // interpolant is good to O(dt^3) between nodes
        assert!((h.eval(-0.33).unwrap() - (-0.33f64).powi(3)).abs() <= 3e-3);
    }

    #[test]
    fn node_data_returned_exactly() {
        let times = vec![0.0, 0.4, 1.0];
        let values = vec![0.3, -0.2, 0.9];
        let derivs = vec![1.5, -0.7, 0.1];
        let h = History::from_nodes(times.clone(), values.clone(), derivs.clone()).unwrap();
        for i in 0..3 {
            assert_eq!(h.eval(times[i]).unwrap(), values[i]);
            assert_eq!(h.eval_deriv(times[i]).unwrap(), derivs[i]);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let h = History::constant(1.0, -1.0, 0.0);
        assert!(matches!(h.eval(0.5), Err(HistoryError::OutOfDomain { .. })));
        assert!(matches!(h.eval(-1.5), Err(HistoryError::OutOfDomain { .. })));
        // boundary fuzz within 1e-9*span is clamped
        assert_eq!(h.eval(-1.0 - 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn norms_constant() {
        let h = History::constant(1.0, -1.0, 0.0);
        assert!((h.l2_norm() - 1.0).abs() < 1e-14);
        assert!(h.l2_norm_deriv().abs() < 1e-14);
        assert!((h.h1_norm() - 1.0).abs() < 1e-14);
        assert_eq!(h.sup_norm(), 1.0);
        assert_eq!(h.lip_bound(), 0.0);
    }

    #[test]
    fn norms_linear() {
        let h = History::from_expr(&expr1("t"), -1.0, 0.0, 6).unwrap();
        assert!((h.l2_norm() - 1.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!((h.l2_norm_deriv() - 1.0).abs() < 1e-12);
        assert!((h.h1_norm() - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((h.sup_norm() - 1.0).abs() < 1e-14);
        assert!((h.lip_bound() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h1_dominates_l2() {
        let h = History::from_nodes(
            vec![-1.0, -0.6, -0.2, 0.0],
            vec![0.3, -0.8, 0.4, 0.1],
            vec![1.0, -2.0, 0.5, 0.0],
        )
        .unwrap();
        assert!(h.h1_norm() >= h.l2_norm());
    }

    #[test]
    fn pythagorean_identity() {
        let h = History::from_nodes(
            vec![0.0, 0.5, 1.3],
            vec![1.0, -0.4, 0.2],
            vec![0.0, 2.0, -1.0],
        )
        .unwrap();
        let lhs = h.h1_norm().powi(2);
        let rhs = h.l2_norm().powi(2) + h.l2_norm_deriv().powi(2);
        assert!((lhs - rhs).abs() <= 1e-14 * lhs.max(1.0));
    }

    #[test]
    fn sup_interior_extremum() {
        // value 0 at both ends, slopes +1/-1: peak 1/4 at the midpoint
        let h = History::from_nodes(vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, -1.0]).unwrap();
        assert!((h.sup_norm() - 0.25).abs() < 1e-15);
        assert!((h.eval(0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lip_bound_vertex_vs_dense_sampling() {
        let h = History::from_nodes(vec![0.0, 1.0], vec![0.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let exact = h.lip_bound();
        let mut sampled: f64 = 0.0;
        for k in 0..=10_000 {
            let t = k as f64 / 10_000.0;
            sampled = sampled.max(h.eval_deriv(t).unwrap().abs());
        }
        assert!(exact >= sampled - 1e-12);
        assert!(exact <= sampled + 1e-3, "vertex {exact} vs sampled {sampled}");
    }

    #[test]
    fn quadrature_matches_coefficient_integral() {
        // independent closed-form integral of p(u)^2 via coefficient convolution
        let h = History::from_nodes(vec![0.2, 1.1], vec![0.7, -0.3], vec![1.9, 0.4]).unwrap();
        let seg = h.segment(0);
        let c = [seg.c0, seg.c1, seg.c2, seg.c3];
        let mut sq = [0.0; 7];
        for i in 0..4 {
            for j in 0..4 {
                sq[i + j] += c[i] * c[j];
            }
        }
        let len = seg.len;
        let mut exact = 0.0;
        for (k, coeff) in sq.iter().enumerate() {
            exact += coeff * len.powi(k as i32 + 1) / (k as f64 + 1.0);
        }
        let got = h.l2_norm().powi(2);
        assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1e-300), "{got} vs {exact}");
    }

    #[test]
    fn difference_is_exact_on_merged_mesh() {
        let f = History::from_nodes(
            vec![-1.0, -0.55, -0.1, 0.0],
            vec![0.4, -0.3, 0.8, 0.2],
            vec![1.2, -0.5, 0.0, 1.0],
        )
        .unwrap();
        let g = History::from_nodes(
            vec![-1.0, -0.7, -0.3, 0.0],
            vec![-0.2, 0.5, 0.1, -0.4],
            vec![0.3, 0.9, -1.1, 0.6],
        )
        .unwrap();
        let d = f.sub(&g).unwrap();
        for k in 0..=200 {
            let t = -1.0 + k as f64 / 200.0;
            let want = f.eval(t).unwrap() - g.eval(t).unwrap();
            assert!((d.eval(t).unwrap() - want).abs() <= 1e-13);
        }
    }

    #[test]
    fn restriction_is_exact() {
        let f = History::from_nodes(
            vec![-2.0, -1.2, -0.3, 0.5],
            vec![0.4, -0.3, 0.8, 0.2],
            vec![1.2, -0.5, 0.0, 1.0],
        )
        .unwrap();
        let r = f.restrict(-1.5, 0.1).unwrap();
        assert_eq!(r.a(), -1.5);
        assert_eq!(r.b(), 0.1);
        for k in 0..=100 {
            let t = -1.5 + 1.6 * k as f64 / 100.0;
            assert!((r.eval(t).unwrap() - f.eval(t).unwrap()).abs() <= 1e-13);
            assert!((r.eval_deriv(t).unwrap() - f.eval_deriv(t).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let h = History::from_nodes(
            vec![-1.0, -0.25, 0.0],
            vec![0.125, -3.5e-7, 2.0],
            vec![1.0, 0.0, -0.75],
        )
        .unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = History::read_csv(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn bad_nodes_rejected() {
        assert!(History::from_nodes(vec![0.0], vec![1.0], vec![0.0]).is_err());
        assert!(History::from_nodes(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(History::from_nodes(vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(History::from_nodes(vec![0.0, 1.0], vec![f64::NAN, 1.0], vec![0.0, 0.0]).is_err());
    }
}
