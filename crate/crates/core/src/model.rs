//! Model definition: the scalar functions `q`, `beta` (or `gamma`), `g`,
//! `D1 g`, `d`, the scalar parameters, assumption validation on a sampling
//! grid, and the derived constants used by the a priori bounds.

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::verify::{CheckItem, CheckReport};

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("{function}({args}): {source}")]
    Eval {
        function: &'static str,
        args: String,
        source: EvalError,
    },
    #[error("state v={v} outside the declared range [{lo}, {hi}]")]
    RangeExit { v: f64, lo: f64, hi: f64 },
    #[error("model assumptions not satisfied: {0}")]
    Invalid(String),
    #[error("non-finite value while deriving bounds: {0}")]
    NonFinite(String),
}

/// Scalar parameters of the model. `h = b / K` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    /// initial maturity
    pub x1: f64,
    /// full maturity
    pub x2: f64,
    /// mortality rate of mature cells
    pub mu: f64,
    /// lower bound of the maturation rate g
    pub eps: f64,
    /// upper bound of the maturation rate g
    #[serde(rename = "K")]
    pub k: f64,
    /// radius of the maturity ball around x2
    pub b: f64,
}

/// The inflow coefficient is supplied either directly as `beta` or as the
/// unregulated rate `gamma`, with `beta(z) = gamma(z) / g(x1, z)`.
#[derive(Debug, Clone)]
pub enum BetaSpec {
    Beta(Expr),
    Gamma(Expr),
}

/// Complete model definition.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// stem cell net growth rate, q(v)
    pub q: Expr,
    pub beta: BetaSpec,
    /// regulated maturation rate, g(x, v)
    pub g: Expr,
    /// partial derivative of g with respect to maturity, supplied explicitly
    pub d1g: Expr,
    /// progenitor net growth rate, d(x, v)
    pub d: Expr,
    pub params: ModelParams,
    /// declared state interval for v; validation and simulation stay inside
    pub v_lo: f64,
    pub v_hi: f64,
}

/// Sampling plan for validation and bound derivation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GridPlan {
    pub grid_nx: usize,
    pub grid_nv: usize,
    /// tolerance for the `d1g` finite-difference consistency check
    pub tol_consistency: f64,
}

impl Default for GridPlan {
    fn default() -> GridPlan {
        GridPlan {
            grid_nx: 33,
            grid_nv: 33,
            // FD step 1e-5 gives O(1e-10) truncation; 1e-4 leaves room for
            // roundoff in the user expressions
            tol_consistency: 1e-4,
        }
    }
}

/// FD step for the d1g consistency check and the Lipschitz estimates.
const FD_STEP: f64 = 1e-5;

/// Constants derived from grid suprema, mirroring the global-existence
/// estimates: `|w(t)| <= |phi(0)| e^{t M_q}` and `G <= K e^{h M_k} = M_G`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DerivedBounds {
    /// sup |q| over the sampled range
    pub m_q: f64,
    /// sup |d - D1 g| over ball x range
    pub m_k: f64,
    /// K e^{h M_k}
    pub m_g: f64,
    /// empirical Lipschitz constant of g (max of |D1 g| and |D2 g| on the grid)
    pub l_g: f64,
    /// sup |beta| over the sampled range
    pub m_beta: f64,
    /// linear growth fit: |beta(v)| <= c_beta |v| + a_beta on all samples
    pub c_beta: f64,
    pub a_beta: f64,
}

impl ModelSpec {
    /// Backward time horizon `h = b / K`.
    pub fn h(&self) -> f64 {
        self.params.b / self.params.k
    }

    /// `x2 - x1`.
    pub fn maturity_gap(&self) -> f64 {
        self.params.x2 - self.params.x1
    }

    /// Provable lower bound for the delay, `(x2 - x1) / K`; also the step
    /// size cap for the method of steps.
    pub fn tau_min(&self) -> f64 {
        self.maturity_gap() / self.params.k
    }

    /// Provable upper bound for the delay, `(x2 - x1) / eps`.
    pub fn tau_max(&self) -> f64 {
        self.maturity_gap() / self.params.eps
    }

    pub fn check_v_range(&self, v: f64) -> Result<(), ModelError> {
        if v < self.v_lo || v > self.v_hi {
            Err(ModelError::RangeExit {
                v,
                lo: self.v_lo,
                hi: self.v_hi,
            })
        } else {
            Ok(())
        }
    }

    fn eval1(e: &Expr, name: &'static str, v: f64) -> Result<f64, ModelError> {
        e.eval(&[v]).map_err(|source| ModelError::Eval {
            function: name,
            args: format!("{v}"),
            source,
        })
    }

    fn eval2(e: &Expr, name: &'static str, x: f64, v: f64) -> Result<f64, ModelError> {
        e.eval(&[x, v]).map_err(|source| ModelError::Eval {
            function: name,
            args: format!("{x}, {v}"),
            source,
        })
    }

    pub fn eval_q(&self, v: f64) -> Result<f64, ModelError> {
        Self::eval1(&self.q, "q", v)
    }

    pub fn eval_g(&self, x: f64, v: f64) -> Result<f64, ModelError> {
        Self::eval2(&self.g, "g", x, v)
    }

    pub fn eval_d1g(&self, x: f64, v: f64) -> Result<f64, ModelError> {
        Self::eval2(&self.d1g, "d1g", x, v)
    }

    pub fn eval_d(&self, x: f64, v: f64) -> Result<f64, ModelError> {
        Self::eval2(&self.d, "d", x, v)
    }

    /// `(d - D1 g)(x, v)`, the integrand of the exponent of G.
    pub fn eval_kernel(&self, x: f64, v: f64) -> Result<f64, ModelError> {
        Ok(self.eval_d(x, v)? - self.eval_d1g(x, v)?)
    }

    /// `beta(v)`, either direct or as `gamma(v) / g(x1, v)`.
    pub fn eval_beta(&self, v: f64) -> Result<f64, ModelError> {
        match &self.beta {
            BetaSpec::Beta(e) => Self::eval1(e, "beta", v),
            BetaSpec::Gamma(gamma) => {
                let num = Self::eval1(gamma, "gamma", v)?;
                let den = self.eval_g(self.params.x1, v)?;
                if den == 0.0 {
                    Err(ModelError::Eval {
                        function: "beta",
                        args: format!("{v}"),
                        source: EvalError::DivisionByZero,
                    })
                } else {
                    Ok(num / den)
                }
            }
        }
    }

    fn x_grid(&self, n: usize) -> Vec<f64> {
        linspace(self.params.x2 - self.params.b, self.params.x2 + self.params.b, n)
    }

    fn v_grid(&self, n: usize) -> Vec<f64> {
        linspace(self.v_lo, self.v_hi, n)
    }

    /// Check the parameter inequalities and the bounds on `g` over the
    /// sampling grid. Failures are report entries, never errors.
    pub fn validate(&self, grid: &GridPlan) -> CheckReport {
        let p = self.params;
        let mut rep = CheckReport::new();
        rep.push(CheckItem::upper_strict(
            "param_x1_lt_x2",
            p.x1,
            p.x2,
            format!("x1={} < x2={}", p.x1, p.x2),
        ));
        rep.push(CheckItem::lower(
            "param_eps_positive",
            p.eps,
            f64::MIN_POSITIVE,
            format!("eps={} > 0", p.eps),
        ));
        rep.push(CheckItem::lower(
            "param_k_ge_eps",
            p.k,
            p.eps,
            format!("K={} >= eps={}", p.k, p.eps),
        ));
        rep.push(CheckItem::lower(
            "param_b_positive",
            p.b,
            f64::MIN_POSITIVE,
            format!("b={} > 0", p.b),
        ));
        rep.push(CheckItem::lower(
            "param_mu_nonneg",
            p.mu,
            0.0,
            format!("mu={} >= 0", p.mu),
        ));
        // x2 - x1 in (0, b eps / K), both ends excluded; the lower end is
        // covered by param_x1_lt_x2
        rep.push(CheckItem::upper_strict(
            "param_maturity_window",
            self.maturity_gap(),
            p.b * p.eps / p.k,
            format!("x2-x1={} < b*eps/K={}", self.maturity_gap(), p.b * p.eps / p.k),
        ));
        if !rep.all_pass() {
            // grid sweeps are meaningless on inconsistent parameters
            return rep;
        }

        let xs = self.x_grid(grid.grid_nx);
        let vs = self.v_grid(grid.grid_nv);
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        let mut d1g_defect: f64 = 0.0;
        let mut witness = String::new();
        let mut eval_failure: Option<String> = None;
        'outer: for &x in &xs {
            for &v in &vs {
                let g = match self.eval_g(x, v) {
                    Ok(g) => g,
                    Err(e) => {
                        eval_failure = Some(e.to_string());
                        break 'outer;
                    }
                };
                if g < g_min {
                    g_min = g;
                }
                if g > g_max {
                    g_max = g;
                }
                let d1g = match self.eval_d1g(x, v) {
                    Ok(d) => d,
                    Err(e) => {
                        eval_failure = Some(e.to_string());
                        break 'outer;
                    }
                };
                let fd = match self.g.diff_fd("x", &[x, v], FD_STEP) {
                    Ok(d) => d,
                    Err(e) => {
                        eval_failure = Some(e.to_string());
                        break 'outer;
                    }
                };
                let defect = (d1g - fd).abs();
                if defect > d1g_defect {
                    d1g_defect = defect;
                    witness = format!("worst at (x={x}, v={v})");
                }
            }
        }
        if let Some(msg) = eval_failure {
            rep.push(CheckItem::upper("g_lower_bound", f64::MAX, 0.0, msg));
            return rep;
        }
        rep.push(CheckItem::lower(
            "g_lower_bound",
            g_min,
            p.eps,
            format!("min g over grid = {g_min}, eps = {}", p.eps),
        ));
        rep.push(CheckItem::upper(
            "g_upper_bound",
            g_max,
            p.k,
            format!("max g over grid = {g_max}, K = {}", p.k),
        ));
        rep.push(CheckItem::upper(
            "d1g_consistency",
            d1g_defect,
            grid.tol_consistency,
            witness,
        ));

        // empirical local Lipschitz quotients must stay finite on the grid
        rep.push(self.lip_quotient_check("lipschitz_finite_q", |v| self.eval_q(v), &vs));
        rep.push(self.lip_quotient_check("lipschitz_finite_beta", |v| self.eval_beta(v), &vs));
        let mut d_quot: f64 = 0.0;
        let mut d_fail = None;
        'dloop: for &x in &xs {
            for w in vs.windows(2) {
                match (self.eval_d(x, w[0]), self.eval_d(x, w[1])) {
                    (Ok(a), Ok(b)) => d_quot = d_quot.max(((b - a) / (w[1] - w[0])).abs()),
                    (Err(e), _) | (_, Err(e)) => {
                        d_fail = Some(e.to_string());
                        break 'dloop;
                    }
                }
            }
        }
        rep.push(match d_fail {
            None => CheckItem::upper(
                "lipschitz_finite_d",
                d_quot,
                f64::MAX,
                format!("max |d(x, v+dv) - d(x, v)| / dv over grid = {d_quot}"),
            ),
            Some(msg) => CheckItem::upper("lipschitz_finite_d", f64::MAX, f64::MAX, msg),
        });
        rep
    }

    fn lip_quotient_check(
        &self,
        id: &'static str,
        f: impl Fn(f64) -> Result<f64, ModelError>,
        vs: &[f64],
    ) -> CheckItem {
        let mut quot: f64 = 0.0;
        for w in vs.windows(2) {
            match (f(w[0]), f(w[1])) {
                (Ok(a), Ok(b)) => quot = quot.max(((b - a) / (w[1] - w[0])).abs()),
                (Err(e), _) | (_, Err(e)) => {
                    return CheckItem::upper(id, f64::MAX, f64::MAX, e.to_string());
                }
            }
        }
        CheckItem::upper(id, quot, f64::MAX, format!("max difference quotient = {quot}"))
    }

    /// Grid suprema for the global-existence constants. Call after a passing
    /// [`ModelSpec::validate`].
    ///
    /// Suprema are scanned on a refinement of the validation grid (at least
    /// 129 x 513 points); narrow derivative peaks of `g` would otherwise slip
    /// between coarse grid points and understate the Lipschitz constant the
    /// delay estimates depend on.
    pub fn derive_bounds(&self, grid: &GridPlan) -> Result<DerivedBounds, ModelError> {
        let xs = self.x_grid(grid.grid_nx.max(129));
        let vs = self.v_grid(grid.grid_nv.max(513));
        let mut m_q: f64 = 0.0;
        let mut m_beta: f64 = 0.0;
        let mut beta_samples = Vec::with_capacity(vs.len());
        for &v in &vs {
            m_q = m_q.max(self.eval_q(v)?.abs());
            let b = self.eval_beta(v)?.abs();
            m_beta = m_beta.max(b);
            beta_samples.push((v.abs(), b));
        }
        let mut m_k: f64 = 0.0;
        let mut l_g: f64 = 0.0;
        for &x in &xs {
            for &v in &vs {
                m_k = m_k.max(self.eval_kernel(x, v)?.abs());
                let dx = self.g.diff_fd("x", &[x, v], FD_STEP).map_err(|source| ModelError::Eval {
                    function: "g",
                    args: format!("{x}, {v}"),
                    source,
                })?;
                let dv = self.g.diff_fd("v", &[x, v], FD_STEP).map_err(|source| ModelError::Eval {
                    function: "g",
                    args: format!("{x}, {v}"),
                    source,
                })?;
                l_g = l_g.max(dx.abs()).max(dv.abs());
            }
        }
        let (c_beta, a_beta) = dominating_linear_fit(&beta_samples);
        let m_g = self.params.k * (self.h() * m_k).exp();
        let out = DerivedBounds {
            m_q,
            m_k,
            m_g,
            l_g,
            m_beta,
            c_beta,
            a_beta,
        };
        for (name, v) in [
            ("m_q", out.m_q),
            ("m_k", out.m_k),
            ("m_g", out.m_g),
            ("l_g", out.l_g),
            ("m_beta", out.m_beta),
            ("c_beta", out.c_beta),
            ("a_beta", out.a_beta),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name.to_string()));
            }
        }
        Ok(out)
    }

    /// Built-in demo family satisfying the assumptions:
    /// `g(x,v) = 0.5 + 1/(1+v^2)`, `q(v) = 0.5/(1+v^2)`, `gamma = 1`,
    /// `d = 0`, `D1 g = 0`, with x1=1, x2=2, eps=0.5, K=2, b=5 and mu=0.2
    /// (so h = 2.5 and x2-x1 = 1 lies inside (0, 1.25)).
    pub fn demo() -> ModelSpec {
        ModelSpec {
            q: Expr::parse("0.5/(1+v^2)", &["v"]).unwrap(),
            beta: BetaSpec::Gamma(Expr::parse("1", &["v"]).unwrap()),
            g: Expr::parse("0.5 + 1/(1+v^2)", &["x", "v"]).unwrap(),
            d1g: Expr::parse("0", &["x", "v"]).unwrap(),
            d: Expr::parse("0", &["x", "v"]).unwrap(),
            params: ModelParams {
                x1: 1.0,
                x2: 2.0,
                mu: 0.2,
                eps: 0.5,
                k: 2.0,
                b: 5.0,
            },
            v_lo: -50.0,
            v_hi: 50.0,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Least-squares fit of `y ~ c x + a` over `(x, y)` samples, then shifted so
/// the line dominates every sample, with `c` clamped non-negative.
fn dominating_linear_fit(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let sx: f64 = samples.iter().map(|(x, _)| x).sum();
    let sy: f64 = samples.iter().map(|(_, y)| y).sum();
    let sxx: f64 = samples.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = samples.iter().map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let mut c = if det.abs() > 1e-300 { (n * sxy - sx * sy) / det } else { 0.0 };
    if !c.is_finite() || c < 0.0 {
        c = 0.0;
    }
    let mut a = if det.abs() > 1e-300 { (sy - c * sx) / n } else { sy / n };
    if !a.is_finite() {
        a = 0.0;
    }
    let worst = samples
        .iter()
        .map(|(x, y)| y - (c * x + a))
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > 0.0 {
        a += worst;
    }
    if a < 0.0 {
        a = 0.0;
    }
    (c, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn grid() -> GridPlan {
        GridPlan::default()
    }

    #[test]
    fn demo_validates() {
        let spec = ModelSpec::demo();
        let rep = spec.validate(&grid());
        assert!(rep.all_pass(), "demo validation failed:\n{rep}");
    }

    #[test]
    fn demo_derived_constants() {
        let spec = ModelSpec::demo();
        let b = spec.derive_bounds(&grid()).unwrap();
        // q peaks at v = 0, which the symmetric grid contains
        assert_eq!(b.m_q, 0.5);
        assert_eq!(b.m_k, 0.0);
        assert_eq!(b.m_g, 2.0);
        // m_g recomputed independently
        let again = spec.params.k * (spec.h() * b.m_k).exp();
        assert!((b.m_g - again).abs() <= 1e-12);
        assert!(b.l_g > 0.6 && b.l_g < 0.7, "l_g = {}", b.l_g);
        // beta = 1/g(1, v) on [-50, 50]: sup just below 2
        assert!(b.m_beta > 1.9 && b.m_beta < 2.0);
        // dominating fit covers all samples
        let vs = linspace(spec.v_lo, spec.v_hi, 513);
        for v in vs {
            let beta = spec.eval_beta(v).unwrap().abs();
            assert!(beta <= b.c_beta * v.abs() + b.a_beta + 1e-12);
        }
    }

    #[test]
    fn boundary_maturity_window_fails() {
        let mut spec = ModelSpec::demo();
        // x2 - x1 = b*eps/K exactly: the open interval excludes it
        spec.params.x2 = spec.params.x1 + spec.params.b * spec.params.eps / spec.params.k;
        let rep = spec.validate(&grid());
        assert!(!rep.all_pass());
        assert!(rep
            .failures()
            .any(|item| item.check_id == "param_maturity_window"));
    }

    #[test]
    fn g_above_k_fails_everywhere() {
        let mut spec = ModelSpec::demo();
        spec.g = Expr::parse("3", &["x", "v"]).unwrap();
        let rep = spec.validate(&grid());
        let item = rep
            .items
            .iter()
            .find(|i| i.check_id == "g_upper_bound")
            .unwrap();
        assert!(!item.passed());
        assert_eq!(item.measured, 3.0);
    }

    #[test]
    fn k_below_eps_fails_and_names_the_inequality() {
        let mut spec = ModelSpec::demo();
        spec.params.k = 0.25; // below eps = 0.5
        let rep = spec.validate(&grid());
        let item = rep.failures().next().unwrap();
        assert_eq!(item.check_id, "param_k_ge_eps");
        assert!(item.context.contains("K="));
    }

    #[test]
    fn monotone_under_grid_refinement() {
        // a spec failing on a coarse grid fails on any refinement containing
        // the witnessing points
        let mut spec = ModelSpec::demo();
        spec.g = Expr::parse("3", &["x", "v"]).unwrap();
        let coarse = GridPlan {
            grid_nx: 5,
            grid_nv: 5,
            ..grid()
        };
        let fine = GridPlan {
            grid_nx: 9,
            grid_nv: 9,
            ..grid()
        };
        assert!(!spec.validate(&coarse).all_pass());
        assert!(!spec.validate(&fine).all_pass());
    }

    #[test]
    fn derive_beta_quotient() {
        // gamma = 1, g = 1  =>  beta = 1
        let mut spec = ModelSpec::demo();
        spec.beta = BetaSpec::Gamma(Expr::parse("1", &["v"]).unwrap());
        spec.g = Expr::parse("1", &["x", "v"]).unwrap();
        assert_eq!(spec.eval_beta(0.7).unwrap(), 1.0);

        // gamma = v^2, g = 2  =>  beta(2) = 2
        spec.beta = BetaSpec::Gamma(Expr::parse("v^2", &["v"]).unwrap());
        spec.g = Expr::parse("2", &["x", "v"]).unwrap();
        assert_eq!(spec.eval_beta(2.0).unwrap(), 2.0);

        // demo at v = 0: gamma = 1, g(x1, 0) = 1.5  =>  beta = 2/3
        let demo = ModelSpec::demo();
        let beta0 = demo.eval_beta(0.0).unwrap();
        assert!((beta0 - 2.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn derived_beta_matches_direct_expression() {
        use rand::{Rng, SeedableRng};
        let demo = ModelSpec::demo();
        let direct = Expr::parse("1/(0.5 + 1/(1+v^2))", &["v"]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: f64 = rng.gen_range(-10.0..10.0);
            let a = demo.eval_beta(v).unwrap();
            let b = direct.eval(&[v]).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn constant_q_supremum() {
        let mut spec = ModelSpec::demo();
        spec.q = Expr::parse("0.3", &["v"]).unwrap();
        let b = spec.derive_bounds(&grid()).unwrap();
        assert_eq!(b.m_q, 0.3);
    }

    #[test]
    fn gamma_division_by_zero_detected() {
        let mut spec = ModelSpec::demo();
        spec.g = Expr::parse("0", &["x", "v"]).unwrap();
        assert!(matches!(
            spec.eval_beta(1.0),
            Err(ModelError::Eval {
                source: EvalError::DivisionByZero,
                ..
            })
        ));
    }

    #[test]
    fn dominating_fit_clamps_and_dominates() {
        let samples = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)];
        let (c, a) = dominating_linear_fit(&samples);
        assert!(c >= 0.0);
        for (x, y) in samples {
            assert!(y <= c * x + a + 1e-12);
        }
    }
}
