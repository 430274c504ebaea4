//! Executable checks: structured pass/fail reports with measured margins for
//! the bounds and Lipschitz estimates the model theory provides.
//!
//! Every check reports a [`CheckItem`] with a measured value, the bound it is
//! compared against, and the margin (distance into the safe side). Pass/fail
//! uses the per-check slack from [`slack`]; no check hard-codes its own
//! tolerance.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::history::History;

// ---------------------------------------------------------------------------
// Slack table
// ---------------------------------------------------------------------------

/// All check identifiers known to the suite.
pub const ALL_CHECK_IDS: &[&str] = &[
    "param_x1_lt_x2",
    "param_eps_positive",
    "param_k_ge_eps",
    "param_b_positive",
    "param_mu_nonneg",
    "param_maturity_window",
    "g_lower_bound",
    "g_upper_bound",
    "d1g_consistency",
    "lipschitz_finite_q",
    "lipschitz_finite_beta",
    "lipschitz_finite_d",
    "sobolev_embedding",
    "eval_map_lipschitz",
    "segment_map_lipschitz",
    "quadrature_exactness",
    "tau_range",
    "y_envelope",
    "tau_lipschitz",
    "y_growth_bound",
    "y_history_lipschitz",
    "calg_domination",
    "calg_positive",
    "calg_lipschitz_stability",
    "f_local_bound",
    "apriori_w",
    "apriori_v",
    "deriv_bound",
    "voc_w",
    "voc_v",
    "oracle_equivalence",
    "picard_contraction",
    "convergence_order_compatible",
    "convergence_order_incompatible",
];

/// Numeric slack admitted for a check. Checks whose tolerance depends on run
/// parameters (oracle equivalence, d1g consistency) carry it in their bound
/// and take zero slack here.
pub fn slack(check_id: &str) -> f64 {
    match check_id {
        // exact parameter predicates; the maturity window is an open interval
        // and is checked strictly
        "param_x1_lt_x2" | "param_eps_positive" | "param_k_ge_eps" | "param_b_positive"
        | "param_mu_nonneg" | "param_maturity_window" => 0.0,
        "g_lower_bound" | "g_upper_bound" => 0.0,
        "d1g_consistency" => 0.0,
        "lipschitz_finite_q" | "lipschitz_finite_beta" | "lipschitz_finite_d" => 0.0,
        "sobolev_embedding" => 1e-9,
        "eval_map_lipschitz" => 1e-9,
        "segment_map_lipschitz" => 1e-9,
        "quadrature_exactness" => 1e-12,
        "tau_range" => 1e-8,
        "y_envelope" => 1e-8,
        "tau_lipschitz" => 1e-6,
        "y_growth_bound" => 1e-9,
        "y_history_lipschitz" => 1e-6,
        "calg_domination" => 1e-9,
        "calg_positive" => 0.0,
        "calg_lipschitz_stability" => 0.0,
        "f_local_bound" => 1e-9,
        "apriori_w" => 1e-6,
        "apriori_v" => 1e-6,
        "deriv_bound" => 1e-6,
        "voc_w" => 1e-6,
        "voc_v" => 1e-6,
        "oracle_equivalence" => 0.0,
        "picard_contraction" => 0.0,
        "convergence_order_compatible" => 0.0,
        "convergence_order_incompatible" => 0.0,
        other => panic!("no slack entry for check id '{other}'"),
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckItem {
    pub check_id: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub bound: f64,
    /// Distance into the safe side: `bound - measured` for upper-bound
    /// checks, `measured - bound` for lower-bound checks.
    pub margin: f64,
    pub context: String,
}

fn sanitize(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else if x.is_nan() {
        f64::MAX
    } else {
        f64::MAX.copysign(x)
    }
}

impl CheckItem {
    fn build(check_id: &str, measured: f64, bound: f64, margin: f64, strict: bool, context: String) -> CheckItem {
        let ok = if measured.is_finite() && bound.is_finite() {
            if strict {
                margin > -slack(check_id)
            } else {
                margin >= -slack(check_id)
            }
        } else {
            false
        };
        CheckItem {
            check_id: check_id.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            measured: sanitize(measured),
            bound: sanitize(bound),
            margin: sanitize(margin),
            context,
        }
    }

    /// `measured <= bound` up to slack.
    pub fn upper(check_id: &str, measured: f64, bound: f64, context: impl Into<String>) -> CheckItem {
        CheckItem::build(check_id, measured, bound, bound - measured, false, context.into())
    }

    /// `measured < bound`, strictly.
    pub fn upper_strict(check_id: &str, measured: f64, bound: f64, context: impl Into<String>) -> CheckItem {
        CheckItem::build(check_id, measured, bound, bound - measured, true, context.into())
    }

    /// `measured >= bound` up to slack.
    pub fn lower(check_id: &str, measured: f64, bound: f64, context: impl Into<String>) -> CheckItem {
        CheckItem::build(check_id, measured, bound, measured - bound, false, context.into())
    }

    pub fn skip(check_id: &str, context: impl Into<String>) -> CheckItem {
        CheckItem {
            check_id: check_id.to_string(),
            status: CheckStatus::Skip,
            measured: 0.0,
            bound: 0.0,
            margin: 0.0,
            context: context.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

/// Structured pass/fail results with measured margins.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn new() -> CheckReport {
        CheckReport::default()
    }

    pub fn push(&mut self, item: CheckItem) {
        self.items.push(item);
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.items.extend(other.items);
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(CheckItem::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|i| !i.passed())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.items).expect("report serialization")
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<34} {:>6}  {:>13}  {:>13}  {:>13}  context",
            "check", "status", "measured", "bound", "margin"
        )?;
        for it in &self.items {
            let status = match it.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "skip",
            };
            writeln!(
                f,
                "{:<34} {:>6}  {:>13.6e}  {:>13.6e}  {:>13.6e}  {}",
                it.check_id, status, it.measured, it.bound, it.margin, it.context
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Random history generation
// ---------------------------------------------------------------------------

/// Draw a random piecewise cubic on `[a, b]`: node values and derivatives
/// uniform in `[-amplitude, amplitude]`. When `alpha` is given the whole
/// history is rescaled so that its exact derivative sup does not exceed it.
pub fn random_history<R: Rng>(
    rng: &mut R,
    a: f64,
    b: f64,
    n_nodes: usize,
    amplitude: f64,
    alpha: Option<f64>,
) -> History {
    let n = n_nodes.max(2);
    let dt = (b - a) / (n - 1) as f64;
    let times: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * dt })
        .collect();
    let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0) * amplitude).collect();
    let derivs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0) * amplitude).collect();
    let hist = History::from_nodes(times, values, derivs).expect("random nodes are valid");
    match alpha {
        Some(alpha) => {
            let lip = hist.lip_bound();
            if lip > alpha {
                hist.scale(alpha / lip)
            } else {
                hist
            }
        }
        None => hist,
    }
}
