//! Stability-to-gap conversion and leading-order rate expressions.
//!
//! Rates are evaluated with every hidden constant set to 1, so they are
//! shapes to overlay on measurements, not absolute bounds. Each value is
//! also returned in log space because the two-timescale rates overflow
//! `f64` for moderate `T`.

use serde::{Deserialize, Serialize};

use super::StabilityEstimate;
use crate::constants::ConstantsRegistry;
use crate::error::{invalid, BimaxError, Result};
use crate::solvers::SolverSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem1Variant {
    /// `l_f beta`.
    I,
    /// `(L_f / gamma) R + (L_f + gamma) beta^2 / 2`.
    II,
    /// `(c^2 / (2 gamma)) R^(2 alpha / (1 + alpha)) + gamma beta^2 / 2`.
    III,
}

/// Converts a stability estimate to a generalization bound. `beta_l1` is
/// used by variant I and `beta_l2_sq` by II and III.
pub fn theorem1_convert(
    variant: Theorem1Variant,
    beta: &StabilityEstimate,
    constants: &ConstantsRegistry,
    empirical_risk: f64,
    gamma: f64,
) -> Result<f64> {
    theorem1_value(variant, beta.beta_l1, beta.beta_l2_sq, constants, empirical_risk, gamma)
}

/// [`theorem1_convert`] on raw numbers.
pub fn theorem1_value(
    variant: Theorem1Variant,
    beta_l1: f64,
    beta_l2_sq: f64,
    constants: &ConstantsRegistry,
    empirical_risk: f64,
    gamma: f64,
) -> Result<f64> {
    match variant {
        Theorem1Variant::I => Ok(constants.l_f()? * beta_l1),
        Theorem1Variant::II | Theorem1Variant::III => {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(invalid("gamma", format!("must be finite and > 0, got {gamma}")));
            }
            if !(empirical_risk >= 0.0) {
                return Err(invalid("empirical_risk", "must be >= 0 for this variant"));
            }
            if variant == Theorem1Variant::II {
                let lf = constants.big_l_f()?;
                return Ok(lf / gamma * empirical_risk + (lf + gamma) * beta_l2_sq / 2.0);
            }
            let h = constants.hoelder()?;
            let c = h.c_alpha_tau.ok_or(BimaxError::MissingConstant("c_alpha_tau"))?;
            let expo = 2.0 * h.alpha / (1.0 + h.alpha);
            Ok(c * c / (2.0 * gamma) * empirical_risk.powf(expo) + gamma * beta_l2_sq / 2.0)
        }
    }
}

/// A rate expression and its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateQuery {
    /// SSGDA generalization: `T/m1`, `T ln T / m1` or `T^(7 c1) / m1` as
    /// `c1` is below, equal to or above `1/7`.
    SsgdaGen { t: f64, m1: f64, c1: f64 },
    /// SSGDA optimization error with a fixed step: `V/(eta' T) + eta' l^2`.
    SsgdaOpt { t: f64, eta_prime: f64 },
    /// SSGDA excess risk with `T ~ sqrt(m1)` and a decaying step: `1/sqrt(m1)`.
    SsgdaExcess { m1: f64 },
    /// TSGDA-1 generalization: `sqrt(3)^T T^(c2+1) K^((c4+1)T+1) / m1`,
    /// `c4 = max(c2, c3)`.
    Tsgda1Gen { t: f64, k: f64, m1: f64, c2: f64, c3: f64 },
    /// TSGDA-2 generalization:
    /// `sqrt(3)^T T^(c5+1) max(K, Q)^((c8+1)T+1) / m1`, `c8 = max(c5, c6, c7)`.
    Tsgda2Gen { t: f64, k: f64, q: f64, m1: f64, c5: f64, c6: f64, c7: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    /// The expression in `f64`; may be `inf` where `ln_value` is finite.
    pub value: f64,
    pub ln_value: f64,
    pub branch: &'static str,
}

fn at_least_one(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 1, got {v}")))
    }
}

fn open_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0, 1), got {v}")))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

/// Evaluates a rate expression with hidden constant 1.
pub fn rate_bound(query: &RateQuery, constants: &ConstantsRegistry) -> Result<RateValue> {
    match *query {
        RateQuery::SsgdaGen { t, m1, c1 } => {
            at_least_one("T", t)?;
            at_least_one("m1", m1)?;
            positive("c1", c1)?;
            let seventh = 1.0 / 7.0;
            Ok(if c1 < seventh {
                RateValue {
                    value: t / m1,
                    ln_value: t.ln() - m1.ln(),
                    branch: "c1<1/7",
                }
            } else if c1 == seventh {
                RateValue {
                    value: t * t.ln() / m1,
                    ln_value: t.ln() + t.ln().ln() - m1.ln(),
                    branch: "c1=1/7",
                }
            } else {
                let e = 7.0 * c1;
                RateValue {
                    value: t.powf(e) / m1,
                    ln_value: e * t.ln() - m1.ln(),
                    branch: "c1>1/7",
                }
            })
        }
        RateQuery::SsgdaOpt { t, eta_prime } => {
            at_least_one("T", t)?;
            positive("eta_prime", eta_prime)?;
            let v = constants.v()?;
            let l = constants.l()?;
            let value = v / (eta_prime * t) + eta_prime * l * l;
            Ok(RateValue {
                value,
                ln_value: value.ln(),
                branch: "fixed_step",
            })
        }
        RateQuery::SsgdaExcess { m1 } => {
            at_least_one("m1", m1)?;
            Ok(RateValue {
                value: 1.0 / m1.sqrt(),
                ln_value: -0.5 * m1.ln(),
                branch: "T~sqrt(m1)",
            })
        }
        RateQuery::Tsgda1Gen { t, k, m1, c2, c3 } => {
            at_least_one("T", t)?;
            at_least_one("K", k)?;
            at_least_one("m1", m1)?;
            open_unit("c2", c2)?;
            open_unit("c3", c3)?;
            let c4 = c2.max(c3);
            let ln = t * 3f64.sqrt().ln() + (c2 + 1.0) * t.ln() + ((c4 + 1.0) * t + 1.0) * k.ln() - m1.ln();
            let value = 3f64.sqrt().powf(t) * t.powf(c2 + 1.0) * k.powf((c4 + 1.0) * t + 1.0) / m1;
            Ok(RateValue {
                value,
                ln_value: ln,
                branch: "tsgda1",
            })
        }
        RateQuery::Tsgda2Gen { t, k, q, m1, c5, c6, c7 } => {
            at_least_one("T", t)?;
            at_least_one("K", k)?;
            at_least_one("Q", q)?;
            at_least_one("m1", m1)?;
            open_unit("c5", c5)?;
            open_unit("c6", c6)?;
            open_unit("c7", c7)?;
            let c8 = c5.max(c6).max(c7);
            let ln = t * 3f64.sqrt().ln() + (c5 + 1.0) * t.ln() + ((c8 + 1.0) * t + 1.0) * k.max(q).ln() - m1.ln();
            let value = 3f64.sqrt().powf(t) * t.powf(c5 + 1.0) * k.max(q).powf((c8 + 1.0) * t + 1.0) / m1;
            Ok(RateValue {
                value,
                ln_value: ln,
                branch: "tsgda2",
            })
        }
    }
}

/// `eta' = max(eta(0), gamma1(0), gamma2(0))`, the largest step a run takes.
pub fn eta_prime(spec: &SolverSpec) -> f64 {
    spec.eta.max_step().max(spec.gamma1.max_step()).max(spec.gamma2.max_step())
}
