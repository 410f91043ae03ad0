//! Lipschitz and smoothness moduli attached to a problem.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, BimaxError, Result};

/// Hölder continuity of the upper-level gradient: `|grad f(a) - grad f(b)| <= tau |a - b|^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hoelder {
    pub alpha: f64,
    pub tau: f64,
    /// Constant `c_{alpha,tau}` used by the Hölder stability-to-gap bound.
    /// It has no closed form here and must be supplied by the caller.
    pub c_alpha_tau: Option<f64>,
}

/// Registered moduli. Every stored value is strictly positive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsRegistry {
    /// Lipschitz modulus of `f` over the joint `(x, y, z)`.
    pub lip_f: Option<f64>,
    /// Lipschitz modulus of `g`.
    pub lip_g: Option<f64>,
    /// Smoothness modulus of `f`.
    pub smooth_f: Option<f64>,
    /// Smoothness modulus of `g`.
    pub smooth_g: Option<f64>,
    pub hoelder: Option<Hoelder>,
    /// Bound on `E|x0 - x_hat|`.
    pub v: Option<f64>,
}

fn check_pos(name: &'static str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => {
            Err(invalid(name, format!("must be finite and > 0, got {x}")))
        }
        _ => Ok(()),
    }
}

impl ConstantsRegistry {
    /// Registry with all four moduli present.
    pub fn new(lip_f: f64, lip_g: f64, smooth_f: f64, smooth_g: f64) -> Result<Self> {
        let r = Self {
            lip_f: Some(lip_f),
            lip_g: Some(lip_g),
            smooth_f: Some(smooth_f),
            smooth_g: Some(smooth_g),
            hoelder: None,
            v: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_hoelder(mut self, h: Hoelder) -> Result<Self> {
        self.hoelder = Some(h);
        self.validate()?;
        Ok(self)
    }

    pub fn with_v(mut self, v: f64) -> Result<Self> {
        self.v = Some(v);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_pos("l_f", self.lip_f)?;
        check_pos("l_g", self.lip_g)?;
        check_pos("L_f", self.smooth_f)?;
        check_pos("L_g", self.smooth_g)?;
        check_pos("V", self.v)?;
        if let Some(h) = self.hoelder {
            if !(0.0..=1.0).contains(&h.alpha) {
                return Err(invalid("alpha", format!("must lie in [0, 1], got {}", h.alpha)));
            }
            check_pos("tau", Some(h.tau))?;
            check_pos("c_alpha_tau", h.c_alpha_tau)?;
        }
        Ok(())
    }

    pub fn l_f(&self) -> Result<f64> {
        self.lip_f.ok_or(BimaxError::MissingConstant("l_f"))
    }

    pub fn l_g(&self) -> Result<f64> {
        self.lip_g.ok_or(BimaxError::MissingConstant("l_g"))
    }

    pub fn big_l_f(&self) -> Result<f64> {
        self.smooth_f.ok_or(BimaxError::MissingConstant("L_f"))
    }

    pub fn big_l_g(&self) -> Result<f64> {
        self.smooth_g.ok_or(BimaxError::MissingConstant("L_g"))
    }

    /// `l = max(l_f, l_g)`.
    pub fn l(&self) -> Result<f64> {
        Ok(self.l_f()?.max(self.l_g()?))
    }

    /// `L = max(L_f, L_g)`.
    pub fn big_l(&self) -> Result<f64> {
        Ok(self.big_l_f()?.max(self.big_l_g()?))
    }

    pub fn v(&self) -> Result<f64> {
        self.v.ok_or(BimaxError::MissingConstant("V"))
    }

    pub fn hoelder(&self) -> Result<Hoelder> {
        self.hoelder.ok_or(BimaxError::MissingConstant("alpha"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_maxima() {
        let c = ConstantsRegistry::new(2.0, 3.0, 5.0, 1.0).unwrap();
        assert_eq!(c.l().unwrap(), 3.0);
        assert_eq!(c.big_l().unwrap(), 5.0);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(ConstantsRegistry::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ConstantsRegistry::new(1.0, 1.0, -1.0, 1.0).is_err());
        let c = ConstantsRegistry::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(c.clone().with_v(0.0).is_err());
        assert!(c
            .with_hoelder(Hoelder {
                alpha: 1.5,
                tau: 1.0,
                c_alpha_tau: None
            })
            .is_err());
    }

    #[test]
    fn missing_symbol_is_named() {
        let c = ConstantsRegistry::default();
        assert_eq!(c.l_f(), Err(BimaxError::MissingConstant("l_f")));
        assert_eq!(c.v(), Err(BimaxError::MissingConstant("V")));
    }
}
