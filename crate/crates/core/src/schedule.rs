//! Step-size schedules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, BimaxError, Result};

/// A positive step-size rule indexed by iteration `t >= 0`.
///
/// * `Constant { c }`: `c`.
/// * `InverseT { c, l }`: `min(1, c / ((t + 1) * l))`.
/// * `Exponential { init, rate }`: `init * rate^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub enum StepSchedule {
    Constant { c: f64 },
    InverseT { c: f64, l: f64 },
    Exponential { init: f64, rate: f64 },
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl StepSchedule {
    pub fn constant(c: f64) -> Result<Self> {
        positive("c", c)?;
        Ok(Self::Constant { c })
    }

    pub fn inverse_t(c: f64, l: f64) -> Result<Self> {
        positive("c", c)?;
        positive("L", l)?;
        Ok(Self::InverseT { c, l })
    }

    pub fn exponential(init: f64, rate: f64) -> Result<Self> {
        positive("init", init)?;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(invalid("rate", format!("must lie in (0, 1], got {rate}")));
        }
        Ok(Self::Exponential { init, rate })
    }

    /// Step at iteration `t`.
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::InverseT { c, l } => (c / ((t as f64 + 1.0) * l)).min(1.0),
            // clamped so that deep underflow still yields a positive step
            Self::Exponential { init, rate } => {
                (init * rate.powi(t.min(i32::MAX as usize) as i32)).max(f64::MIN_POSITIVE)
            }
        }
    }

    /// Largest step the schedule ever takes.
    pub fn max_step(&self) -> f64 {
        self.at(0)
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Constant { c } => write!(f, "constant(c={c})"),
            Self::InverseT { c, l } => write!(f, "inverse_t(c={c};L={l})"),
            Self::Exponential { init, rate } => write!(f, "exponential(init={init};rate={rate})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawSchedule {
    Constant {
        c: f64,
    },
    InverseT {
        c: f64,
        #[serde(rename = "L")]
        l: f64,
    },
    Exponential {
        init: f64,
        rate: f64,
    },
}

impl TryFrom<RawSchedule> for StepSchedule {
    type Error = BimaxError;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        match raw {
            RawSchedule::Constant { c } => Self::constant(c),
            RawSchedule::InverseT { c, l } => Self::inverse_t(c, l),
            RawSchedule::Exponential { init, rate } => Self::exponential(init, rate),
        }
    }
}

impl From<StepSchedule> for RawSchedule {
    fn from(s: StepSchedule) -> Self {
        match s {
            StepSchedule::Constant { c } => Self::Constant { c },
            StepSchedule::InverseT { c, l } => Self::InverseT { c, l },
            StepSchedule::Exponential { init, rate } => Self::Exponential { init, rate },
        }
    }
}
