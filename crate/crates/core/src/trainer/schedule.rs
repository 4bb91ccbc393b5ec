use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Exponential,
    InverseSigmoid,
    Constant,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "exp" | "exponential" => Ok(Self::Exponential),
            "invsig" | "inverse-sigmoid" => Ok(Self::InverseSigmoid),
            "const" | "constant" => Ok(Self::Constant),
            other => Err(Error::Schedule(format!("unknown schedule kind `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Exponential => "exp",
            Self::InverseSigmoid => "invsig",
            Self::Constant => "const",
        })
    }
}

/// Teacher-forcing probability as a closed-form function of the global
/// optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySchedule {
    pub kind: ScheduleKind,
    pub k: f64,
    /// Slope of the linear schedule; ignored by the other kinds.
    pub c: f64,
    pub eps_min: f64,
}

impl Default for DecaySchedule {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::InverseSigmoid,
            k: 70.0,
            c: 0.0,
            eps_min: 0.05,
        }
    }
}

impl DecaySchedule {
    pub fn new(kind: ScheduleKind, k: f64, c: f64, eps_min: f64) -> Result<Self> {
        let s = Self { kind, k, c, eps_min };
        s.validate()?;
        Ok(s)
    }

    pub fn linear(k: f64, c: f64, eps_min: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, k, c, eps_min)
    }

    pub fn exponential(k: f64, eps_min: f64) -> Result<Self> {
        Self::new(ScheduleKind::Exponential, k, 0.0, eps_min)
    }

    pub fn inverse_sigmoid(k: f64, eps_min: f64) -> Result<Self> {
        Self::new(ScheduleKind::InverseSigmoid, k, 0.0, eps_min)
    }

    pub fn constant(k: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, k, 0.0, 0.0)
    }

    /// Rejects parameters that would make ε increase or be undefined.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps_min) {
            return Err(Error::Schedule(format!("eps_min {} outside [0, 1]", self.eps_min)));
        }
        if !self.k.is_finite() || !self.c.is_finite() {
            return Err(Error::Schedule("schedule parameters must be finite".into()));
        }
        match self.kind {
            ScheduleKind::Linear if self.c < 0.0 => Err(Error::Schedule(format!(
                "linear slope c={} would increase epsilon",
                self.c
            ))),
            ScheduleKind::Exponential if self.k > 1.0 => Err(Error::Schedule(format!(
                "exponential base k={} would increase epsilon",
                self.k
            ))),
            ScheduleKind::Exponential if self.k < 0.0 => Err(Error::Schedule(format!(
                "exponential base k={} is negative",
                self.k
            ))),
            ScheduleKind::InverseSigmoid if self.k <= 0.0 => Err(Error::Schedule(format!(
                "inverse-sigmoid k={} must be positive",
                self.k
            ))),
            _ => Ok(()),
        }
    }
}

/// ε(i) clamped to `[eps_min, 1]`.
pub fn epsilon_at(schedule: &DecaySchedule, step: u64) -> f64 {
    let i = step as f64;
    let k = schedule.k;
    let raw = match schedule.kind {
        ScheduleKind::Linear => k - schedule.c * i,
        ScheduleKind::Exponential => k.powf(i),
        ScheduleKind::InverseSigmoid => k / (k + (i / k).exp()),
        ScheduleKind::Constant => k,
    };
    raw.max(schedule.eps_min).min(1.0)
}
