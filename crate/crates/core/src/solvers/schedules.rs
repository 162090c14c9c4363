//! Power-law schedules for stepsizes `γ_n`, averaging weights `a_n`, Monte
//! Carlo batch sizes `m_n`, and the FISTA momentum sequence `t_n`.
//!
//! All schedules are indexed from `n = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `γ_n = min(cap, C_c · n^(−c))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub c_gamma: f64,
    pub exponent_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl StepSchedule {
    pub fn constant(gamma: f64) -> Self {
        StepSchedule {
            c_gamma: gamma,
            exponent_c: 0.0,
            cap: None,
        }
    }

    pub fn power(c_gamma: f64, exponent_c: f64) -> Self {
        StepSchedule {
            c_gamma,
            exponent_c,
            cap: None,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_gamma > 0.0) || !self.c_gamma.is_finite() {
            return Err(Error::invalid(format!("stepsize constant must be > 0, got {}", self.c_gamma)));
        }
        if !(self.exponent_c >= 0.0) {
            return Err(Error::invalid(format!("stepsize exponent must be >= 0, got {}", self.exponent_c)));
        }
        if let Some(cap) = self.cap {
            if !(cap > 0.0) {
                return Err(Error::invalid(format!("stepsize cap must be > 0, got {cap}")));
            }
        }
        Ok(())
    }

    pub fn gamma(&self, n: usize) -> f64 {
        let n = n.max(1) as f64;
        let raw = self.c_gamma * n.powf(-self.exponent_c);
        match self.cap {
            Some(cap) => raw.min(cap),
            None => raw,
        }
    }
}

/// `a_n = n^a`, with `a > −1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub exponent_a: f64,
}

impl WeightSchedule {
    pub fn new(exponent_a: f64) -> Result<Self> {
        if !(exponent_a > -1.0) || !exponent_a.is_finite() {
            return Err(Error::invalid(format!("weight exponent must be > -1, got {exponent_a}")));
        }
        Ok(WeightSchedule { exponent_a })
    }

    pub fn uniform() -> Self {
        WeightSchedule { exponent_a: 0.0 }
    }

    pub fn weight(&self, n: usize) -> f64 {
        (n.max(1) as f64).powf(self.exponent_a)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Floor,
    Ceil,
}

/// `m_n = max(1, m_0 + round(C_b · n^b))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub offset: u64,
    pub c_b: f64,
    pub exponent_b: f64,
    #[serde(default)]
    pub rounding: Rounding,
}

impl BatchSchedule {
    pub fn power(c_b: f64, exponent_b: f64) -> Self {
        BatchSchedule {
            offset: 0,
            c_b,
            exponent_b,
            rounding: Rounding::Floor,
        }
    }

    pub fn constant(m: u64) -> Self {
        BatchSchedule {
            offset: m,
            c_b: 0.0,
            exponent_b: 0.0,
            rounding: Rounding::Floor,
        }
    }

    pub fn with_offset(mut self, offset: u64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_b >= 0.0) || !(self.exponent_b >= 0.0) {
            return Err(Error::invalid(format!(
                "batch schedule needs C_b >= 0 and b >= 0, got ({}, {})",
                self.c_b, self.exponent_b
            )));
        }
        Ok(())
    }

    pub fn size(&self, n: usize) -> usize {
        let raw = self.c_b * (n.max(1) as f64).powf(self.exponent_b);
        let rounded = match self.rounding {
            Rounding::Floor => raw.floor(),
            Rounding::Ceil => raw.ceil(),
        };
        (self.offset as f64 + rounded).max(1.0) as usize
    }
}

/// Momentum sequence for accelerated runs; every kind starts at `t_0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TSequence {
    /// `t_{n+1} = (1 + √(1 + 4t_n²)) / 2`
    Recursive,
    /// `t_n = n/2 + 1`
    LinearHalf,
    /// `t_n = ((n + n0)/n0)^β`, `β ∈ (0, 1)`
    Power { beta: f64, n0: f64 },
    /// `t_n ≡ 1`: no extrapolation.
    Unit,
}

/// `t_0, …, t_{n_iters}`.
pub fn make_t_sequence(kind: TSequence, n_iters: usize) -> Result<Vec<f64>> {
    if n_iters == 0 {
        return Err(Error::invalid("t sequence needs n_iters >= 1"));
    }
    let len = n_iters + 1;
    let ts = match kind {
        TSequence::Recursive => {
            let mut ts = Vec::with_capacity(len);
            let mut t = 1.0_f64;
            for _ in 0..len {
                ts.push(t);
                t = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            }
            ts
        }
        TSequence::LinearHalf => (0..len).map(|n| n as f64 / 2.0 + 1.0).collect(),
        TSequence::Power { beta, n0 } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid(format!("power t sequence needs beta in (0, 1), got {beta}")));
            }
            if !(n0 > 0.0) {
                return Err(Error::invalid(format!("power t sequence needs n0 > 0, got {n0}")));
            }
            (0..len).map(|n| ((n as f64 + n0) / n0).powf(beta)).collect()
        }
        TSequence::Unit => vec![1.0; len],
    };
    Ok(ts)
}

/// Outcome of the `(γ_n, t_n)` compatibility check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TCheck {
    Pass,
    /// First index `n` where `γ_{n+1} t_n (t_n − 1) ≤ γ_n t_{n−1}²` fails
    /// (`0` flags `t_0 ≠ 1` or an invalid sequence).
    Violation { index: usize },
}

impl TCheck {
    pub fn passed(&self) -> bool {
        matches!(self, TCheck::Pass)
    }
}

const T_GAMMA_TOL: f64 = 1e-12;

/// Check `t_0 = 1` and `γ_{n+1} t_n(t_n − 1) ≤ γ_n t_{n−1}²` (relative
/// tolerance 1e−12) for
/// `n = 1..t.len()−1`, with `gamma` indexed from 1.
pub fn check_t_gamma(gamma: impl Fn(usize) -> f64, t: &[f64]) -> TCheck {
    if t.first().is_none_or(|&t0| t0 != 1.0) {
        return TCheck::Violation { index: 0 };
    }
    for n in 1..t.len() {
        let lhs = gamma(n + 1) * t[n] * (t[n] - 1.0);
        let rhs = gamma(n) * t[n - 1] * t[n - 1];
        // The recursive kind meets the condition with equality, so the
        // tolerance has to scale with t_n² to absorb rounding.
        if lhs > rhs + T_GAMMA_TOL * rhs.max(1.0) {
            return TCheck::Violation { index: n };
        }
    }
    TCheck::Pass
}

pub fn validate_t_gamma(steps: &StepSchedule, tseq: TSequence, n_iters: usize) -> TCheck {
    match make_t_sequence(tseq, n_iters.max(1)) {
        Ok(t) => check_t_gamma(|n| steps.gamma(n), &t),
        Err(_) => TCheck::Violation { index: 0 },
    }
}
