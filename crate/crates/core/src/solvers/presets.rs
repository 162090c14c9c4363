//! The `(a, b, c)` rows of the rate tables for averaged perturbed proximal
//! gradient and perturbed FISTA, with `γ_n ∝ n^{−c}`, `m_n ∝ n^b` and
//! `a_n = n^a`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BatchSchedule, StepSchedule, TSequence, WeightSchedule};

/// `constant + slope · c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub constant: f64,
    pub slope: f64,
}

impl Affine {
    pub const fn fixed(constant: f64) -> Self {
        Affine { constant, slope: 0.0 }
    }

    pub const fn new(constant: f64, slope: f64) -> Self {
        Affine { constant, slope }
    }

    pub fn at(&self, c: f64) -> f64 {
        self.constant + self.slope * c
    }
}

/// An interval whose endpoints may depend on `c`; `None` means unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: Option<Affine>,
    pub lower_closed: bool,
    pub upper: Option<Affine>,
    pub upper_closed: bool,
    /// Intersect with `[0, ∞)`.
    pub nonnegative: bool,
}

impl Bound {
    const fn exactly(value: Affine) -> Self {
        Bound {
            lower: Some(value),
            lower_closed: true,
            upper: Some(value),
            upper_closed: true,
            nonnegative: false,
        }
    }

    const fn above(lower: Affine) -> Self {
        Bound {
            lower: Some(lower),
            lower_closed: false,
            upper: None,
            upper_closed: false,
            nonnegative: false,
        }
    }

    /// `[lo, hi)` or `[lo, hi]` with constant endpoints.
    const fn range(lo: f64, hi: f64, hi_closed: bool) -> Self {
        Bound {
            lower: Some(Affine::fixed(lo)),
            lower_closed: true,
            upper: Some(Affine::fixed(hi)),
            upper_closed: hi_closed,
            nonnegative: false,
        }
    }

    const fn and_nonnegative(mut self) -> Self {
        self.nonnegative = true;
        self
    }

    pub fn is_point(&self) -> bool {
        matches!((self.lower, self.upper), (Some(l), Some(u)) if l == u)
    }

    pub fn contains(&self, x: f64, c: f64) -> bool {
        const EPS: f64 = 1e-12;
        if self.nonnegative && x < -EPS {
            return false;
        }
        let lower_ok = match self.lower {
            None => true,
            Some(l) if self.lower_closed => x >= l.at(c) - EPS,
            Some(l) => x > l.at(c),
        };
        let upper_ok = match self.upper {
            None => true,
            Some(u) if self.upper_closed => x <= u.at(c) + EPS,
            Some(u) => x < u.at(c),
        };
        lower_ok && upper_ok
    }

    /// A member of the interval at `c`: the point itself, or `lower + margin`
    /// for intervals open from below.
    pub fn representative(&self, c: f64, margin: f64) -> f64 {
        if self.is_point() {
            return self.lower.map(|l| l.at(c)).unwrap_or(0.0);
        }
        let mut lo = self.lower.map(|l| l.at(c)).unwrap_or(0.0);
        if self.nonnegative {
            lo = lo.max(0.0);
            if self.contains(lo, c) {
                return lo;
            }
        }
        let mut x = if self.lower_closed { lo } else { lo + margin };
        if let Some(u) = self.upper {
            let hi = u.at(c);
            if !self.contains(x, c) {
                x = 0.5 * (lo + hi);
            }
        }
        x
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn show(a: Affine) -> String {
            match (a.constant, a.slope) {
                (k, 0.0) => format!("{k}"),
                (0.0, -1.0) => "-c".into(),
                (k, -1.0) => format!("{k}-c"),
                (k, s) if s < 0.0 => format!("{k}-{}c", -s),
                (k, s) => format!("{k}+{s}c"),
            }
        }
        if self.is_point() {
            return write!(f, "{}", show(self.lower.unwrap()));
        }
        let lo = self.lower.map(show).unwrap_or_else(|| "-inf".into());
        let hi = self.upper.map(show).unwrap_or_else(|| "inf".into());
        let open = if self.lower_closed { '[' } else { '(' };
        let close = if self.upper_closed && self.upper.is_some() { ']' } else { ')' };
        write!(f, "{open}{lo}, {hi}{close}")?;
        if self.nonnegative {
            write!(f, " ∩ [0, inf)")?;
        }
        Ok(())
    }
}

/// Monte Carlo cost to reach precision `δ`, as `δ^{−exponent}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// `n` iterations draw `O(n^{1+b})` samples, so the cost exponent is
    /// `(1 + b)/r` for a rate `n^{−r}`.
    Samples,
    /// Exact gradients: no sampling.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Row {
    NoBias1,
    NoBias2,
    NoBias3,
    Bias1,
    Bias2,
    Bias3,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table2Row {
    NoBias1,
    NoBias2,
    Bias1,
    Bias2,
    Bias3,
    Exact,
}

/// A row of one of the two tables: `Table1` for averaged perturbed proximal
/// gradient, `Table2` for perturbed FISTA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "table", content = "row")]
pub enum PresetId {
    Table1(Table1Row),
    Table2(Table2Row),
}

impl PresetId {
    pub fn all() -> Vec<PresetId> {
        use Table1Row as A;
        use Table2Row as B;
        let mut ids: Vec<PresetId> = [A::NoBias1, A::NoBias2, A::NoBias3, A::Bias1, A::Bias2, A::Bias3, A::Exact]
            .into_iter()
            .map(PresetId::Table1)
            .collect();
        ids.extend([B::NoBias1, B::NoBias2, B::Bias1, B::Bias2, B::Bias3, B::Exact].map(PresetId::Table2));
        ids
    }

    pub fn name(&self) -> &'static str {
        use Table1Row as A;
        use Table2Row as B;
        match self {
            PresetId::Table1(A::NoBias1) => "table1.r1",
            PresetId::Table1(A::NoBias2) => "table1.r2",
            PresetId::Table1(A::NoBias3) => "table1.r3",
            PresetId::Table1(A::Bias1) => "table1.b1",
            PresetId::Table1(A::Bias2) => "table1.b2",
            PresetId::Table1(A::Bias3) => "table1.b3",
            PresetId::Table1(A::Exact) => "table1.exact",
            PresetId::Table2(B::NoBias1) => "table2.r1",
            PresetId::Table2(B::NoBias2) => "table2.r2",
            PresetId::Table2(B::Bias1) => "table2.b1",
            PresetId::Table2(B::Bias2) => "table2.b2",
            PresetId::Table2(B::Bias3) => "table2.b3",
            PresetId::Table2(B::Exact) => "table2.exact",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetId::all()
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown table preset `{s}`")))
    }
}

/// Constraints of one table row. `a` is absent for FISTA rows; `b` is absent
/// for the exact-gradient rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetRow {
    pub id: PresetId,
    pub biased: bool,
    pub c: Bound,
    pub a: Option<Bound>,
    pub b: Option<Bound>,
    /// `r` in the rate `1/n^r`.
    pub rate: Affine,
    pub cost: CostModel,
}

/// A concrete schedule triple satisfying a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetSchedules {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: f64,
    pub steps: StepSchedule,
    pub weights: Option<WeightSchedule>,
    pub batches: BatchSchedule,
    pub tseq: Option<TSequence>,
}

impl PresetRow {
    pub fn rate_exponent(&self, c: f64) -> f64 {
        self.rate.at(c)
    }

    /// Exponent `e` of the Monte Carlo cost `δ^{−e}`.
    pub fn cost_exponent(&self, b: f64, c: f64) -> Option<f64> {
        match self.cost {
            CostModel::Samples => Some((1.0 + b) / self.rate_exponent(c)),
            CostModel::None => None,
        }
    }

    /// Whether `(a, b, c)` satisfies the row; `a` is ignored for FISTA rows
    /// and `b` for exact rows.
    pub fn admits(&self, a: Option<f64>, b: Option<f64>, c: f64) -> bool {
        if !self.c.contains(c, c) {
            return false;
        }
        if let Some(ab) = &self.a {
            match a {
                Some(a) if ab.contains(a, c) => {}
                _ => return false,
            }
        }
        if let Some(bb) = &self.b {
            match b {
                Some(b) if bb.contains(b, c) => {}
                _ => return false,
            }
        }
        true
    }

    /// Representative schedules: the smallest admissible `c`, and `a`, `b`
    /// at the row's value or just inside an open lower end (`a` by 1, `b` by
    /// 0.1). `C_c = c_gamma`, `C_b = c_b`.
    pub fn representative(&self, c_gamma: f64, c_b: f64) -> Result<PresetSchedules> {
        self.instantiate(self.c.representative(0.0, 0.0), c_gamma, c_b)
    }

    /// Schedules for a chosen `c`.
    pub fn instantiate(&self, c: f64, c_gamma: f64, c_b: f64) -> Result<PresetSchedules> {
        if !self.c.contains(c, c) {
            return Err(Error::invalid(format!("{}: c = {c} outside {}", self.id, self.c)));
        }
        let a = self.a.map(|ab| ab.representative(c, 1.0));
        let b = self.b.map(|bb| bb.representative(c, 0.1));
        let steps = StepSchedule::power(c_gamma, c);
        steps.validate()?;
        let weights = a.map(WeightSchedule::new).transpose()?;
        let batches = match b {
            Some(b) => BatchSchedule::power(c_b, b),
            None => BatchSchedule::constant(1),
        };
        batches.validate()?;
        let tseq = matches!(self.id, PresetId::Table2(_)).then_some(TSequence::Recursive);
        Ok(PresetSchedules {
            a,
            b,
            c,
            steps,
            weights,
            batches,
            tseq,
        })
    }
}

/// The constraints of a table row.
pub fn schedule_preset(id: PresetId) -> PresetRow {
    use Table1Row as A;
    use Table2Row as B;
    let zero = Bound::exactly(Affine::fixed(0.0));
    let positive = Bound::above(Affine::fixed(0.0));
    let minus_c = Bound::exactly(Affine::new(0.0, -1.0));
    let one_minus_c = Affine::new(1.0, -1.0);
    let two_minus_c = Affine::new(2.0, -1.0);
    let row = |biased, c, a, b, rate, cost| PresetRow {
        id,
        biased,
        c,
        a,
        b,
        rate,
        cost,
    };
    match id {
        PresetId::Table1(r) => match r {
            A::NoBias1 | A::Bias1 => row(
                r == A::Bias1,
                zero,
                Some(positive),
                Some(Bound::exactly(Affine::fixed(1.0))),
                Affine::fixed(1.0),
                CostModel::Samples,
            ),
            A::NoBias2 => row(
                false,
                Bound::range(0.0, 0.5, true),
                Some(Bound::above(Affine::new(0.0, -1.0))),
                Some(Bound::exactly(Affine::new(1.0, -2.0))),
                one_minus_c,
                CostModel::Samples,
            ),
            A::NoBias3 => row(
                false,
                Bound::range(0.0, 1.0, false),
                Some(minus_c),
                Some(Bound::above(Affine::new(1.0, -2.0)).and_nonnegative()),
                one_minus_c,
                CostModel::Samples,
            ),
            A::Bias2 => row(
                true,
                Bound::range(0.0, 1.0, false),
                Some(positive),
                Some(Bound::exactly(one_minus_c)),
                one_minus_c,
                CostModel::Samples,
            ),
            A::Bias3 => row(
                true,
                Bound::range(0.0, 1.0, false),
                Some(minus_c),
                Some(Bound::above(one_minus_c)),
                one_minus_c,
                CostModel::Samples,
            ),
            A::Exact => row(
                false,
                Bound::range(0.0, 1.0, false),
                Some(Bound::above(Affine::fixed(-1.0))),
                None,
                one_minus_c,
                CostModel::None,
            ),
        },
        PresetId::Table2(r) => match r {
            B::NoBias1 | B::Bias1 => row(
                r == B::Bias1,
                zero,
                None,
                Some(Bound::above(Affine::fixed(3.0))),
                Affine::fixed(2.0),
                CostModel::Samples,
            ),
            B::NoBias2 => row(
                false,
                Bound::range(0.0, 2.0, false),
                None,
                Some(Bound::above(Affine::new(3.0, -2.0)).and_nonnegative()),
                two_minus_c,
                CostModel::Samples,
            ),
            B::Bias2 => row(
                true,
                Bound::range(0.0, 1.0, false),
                None,
                Some(Bound::above(Affine::new(3.0, -1.0))),
                two_minus_c,
                CostModel::Samples,
            ),
            B::Bias3 => row(
                true,
                Bound::range(1.0, 2.0, false),
                None,
                Some(Bound::above(two_minus_c)),
                two_minus_c,
                CostModel::Samples,
            ),
            B::Exact => row(false, Bound::range(0.0, 2.0, false), None, None, two_minus_c, CostModel::None),
        },
    }
}
