//! Unbalanced quarterly panels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units;

/// Maturities (in quarters) of the yield columns a panel may carry.
pub const PANEL_MATURITIES: [usize; 7] = [4, 8, 16, 28, 40, 60, 120];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    /// 1 to 4.
    pub q: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid quarter '{0}', expected YYYYQn")]
pub struct QuarterParseError(pub String);

impl Quarter {
    pub fn new(year: i32, q: u8) -> Option<Self> {
        (1..=4).contains(&q).then_some(Quarter { year, q })
    }

    pub fn next(self) -> Self {
        if self.q == 4 {
            Quarter {
                year: self.year + 1,
                q: 1,
            }
        } else {
            Quarter {
                year: self.year,
                q: self.q + 1,
            }
        }
    }

    /// Quarters elapsed since year 0, Q1.
    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn offset(self, quarters: usize) -> Self {
        let i = self.index() + quarters as i64;
        Quarter {
            year: i.div_euclid(4) as i32,
            q: (i.rem_euclid(4) + 1) as u8,
        }
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = QuarterParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || QuarterParseError(s.to_string());
        let (year, q) = s.trim().split_once(['Q', 'q']).ok_or_else(err)?;
        let year: i32 = year.parse().map_err(|_| err())?;
        let q: u8 = q.parse().map_err(|_| err())?;
        Quarter::new(year, q).ok_or_else(err)
    }
}

/// Quarterly observations. All rates are stored as on disk, in annualized
/// percent; the per-quarter accessors convert for pricing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelData {
    pub quarters: Vec<Quarter>,
    pub short_rate: Vec<Option<f64>>,
    pub inflation: Vec<Option<f64>>,
    /// Maturity in quarters to column.
    pub yields: BTreeMap<usize, Vec<Option<f64>>>,
}

impl PanelData {
    /// Panel of `len` consecutive quarters from `start` with every cell
    /// missing.
    pub fn empty(start: Quarter, len: usize, maturities: &[usize]) -> Self {
        PanelData {
            quarters: (0..len).map(|t| start.offset(t)).collect(),
            short_rate: vec![None; len],
            inflation: vec![None; len],
            yields: maturities.iter().map(|&n| (n, vec![None; len])).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.quarters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quarters.is_empty()
    }

    pub fn maturities(&self) -> Vec<usize> {
        self.yields.keys().copied().collect()
    }

    pub fn short_rate_per_quarter(&self, t: usize) -> Option<f64> {
        self.short_rate[t].map(units::to_per_quarter)
    }

    pub fn yield_per_quarter(&self, n: usize, t: usize) -> Option<f64> {
        self.yields
            .get(&n)
            .and_then(|col| col[t])
            .map(units::to_per_quarter)
    }

    /// Number of observed cells in the yield column for maturity `n`.
    pub fn observed(&self, n: usize) -> usize {
        self.yields
            .get(&n)
            .map_or(0, |c| c.iter().flatten().count())
    }

    pub fn row_is_empty(&self, t: usize) -> bool {
        self.short_rate[t].is_none()
            && self.inflation[t].is_none()
            && self.yields.values().all(|c| c[t].is_none())
    }

    /// Appends a quarter with every cell missing.
    pub fn push_empty(&mut self) {
        let next = self
            .quarters
            .last()
            .map_or(Quarter { year: 1959, q: 4 }, |q| q.next());
        self.quarters.push(next);
        self.short_rate.push(None);
        self.inflation.push(None);
        for c in self.yields.values_mut() {
            c.push(None);
        }
    }

    /// Copy without yield columns.
    pub fn without_yields(&self) -> Self {
        PanelData {
            yields: BTreeMap::new(),
            ..self.clone()
        }
    }

    /// Checks column lengths and strictly increasing quarters.
    pub fn check_shape(&self) -> Result<(), String> {
        let n = self.len();
        if self.short_rate.len() != n || self.inflation.len() != n {
            return Err("series lengths differ from the number of quarters".into());
        }
        if let Some((m, _)) = self.yields.iter().find(|(_, c)| c.len() != n) {
            return Err(format!("yield column y{m} has the wrong length"));
        }
        if let Some(w) = self.quarters.windows(2).find(|w| w[1] <= w[0]) {
            return Err(format!("quarters not increasing at {}", w[1]));
        }
        Ok(())
    }
}

/// First observed quarter of each yield column, as an offset from the panel
/// start.
#[derive(Debug, Clone, PartialEq)]
pub struct MaturitySchedule {
    pub start: Quarter,
    pub yield_starts: BTreeMap<usize, usize>,
}

impl MaturitySchedule {
    /// Every column observed from the first quarter.
    pub fn balanced(maturities: &[usize]) -> Self {
        MaturitySchedule {
            start: Quarter { year: 1959, q: 4 },
            yield_starts: maturities.iter().map(|&n| (n, 0)).collect(),
        }
    }

    /// The shape of the German panel scaled to `t` quarters: short rate and
    /// inflation from 1959Q4, maturities up to ten years from 1972Q3, the
    /// fifteen-year rate from 1986Q2 and the thirty-year rate from 1996Q1,
    /// out of 191 quarters ending 2007Q2.
    pub fn german_shape(t: usize) -> Self {
        let scaled = |k: usize| (k * t + 95) / 191;
        let mut yield_starts = BTreeMap::new();
        for n in [4, 8, 16, 28, 40] {
            yield_starts.insert(n, scaled(51));
        }
        yield_starts.insert(60, scaled(106));
        yield_starts.insert(120, scaled(145));
        MaturitySchedule {
            start: Quarter { year: 1959, q: 4 },
            yield_starts,
        }
    }

    pub fn maturities(&self) -> Vec<usize> {
        self.yield_starts.keys().copied().collect()
    }
}
