use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Calendar granularity of a date, ordered from coarsest to finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Year,
    Month,
    Day,
}

/// A proleptic Gregorian date (UTC, day resolution).
///
/// Components that are finer than `precision` are stored as 1 so that the
/// derived ordering places a year-precision date at the start of its year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    year: i64,
    month: u8,
    day: u8,
    precision: Precision,
}

fn is_leap(year: i64) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i64, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

impl Date {
    pub fn ymd(year: i64, month: u8, day: u8) -> Result<Self, ModelError> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(ModelError::InvalidDate(format!("{year}-{month:02}-{day:02}")));
        }
        Ok(Self { year, month, day, precision: Precision::Day })
    }

    pub fn year_only(year: i64) -> Self {
        Self { year, month: 1, day: 1, precision: Precision::Year }
    }

    pub fn year_month(year: i64, month: u8) -> Result<Self, ModelError> {
        if !(1..=12).contains(&month) {
            return Err(ModelError::InvalidDate(format!("{year}-{month:02}")));
        }
        Ok(Self { year, month, day: 1, precision: Precision::Month })
    }

    pub fn year(&self) -> i64 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn day(&self) -> u8 {
        self.day
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Same calendar day at day precision; used when only the instant matters.
    pub fn as_day(&self) -> Date {
        Date { precision: Precision::Day, ..*self }
    }

    /// Moves the date by a number of days. Only used for building test grids
    /// and synthetic fixtures, so a simple day-by-day walk is enough.
    pub fn add_days(&self, days: i64) -> Date {
        let mut d = self.as_day();
        if days >= 0 {
            for _ in 0..days {
                if d.day < days_in_month(d.year, d.month) {
                    d.day += 1;
                } else if d.month < 12 {
                    d.month += 1;
                    d.day = 1;
                } else {
                    d.year += 1;
                    d.month = 1;
                    d.day = 1;
                }
            }
        } else {
            for _ in 0..(-days) {
                if d.day > 1 {
                    d.day -= 1;
                } else if d.month > 1 {
                    d.month -= 1;
                    d.day = days_in_month(d.year, d.month);
                } else {
                    d.year -= 1;
                    d.month = 12;
                    d.day = 31;
                }
            }
        }
        d
    }

    /// Human rendering: "30 November 2022", "November 2022" or "2022".
    pub fn to_words(&self) -> String {
        let year = if self.year < 0 {
            format!("{} BC", -self.year)
        } else {
            self.year.to_string()
        };
        let month = MONTH_NAMES[usize::from(self.month) - 1];
        match self.precision {
            Precision::Year => year,
            Precision::Month => format!("{month} {year}"),
            Precision::Day => format!("{} {month} {year}", self.day),
        }
    }
}

impl fmt::Display for Date {
    /// ISO-like form whose length encodes the precision (`YYYY`, `YYYY-MM`, `YYYY-MM-DD`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.year < 0 {
            write!(f, "-{:04}", -self.year)?;
        } else {
            write!(f, "{:04}", self.year)?;
        }
        match self.precision {
            Precision::Year => Ok(()),
            Precision::Month => write!(f, "-{:02}", self.month),
            Precision::Day => write!(f, "-{:02}-{:02}", self.month, self.day),
        }
    }
}

impl FromStr for Date {
    type Err = ModelError;

    /// Accepts `[+-]YYYY[-MM[-DD]]`, optionally followed by a `T...` time part
    /// which is truncated. Wikidata-style zero month/day components lower the
    /// precision instead of failing.
    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidDate(raw.to_string());
        let s = raw.trim();
        let s = s.split('T').next().unwrap_or(s);
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let mut parts = body.split('-');
        let year_part = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?;
        if !year_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let year: i64 = year_part.parse().map_err(|_| bad())?;
        let year = if negative { -year } else { year };
        let month: Option<u8> = parts.next().map(|p| p.parse().map_err(|_| bad())).transpose()?;
        let day: Option<u8> = parts.next().map(|p| p.parse().map_err(|_| bad())).transpose()?;
        if parts.next().is_some() {
            return Err(bad());
        }
        match (month, day) {
            (None | Some(0), _) => Ok(Date::year_only(year)),
            (Some(m), None | Some(0)) => Date::year_month(year, m),
            (Some(m), Some(d)) => Date::ymd(year, m, d),
        }
    }
}

impl Serialize for Date {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One end of a validity interval.
///
/// Variant order gives the total order `NegInf < At(_) < PosInf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bound {
    NegInf,
    At(Date),
    PosInf,
}

impl Bound {
    pub fn date(&self) -> Option<Date> {
        match self {
            Bound::At(d) => Some(*d),
            _ => None,
        }
    }

    /// Comparison key that ignores precision: two bounds on the same calendar
    /// day compare equal even if one was recorded at year precision.
    fn key(&self) -> (u8, i64, u8, u8) {
        match self {
            Bound::NegInf => (0, 0, 0, 0),
            Bound::At(d) => (1, d.year, d.month, d.day),
            Bound::PosInf => (2, 0, 0, 0),
        }
    }

    pub fn lt(&self, other: &Bound) -> bool {
        self.key() < other.key()
    }

    pub fn gt(&self, other: &Bound) -> bool {
        self.key() > other.key()
    }

    pub fn lt_date(&self, date: Date) -> bool {
        self.lt(&Bound::At(date))
    }

    pub fn gt_date(&self, date: Date) -> bool {
        self.gt(&Bound::At(date))
    }

    /// Strictly between two dates.
    pub fn within(&self, lo: Date, hi: Date) -> bool {
        self.gt_date(lo) && self.lt_date(hi)
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::NegInf => serializer.serialize_str("-inf"),
            Bound::PosInf => serializer.serialize_str("+inf"),
            Bound::At(d) => serializer.collect_str(d),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        match s.as_str() {
            "-inf" => Ok(Bound::NegInf),
            "+inf" => Ok(Bound::PosInf),
            other => other.parse().map(Bound::At).map_err(serde::de::Error::custom),
        }
    }
}

/// Validity interval `[start, end]` of a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: Bound,
    pub end: Bound,
    /// Set when the interval was derived from a point-in-time qualifier.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub point_in_time: bool,
}

impl TimeInterval {
    pub const UNBOUNDED: TimeInterval =
        TimeInterval { start: Bound::NegInf, end: Bound::PosInf, point_in_time: false };

    pub fn new(start: Bound, end: Bound) -> Self {
        Self { start, end, point_in_time: false }
    }

    pub fn from_point(t: Date) -> Self {
        Self { start: Bound::At(t), end: Bound::PosInf, point_in_time: true }
    }

    /// `start > end`; such facts are later classified `unknown`.
    pub fn is_inverted(&self) -> bool {
        self.start.gt(&self.end)
    }

    pub fn point(&self) -> Option<Date> {
        if self.point_in_time {
            self.start.date()
        } else {
            None
        }
    }
}

impl Default for TimeInterval {
    fn default() -> Self {
        Self::UNBOUNDED
    }
}
