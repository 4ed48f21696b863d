//! Epoch-second timestamps and civil-date conversion.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Seconds per day.
pub const DAY_SECS: i64 = 86_400;

/// UTC instant at second resolution, stored as unix epoch seconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_epoch(secs: i64) -> Self {
        Timestamp(secs)
    }

    /// Midnight UTC of the given civil date.
    pub fn from_date(year: i32, month: u32, day: u32) -> Self {
        Timestamp(days_from_civil(year, month, day) * DAY_SECS)
    }

    /// Parses `YYYY-MM-DD`.
    pub fn parse_date(s: &str) -> Option<Self> {
        let mut it = s.splitn(3, '-');
        let year: i32 = it.next()?.parse().ok()?;
        let month: u32 = it.next()?.parse().ok()?;
        let day: u32 = it.next()?.parse().ok()?;
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return None;
        }
        Some(Timestamp::from_date(year, month, day))
    }

    pub fn epoch(self) -> i64 {
        self.0
    }

    pub fn plus_days(self, days: i64) -> Self {
        Timestamp(self.0 + days * DAY_SECS)
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Signed difference `self - other` in fractional days.
    pub fn days_since(self, other: Timestamp) -> f64 {
        (self.0 - other.0) as f64 / DAY_SECS as f64
    }

    /// Civil year of the instant (UTC).
    pub fn year(self) -> i32 {
        civil_from_days(self.0.div_euclid(DAY_SECS)).0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let days = self.0.div_euclid(DAY_SECS);
        let rem = self.0.rem_euclid(DAY_SECS);
        let (y, m, d) = civil_from_days(days);
        let (hh, mm, ss) = (rem / 3600, (rem % 3600) / 60, rem % 60);
        write!(f, "{y:04}-{m:02}-{d:02}T{hh:02}:{mm:02}:{ss:02}Z")
    }
}

/// Days since 1970-01-01 for a civil date (proleptic Gregorian).
pub fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = i64::from((month + 9) % 12);
    let doy = (153 * mp + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of [`days_from_civil`].
pub fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = ((mp + 2) % 12 + 1) as u32;
    (if m <= 2 { y + 1 } else { y } as i32, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_day_zero() {
        assert_eq!(days_from_civil(1970, 1, 1), 0);
        assert_eq!(civil_from_days(0), (1970, 1, 1));
    }

    #[test]
    fn civil_roundtrip_covers_leap_years() {
        for days in (-200_000..200_000).step_by(97) {
            let (y, m, d) = civil_from_days(days);
            assert_eq!(days_from_civil(y, m, d), days);
        }
        assert_eq!(civil_from_days(days_from_civil(2016, 2, 29)), (2016, 2, 29));
    }

    #[test]
    fn parse_and_display() {
        let ts = Timestamp::parse_date("2014-01-01").unwrap();
        assert_eq!(ts.to_string(), "2014-01-01T00:00:00Z");
        assert_eq!(ts.year(), 2014);
        assert_eq!(ts.plus_days(365).to_string(), "2015-01-01T00:00:00Z");
        assert!(Timestamp::parse_date("2014-13-01").is_none());
        assert!(Timestamp::parse_date("nope").is_none());
    }
}
