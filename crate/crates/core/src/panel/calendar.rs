//! NYSE trading calendar (regular full-day closures, 2000 onward).

use chrono::{Datelike, Duration, NaiveDate, Weekday};

fn nth_weekday(year: i32, month: u32, weekday: Weekday, n: u32) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n as u8).expect("valid nth weekday")
}

fn last_weekday(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    let first_next =
        if month == 12 { NaiveDate::from_ymd_opt(year + 1, 1, 1) } else { NaiveDate::from_ymd_opt(year, month + 1, 1) }
            .expect("valid date");
    let mut d = first_next - Duration::days(1);
    while d.weekday() != weekday {
        d -= Duration::days(1);
    }
    d
}

/// Gregorian Easter Sunday (anonymous algorithm).
fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("valid easter")
}

/// Saturday holidays move to Friday, Sunday holidays to Monday.
fn observed(d: NaiveDate) -> NaiveDate {
    match d.weekday() {
        Weekday::Sat => d - Duration::days(1),
        Weekday::Sun => d + Duration::days(1),
        _ => d,
    }
}

fn holidays(year: i32) -> Vec<NaiveDate> {
    let ymd = |m, d| NaiveDate::from_ymd_opt(year, m, d).expect("valid date");
    let mut out = Vec::with_capacity(12);
    // New Year's Day on a Saturday is not observed on the preceding Friday.
    let new_year = ymd(1, 1);
    if new_year.weekday() != Weekday::Sat {
        out.push(observed(new_year));
    }
    out.push(nth_weekday(year, 1, Weekday::Mon, 3));
    out.push(nth_weekday(year, 2, Weekday::Mon, 3));
    out.push(easter_sunday(year) - Duration::days(2));
    out.push(last_weekday(year, 5, Weekday::Mon));
    if year >= 2022 {
        out.push(observed(ymd(6, 19)));
    }
    out.push(observed(ymd(7, 4)));
    out.push(nth_weekday(year, 9, Weekday::Mon, 1));
    out.push(nth_weekday(year, 11, Weekday::Thu, 4));
    out.push(observed(ymd(12, 25)));
    // One-off closures.
    match year {
        2001 => out.extend((11..=14).map(|d| ymd(9, d))),
        2004 => out.push(ymd(6, 11)),
        2007 => out.push(ymd(1, 2)),
        2012 => out.extend([ymd(10, 29), ymd(10, 30)]),
        2018 => out.push(ymd(12, 5)),
        2025 => out.push(ymd(1, 9)),
        _ => {}
    }
    out
}

pub fn is_trading_day(d: NaiveDate) -> bool {
    if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        return false;
    }
    !holidays(d.year()).contains(&d)
}

/// Trading days in the inclusive range `[start, end]`.
pub fn trading_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = start;
    let mut year = i32::MIN;
    let mut hol = Vec::new();
    while d <= end {
        if d.year() != year {
            year = d.year();
            hol = holidays(year);
        }
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !hol.contains(&d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// The first `count` trading days on or after `start`.
pub fn trading_days_from(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if is_trading_day(d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}
