//! Intraday panels and the daily observation series derived from them.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::realized::{realized_quantile, realized_variance, RealizedQuantileSpec};

/// Fraction of the calendar day covered by the open-to-close session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionCalendar {
    lambda: f64,
}

impl SessionCalendar {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain(format!("session fraction must lie in (0,1), got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for SessionCalendar {
    /// 6.5 trading hours out of 24.
    fn default() -> Self {
        Self { lambda: 6.5 / 24.0 }
    }
}

/// One trading day of session log prices `X_{t_0}, ..., X_{t_m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayDay<T> {
    pub day_index: usize,
    pub log_prices: Vec<T>,
    /// Previous day's closing log price.
    pub close_prev: T,
    /// Set when no previous close was available and the day's own open was used.
    pub close_prev_imputed: bool,
}

impl<T: Scalar> IntradayDay<T> {
    pub fn new(day_index: usize, log_prices: Vec<T>, close_prev: T) -> Result<Self> {
        let day = Self { day_index, log_prices, close_prev, close_prev_imputed: false };
        day.validate()?;
        Ok(day)
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_prices.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "day {} has {} ticks, need at least 2",
                self.day_index,
                self.log_prices.len()
            )));
        }
        if !self.close_prev.is_finite() || self.log_prices.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("day {} has non-finite log prices", self.day_index)));
        }
        Ok(())
    }

    /// Number of intraday increments.
    pub fn m(&self) -> usize {
        self.log_prices.len() - 1
    }

    pub fn open(&self) -> T {
        self.log_prices[0]
    }

    pub fn close(&self) -> T {
        *self.log_prices.last().expect("validated day")
    }

    pub fn increments(&self) -> impl Iterator<Item = T> + '_ {
        self.log_prices.windows(2).map(|w| w[1] - w[0])
    }
}

/// Derived per-day record consumed by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyObservation<T> {
    pub day_index: usize,
    /// Close-to-close log return.
    pub y: T,
    /// Realized variance of the session.
    pub rv: T,
    /// Squared close-to-open return.
    pub ov: T,
    /// Realized quantiles keyed by quantile level, in increasing level order.
    pub rq: Vec<(T, T)>,
    /// The overnight gap was unavailable and `ov` is zero by construction.
    pub ov_imputed: bool,
}

impl<T: Scalar> DailyObservation<T> {
    /// Minimal record without realized quantiles.
    pub fn new(day_index: usize, y: T, rv: T, ov: T) -> Self {
        Self { day_index, y, rv, ov, rq: Vec::new(), ov_imputed: false }
    }

    /// Realized quantile at level `tau`, matched to within `1e-9`.
    pub fn rq(&self, tau: T) -> Option<T> {
        let eps = T::lit(1e-9);
        self.rq.iter().find(|(t, _)| (*t - tau).abs() < eps).map(|&(_, v)| v)
    }
}

/// Drops a leading day whose overnight gap had to be imputed.
pub fn usable<T>(obs: &[DailyObservation<T>]) -> &[DailyObservation<T>] {
    match obs.first() {
        Some(first) if first.ov_imputed => &obs[1..],
        _ => obs,
    }
}

/// Loads an intraday panel in the `day,tick,logprice` format.
pub fn load_intraday_csv<T: Scalar>(path: impl AsRef<Path>, calendar: SessionCalendar) -> Result<Vec<IntradayDay<T>>> {
    let file = std::fs::File::open(path)?;
    read_intraday_csv(file, calendar)
}

pub fn read_intraday_csv<T: Scalar, R: Read>(reader: R, _calendar: SessionCalendar) -> Result<Vec<IntradayDay<T>>> {
    let reader = BufReader::new(reader);
    let mut header_close_prev: Option<T> = None;
    let mut saw_header = false;
    // (day, ticks, prices)
    let mut current: Option<(usize, usize, Vec<T>)> = None;
    let mut raw_days: Vec<(usize, Vec<T>)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("close_prev=") {
                let v: T = v.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid close_prev value {v:?}"),
                })?;
                header_close_prev = Some(v);
            }
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["day", "tick", "logprice"] {
                return Err(Error::Parse { line: lineno, msg: format!("expected header day,tick,logprice, got {line:?}") });
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let (Some(d), Some(t), Some(p), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse { line: lineno, msg: "expected 3 fields".into() });
        };
        let day: usize = d.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid day {d:?}") })?;
        let tick: usize = t.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid tick {t:?}") })?;
        let price: T = p.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid log price {p:?}") })?;
        if !price.is_finite() {
            return Err(Error::Parse { line: lineno, msg: format!("non-finite log price {p:?}") });
        }

        match current.as_mut() {
            Some((cur_day, last_tick, prices)) if *cur_day == day => {
                if tick <= *last_tick {
                    return Err(Error::Ordering {
                        line: lineno,
                        msg: format!("tick {tick} does not follow tick {last_tick} on day {day}"),
                    });
                }
                *last_tick = tick;
                prices.push(price);
            }
            Some((cur_day, _, _)) if day != *cur_day + 1 => {
                return Err(Error::Ordering {
                    line: lineno,
                    msg: format!("day {day} follows day {cur_day}; days must be consecutive"),
                });
            }
            _ => {
                if current.is_none() && day == 0 {
                    return Err(Error::Parse { line: lineno, msg: "day index must be at least 1".into() });
                }
                if let Some((d, _, prices)) = current.take() {
                    raw_days.push((d, prices));
                }
                current = Some((day, tick, vec![price]));
            }
        }
    }
    if let Some((d, _, prices)) = current.take() {
        raw_days.push((d, prices));
    }
    if !saw_header {
        return Err(Error::Parse { line: 0, msg: "missing header".into() });
    }

    let mut days = Vec::with_capacity(raw_days.len());
    let mut prev_close = header_close_prev;
    for (day_index, log_prices) in raw_days {
        if log_prices.len() < 2 {
            return Err(Error::InsufficientData(format!("day {day_index} has fewer than 2 ticks")));
        }
        let (close_prev, imputed) = match prev_close {
            Some(c) => (c, false),
            None => (log_prices[0], true),
        };
        prev_close = log_prices.last().copied();
        days.push(IntradayDay { day_index, log_prices, close_prev, close_prev_imputed: imputed });
    }
    Ok(days)
}

/// Writes a panel in the format read by [`load_intraday_csv`].
pub fn write_intraday_csv<T: Scalar, W: Write>(mut out: W, days: &[IntradayDay<T>]) -> Result<()> {
    let mut buf = String::new();
    if let Some(first) = days.first() {
        if !first.close_prev_imputed {
            writeln!(buf, "# close_prev={}", first.close_prev).unwrap();
        }
    }
    buf.push_str("day,tick,logprice\n");
    for day in days {
        for (tick, p) in day.log_prices.iter().enumerate() {
            writeln!(buf, "{},{},{}", day.day_index, tick, p).unwrap();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Turns a validated panel into daily returns and realized measures.
pub fn build_daily_observations<T: Scalar>(days: &[IntradayDay<T>], taus: &[T]) -> Result<Vec<DailyObservation<T>>> {
    if days.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 days, got {}", days.len())));
    }
    let mut taus: Vec<T> = taus.to_vec();
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite tau"));
    let specs = taus
        .iter()
        .map(|&tau| RealizedQuantileSpec::new(tau))
        .collect::<Result<Vec<_>>>()?;

    days.iter()
        .map(|day| {
            let at_day = |e: Error| Error::AtDay { day: day.day_index, source: Box::new(e) };
            day.validate().map_err(at_day)?;
            let gap = day.open() - day.close_prev;
            let rv = realized_variance(day).map_err(at_day)?;
            let rq = specs
                .iter()
                .map(|spec| realized_quantile(day, spec).map(|v| (spec.tau(), v)))
                .collect::<Result<Vec<_>>>()
                .map_err(at_day)?;
            Ok(DailyObservation {
                day_index: day.day_index,
                y: day.close() - day.close_prev,
                rv,
                ov: gap * gap,
                rq,
                ov_imputed: day.close_prev_imputed,
            })
        })
        .collect()
}

fn tau_label<T: Scalar>(tau: T) -> String {
    format!("rq_{}", tau.as_f64())
}

/// Writes `day,y,rv,ov,rq_<tau>...`.
pub fn write_daily_csv<T: Scalar, W: Write>(mut out: W, obs: &[DailyObservation<T>]) -> Result<()> {
    let mut buf = String::from("day,y,rv,ov");
    let taus: Vec<T> = obs.first().map(|o| o.rq.iter().map(|&(t, _)| t).collect()).unwrap_or_default();
    for &tau in &taus {
        write!(buf, ",{}", tau_label(tau)).unwrap();
    }
    buf.push('\n');
    for o in obs {
        write!(buf, "{},{},{},{}", o.day_index, o.y, o.rv, o.ov).unwrap();
        if o.rq.len() != taus.len() {
            return Err(Error::Alignment(format!("day {} has {} realized quantiles, expected {}", o.day_index, o.rq.len(), taus.len())));
        }
        for &(_, v) in &o.rq {
            write!(buf, ",{v}").unwrap();
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Reads the daily CSV written by [`write_daily_csv`].
pub fn read_daily_csv<T: Scalar, R: Read>(reader: R) -> Result<Vec<DailyObservation<T>>> {
    let reader = BufReader::new(reader);
    let mut taus: Option<Vec<T>> = None;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(taus) = taus.as_ref() else {
            if cols.len() < 4 || cols[..4] != ["day", "y", "rv", "ov"] {
                return Err(Error::Parse { line: lineno, msg: "expected header day,y,rv,ov[,rq_<tau>...]".into() });
            }
            let parsed = cols[4..]
                .iter()
                .map(|c| {
                    c.strip_prefix("rq_")
                        .and_then(|t| t.parse::<T>().ok())
                        .ok_or_else(|| Error::Parse { line: lineno, msg: format!("invalid column {c:?}") })
                })
                .collect::<Result<Vec<T>>>()?;
            taus = Some(parsed);
            continue;
        };
        if cols.len() != 4 + taus.len() {
            return Err(Error::Parse { line: lineno, msg: format!("expected {} fields, got {}", 4 + taus.len(), cols.len()) });
        }
        let num = |s: &str| -> Result<T> {
            s.parse::<T>().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid number {s:?}") })
        };
        let day_index: usize = cols[0].parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid day {:?}", cols[0]) })?;
        let rq = taus.iter().zip(&cols[4..]).map(|(&t, s)| Ok((t, num(s)?))).collect::<Result<Vec<_>>>()?;
        out.push(DailyObservation { day_index, y: num(cols[1])?, rv: num(cols[2])?, ov: num(cols[3])?, rq, ov_imputed: false });
    }
    if taus.is_none() {
        return Err(Error::Parse { line: 0, msg: "missing header".into() });
    }
    Ok(out)
}
