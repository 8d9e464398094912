//! Hourly PV power / irradiance series with an explicit missingness mask.
//!
//! CSV layout is `timestamp,power,irradiance`. A missing power value is an
//! empty cell or `NaN` (any case); irradiance is always present.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

pub const CSV_HEADER: [&str; 3] = ["timestamp", "power", "irradiance"];

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];
const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly power (kWh) and irradiance (kW/m²) with `mask[t] = true` where power is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    start_time: NaiveDateTime,
    power: Vec<Option<f64>>,
    irradiance: Vec<f64>,
}

impl HourlySeries {
    /// Builds a series, validating non-negativity and length agreement.
    pub fn new(
        start_time: NaiveDateTime,
        power: Vec<Option<f64>>,
        irradiance: Vec<f64>,
    ) -> Result<Self> {
        if power.is_empty() {
            return arg("series must contain at least one hour");
        }
        if power.len() != irradiance.len() {
            return arg(format!(
                "power has {} entries but irradiance has {}",
                power.len(),
                irradiance.len()
            ));
        }
        for (t, (p, i)) in power.iter().zip(&irradiance).enumerate() {
            if !(i.is_finite() && *i >= 0.0) {
                return Err(Error::Domain(format!("irradiance {i} at hour {t} is not a non-negative number")));
            }
            if let Some(p) = p {
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(Error::Domain(format!("power {p} at hour {t} is not a non-negative number")));
                }
            }
        }
        Ok(Self { start_time, power, irradiance })
    }

    /// Fully observed series.
    pub fn from_observed(start_time: NaiveDateTime, power: Vec<f64>, irradiance: Vec<f64>) -> Result<Self> {
        Self::new(start_time, power.into_iter().map(Some).collect(), irradiance)
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.start_time
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start_time + Duration::hours(t as i64)
    }

    pub fn power(&self) -> &[Option<f64>] {
        &self.power
    }

    pub fn irradiance(&self) -> &[f64] {
        &self.irradiance
    }

    pub fn is_missing(&self, t: usize) -> bool {
        self.power[t].is_none()
    }

    /// Missingness indicators, `true` = power missing.
    pub fn mask(&self) -> Vec<bool> {
        self.power.iter().map(Option::is_none).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.power.iter().filter(|p| p.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.power.iter().all(Option::is_some)
    }

    /// Power values of a fully observed series.
    pub fn complete_power(&self) -> Result<Vec<f64>> {
        self.power
            .iter()
            .enumerate()
            .map(|(t, p)| p.ok_or(Error::IncompleteData(t)))
            .collect()
    }

    /// Observed `(irradiance, power)` pairs in chronological order.
    pub fn observed_pairs(&self) -> Vec<(f64, f64)> {
        self.power
            .iter()
            .zip(&self.irradiance)
            .filter_map(|(p, i)| p.map(|p| (*i, p)))
            .collect()
    }

    /// Copy of the series with power replaced; irradiance and timing are kept.
    pub fn with_power(&self, power: Vec<Option<f64>>) -> Result<Self> {
        Self::new(self.start_time, power, self.irradiance.clone())
    }

    /// Hours `[from, to)` as a new series.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return arg(format!("slice [{from}, {to}) out of range for length {}", self.len()));
        }
        Ok(Self {
            start_time: self.timestamp(from),
            power: self.power[from..to].to_vec(),
            irradiance: self.irradiance[from..to].to_vec(),
        })
    }

    /// Reads the `timestamp,power,irradiance` CSV format.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 3 || headers.iter().zip(CSV_HEADER).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
            return Err(Error::Parse(format!(
                "expected header `timestamp,power,irradiance`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }

        let mut start: Option<NaiveDateTime> = None;
        let mut prev: Option<NaiveDateTime> = None;
        let mut power = Vec::new();
        let mut irradiance = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::Parse(format!("row {row}: expected 3 fields, got {}", record.len())));
            }
            let ts = parse_timestamp(&record[0])
                .ok_or_else(|| Error::Parse(format!("row {row}: bad timestamp `{}`", &record[0])))?;
            if let Some(prev) = prev {
                let step = (ts - prev).num_minutes();
                if step != 60 {
                    return Err(Error::Gap { row, hours: (ts - prev).num_hours() });
                }
            }
            start.get_or_insert(ts);
            prev = Some(ts);

            let p = record[1].trim();
            let p = if p.is_empty() || p.eq_ignore_ascii_case("nan") {
                None
            } else {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {row}: bad power `{p}`")))?;
                if v < 0.0 {
                    return Err(Error::Domain(format!("row {row}: negative power {v}")));
                }
                Some(v)
            };
            let i = record[2].trim();
            if i.is_empty() || i.eq_ignore_ascii_case("nan") {
                return Err(Error::Domain(format!("row {row}: irradiance must be observed")));
            }
            let i: f64 = i
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad irradiance `{i}`")))?;
            power.push(p);
            irradiance.push(i);
        }
        let start = start.ok_or_else(|| Error::Parse("no data rows".into()))?;
        Self::new(start, power, irradiance)
    }

    pub fn parse_csv_str(text: &str) -> Result<Self> {
        Self::parse_csv(text.as_bytes())
    }

    /// Writes the CSV format; missing power is emitted as an empty cell.
    /// Values use the shortest decimal form that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for t in 0..self.len() {
            let ts = self.timestamp(t).format(TIMESTAMP_OUT).to_string();
            let p = self.power[t].map(|p| p.to_string()).unwrap_or_default();
            w.write_record([ts, p, self.irradiance[t].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Splits off the final `test_len` hours, preserving order.
    pub fn split_chronological(&self, test_len: usize) -> Result<(Self, Self)> {
        if test_len <= 24 || test_len >= self.len() {
            return arg(format!(
                "test length {test_len} must satisfy 24 < test_len < {}",
                self.len()
            ));
        }
        let cut = self.len() - test_len;
        Ok((self.slice(0, cut)?, self.slice(cut, self.len())?))
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn default_start_time() -> NaiveDateTime {
    NaiveDateTime::parse_from_str("2022-11-22T00:00:00", TIMESTAMP_OUT).expect("valid constant")
}
