//! Ice-core record ingestion and derivation of the observation series.
//!
//! A raw core file holds one record per slice boundary: depth (m), age
//! (KYrBP) and temperature anomaly (deg C). Successive records are turned
//! into per-interval samples: the apparent accumulation rate (AAR) is the
//! depth increment over the age increment, attributed to the midpoint age
//! and the midpoint temperature of the interval.

use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};

/// Relative margin applied to the observed temperature extremes when
/// deriving the admissible band.
pub const BAND_MARGIN: f64 = 0.05;

/// Lower bound on either side of the band, in deg C, so that one-signed or
/// constant data still yield a valid open interval around zero.
pub const BAND_FLOOR: f64 = 0.5;

/// Ordered ice-core records as read from file: depth, age and temperature
/// anomaly per slice boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCoreSeries {
    depth: Vec<f64>,
    age: Vec<f64>,
    temp: Vec<f64>,
}

impl RawCoreSeries {
    /// Validates and wraps parallel record arrays.
    ///
    /// Depth and age must be strictly increasing, all values finite, and at
    /// least three records are required (two intervals).
    pub fn new(depth: Vec<f64>, age: Vec<f64>, temp: Vec<f64>) -> Result<Self> {
        if depth.len() != age.len() {
            return Err(Error::LengthMismatch(depth.len(), age.len()));
        }
        if depth.len() != temp.len() {
            return Err(Error::LengthMismatch(depth.len(), temp.len()));
        }
        if depth.len() < 3 {
            return Err(Error::TooFewRecords(depth.len()));
        }
        for (field, values) in [("depth", &depth), ("age", &age), ("temperature", &temp)] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { field, row: i + 1 });
            }
        }
        for (field, values) in [("depth", &depth), ("age", &age)] {
            if let Some(i) = values.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::NonMonotone { field, row: i + 2 });
            }
        }
        Ok(Self { depth, age, temp })
    }

    /// Number of records (n + 1 slice boundaries).
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn age(&self) -> &[f64] {
        &self.age
    }

    pub fn temp(&self) -> &[f64] {
        &self.temp
    }

    /// Builds the per-interval observation series: midpoint ages and
    /// temperatures, accumulation rates and their logs.
    pub fn derive(&self) -> Result<DerivedSeries> {
        let n = self.len() - 1;
        let mut age_mid = Vec::with_capacity(n);
        let mut temp_mid = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        let mut log_rate = Vec::with_capacity(n);
        for i in 0..n {
            let da = self.age[i + 1] - self.age[i];
            if da == 0.0 {
                return Err(Error::ZeroAgeDifference { row: i + 1 });
            }
            let b = (self.depth[i + 1] - self.depth[i]) / da;
            if !(b > 0.0) {
                return Err(Error::NonPositiveRate { index: i, value: b });
            }
            age_mid.push(0.5 * (self.age[i] + self.age[i + 1]));
            temp_mid.push(0.5 * (self.temp[i] + self.temp[i + 1]));
            rate.push(b);
            log_rate.push(b.ln());
        }
        Ok(DerivedSeries {
            age: age_mid,
            temp: temp_mid,
            rate,
            log_rate,
        })
    }
}

/// Per-interval samples feeding the model: midpoint age, midpoint
/// temperature, accumulation rate and log accumulation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedSeries {
    age: Vec<f64>,
    temp: Vec<f64>,
    rate: Vec<f64>,
    log_rate: Vec<f64>,
}

impl DerivedSeries {
    /// Assembles a series directly from midpoint ages, midpoint temperatures
    /// and log rates (used by the simulation harness, where the response is
    /// generated on the log scale).
    pub fn from_log_parts(age: Vec<f64>, temp: Vec<f64>, log_rate: Vec<f64>) -> Result<Self> {
        if age.len() != temp.len() {
            return Err(Error::LengthMismatch(age.len(), temp.len()));
        }
        if age.len() != log_rate.len() {
            return Err(Error::LengthMismatch(age.len(), log_rate.len()));
        }
        if age.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (field, values) in [("age", &age), ("temperature", &temp), ("log rate", &log_rate)] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { field, row: i + 1 });
            }
        }
        if let Some(i) = age.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotone {
                field: "age",
                row: i + 2,
            });
        }
        let rate = log_rate.iter().map(|y| y.exp()).collect();
        Ok(Self {
            age,
            temp,
            rate,
            log_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.age.is_empty()
    }

    /// Midpoint ages, strictly increasing (KYrBP).
    pub fn age(&self) -> &[f64] {
        &self.age
    }

    /// Midpoint temperature anomalies (deg C).
    pub fn temp(&self) -> &[f64] {
        &self.temp
    }

    /// Apparent accumulation rates (m/KYr), strictly positive.
    pub fn rate(&self) -> &[f64] {
        &self.rate
    }

    /// Log apparent accumulation rates.
    pub fn log_rate(&self) -> &[f64] {
        &self.log_rate
    }
}

/// Open temperature interval `(lo, hi)` with `lo < 0 < hi`, bounding the
/// observed anomalies. It defines the admissible coefficient interval
/// `[-1/hi, -1/lo]`, on which `1 + gamma * x` stays positive for every
/// in-band `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempBand {
    lo: f64,
    hi: f64,
}

impl TempBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature band must satisfy lo < 0 < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Derives the band from observed temperatures: each side is the
    /// corresponding extreme widened by [`BAND_MARGIN`], never narrower than
    /// [`BAND_FLOOR`] on either side.
    pub fn from_temps(temps: &[f64]) -> Result<Self> {
        if temps.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(i) = temps.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "temperature",
                row: i + 1,
            });
        }
        let max = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = temps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = (max * (1.0 + BAND_MARGIN)).max(BAND_FLOOR);
        let lo = -(min.abs() * (1.0 + BAND_MARGIN)).max(BAND_FLOOR);
        Self::new(lo, hi)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Lower endpoint of the admissible coefficient interval.
    pub fn gamma_lower(&self) -> f64 {
        -1.0 / self.hi
    }

    /// Upper endpoint of the admissible coefficient interval.
    pub fn gamma_upper(&self) -> f64 {
        -1.0 / self.lo
    }

    pub fn contains_gamma(&self, gamma: f64) -> bool {
        gamma >= self.gamma_lower() && gamma <= self.gamma_upper()
    }

    pub fn clamp_gamma(&self, gamma: f64) -> f64 {
        gamma.clamp(self.gamma_lower(), self.gamma_upper())
    }

    /// Whether a temperature lies strictly inside the band.
    pub fn admits_temp(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Checks every temperature strictly inside the band.
    pub fn check_temps(&self, temps: &[f64]) -> Result<()> {
        for (i, &x) in temps.iter().enumerate() {
            if !self.admits_temp(x) {
                return Err(Error::TempOutsideBand {
                    index: i,
                    x,
                    lo: self.lo,
                    hi: self.hi,
                });
            }
        }
        Ok(())
    }
}

/// Reads a delimited core table with header `depth_m,age_kyrbp,temp_c`
/// (any column order, extra columns ignored). The delimiter is detected
/// from the header line (tab if present, comma otherwise), `#`-prefixed
/// lines and blank lines are skipped.
pub fn load_core<R: Read>(source: R) -> Result<RawCoreSeries> {
    let reader = BufReader::new(source);
    let mut depth = Vec::new();
    let mut age = Vec::new();
    let mut temp = Vec::new();
    let mut columns: Option<(usize, usize, usize, char)> = None;
    let mut row = 0usize;
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match columns {
            None => {
                let delim = if trimmed.contains('\t') { '\t' } else { ',' };
                let names: Vec<&str> = trimmed.split(delim).map(str::trim).collect();
                let find = |name: &'static str| -> Result<usize> {
                    names
                        .iter()
                        .position(|c| *c == name)
                        .ok_or(Error::MissingColumn(name))
                };
                columns = Some((find("depth_m")?, find("age_kyrbp")?, find("temp_c")?, delim));
            }
            Some((di, ai, ti, delim)) => {
                row += 1;
                let fields: Vec<&str> = trimmed.split(delim).map(str::trim).collect();
                let parse = |idx: usize, name: &str| -> Result<f64> {
                    let raw = fields.get(idx).ok_or_else(|| Error::MalformedRow {
                        row,
                        message: format!("missing {name} field"),
                    })?;
                    raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                        row,
                        message: format!("cannot parse {name} value `{raw}`"),
                    })
                };
                depth.push(parse(di, "depth_m")?);
                age.push(parse(ai, "age_kyrbp")?);
                temp.push(parse(ti, "temp_c")?);
            }
        }
    }
    if columns.is_none() {
        return Err(Error::MissingHeader);
    }
    RawCoreSeries::new(depth, age, temp)
}
