//! Error metrics of reported frames against the analytic truth, and
//! response-time measurement around steps.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sac::EstimateFrame;
use crate::scenarios::TruthPoint;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// pu
    #[serde(rename = "AE")]
    pub ae: f64,
    /// rad
    #[serde(rename = "PE")]
    pub pe: f64,
    /// Fraction of the true magnitude.
    #[serde(rename = "TVE")]
    pub tve: f64,
    /// Hz
    #[serde(rename = "FE")]
    pub fe: f64,
    /// 1/s
    #[serde(rename = "DE")]
    pub de: f64,
    /// Hz/s
    #[serde(rename = "RFE")]
    pub rfe: f64,
    /// 1/s^2
    #[serde(rename = "RDE")]
    pub rde: f64,
}

/// Metric selector used by response-time measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "PE")]
    Pe,
    #[serde(rename = "TVE")]
    Tve,
    #[serde(rename = "FE")]
    Fe,
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "RFE")]
    Rfe,
    #[serde(rename = "RDE")]
    Rde,
}

impl ErrorRecord {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Ae => self.ae,
            Metric::Pe => self.pe,
            Metric::Tve => self.tve,
            Metric::Fe => self.fe,
            Metric::De => self.de,
            Metric::Rfe => self.rfe,
            Metric::Rde => self.rde,
        }
    }

    /// Elementwise maximum.
    pub fn max(&self, o: &ErrorRecord) -> ErrorRecord {
        ErrorRecord {
            ae: self.ae.max(o.ae),
            pe: self.pe.max(o.pe),
            tve: self.tve.max(o.tve),
            fe: self.fe.max(o.fe),
            de: self.de.max(o.de),
            rfe: self.rfe.max(o.rfe),
            rde: self.rde.max(o.rde),
        }
    }

    /// Worst case over a sequence; zeros when empty.
    pub fn worst<'a>(records: impl IntoIterator<Item = &'a ErrorRecord>) -> ErrorRecord {
        records.into_iter().fold(ErrorRecord::default(), |acc, r| acc.max(r))
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

pub fn compute_errors(frame: &EstimateFrame, truth: &TruthPoint) -> Result<ErrorRecord> {
    let x = truth.phasor();
    let mag = x.norm();
    if mag.is_nan() || mag <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let est = frame.phasor;
    Ok(ErrorRecord {
        ae: (est.norm() - mag).abs(),
        pe: wrap_angle(est.arg() - truth.phase).abs(),
        tve: (est - x).norm() / mag,
        fe: (frame.freq - truth.freq).abs() / TAU,
        de: (frame.damping - truth.damping).abs(),
        rfe: (frame.rocof - truth.rocof).abs() / TAU,
        rde: (frame.rocod - truth.rocod).abs(),
    })
}

/// Limits defining response times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorLimits {
    /// Fraction.
    pub tve: f64,
    /// Hz
    pub fe: f64,
    /// 1/s
    pub de: f64,
    /// Hz/s
    pub rfe: f64,
    /// 1/s^2
    pub rde: f64,
}

impl Default for ErrorLimits {
    fn default() -> Self {
        Self { tve: 0.01, fe: 0.06, de: TAU * 0.06, rfe: 2.3, rde: TAU * 2.3 }
    }
}

impl ErrorLimits {
    pub const METRICS: [Metric; 5] = [Metric::Tve, Metric::Fe, Metric::De, Metric::Rfe, Metric::Rde];

    pub fn limit(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Tve => Some(self.tve),
            Metric::Fe => Some(self.fe),
            Metric::De => Some(self.de),
            Metric::Rfe => Some(self.rfe),
            Metric::Rde => Some(self.rde),
            Metric::Ae | Metric::Pe => None,
        }
    }
}

/// Response of one step; times are seconds and may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub overshoot_pct: f64,
    #[serde(with = "inf_as_null")]
    pub t_res_tve: f64,
    #[serde(with = "inf_as_null")]
    pub t_res_fe: f64,
    #[serde(with = "inf_as_null")]
    pub t_res_de: f64,
    #[serde(with = "inf_as_null")]
    pub t_res_rfe: f64,
    #[serde(with = "inf_as_null")]
    pub t_res_rde: f64,
}

impl StepReport {
    pub fn response_time(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Tve => Some(self.t_res_tve),
            Metric::Fe => Some(self.t_res_fe),
            Metric::De => Some(self.t_res_de),
            Metric::Rfe => Some(self.t_res_rfe),
            Metric::Rde => Some(self.t_res_rde),
            Metric::Ae | Metric::Pe => None,
        }
    }
}

/// JSON has no infinity; a never-settling metric is written as `null`.
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Uniformly spaced error series with the stepped quantity's estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSeries {
    pub times: Vec<f64>,
    pub errors: Vec<ErrorRecord>,
    /// Estimated amplitude (amplitude step) or phase (phase step).
    pub stepped: Vec<f64>,
}

/// Step under measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub time_s: f64,
    /// Signed step size.
    pub size: f64,
    /// Final value of the stepped quantity.
    pub final_value: f64,
}

/// Length of the contiguous run of samples, from the first to the last
/// exceedance, over which `metric` exceeds its limit; infinite when the
/// last sample still exceeds.
pub fn response_time(errors: &[ErrorRecord], metric: Metric, limit: f64, period: f64) -> f64 {
    let over = |r: &ErrorRecord| r.get(metric) > limit;
    let Some(first) = errors.iter().position(over) else {
        return 0.0;
    };
    let last = errors.iter().rposition(over).expect("first exceedance exists");
    if last + 1 == errors.len() {
        return f64::INFINITY;
    }
    (last - first + 1) as f64 * period
}

pub fn measure_response(series: &StepSeries, step: &StepEvent, limits: &ErrorLimits) -> Result<StepReport> {
    let (Some(&t_first), Some(&t_last)) = (series.times.first(), series.times.last()) else {
        return Err(Error::StepOutsideSeries(step.time_s));
    };
    if step.time_s < t_first || step.time_s > t_last || series.times.len() < 2 {
        return Err(Error::StepOutsideSeries(step.time_s));
    }
    if series.errors.len() != series.times.len() || series.stepped.len() != series.times.len() {
        return Err(Error::Input("step series columns differ in length".into()));
    }
    let period = series.times[1] - series.times[0];
    let t = |m: Metric| response_time(&series.errors, m, limits.limit(m).expect("gated metric"), period);

    let overshoot = series
        .times
        .iter()
        .zip(&series.stepped)
        .filter(|(ti, _)| **ti >= step.time_s)
        .map(|(_, v)| (v - step.final_value) * step.size.signum())
        .fold(0.0, f64::max);
    Ok(StepReport {
        overshoot_pct: 100.0 * overshoot / step.size.abs(),
        t_res_tve: t(Metric::Tve),
        t_res_fe: t(Metric::Fe),
        t_res_de: t(Metric::De),
        t_res_rfe: t(Metric::Rfe),
        t_res_rde: t(Metric::Rde),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * TAU + 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn response_time_counts_run() {
        let mut errs = vec![ErrorRecord::default(); 100];
        for e in &mut errs[10..37] {
            e.tve = 0.02;
        }
        let t = response_time(&errs, Metric::Tve, 0.01, 1.0 / 1920.0);
        assert!((t - 27.0 / 1920.0).abs() < 1e-15);
        assert_eq!(response_time(&errs, Metric::Fe, 0.06, 1.0), 0.0);
        errs[99].tve = 1.0;
        assert!(response_time(&errs, Metric::Tve, 0.01, 1.0).is_infinite());
    }

    #[test]
    fn infinite_times_round_trip_through_json() {
        let r = StepReport {
            overshoot_pct: 1.0,
            t_res_tve: 0.01,
            t_res_fe: f64::INFINITY,
            t_res_de: 0.0,
            t_res_rfe: 0.0,
            t_res_rde: 0.0,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"t_res_fe\":null"));
        assert_eq!(serde_json::from_str::<StepReport>(&text).unwrap(), r);
    }
}
