//! CSV exchange of sample streams, truth tracks and estimate frames.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sac::EstimateFrame;
use crate::scenarios::GeneratedScenario;
use crate::signal_model::{abc_to_dq, SampleStream, SystemConfig};

pub const FRAME_COLUMNS: [&str; 9] = [
    "t_s",
    "amp_pu",
    "phase_rad",
    "freq_hz",
    "rocof_hz_s",
    "damping_1_s",
    "rocod_1_s2",
    "iterations",
    "adapted",
];

/// Writes `t_s, re, im` followed by the truth columns.
pub fn write_scenario_csv<W: Write>(out: W, g: &GeneratedScenario, cfg: &SystemConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t_s",
        "re",
        "im",
        "amp_pu",
        "phase_rad",
        "freq_hz",
        "rocof_hz_s",
        "damping_1_s",
        "rocod_1_s2",
    ])?;
    let tau = std::f64::consts::TAU;
    for (i, (y, p)) in g.stream.samples.iter().zip(&g.truth.points).enumerate() {
        let n = g.stream.start_index + i as i64;
        w.serialize((
            n as f64 * cfg.sample_period,
            y.re,
            y.im,
            p.amplitude,
            p.phase,
            cfg.f0 + p.freq / tau,
            p.rocof / tau,
            p.damping,
            p.rocod,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads baseband (`re`, `im`) or three-phase (`ya`, `yb`, `yc`) samples.
/// A `t_s` column, when present, fixes the absolute index of the first row;
/// three-phase rows are demodulated at their absolute index.
pub fn read_samples_csv<R: Read>(input: R, cfg: &SystemConfig) -> Result<SampleStream> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let t_col = col("t_s");
    enum Layout {
        Complex(usize, usize),
        Phases(usize, usize, usize),
    }
    let layout = match (col("re"), col("im"), col("ya"), col("yb"), col("yc")) {
        (Some(re), Some(im), ..) => Layout::Complex(re, im),
        (_, _, Some(a), Some(b), Some(c)) => Layout::Phases(a, b, c),
        _ => return Err(Error::Input("expected columns re,im or ya,yb,yc".into())),
    };

    let mut samples = Vec::new();
    let mut start = 0i64;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("row {}: non-numeric field {field:?}", row + 1)))
        };
        if row == 0 {
            if let Some(t) = t_col {
                start = (num(t)? / cfg.sample_period).round() as i64;
            }
        }
        let n = start + row as i64;
        let y = match layout {
            Layout::Complex(re, im) => Complex64::new(num(re)?, num(im)?),
            Layout::Phases(a, b, c) => abc_to_dq(num(a)?, num(b)?, num(c)?, n, cfg),
        };
        samples.push(y);
    }
    Ok(SampleStream::new(samples, start))
}

pub fn write_frames_csv<W: Write>(out: W, frames: &[EstimateFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRAME_COLUMNS)?;
    for f in frames {
        w.serialize((
            f.time_s,
            f.amplitude(),
            f.phase(),
            f.freq_hz(),
            f.rocof_hz_s(),
            f.damping,
            f.rocod,
            f.iterations,
            u8::from(f.adapted_filters),
        ))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{generate, ScenarioId, ScenarioSpec};

    #[test]
    fn scenario_csv_reads_back() {
        let cfg = SystemConfig::default();
        let g = generate(&ScenarioSpec::new(ScenarioId::B2).with_duration(0.05), &cfg).unwrap();
        let mut buf = Vec::new();
        write_scenario_csv(&mut buf, &g, &cfg).unwrap();
        let s = read_samples_csv(buf.as_slice(), &cfg).unwrap();
        assert_eq!(s.start_index, 0);
        assert_eq!(s.len(), g.stream.len());
        for (a, b) in s.samples.iter().zip(&g.stream.samples) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn three_phase_rows_demodulate() {
        let cfg = SystemConfig::default();
        let w = cfg.omega0() * cfg.sample_period;
        let mut text = String::from("t_s,ya,yb,yc\n");
        for n in 10..20 {
            let th = w * n as f64;
            let tp = std::f64::consts::TAU / 3.0;
            text += &format!("{},{},{},{}\n", n as f64 * cfg.sample_period, th.cos(), (th - tp).cos(), (th + tp).cos());
        }
        let s = read_samples_csv(text.as_bytes(), &cfg).unwrap();
        assert_eq!(s.start_index, 10);
        for y in &s.samples {
            assert!((y - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn missing_columns_rejected() {
        let cfg = SystemConfig::default();
        assert!(matches!(read_samples_csv("a,b\n1,2\n".as_bytes(), &cfg), Err(Error::Input(_))));
    }
}
