//! Exponential and power-law fits of energy series, and run classification.
//!
//! A finite-dimensional dissipative system always decays exponentially in
//! the end, so power-law behaviour can only show up as a transient. Every
//! fit therefore carries the window it was computed on.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::{write_csv_comment, Provenance};

/// Samples at or below `FLOOR_FRACTION * E(0)` are treated as round-off.
pub const FLOOR_FRACTION: f64 = 1e-28;
pub const MIN_SAMPLES: usize = 10;
/// Relative tolerance on the local log-slope used to locate the gap time.
pub const GAP_SLOPE_TOL: f64 = 0.05;

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ss_res: f64,
    pub ss_tot: f64,
}

/// Centered two-pass least squares. With zero variance in `y`, `r_squared` is 0.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Line {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut ss_tot) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        ss_tot += (y - my) * (y - my);
    }
    if ys.iter().all(|&y| y == ys[0]) {
        ss_tot = 0.0;
        sxy = 0.0;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Line {
        slope,
        intercept,
        r_squared,
        ss_res,
        ss_tot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Exponential,
    Polynomial,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Amplitude rate `L` (energy behaves like `exp(-2 L t)`) or power `p` (energy like `t^-p`).
    pub rate: f64,
    pub log_intercept: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
    /// Set when `log E` is constant on the window and `r_squared` is meaningless.
    pub zero_variance: bool,
    pub samples: usize,
    /// `log E` minus the fitted line, sample by sample.
    pub residuals: Vec<f64>,
}

impl DecayFit {
    /// Columns `x,log_residual` where `x` is `t` or `log t` depending on the model.
    pub fn write_residuals_csv<W: Write>(&self, xs: &[f64], mut w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
        write_csv_comment(&mut w, prov)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "log_residual"])?;
        for (t, r) in xs.iter().zip(&self.residuals) {
            wr.write_record(&[format!("{t:e}"), format!("{r:e}")])?;
        }
        wr.flush()
    }
}

/// Samples of `(times, energies)` inside `window` and above the round-off floor.
fn windowed(times: &[f64], energies: &[f64], window: [f64; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != energies.len() {
        return Err(Error::ShapeMismatch {
            what: "energy series",
            expected: times.len(),
            actual: energies.len(),
        });
    }
    let [t0, t1] = window;
    if !(t0 < t1) {
        return Err(Error::Fit(format!("empty fit window [{t0}, {t1}]")));
    }
    let e0 = *energies.first().ok_or_else(|| Error::Fit("empty series".into()))?;
    if !(e0 > 0.0) {
        return Err(Error::Fit(format!("initial energy {e0} is not positive")));
    }
    let floor = FLOOR_FRACTION * e0;
    let cutoff = energies
        .iter()
        .position(|&e| e > 0.0 && e <= floor)
        .unwrap_or(energies.len());
    let mut ts = Vec::new();
    let mut es = Vec::new();
    for k in 0..cutoff {
        let t = times[k];
        if t >= t0 && t <= t1 {
            let e = energies[k];
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Fit(format!("nonpositive energy {e} at t = {t}")));
            }
            ts.push(t);
            es.push(e.ln());
        }
    }
    if ts.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_SAMPLES} samples above the floor in [{t0}, {t1}], got {}",
            ts.len()
        )));
    }
    Ok((ts, es))
}

fn build_fit(model: DecayModel, xs: &[f64], ys: &[f64], window: [f64; 2], to_rate: impl Fn(f64) -> f64) -> DecayFit {
    let line = least_squares(xs, ys);
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - line.intercept - line.slope * x)
        .collect();
    DecayFit {
        model,
        rate: to_rate(line.slope),
        log_intercept: line.intercept,
        window,
        r_squared: line.r_squared,
        zero_variance: line.ss_tot == 0.0,
        samples: xs.len(),
        residuals,
    }
}

/// Least squares on `log E` against `t`; `L = -slope / 2`.
pub fn fit_exponential(times: &[f64], energies: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let (ts, ls) = windowed(times, energies, window)?;
    Ok(build_fit(DecayModel::Exponential, &ts, &ls, window, |s| -s / 2.0))
}

/// Least squares on `log E` against `log t`; `p = -slope`. Requires `t0 >= 1`.
pub fn fit_polynomial(times: &[f64], energies: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    if window[0] < 1.0 {
        return Err(Error::Fit(format!("power-law window must start at t >= 1, got {}", window[0])));
    }
    let (ts, ls) = windowed(times, energies, window)?;
    let logs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    Ok(build_fit(DecayModel::Polynomial, &logs, &ls, window, |s| -s))
}

/// Default exponential window `[0.1 T, 0.9 T]`.
pub fn default_exponential_window(horizon: f64) -> [f64; 2] {
    [0.1 * horizon, 0.9 * horizon]
}

/// Default power-law window `[max(1, 0.05 T), t_gap]`, with the gap time
/// replaced by `T` when it cannot be located.
pub fn default_polynomial_window(times: &[f64], energies: &[f64]) -> [f64; 2] {
    let horizon = times.last().copied().unwrap_or(0.0);
    let t0 = (0.05 * horizon).max(1.0);
    let t1 = gap_time(times, energies).unwrap_or(horizon).max(t0);
    [t0, t1]
}

/// Time after which the local slope of `log E` stays within 5% of its
/// terminal value. Slopes use a sliding window of a tenth of the series.
pub fn gap_time(times: &[f64], energies: &[f64]) -> Option<f64> {
    let e0 = *energies.first()?;
    let cutoff = energies
        .iter()
        .position(|&e| e <= FLOOR_FRACTION * e0 || !(e > 0.0))
        .unwrap_or(energies.len());
    let n = cutoff.min(times.len());
    let half = (n / 20).max(2);
    if n < 2 * half + 3 {
        return None;
    }
    let logs: Vec<f64> = energies[..n].iter().map(|e| e.ln()).collect();
    let slopes: Vec<(f64, f64)> = (half..n - half)
        .map(|k| {
            let line = least_squares(&times[k - half..=k + half], &logs[k - half..=k + half]);
            (times[k], line.slope)
        })
        .collect();
    let terminal = slopes.last()?.1;
    if terminal == 0.0 {
        return None;
    }
    let mut start = slopes.len() - 1;
    while start > 0 && ((slopes[start - 1].1 - terminal) / terminal).abs() <= GAP_SLOPE_TOL {
        start -= 1;
    }
    Some(slopes[start].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Exponential,
    Polynomial,
    Undecided,
    Conserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// Below this relative energy drop the run counts as conserved.
    pub conserved_drop: f64,
    pub min_r_squared: f64,
    pub margin: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self {
            conserved_drop: 1e-6,
            min_r_squared: 0.99,
            margin: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub class: Classification,
    pub relative_drop: f64,
    pub window: Option<[f64; 2]>,
    pub exponential: Option<DecayFit>,
    pub polynomial: Option<DecayFit>,
}

/// Both models are fitted on the common window `[max(1, 0.1 T), 0.9 T]`.
pub fn classify(times: &[f64], energies: &[f64], th: &ClassifyThresholds) -> Result<ClassifyReport> {
    if times.len() < MIN_SAMPLES || energies.len() != times.len() {
        return Err(Error::Fit(format!(
            "classification needs at least {MIN_SAMPLES} samples, got {}",
            times.len().min(energies.len())
        )));
    }
    let e0 = energies[0];
    let emin = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let relative_drop = if e0 > 0.0 { (e0 - emin) / e0 } else { 0.0 };
    if e0 <= 0.0 || relative_drop < th.conserved_drop {
        return Ok(ClassifyReport {
            class: Classification::Conserved,
            relative_drop,
            window: None,
            exponential: None,
            polynomial: None,
        });
    }
    let horizon = *times.last().unwrap_or(&0.0);
    let window = [(0.1 * horizon).max(1.0), 0.9 * horizon];
    let exp = fit_exponential(times, energies, window).ok();
    let poly = fit_polynomial(times, energies, window).ok();
    let r = |f: &Option<DecayFit>| f.as_ref().map(|f| f.r_squared).unwrap_or(f64::NEG_INFINITY);
    let (re, rp) = (r(&exp), r(&poly));
    let class = if re >= rp && re >= th.min_r_squared && re - rp >= th.margin {
        Classification::Exponential
    } else if rp > re && rp >= th.min_r_squared && rp - re >= th.margin {
        Classification::Polynomial
    } else {
        Classification::Undecided
    };
    Ok(ClassifyReport {
        class,
        relative_drop,
        window: Some(window),
        exponential: exp,
        polynomial: poly,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolutionComparison {
    pub window: [f64; 2],
    pub coarse: DecayFit,
    pub fine: DecayFit,
    pub difference: f64,
    pub agree: bool,
}

/// Power-law fits of two runs on the intersection of their default windows.
pub fn compare_polynomial(
    coarse: (&[f64], &[f64]),
    fine: (&[f64], &[f64]),
    tolerance: f64,
) -> Result<ResolutionComparison> {
    let wa = default_polynomial_window(coarse.0, coarse.1);
    let wb = default_polynomial_window(fine.0, fine.1);
    let window = [wa[0].max(wb[0]), wa[1].min(wb[1])];
    if !(window[0] < window[1]) {
        return Err(Error::Fit(format!("no shared window between {wa:?} and {wb:?}")));
    }
    let a = fit_polynomial(coarse.0, coarse.1, window)?;
    let b = fit_polynomial(fine.0, fine.1, window)?;
    let difference = (a.rate - b.rate).abs();
    Ok(ResolutionComparison {
        window,
        difference,
        agree: difference <= tolerance,
        coarse: a,
        fine: b,
    })
}
