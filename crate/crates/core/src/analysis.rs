//! Estimators for diffusion, localization length and break time.
//!
//! Diffusion convention: `B = <(m - m0)^2> / (2 t)`, so a second moment growing
//! by `k^2 / 2` per kick of period `tau` gives `B = k^2 / (4 tau)`.

use serde::Serialize;

use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::rotor::leakage_band_width;
use crate::state::ProbabilityDistribution;

/// Human-readable statement of the diffusion convention, embedded in outputs.
pub const DIFFUSION_CONVENTION: &str = "B = <dm^2>/(2t)";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub estimate: f64,
    pub std_error: f64,
    /// Half-open index range `[start, end)` of the data used. For the
    /// localization fit the indices are distances `|m - m0|`.
    pub window: (usize, usize),
    /// Coefficient of determination for regressions.
    pub goodness: f64,
    /// Why the estimate should not be trusted, if it should not.
    pub flag: Option<String>,
}

impl FitResult {
    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
}

/// Weighted least-squares line `y = a + b x`. The slope error is scaled by
/// the weighted residual variance, so it is zero for data on a line.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || w.len() != n {
        return Err(Error::Fit(format!("line fit needs >= 3 matched points, got {n}")));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::Fit("weights sum to zero".into()));
    }
    let xm = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - xm;
        let dy = y[i] - ym;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = (0..n)
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 0.0 };
    // Normalized weights so the residual variance has the right scale.
    let scale = n as f64 / sw;
    let slope_std_error = ((ss_res * scale / (n as f64 - 2.0)) / (sxx * scale)).max(0.0).sqrt();
    Ok(LineFit {
        intercept,
        slope,
        slope_std_error,
        r_squared,
    })
}

fn energy_of(result: &EnsembleResult) -> Result<&crate::Series> {
    result
        .energy
        .as_ref()
        .ok_or_else(|| Error::Fit("result carries no energy series".into()))
}

/// Fits `<(m - m0)^2>` against `t`, skipping `t <= 2 tau`, and returns
/// `B = slope / 2`.
///
/// Points are weighted by `1 / err^2` when every error is positive and
/// uniformly otherwise.
pub fn diffusion_fit(result: &EnsembleResult, tau: f64) -> Result<FitResult> {
    let energy = energy_of(result)?;
    if result.times.len() < 10 {
        return Err(Error::Fit(format!(
            "diffusion fit needs >= 10 time points, got {}",
            result.times.len()
        )));
    }
    let start = result
        .times
        .iter()
        .position(|&t| t > 2.0 * tau * (1.0 + 1e-12))
        .ok_or_else(|| Error::Fit("no points beyond the first two kicks".into()))?;
    let end = result.times.len();
    let x = &result.times[start..end];
    let y = &energy.mean[start..end];
    let errs = &energy.err[start..end];
    let w: Vec<f64> = if errs.iter().all(|&e| e > 0.0) {
        errs.iter().map(|e| 1.0 / (e * e)).collect()
    } else {
        vec![1.0; x.len()]
    };
    let fit = weighted_line_fit(x, y, &w)?;
    let estimate = fit.slope / 2.0;
    if !estimate.is_finite() {
        return Err(Error::Fit("non-finite diffusion slope".into()));
    }
    Ok(FitResult {
        estimate,
        std_error: fit.slope_std_error / 2.0,
        window: (start, end),
        goodness: fit.r_squared,
        flag: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalizationOptions {
    /// Fraction of the usable tail nearest `m0` that is left out.
    pub central_exclusion: f64,
    /// Bins below `floor_factor` times the edge (leakage) level are dropped.
    pub floor_factor: f64,
    pub min_tail_bins: usize,
    pub r2_floor: f64,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self {
            central_exclusion: 0.2,
            floor_factor: 10.0,
            min_tail_bins: 20,
            r2_floor: 0.8,
        }
    }
}

/// Fits `P_m ~ exp(-2 |m - m0| / lambda)` and returns `lambda`.
pub fn localization_fit(profile: &ProbabilityDistribution, m0: i64) -> Result<FitResult> {
    localization_fit_with(profile, m0, &LocalizationOptions::default())
}

fn profile_index(profile: &ProbabilityDistribution, m0: i64) -> Result<usize> {
    let first = profile.basis_offset();
    let last = first + profile.probabilities().len() as i64 - 1;
    if m0 < first || m0 > last {
        return Err(Error::LabelOutOfRange { label: m0, first, last });
    }
    Ok((m0 - first) as usize)
}

pub fn localization_fit_with(
    profile: &ProbabilityDistribution,
    m0: i64,
    opts: &LocalizationOptions,
) -> Result<FitResult> {
    let probs = profile.probabilities();
    let len = probs.len();
    if len < 5 {
        return Err(Error::Fit("profile too short for a localization fit".into()));
    }
    let band = leakage_band_width(len).min(len / 2);
    let edge: f64 = probs[..band].iter().chain(&probs[len - band..]).sum::<f64>() / (2 * band) as f64;
    let cutoff = (opts.floor_factor * edge).max(f64::MIN_POSITIVE);

    // (distance, ln P, side) of tail bins. Each side runs outward from m0 and
    // stops at the first bin at or below `min_p`, so isolated round-off bins
    // beyond the decaying tail are not picked up.
    let i0 = profile_index(profile, m0)?;
    let tail = |min_p: f64| -> Vec<(usize, f64, bool)> {
        let mut out = Vec::new();
        for d in 1..=i0 {
            match probs[i0 - d] {
                p if p > min_p => out.push((d, p.ln(), false)),
                _ => break,
            }
        }
        for d in 1..len - i0 {
            match probs[i0 + d] {
                p if p > min_p => out.push((d, p.ln(), true)),
                _ => break,
            }
        }
        out
    };
    let per_side = |bins: &[(usize, f64, bool)]| {
        let right = bins.iter().filter(|b| b.2).count();
        (bins.len() - right, right)
    };

    let mut flags = Vec::new();
    let mut bins = tail(cutoff);
    let (l, r) = per_side(&bins);
    if l < opts.min_tail_bins || r < opts.min_tail_bins {
        flags.push(format!(
            "fewer than {} bins per side above the noise floor {:.3e}",
            opts.min_tail_bins, cutoff
        ));
        bins = tail(0.0);
    }
    let d_max = bins.iter().map(|b| b.0).max().unwrap_or(0);
    let d_min = ((opts.central_exclusion * d_max as f64).ceil() as usize).max(1);
    bins.retain(|b| b.0 >= d_min);
    if bins.len() < 3 {
        return Err(Error::Fit("fewer than 3 usable tail bins".into()));
    }
    let x: Vec<f64> = bins.iter().map(|b| b.0 as f64).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.1).collect();
    let fit = weighted_line_fit(&x, &y, &vec![1.0; x.len()])?;

    if !(fit.slope < 0.0) {
        flags.push("profile does not decay away from m0".into());
    }
    if fit.r_squared < opts.r2_floor {
        flags.push(format!(
            "exponential fit R^2 = {:.3} below {}",
            fit.r_squared, opts.r2_floor
        ));
    }
    let estimate = -2.0 / fit.slope;
    let std_error = 2.0 * fit.slope_std_error / (fit.slope * fit.slope);
    Ok(FitResult {
        estimate,
        std_error,
        window: (d_min, d_max + 1),
        goodness: fit.r_squared,
        flag: (!flags.is_empty()).then(|| flags.join("; ")),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BreakTimeOptions {
    /// Trailing fraction of the run averaged for the saturated energy.
    pub plateau_fraction: f64,
    /// Growth counts as saturated when the plateau slope is below this
    /// fraction of the initial slope.
    pub saturation_ratio: f64,
}

impl Default for BreakTimeOptions {
    fn default() -> Self {
        Self {
            plateau_fraction: 0.25,
            saturation_ratio: 0.2,
        }
    }
}

pub fn break_time_estimate(result: &EnsembleResult, b_classical: f64) -> Result<FitResult> {
    break_time_estimate_with(result, b_classical, &BreakTimeOptions::default())
}

/// Time at which classical diffusion `2 B t` reaches the saturated energy,
/// `t* = E_sat / (2 B)`, with `E_sat` the mean energy over the plateau window.
/// `goodness` is `1 - plateau slope / initial slope`.
pub fn break_time_estimate_with(
    result: &EnsembleResult,
    b_classical: f64,
    opts: &BreakTimeOptions,
) -> Result<FitResult> {
    let energy = &energy_of(result)?.mean;
    let t = &result.times;
    let n = t.len();
    if n < 8 {
        return Err(Error::Fit(format!("break-time estimate needs >= 8 points, got {n}")));
    }
    if !(b_classical > 0.0) {
        return Err(Error::Fit("classical diffusion coefficient must be > 0".into()));
    }
    if !(opts.plateau_fraction > 0.0 && opts.plateau_fraction < 1.0) {
        return Err(Error::Fit("plateau fraction must be in (0, 1)".into()));
    }
    let unit = vec![1.0; n];
    let head = (n / 10).max(3);
    let tail = ((opts.plateau_fraction * n as f64).round() as usize).clamp(3, n - head);
    let initial = weighted_line_fit(&t[..head], &energy[..head], &unit[..head])?.slope;
    let last = weighted_line_fit(&t[n - tail..], &energy[n - tail..], &unit[..tail])?.slope;
    let goodness = if initial != 0.0 { 1.0 - last / initial } else { 0.0 };

    let plateau = &energy[n - tail..];
    let mean = plateau.iter().sum::<f64>() / tail as f64;
    let var = plateau.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (tail - 1) as f64;
    let scale = 1.0 / (2.0 * b_classical);

    let flag = (!(last < opts.saturation_ratio * initial)).then(|| {
        format!("no saturation: plateau slope {last:.4} vs initial {initial:.4}; estimate is a lower bound")
    });
    Ok(FitResult {
        estimate: mean * scale,
        std_error: (var / tail as f64).sqrt() * scale,
        window: (n - tail, n),
        goodness,
        flag,
    })
}
