//! Resonantly driven two-state system observed every `tau`.
//!
//! Between observations the amplitudes evolve by
//! `A = [[cos phi, i sin phi], [i sin phi, cos phi]]` with `phi = Omega tau / 2`.
//! Observation randomizes the phases, so the populations evolve by the doubly
//! stochastic `M = [[cos^2 phi, sin^2 phi], [sin^2 phi, cos^2 phi]]`.
//! Labels 0 and 1 are the two basis states.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{reduce_realizations, EnsembleResult, Moments, Series};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{self, LabelSet, StateVector};

pub type ComplexMatrix2 = [[Complex64; 2]; 2];
pub type RealMatrix2 = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoLevelMode {
    #[default]
    Analytic,
    DephasingMc,
    CollapseMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelConfig {
    /// Rabi frequency `Omega` (1/time).
    pub rabi_frequency: f64,
    /// Time between observations `tau`.
    pub measurement_interval: f64,
    pub n_steps: u64,
    #[serde(default)]
    pub initial_state: u8,
    #[serde(default)]
    pub mode: TwoLevelMode,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    /// Reserved; only resonant driving (0) is supported.
    #[serde(default)]
    pub detuning: f64,
}

fn default_realizations() -> usize {
    1
}

impl TwoLevelConfig {
    pub fn phi(&self) -> f64 {
        0.5 * self.rabi_frequency * self.measurement_interval
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_frequency > 0.0 && self.rabi_frequency.is_finite()) {
            return Err(Error::config(format!(
                "two_level.rabi_frequency must be > 0, got {}",
                self.rabi_frequency
            )));
        }
        if !(self.measurement_interval > 0.0 && self.measurement_interval.is_finite()) {
            return Err(Error::config(format!(
                "two_level.measurement_interval must be > 0, got {}",
                self.measurement_interval
            )));
        }
        if self.n_steps < 1 {
            return Err(Error::config("two_level.n_steps must be >= 1"));
        }
        if self.initial_state > 1 {
            return Err(Error::config(format!(
                "two_level.initial_state must be 0 or 1, got {}",
                self.initial_state
            )));
        }
        if self.mode != TwoLevelMode::Analytic && self.n_realizations < 1 {
            return Err(Error::config(
                "two_level.n_realizations must be >= 1 in Monte-Carlo modes",
            ));
        }
        if self.detuning != 0.0 {
            return Err(Error::config(
                "two_level.detuning is reserved; only resonant driving (detuning = 0) is implemented",
            ));
        }
        Ok(())
    }
}

pub fn coherent_step_matrix(phi: f64) -> ComplexMatrix2 {
    let (s, c) = phi.sin_cos();
    let diag = Complex64::new(c, 0.0);
    let off = Complex64::new(0.0, s);
    [[diag, off], [off, diag]]
}

/// `A^n`, which is `A` with angle `n phi`.
pub fn coherent_power(phi: f64, n: u64) -> ComplexMatrix2 {
    coherent_step_matrix(n as f64 * phi)
}

pub fn measured_step_matrix(phi: f64) -> RealMatrix2 {
    let (s, c) = phi.sin_cos();
    let (c2, s2) = (c * c, s * s);
    [[c2, s2], [s2, c2]]
}

/// `M^n = 1/2 [[1 + cos^n 2phi, 1 - cos^n 2phi], [1 - cos^n 2phi, 1 + cos^n 2phi]]`.
pub fn measured_power(phi: f64, n: u64) -> RealMatrix2 {
    if n == 0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    if n == 1 {
        return measured_step_matrix(phi);
    }
    let contraction = pow_u64((2.0 * phi).cos(), n);
    let stay = 0.5 * (1.0 + contraction);
    let leave = 0.5 * (1.0 - contraction);
    [[stay, leave], [leave, stay]]
}

fn pow_u64(x: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

pub fn apply_complex(m: &ComplexMatrix2, v: [Complex64; 2]) -> [Complex64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn apply_real(m: &RealMatrix2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Populations at `t = k tau`, `k = 0..=n`.
///
/// Observations happen at the `n - 1` intermediate instants; the reported
/// populations at each instant are those just before it is observed.
/// Monte-Carlo modes use one [`RngStream::realization`] child per trajectory.
pub fn run_two_level(config: &TwoLevelConfig, rng: &RngStream) -> Result<EnsembleResult> {
    config.validate()?;
    let n = config.n_steps;
    let phi = config.phi();
    let times: Vec<f64> = (0..=n)
        .map(|k| k as f64 * config.measurement_interval)
        .collect();
    let steps: Vec<u64> = (0..=n).collect();
    let p0 = if config.initial_state == 0 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };

    let (populations, n_realizations) = match config.mode {
        TwoLevelMode::Analytic => {
            let (mut p1, mut p2) = (Vec::new(), Vec::new());
            for k in 0..=n {
                let p = apply_real(&measured_power(phi, k), p0);
                p1.push(p[0]);
                p2.push(p[1]);
            }
            (vec![Series::exact(p1), Series::exact(p2)], 1)
        }
        mode => {
            let width = 2 * (n as usize + 1);
            let moments = reduce_realizations(
                config.n_realizations,
                || Moments::new(width),
                |i, acc| {
                    let traj = trajectory(config, mode, &rng.realization(i as u64))?;
                    acc.push(&traj);
                    Ok::<(), Error>(())
                },
                |total, chunk| total.merge(&chunk),
            )?;
            let mean = moments.mean();
            let err = moments.std_error();
            let cut = n as usize + 1;
            let series = vec![
                Series {
                    mean: mean[..cut].to_vec(),
                    err: err[..cut].to_vec(),
                },
                Series {
                    mean: mean[cut..].to_vec(),
                    err: err[cut..].to_vec(),
                },
            ];
            (series, config.n_realizations)
        }
    };

    Ok(EnsembleResult {
        times,
        steps,
        populations,
        reference_label: config.initial_state as i64,
        n_realizations,
        ..Default::default()
    })
}

/// One trajectory, laid out as `[p1(0..=n), p2(0..=n)]`.
fn trajectory(config: &TwoLevelConfig, mode: TwoLevelMode, stream: &RngStream) -> Result<Vec<f64>> {
    let n = config.n_steps as usize;
    let a = coherent_step_matrix(config.phi());
    let mut gen = stream.generator();
    let mut psi = StateVector::basis_state(config.initial_state as i64, 0, 2)?;
    let mut out = vec![0.0; 2 * (n + 1)];
    for k in 0..=n {
        let amps = psi.amplitudes();
        out[k] = amps[0].norm_sqr();
        out[n + 1 + k] = amps[1].norm_sqr();
        if k == n {
            break;
        }
        if k > 0 {
            match mode {
                TwoLevelMode::DephasingMc => {
                    state::randomize_phases(&mut psi, &LabelSet::All, &mut gen)?
                }
                TwoLevelMode::CollapseMc => {
                    let label = state::sample_projection(&state::probabilities(&psi), &mut gen);
                    state::collapse_onto(&mut psi, label)?;
                }
                TwoLevelMode::Analytic => unreachable!(),
            }
        }
        let amps = psi.amplitudes_mut();
        let next = apply_complex(&a, [amps[0], amps[1]]);
        amps[0] = next[0];
        amps[1] = next[1];
    }
    Ok(out)
}
