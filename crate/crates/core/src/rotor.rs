//! Kicked-rotor quantum map with phase-randomizing measurements.
//!
//! One period maps the amplitudes just before kick `j` to those before kick
//! `j + 1`:
//!
//! ```text
//! a_m <- exp(-i H0(m) tau) * sum_n a_n J_{m-n}(k)
//! ```
//!
//! in the action basis `i^{-m} e^{i m theta} / sqrt(2 pi)`. When the schedule
//! calls for it, the measured amplitudes get random phases just before the
//! kick.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bessel::{self, BesselKernel};
use crate::ensemble::{reduce_realizations, EnsembleResult, Moments};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{self, LabelSet, ProbabilityDistribution, StateVector};

/// Spread constant `c` of the basis guard band
/// `basis_size >= 2 (c k sqrt(n_kicks) + k) + 1`.
///
/// Under full measurement the cloud has standard deviation `k sqrt(n / 2)`,
/// so `c = 6` leaves more than eight standard deviations on each side.
pub const GUARD_SPREAD: f64 = 6.0;

/// Fraction of the basis (split between both edges) watched for leakage.
pub const LEAKAGE_BAND: f64 = 0.05;

/// Default leakage probability above which a warning is recorded.
pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    BesselDirect,
    #[default]
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSchedule {
    /// Measure before every `N`-th kick (`j % N == 0`, `j > 0`); `None` never measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_n_kicks: Option<u64>,
    #[serde(default)]
    pub measured_labels: LabelSet,
}

impl MeasurementSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn every(n: u64, labels: LabelSet) -> Self {
        Self {
            every_n_kicks: Some(n),
            measured_labels: labels,
        }
    }

    /// Whether a measurement precedes kick `j` (0-based).
    pub fn measures_before(&self, j: u64) -> bool {
        match self.every_n_kicks {
            Some(n) => j > 0 && j % n == 0 && !self.measured_labels.is_empty(),
            None => false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.every_n_kicks.is_some() && !self.measured_labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorConfig {
    pub kick_strength: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    /// Coefficients of `H0(I) = sum_p c_p I^p`, lowest order first.
    #[serde(default = "default_h0")]
    pub h0: Vec<f64>,
    pub n_kicks: u64,
    /// Odd number of basis states centred on `initial_state`. Derived from the
    /// guard-band rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_size: Option<usize>,
    /// Accept a basis smaller than the guard-band rule; leakage is still monitored.
    #[serde(default)]
    pub allow_small_basis: bool,
    #[serde(default)]
    pub initial_state: i64,
    #[serde(default)]
    pub schedule: MeasurementSchedule,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "default_leakage_threshold")]
    pub leakage_threshold: f64,
}

fn default_period() -> f64 {
    1.0
}

fn default_h0() -> Vec<f64> {
    vec![0.0, 0.0, 0.5]
}

fn default_realizations() -> usize {
    1
}

fn default_leakage_threshold() -> f64 {
    DEFAULT_LEAKAGE_THRESHOLD
}

impl RotorConfig {
    /// Standard rotor `H0 = I^2 / 2`, no measurement, one realization.
    pub fn new(kick_strength: f64, period: f64, n_kicks: u64) -> Self {
        Self {
            kick_strength,
            period,
            h0: default_h0(),
            n_kicks,
            basis_size: None,
            allow_small_basis: false,
            initial_state: 0,
            schedule: MeasurementSchedule::none(),
            n_realizations: 1,
            kernel: KernelKind::default(),
            leakage_threshold: DEFAULT_LEAKAGE_THRESHOLD,
        }
    }

    /// Smallest odd basis that satisfies the guard-band rule.
    pub fn required_basis_size(&self) -> usize {
        let k = self.kick_strength.abs();
        let half = (GUARD_SPREAD * k * (self.n_kicks as f64).sqrt() + k).ceil() as usize;
        (2 * half + 1).max(3)
    }

    pub fn resolved_basis_size(&self) -> usize {
        self.basis_size.unwrap_or_else(|| self.required_basis_size())
    }

    /// Label of the first stored basis state.
    pub fn basis_offset(&self) -> i64 {
        self.initial_state - (self.resolved_basis_size() / 2) as i64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kick_strength >= 0.0 && self.kick_strength.is_finite()) {
            return Err(Error::config(format!(
                "rotor.kick_strength must be finite and >= 0, got {}",
                self.kick_strength
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::config(format!("rotor.period must be > 0, got {}", self.period)));
        }
        if self.h0.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("rotor.h0 coefficients must be finite"));
        }
        if self.n_kicks < 1 {
            return Err(Error::config("rotor.n_kicks must be >= 1"));
        }
        if self.n_realizations < 1 {
            return Err(Error::config("rotor.n_realizations must be >= 1"));
        }
        if self.schedule.every_n_kicks == Some(0) {
            return Err(Error::config(
                "rotor.schedule.every_n_kicks must be >= 1 (omit it to disable measurement)",
            ));
        }
        if !(self.leakage_threshold >= 0.0) {
            return Err(Error::config("rotor.leakage_threshold must be >= 0"));
        }
        if let Some(size) = self.basis_size {
            if size % 2 == 0 {
                return Err(Error::config(format!(
                    "rotor.basis_size must be odd so the basis is centred on initial_state; \
                     use {} or {}",
                    size - 1,
                    size + 1
                )));
            }
            if size < 3 {
                return Err(Error::config("rotor.basis_size must be >= 3"));
            }
            let required = self.required_basis_size();
            if size < required && !self.allow_small_basis {
                return Err(Error::config(format!(
                    "rotor.basis_size = {size} is below the guard-band minimum {required} \
                     for k = {} and {} kicks; raise it or set allow_small_basis = true",
                    self.kick_strength, self.n_kicks
                )));
            }
        }
        if let LabelSet::Only(labels) = &self.schedule.measured_labels {
            let first = self.basis_offset();
            let last = first + self.resolved_basis_size() as i64 - 1;
            if let Some(&bad) = labels.iter().find(|&&m| m < first || m > last) {
                return Err(Error::LabelOutOfRange { label: bad, first, last });
            }
        }
        Ok(())
    }

    pub fn h0(&self, m: i64) -> f64 {
        let x = m as f64;
        self.h0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Whether the randomness of the run requires more than one realization.
    pub fn is_stochastic(&self) -> bool {
        self.schedule.is_active()
    }

    /// A rational `tau / 4 pi = p / q` with `q <= 8`, if any: the quadratic
    /// rotor is then at (or next to) a quantum resonance.
    pub fn resonance(&self) -> Option<(u64, u64)> {
        let r = self.period / (4.0 * std::f64::consts::PI);
        (1..=8u64).find_map(|q| {
            let p = (r * q as f64).round();
            ((r * q as f64 - p).abs() < 1e-9 * q as f64).then_some((p as u64, q))
        })
    }
}

/// Precomputed kick `a_m <- sum_n a_n J_{m-n}(k)` on a fixed-size basis.
///
/// Outputs outside the basis are dropped. Both kernels compute the same
/// truncated convolution.
#[derive(Clone)]
pub struct KickOperator {
    kind: KernelKind,
    len: usize,
    kernel: BesselKernel,
    spectral: Option<SpectralKick>,
}

#[derive(Clone)]
struct SpectralKick {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(-i k cos theta_j) / N` on the angle grid.
    phase: Vec<Complex64>,
    scratch_len: usize,
}

/// Scratch buffers for applying a [`KickOperator`].
#[derive(Clone, Debug, Default)]
pub struct KickWorkspace {
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl KickOperator {
    pub fn new(k: f64, len: usize, kind: KernelKind) -> Self {
        let w = bessel::kernel_half_width(k);
        let kernel = bessel::bessel_kernel(k, w);
        let spectral = (kind == KernelKind::Spectral).then(|| SpectralKick::new(k, len, w));
        Self {
            kind,
            len,
            kernel,
            spectral,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn kernel(&self) -> &BesselKernel {
        &self.kernel
    }

    pub fn workspace(&self) -> KickWorkspace {
        match &self.spectral {
            Some(s) => KickWorkspace {
                buffer: vec![Complex64::new(0.0, 0.0); s.phase.len()],
                scratch: vec![Complex64::new(0.0, 0.0); s.scratch_len],
            },
            None => KickWorkspace {
                buffer: vec![Complex64::new(0.0, 0.0); self.len],
                scratch: Vec::new(),
            },
        }
    }

    pub fn apply(&self, amps: &mut [Complex64], ws: &mut KickWorkspace) {
        assert_eq!(amps.len(), self.len, "kick operator built for a different basis size");
        match &self.spectral {
            Some(s) => s.apply(amps, ws),
            None => self.apply_direct(amps, ws),
        }
    }

    fn apply_direct(&self, amps: &mut [Complex64], ws: &mut KickWorkspace) {
        let n = self.len as i64;
        let w = self.kernel.half_width() as i64;
        let taps = self.kernel.values();
        let input = &mut ws.buffer;
        input.copy_from_slice(amps);
        for (i, out) in amps.iter_mut().enumerate() {
            let i = i as i64;
            // out_i = sum_d J_d in_{i-d}, with i - d inside the basis.
            let d_lo = (i - (n - 1)).max(-w);
            let d_hi = i.min(w);
            let mut acc = Complex64::new(0.0, 0.0);
            for d in d_lo..=d_hi {
                acc += input[(i - d) as usize] * taps[(d + w) as usize];
            }
            *out = acc;
        }
    }
}

impl SpectralKick {
    fn new(k: f64, len: usize, half_width: usize) -> Self {
        let size = fft_size(len + half_width + 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scale = 1.0 / size as f64;
        let phase = (0..size)
            .map(|j| {
                let theta = std::f64::consts::TAU * j as f64 / size as f64;
                Complex64::cis(-k * theta.cos()) * scale
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            phase,
            scratch_len,
        }
    }

    /// In the `i^{-m} e^{i m theta}` basis the kick is multiplication by
    /// `exp(-i k cos theta)`; the `i^{-m}` factors are applied on the way in
    /// and removed on the way out.
    fn apply(&self, amps: &mut [Complex64], ws: &mut KickWorkspace) {
        let buf = &mut ws.buffer;
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, (b, a)) in buf.iter_mut().zip(amps.iter()).enumerate() {
            *b = *a * i_pow(-(i as i64));
        }
        // psi(theta_j) = sum_m c_m e^{+i m theta_j}
        self.inverse.process_with_scratch(buf, &mut ws.scratch);
        for (b, p) in buf.iter_mut().zip(&self.phase) {
            *b *= p;
        }
        self.forward.process_with_scratch(buf, &mut ws.scratch);
        for (i, (a, b)) in amps.iter_mut().zip(buf.iter()).enumerate() {
            *a = *b * i_pow(i as i64);
        }
    }
}

/// `i^p`.
fn i_pow(p: i64) -> Complex64 {
    match p.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Smallest `2^a 3^b 5^c` that is `>= n`.
fn fft_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Applies the kick to a copy of `state`.
pub fn kick(state: &StateVector, k: f64, kind: KernelKind) -> Result<StateVector> {
    let op = KickOperator::new(k, state.len(), kind);
    let mut out = state.clone();
    op.apply(out.amplitudes_mut(), &mut op.workspace());
    check_finite(&out)?;
    Ok(out)
}

/// Multiplies each amplitude by `exp(-i H0(m) tau)`.
pub fn free_rotation(state: &StateVector, config: &RotorConfig) -> StateVector {
    let mut out = state.clone();
    let phases = rotation_phases(config, state.basis_offset(), state.len());
    for (a, p) in out.amplitudes_mut().iter_mut().zip(&phases) {
        *a *= p;
    }
    out
}

fn rotation_phases(config: &RotorConfig, offset: i64, len: usize) -> Vec<Complex64> {
    (0..len as i64)
        .map(|i| Complex64::cis(-config.h0(offset + i) * config.period))
        .collect()
}

fn check_finite(state: &StateVector) -> Result<()> {
    if state.amplitudes().iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::Numeric("non-finite amplitude after kick".into()));
    }
    Ok(())
}

/// Full one-period map for a fixed configuration.
pub struct Propagator {
    config: RotorConfig,
    kick: KickOperator,
    rotation: Vec<Complex64>,
    offset: i64,
}

impl Propagator {
    pub fn new(config: &RotorConfig) -> Result<Self> {
        config.validate()?;
        let len = config.resolved_basis_size();
        let offset = config.basis_offset();
        Ok(Self {
            config: config.clone(),
            kick: KickOperator::new(config.kick_strength, len, config.kernel),
            rotation: rotation_phases(config, offset, len),
            offset,
        })
    }

    pub fn basis_offset(&self) -> i64 {
        self.offset
    }

    pub fn basis_len(&self) -> usize {
        self.rotation.len()
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector::basis_state(self.config.initial_state, self.offset, self.basis_len())
            .expect("initial state lies at the centre of the basis")
    }

    pub fn workspace(&self) -> KickWorkspace {
        self.kick.workspace()
    }

    /// Measurement (if scheduled before kick `j`), kick, free rotation.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut StateVector,
        j: u64,
        rng: &mut R,
        ws: &mut KickWorkspace,
    ) -> Result<()> {
        if self.config.schedule.measures_before(j) {
            state::randomize_phases(state, &self.config.schedule.measured_labels, rng)?;
        }
        self.kick.apply(state.amplitudes_mut(), ws);
        for (a, p) in state.amplitudes_mut().iter_mut().zip(&self.rotation) {
            *a *= p;
        }
        check_finite(state)
    }
}

/// Convenience wrapper for a single step on an owned state.
pub fn step<R: Rng + ?Sized>(
    state: &StateVector,
    config: &RotorConfig,
    kick_index: u64,
    rng: &mut R,
) -> Result<StateVector> {
    let prop = Propagator::new(config)?;
    if state.len() != prop.basis_len() || state.basis_offset() != prop.basis_offset() {
        return Err(Error::Domain(format!(
            "state basis [{}, {}] does not match the configured basis",
            state.first_label(),
            state.last_label()
        )));
    }
    let mut out = state.clone();
    prop.step(&mut out, kick_index, rng, &mut prop.workspace())?;
    Ok(out)
}

/// Per-kick observables of one probability vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    /// `<(m - m0)^2>`
    pub energy: f64,
    /// `1 / sum P_m^2`
    pub participation: f64,
    /// Probability in the outer [`LEAKAGE_BAND`] of the basis.
    pub leakage: f64,
}

pub fn leakage_band_width(len: usize) -> usize {
    ((LEAKAGE_BAND * len as f64 / 2.0).ceil() as usize).max(1)
}

pub fn snapshot(state: &StateVector, m0: i64) -> Snapshot {
    let len = state.len();
    let band = leakage_band_width(len);
    let mut energy = 0.0;
    let mut ipr = 0.0;
    let mut leakage = 0.0;
    for (i, (a, m)) in state.amplitudes().iter().zip(state.labels()).enumerate() {
        let p = a.norm_sqr();
        let d = (m - m0) as f64;
        energy += d * d * p;
        ipr += p * p;
        if i < band || i >= len - band {
            leakage += p;
        }
    }
    Snapshot {
        energy,
        participation: if ipr > 0.0 { 1.0 / ipr } else { 0.0 },
        leakage,
    }
}

/// Number of final kicks whose profiles are averaged into the final profile.
pub fn profile_window(n_kicks: u64) -> u64 {
    (n_kicks / 4).max(1)
}

/// Evolves the ensemble and reports per-kick observables at `t = j tau`,
/// `j = 0..=n_kicks`, plus the profile averaged over the last quarter of kicks.
///
/// Runs without measurement are deterministic and use a single trajectory.
pub fn run_rotor(config: &RotorConfig, rng: &RngStream) -> Result<EnsembleResult> {
    let prop = Propagator::new(config)?;
    let n = config.n_kicks;
    let len = prop.basis_len();
    let m0 = config.initial_state;
    let n_realizations = if config.is_stochastic() {
        config.n_realizations
    } else {
        1
    };
    let width = 3 * (n as usize + 1);
    let window = profile_window(n);

    let (series, profile) = reduce_realizations(
        n_realizations,
        || (Moments::new(width), Moments::new(len)),
        |i, (obs, prof)| {
            let mut gen = rng.realization(i as u64).generator();
            let mut psi = prop.initial_state();
            let mut ws = prop.workspace();
            let mut row = vec![0.0; width];
            let mut avg = vec![0.0; len];
            for j in 0..=n {
                let s = snapshot(&psi, m0);
                let col = j as usize;
                row[col] = s.energy;
                row[n as usize + 1 + col] = s.participation;
                row[2 * (n as usize + 1) + col] = s.leakage;
                if j > n - window {
                    for (acc, a) in avg.iter_mut().zip(psi.amplitudes()) {
                        *acc += a.norm_sqr();
                    }
                }
                if j < n {
                    prop.step(&mut psi, j, &mut gen, &mut ws)?;
                }
            }
            let inv = 1.0 / window as f64;
            avg.iter_mut().for_each(|p| *p *= inv);
            obs.push(&row);
            prof.push(&avg);
            Ok::<(), Error>(())
        },
        |(obs, prof), (o, p)| {
            obs.merge(&o);
            prof.merge(&p);
        },
    )?;

    let cut = n as usize + 1;
    let mut all = series.into_series();
    let leakage = crate::Series {
        mean: all.mean.split_off(2 * cut),
        err: all.err.split_off(2 * cut),
    };
    let participation = crate::Series {
        mean: all.mean.split_off(cut),
        err: all.err.split_off(cut),
    };
    let leakage_max = leakage.mean.iter().copied().fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if let Some(j) = leakage.mean.iter().position(|&l| l > config.leakage_threshold) {
        warnings.push(format!(
            "leakage {:.3e} at kick {j} exceeds threshold {:.1e}; max {:.3e}",
            leakage.mean[j], config.leakage_threshold, leakage_max
        ));
    }
    if let Some((p, q)) = config.resonance() {
        warnings.push(format!(
            "period/(4 pi) = {p}/{q}: quantum resonance of the quadratic rotor, \
             expect ballistic rather than localized growth"
        ));
    }

    Ok(EnsembleResult {
        times: (0..=n).map(|j| j as f64 * config.period).collect(),
        steps: (0..=n).collect(),
        populations: Vec::new(),
        energy: Some(all),
        participation: Some(participation),
        leakage: Some(leakage),
        final_profile: Some(ProbabilityDistribution::new_unchecked(
            profile.mean().to_vec(),
            prop.basis_offset(),
        )),
        reference_label: m0,
        n_realizations,
        leakage_max,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(len: usize, offset: i64, seed: u64) -> StateVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<Complex64> = (0..len)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        StateVector::new(amps.into_iter().map(|a| a / n).collect(), offset).unwrap()
    }

    #[test]
    fn fft_sizes_are_smooth() {
        assert_eq!(fft_size(1), 1);
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(11), 12);
        assert_eq!(fft_size(4097 + 30), 4320);
        for n in 1..2000 {
            let mut m = fft_size(n);
            assert!(m >= n);
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            assert_eq!(m, 1);
        }
    }

    #[test]
    fn zero_kick_is_identity() {
        let s = random_state(33, -16, 1);
        for kind in [KernelKind::BesselDirect, KernelKind::Spectral] {
            let out = kick(&s, 0.0, kind).unwrap();
            for (a, b) in out.amplitudes().iter().zip(s.amplitudes()) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn single_kick_from_basis_state() {
        for kind in [KernelKind::BesselDirect, KernelKind::Spectral] {
            for k in [1.0, 5.0, 10.0] {
                let s = StateVector::basis_state(0, -60, 121).unwrap();
                let out = kick(&s, k, kind).unwrap();
                assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
                for m in -60..=60i64 {
                    let p = out.amplitude(m).unwrap().norm_sqr();
                    assert!((p - bessel::bessel_j(m, k).powi(2)).abs() < 1e-12);
                }
            }
            let s = StateVector::basis_state(0, -60, 121).unwrap();
            let out = kick(&s, 5.0, kind).unwrap();
            // J_1(5)^2 from J_1(5) = -0.32757913759146522204
            assert!((out.amplitude(1).unwrap().norm_sqr() - 0.107_308_091_385_168_1).abs() < 1e-14);
        }
    }

    #[test]
    fn kick_amplitudes_have_bessel_values() {
        // Literal map: a_m = sum_n a_n J_{m-n}(k), no extra phases.
        let s = StateVector::basis_state(3, -20, 41).unwrap();
        for kind in [KernelKind::BesselDirect, KernelKind::Spectral] {
            let out = kick(&s, 2.5, kind).unwrap();
            for m in -20..=20i64 {
                let want = bessel::bessel_j(m - 3, 2.5);
                assert!((out.amplitude(m).unwrap() - c(want, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn kernels_agree_on_random_states() {
        for k in [2.0, 5.0, 10.0] {
            let direct = KickOperator::new(k, 257, KernelKind::BesselDirect);
            let spectral = KickOperator::new(k, 257, KernelKind::Spectral);
            for seed in 0..20 {
                let s = random_state(257, -128, seed);
                let mut a = s.clone().into_amplitudes();
                let mut b = a.clone();
                direct.apply(&mut a, &mut direct.workspace());
                spectral.apply(&mut b, &mut spectral.workspace());
                let worst = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                assert!(worst < 1e-10, "k={k} seed={seed}: {worst:e}");
            }
        }
    }

    #[test]
    fn free_rotation_examples() {
        let s = random_state(21, -10, 4);
        let mut cfg = RotorConfig::new(1.0, 1.0, 1);
        cfg.h0 = vec![];
        assert_eq!(free_rotation(&s, &cfg), s);

        let cfg = RotorConfig::new(1.0, 4.0 * std::f64::consts::PI, 1);
        let out = free_rotation(&s, &cfg);
        for (a, b) in out.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }

        let cfg = RotorConfig::new(1.0, 1.0, 1);
        let b = StateVector::basis_state(3, -10, 21).unwrap();
        let out = free_rotation(&b, &cfg);
        let want = c((-4.5f64).cos(), (-4.5f64).sin());
        assert!((out.amplitude(3).unwrap() - want).norm() < 1e-15);
        assert!((want.re + 0.210_795_799_430_779_7).abs() < 1e-15);
    }

    #[test]
    fn measured_first_step_is_bessel_squared() {
        let mut cfg = RotorConfig::new(5.0, 1.0, 1);
        cfg.basis_size = Some(81);
        cfg.schedule = MeasurementSchedule::every(1, LabelSet::All);
        let prop = Propagator::new(&cfg).unwrap();
        for seed in 0..5 {
            let mut gen = RngStream::new(seed, 0).generator();
            let mut psi = prop.initial_state();
            prop.step(&mut psi, 0, &mut gen, &mut prop.workspace()).unwrap();
            for m in -40..=40 {
                let p = psi.amplitude(m).unwrap().norm_sqr();
                assert!((p - bessel::bessel_j(m, 5.0).powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unmeasured_zero_kick_is_free_rotation() {
        let mut cfg = RotorConfig::new(0.0, 0.7, 3);
        cfg.basis_size = Some(11);
        let s = random_state(11, -5, 9);
        let mut rng = RngStream::new(0, 0).generator();
        let out = step(&s, &cfg, 0, &mut rng).unwrap();
        let want = free_rotation(&s, &cfg);
        for (a, b) in out.amplitudes().iter().zip(want.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn norm_drift_over_many_kicks() {
        let mut cfg = RotorConfig::new(5.0, 1.0, 1000);
        cfg.kernel = KernelKind::Spectral;
        let prop = Propagator::new(&cfg).unwrap();
        let mut psi = prop.initial_state();
        let mut ws = prop.workspace();
        let mut gen = RngStream::new(0, 0).generator();
        let mut prev = psi.norm();
        for j in 0..1000 {
            prop.step(&mut psi, j, &mut gen, &mut ws).unwrap();
            let now = psi.norm();
            assert!((now - prev).abs() < 1e-10);
            prev = now;
        }
        assert!((prev - 1.0).abs() < 1e-7);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RotorConfig::new(5.0, 1.0, 100);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.required_basis_size() % 2, 1);
        cfg.basis_size = Some(4096);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("4095") && msg.contains("4097"), "{msg}");
        cfg.basis_size = Some(101);
        assert!(cfg.validate().is_err());
        cfg.allow_small_basis = true;
        assert!(cfg.validate().is_ok());
        cfg.schedule = MeasurementSchedule::every(0, LabelSet::All);
        assert!(cfg.validate().is_err());
        cfg.schedule = MeasurementSchedule::every(1, LabelSet::only([1000]));
        assert!(matches!(cfg.validate(), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn resonance_detection() {
        assert_eq!(RotorConfig::new(5.0, 4.0 * std::f64::consts::PI, 1).resonance(), Some((1, 1)));
        assert_eq!(RotorConfig::new(5.0, std::f64::consts::PI, 1).resonance(), Some((1, 4)));
        assert_eq!(RotorConfig::new(5.0, 1.0, 1).resonance(), None);
    }

    #[test]
    fn schedule_timing() {
        let s = MeasurementSchedule::every(3, LabelSet::All);
        let hits: Vec<u64> = (0..10).filter(|&j| s.measures_before(j)).collect();
        assert_eq!(hits, vec![3, 6, 9]);
        assert!(!MeasurementSchedule::none().measures_before(5));
        assert!(!MeasurementSchedule::every(1, LabelSet::only([])).is_active());
    }

    #[test]
    fn weak_kick_stays_put() {
        let mut cfg = RotorConfig::new(1e-4, 1.0, 50);
        cfg.basis_size = Some(41);
        let r = run_rotor(&cfg, &RngStream::new(1, 0)).unwrap();
        assert!(r.energy.unwrap().last_mean() < 1e-4);
    }
}
