//! State vectors over a truncated integer-labelled basis, and the measurement
//! primitives shared by the engines.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit sum of a probability distribution.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Complex amplitudes `a_m` for labels `m = basis_offset .. basis_offset + len`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    basis_offset: i64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>, basis_offset: i64) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::Domain(format!(
                "state vector needs at least 2 basis states, got {}",
                amplitudes.len()
            )));
        }
        Ok(Self {
            amplitudes,
            basis_offset,
        })
    }

    /// The basis state `|label>` in a ladder of `len` states starting at `basis_offset`.
    pub fn basis_state(label: i64, basis_offset: i64, len: usize) -> Result<Self> {
        let mut state = Self::new(vec![Complex64::new(0.0, 0.0); len], basis_offset)?;
        let idx = state.index_of(label)?;
        state.amplitudes[idx] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn basis_offset(&self) -> i64 {
        self.basis_offset
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn first_label(&self) -> i64 {
        self.basis_offset
    }

    pub fn last_label(&self) -> i64 {
        self.basis_offset + self.amplitudes.len() as i64 - 1
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.amplitudes.len() as i64).map(move |i| self.basis_offset + i)
    }

    pub fn index_of(&self, label: i64) -> Result<usize> {
        let idx = label - self.basis_offset;
        if idx < 0 || idx >= self.amplitudes.len() as i64 {
            return Err(Error::LabelOutOfRange {
                label,
                first: self.first_label(),
                last: self.last_label(),
            });
        }
        Ok(idx as usize)
    }

    pub fn amplitude(&self, label: i64) -> Result<Complex64> {
        Ok(self.amplitudes[self.index_of(label)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

/// Non-negative populations over the same labelling as a [`StateVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityDistribution {
    probabilities: Vec<f64>,
    basis_offset: i64,
}

impl ProbabilityDistribution {
    /// Validates entries in `[0, 1]` and a unit sum within [`NORM_TOLERANCE`].
    pub fn new(probabilities: Vec<f64>, basis_offset: i64) -> Result<Self> {
        Self::with_tolerance(probabilities, basis_offset, NORM_TOLERANCE)
    }

    pub fn with_tolerance(probabilities: Vec<f64>, basis_offset: i64, tol: f64) -> Result<Self> {
        if let Some((i, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0 + tol).contains(*p))
        {
            return Err(Error::Domain(format!(
                "probability at label {} is {p}, outside [0, 1]",
                basis_offset + i as i64
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, expected 1 within {tol:e}"
            )));
        }
        Ok(Self {
            probabilities,
            basis_offset,
        })
    }

    /// Skips validation. Used for ensemble-averaged profiles whose total may
    /// have drifted below one through boundary leakage.
    pub fn new_unchecked(probabilities: Vec<f64>, basis_offset: i64) -> Self {
        Self {
            probabilities,
            basis_offset,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn basis_offset(&self) -> i64 {
        self.basis_offset
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.probabilities.len() as i64).map(move |i| self.basis_offset + i)
    }

    pub fn get(&self, label: i64) -> Option<f64> {
        let idx = label - self.basis_offset;
        if idx < 0 {
            return None;
        }
        self.probabilities.get(idx as usize).copied()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Which basis labels a measurement acts on.
///
/// In config files this is either the string `"all"` or a list of labels.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "LabelSpec", into = "LabelSpec")]
pub enum LabelSet {
    #[default]
    All,
    Only(BTreeSet<i64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelSpec {
    Keyword(String),
    Labels(Vec<i64>),
}

impl TryFrom<LabelSpec> for LabelSet {
    type Error = String;

    fn try_from(spec: LabelSpec) -> std::result::Result<Self, String> {
        match spec {
            LabelSpec::Keyword(k) if k == "all" => Ok(LabelSet::All),
            LabelSpec::Keyword(k) => Err(format!(
                "measured labels must be \"all\" or a list of integers, got \"{k}\""
            )),
            LabelSpec::Labels(v) => Ok(LabelSet::only(v)),
        }
    }
}

impl From<LabelSet> for LabelSpec {
    fn from(set: LabelSet) -> Self {
        match set {
            LabelSet::All => LabelSpec::Keyword("all".into()),
            LabelSet::Only(s) => LabelSpec::Labels(s.into_iter().collect()),
        }
    }
}

impl LabelSet {
    pub fn only(labels: impl IntoIterator<Item = i64>) -> Self {
        LabelSet::Only(labels.into_iter().collect())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, LabelSet::Only(s) if s.is_empty())
    }

    /// Storage indices of the selected labels, or a range error for the
    /// first label that is not stored.
    pub fn indices(&self, state: &StateVector) -> Result<Vec<usize>> {
        match self {
            LabelSet::All => Ok((0..state.len()).collect()),
            LabelSet::Only(labels) => labels.iter().map(|&m| state.index_of(m)).collect(),
        }
    }
}

/// Replaces the phase of every measured amplitude by an independent uniform
/// random phase `exp(i 2 pi g)`, `g ~ U[0, 1)`. Moduli are left as they are.
///
/// Labels are validated before any amplitude is touched.
pub fn randomize_phases<R: Rng + ?Sized>(
    state: &mut StateVector,
    measured: &LabelSet,
    rng: &mut R,
) -> Result<()> {
    match measured {
        LabelSet::All => {
            for a in state.amplitudes.iter_mut() {
                *a = random_phase(*a, rng);
            }
        }
        LabelSet::Only(_) => {
            let indices = measured.indices(state)?;
            for i in indices {
                state.amplitudes[i] = random_phase(state.amplitudes[i], rng);
            }
        }
    }
    Ok(())
}

#[inline]
fn random_phase<R: Rng + ?Sized>(a: Complex64, rng: &mut R) -> Complex64 {
    let g: f64 = rng.gen();
    a * Complex64::cis(TAU * g)
}

/// Populations `|a_m|^2`.
pub fn probabilities(state: &StateVector) -> ProbabilityDistribution {
    ProbabilityDistribution {
        probabilities: state.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
        basis_offset: state.basis_offset,
    }
}

/// Draws a basis label with probability `dist[m]`.
pub fn sample_projection<R: Rng + ?Sized>(dist: &ProbabilityDistribution, rng: &mut R) -> i64 {
    let u: f64 = rng.gen::<f64>() * dist.total();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.probabilities.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return dist.basis_offset + i as i64;
            }
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    dist.basis_offset + last_nonzero as i64
}

/// Collapses `state` onto `label` (unit amplitude, zero phase).
pub fn collapse_onto(state: &mut StateVector, label: i64) -> Result<()> {
    let idx = state.index_of(label)?;
    state.amplitudes.fill(Complex64::new(0.0, 0.0));
    state.amplitudes[idx] = Complex64::new(1.0, 0.0);
    Ok(())
}
