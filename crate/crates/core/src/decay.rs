//! Survival laws under repeated observation and the short-time perturbative
//! decay probability. Units have `hbar = 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadOptions, QuadResult};

/// `gamma tau` (or `g tau^2`) above which the step is no longer "short".
pub const SHORT_STEP_WARNING: f64 = 0.1;

/// Default `t (E_u - E_l)` below which the quadratic law is expected to hold.
pub const QUADRATIC_REGIME_THRESHOLD: f64 = 0.1;

/// Default relative tolerance of the decay integral.
pub const DECAY_REL_TOL: f64 = 1e-9;

/// Parameters of the repeated-observation survival laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Linear decay rate `gamma` (1/time).
    #[serde(default)]
    pub gamma: f64,
    /// Quadratic coefficient `g` (1/time^2).
    #[serde(default)]
    pub g: f64,
    pub tau: f64,
    pub n: u64,
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("decay.repeated.gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::config(format!("decay.repeated.g must be >= 0, got {}", self.g)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("decay.repeated.tau must be > 0, got {}", self.tau)));
        }
        if self.n < 1 {
            return Err(Error::config("decay.repeated.n must be >= 1"));
        }
        Ok(())
    }

    /// True when `gamma tau` or `g tau^2` exceeds [`SHORT_STEP_WARNING`].
    pub fn short_step_warning(&self) -> bool {
        self.gamma * self.tau > SHORT_STEP_WARNING || self.g * self.tau * self.tau > SHORT_STEP_WARNING
    }
}

/// A survival probability after `n` observed steps with its continuum limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Survival {
    pub value: f64,
    pub limit: f64,
    /// The per-step decay probability exceeded [`SHORT_STEP_WARNING`].
    pub warning: bool,
}

/// `(1 - gamma tau)^n` and its limit `exp(-gamma n tau)`.
pub fn survival_linear(gamma: f64, tau: f64, n: u64) -> Result<Survival> {
    let x = gamma * tau;
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "survival_linear requires 0 <= gamma*tau < 1, got {x}"
        )));
    }
    Ok(Survival {
        value: pow_one_minus(x, n),
        limit: (-gamma * n as f64 * tau).exp(),
        warning: x > SHORT_STEP_WARNING,
    })
}

/// `(1 - g tau^2)^n` and its approximation `exp(-g t^2 / n)`, `t = n tau`.
pub fn survival_quadratic(g: f64, tau: f64, n: u64) -> Result<Survival> {
    let x = g * tau * tau;
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "survival_quadratic requires 0 <= g*tau^2 < 1, got {x}"
        )));
    }
    let t = n as f64 * tau;
    Ok(Survival {
        value: pow_one_minus(x, n),
        limit: (-g * t * t / n as f64).exp(),
        warning: x > SHORT_STEP_WARNING,
    })
}

fn pow_one_minus(x: f64, n: u64) -> f64 {
    (n as f64 * (-x).ln_1p()).exp()
}

/// Energy-dependent coupling `|V(E)|^2` or density of states `rho(E)`.
#[derive(Clone)]
pub enum SpectralFn {
    Constant(f64),
    /// Linear interpolation through `(E, value)` nodes; zero outside.
    Table(Vec<(f64, f64)>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for SpectralFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralFn::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            SpectralFn::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            SpectralFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SpectralFn {
    pub fn eval(&self, e: f64) -> f64 {
        match self {
            SpectralFn::Constant(v) => *v,
            SpectralFn::Table(nodes) => interpolate(nodes, e),
            SpectralFn::Custom(f) => f(e),
        }
    }

    fn nodes(&self) -> Option<impl Iterator<Item = f64> + '_> {
        match self {
            SpectralFn::Table(nodes) => Some(nodes.iter().map(|n| n.0)),
            _ => None,
        }
    }
}

fn interpolate(nodes: &[(f64, f64)], e: f64) -> f64 {
    let (first, last) = match (nodes.first(), nodes.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return 0.0,
    };
    if e < first.0 || e > last.0 {
        return 0.0;
    }
    let i = nodes.partition_point(|n| n.0 <= e);
    if i == 0 {
        return first.1;
    }
    if i >= nodes.len() {
        return last.1;
    }
    let (e0, v0) = nodes[i - 1];
    let (e1, v1) = nodes[i];
    v0 + (v1 - v0) * (e - e0) / (e1 - e0)
}

/// Continuum of decay products on `[e_lower, e_upper]` coupled to an initial
/// level at `e0`.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    pub e_lower: f64,
    pub e_upper: f64,
    pub e0: f64,
    pub coupling: SpectralFn,
    pub density: SpectralFn,
}

impl SpectralModel {
    pub fn new(
        e_lower: f64,
        e_upper: f64,
        e0: f64,
        coupling: SpectralFn,
        density: SpectralFn,
    ) -> Result<Self> {
        let model = Self {
            e_lower,
            e_upper,
            e0,
            coupling,
            density,
        };
        model.validate()?;
        Ok(model)
    }

    /// Constant coupling and density.
    pub fn flat(coupling_sq: f64, density: f64, e_lower: f64, e_upper: f64, e0: f64) -> Result<Self> {
        if coupling_sq < 0.0 || density < 0.0 {
            return Err(Error::Domain("coupling and density must be non-negative".into()));
        }
        Self::new(
            e_lower,
            e_upper,
            e0,
            SpectralFn::Constant(coupling_sq),
            SpectralFn::Constant(density),
        )
    }

    /// Tabulated `(E, |V|^2, rho)` rows; the energy range is the table range.
    pub fn tabulated(rows: &[(f64, f64, f64)], e0: f64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Domain("tabulated spectral model needs at least 2 rows".into()));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain("tabulated energies must be strictly increasing".into()));
        }
        if rows.iter().any(|r| r.1 < 0.0 || r.2 < 0.0 || !r.1.is_finite() || !r.2.is_finite()) {
            return Err(Error::Domain("tabulated |V|^2 and rho must be finite and non-negative".into()));
        }
        let coupling = rows.iter().map(|r| (r.0, r.1)).collect();
        let density = rows.iter().map(|r| (r.0, r.2)).collect();
        Self::new(
            rows[0].0,
            rows[rows.len() - 1].0,
            e0,
            SpectralFn::Table(coupling),
            SpectralFn::Table(density),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_upper > self.e_lower) || !self.e_lower.is_finite() || !self.e_upper.is_finite() {
            return Err(Error::Domain(format!(
                "spectral model needs finite E_l < E_u, got [{}, {}]",
                self.e_lower, self.e_upper
            )));
        }
        if !(self.e_lower..=self.e_upper).contains(&self.e0) {
            return Err(Error::Domain(format!(
                "E0 = {} lies outside [{}, {}]",
                self.e0, self.e_lower, self.e_upper
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.e_upper - self.e_lower
    }

    /// Whether `t` lies inside the short-time window `t (E_u - E_l) < threshold`.
    pub fn quadratic_regime(&self, t: f64, threshold: f64) -> bool {
        t * self.width() < threshold
    }
}

/// `g = (E_u - E_l) |V(E0)|^2 rho(E0)`.
pub fn zeno_time_coefficient(model: &SpectralModel) -> f64 {
    model.width() * model.coupling.eval(model.e0) * model.density.eval(model.e0)
}

/// First-order decay probability after time `t`,
/// `P_d = int |V(E)|^2 sin^2((E - E0) t / 2) / ((E - E0) / 2)^2 rho(E) dE`,
/// at the default relative tolerance.
pub fn decay_probability_integral(model: &SpectralModel, t: f64) -> Result<QuadResult> {
    decay_probability_integral_with(model, t, DECAY_REL_TOL)
}

pub fn decay_probability_integral_with(model: &SpectralModel, t: f64, rel_tol: f64) -> Result<QuadResult> {
    model.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("decay time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let e0 = model.e0;
    let integrand = |e: f64| {
        let u = 0.5 * (e - e0) * t;
        model.coupling.eval(e) * model.density.eval(e) * t * t * sinc_sq(u)
    };
    let mut breakpoints = vec![e0];
    for nodes in [model.coupling.nodes(), model.density.nodes()].into_iter().flatten() {
        breakpoints.extend(nodes);
    }
    let opts = QuadOptions {
        rel_tol,
        // Pieces of half the sin^2 period 2 pi / t.
        max_piece: Some(std::f64::consts::PI / t),
        breakpoints,
        ..Default::default()
    };
    let r = quadrature::integrate(integrand, model.e_lower, model.e_upper, &opts)?;
    Ok(QuadResult {
        value: r.value.max(0.0),
        ..r
    })
}

/// `(sin u / u)^2`, continuous at 0.
fn sinc_sq(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 45.0
    } else {
        let s = u.sin() / u;
        s * s
    }
}
