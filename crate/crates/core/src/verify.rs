//! Quick self-checks against closed forms and conservation laws.

use num_complex::Complex64;

use crate::bessel::{bessel_j, bessel_kernel, kernel_half_width};
use crate::decay::{self, SpectralModel};
use crate::rotor::{self, KernelKind, RotorConfig};
use crate::state::StateVector;
use crate::two_level::{self, TwoLevelConfig, TwoLevelMode};
use crate::RngStream;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check {
        name,
        passed: err.is_finite() && err <= tol,
        detail: format!("deviation {err:.3e} (tolerance {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    Check {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

pub fn run_checks() -> Vec<Check> {
    let mut out = Vec::new();

    // Closed-form measured power against repeated multiplication.
    let phi = 0.3;
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let step = two_level::measured_step_matrix(phi);
    for _ in 0..50 {
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] = m[i][0] * step[0][j] + m[i][1] * step[1][j];
            }
        }
        m = next;
    }
    let closed = two_level::measured_power(phi, 50);
    let dev = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (m[i][j] - closed[i][j]).abs())
        .fold(0.0, f64::max);
    out.push(check("two-level closed form", dev, 1e-12));

    let cfg = TwoLevelConfig {
        rabi_frequency: 1.0,
        measurement_interval: std::f64::consts::PI / 100.0,
        n_steps: 100,
        initial_state: 0,
        mode: TwoLevelMode::Analytic,
        n_realizations: 1,
        detuning: 0.0,
    };
    match two_level::run_two_level(&cfg, &RngStream::new(0, 0)) {
        Ok(r) => {
            let p2 = r.populations[1].last_mean();
            out.push(check("Zeno suppression at n = 100", (p2 - 0.024_078_960_601_111_223).abs(), 1e-12));
        }
        Err(e) => out.push(failed("Zeno suppression at n = 100", e)),
    }

    let coh = two_level::coherent_power(0.7, 1000);
    let unit = (coh[0][0].norm_sqr() + coh[1][0].norm_sqr() - 1.0).abs();
    out.push(check("coherent evolution is unitary", unit, 1e-12));

    let kern = bessel_kernel(5.0, kernel_half_width(5.0));
    let sum: f64 = kern.values().iter().map(|v| v * v).sum();
    out.push(check("Bessel sum rule", (sum - 1.0).abs(), 1e-13));
    out.push(check(
        "single kick population J_1(5)^2",
        (bessel_j(1, 5.0).powi(2) - 0.107_308_091_385_168_1).abs(),
        1e-14,
    ));

    let len = 257;
    let offset = -128;
    let amps: Vec<Complex64> = (0..len)
        .map(|i| {
            let x = i as f64 - 128.0;
            Complex64::from_polar((-(x * x) / 200.0).exp(), 0.37 * x)
        })
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let state = StateVector::new(amps.into_iter().map(|a| a / norm).collect(), offset);
    match state {
        Ok(s) => match (
            rotor::kick(&s, 5.0, KernelKind::BesselDirect),
            rotor::kick(&s, 5.0, KernelKind::Spectral),
        ) {
            (Ok(a), Ok(b)) => {
                let dev = a
                    .amplitudes()
                    .iter()
                    .zip(b.amplitudes())
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max);
                out.push(check("direct and spectral kicks agree", dev, 1e-10));
            }
            (Err(e), _) | (_, Err(e)) => out.push(failed("direct and spectral kicks agree", e)),
        },
        Err(e) => out.push(failed("direct and spectral kicks agree", e)),
    }

    let mut rc = RotorConfig::new(5.0, 1.0, 200);
    rc.n_realizations = 1;
    match rotor::Propagator::new(&rc) {
        Ok(p) => {
            let mut psi = p.initial_state();
            let mut ws = p.workspace();
            let mut gen = RngStream::new(0, 0).generator();
            let mut res = Ok(());
            for j in 0..200 {
                res = p.step(&mut psi, j, &mut gen, &mut ws);
                if res.is_err() {
                    break;
                }
            }
            match res {
                Ok(()) => out.push(check("norm after 200 kicks", (psi.norm_sqr() - 1.0).abs(), 1e-10)),
                Err(e) => out.push(failed("norm after 200 kicks", e)),
            }
        }
        Err(e) => out.push(failed("norm after 200 kicks", e)),
    }

    match decay::survival_linear(1.0, 0.01, 100) {
        Ok(s) => out.push(check("linear survival (1 - gamma tau)^n", (s.value - 0.366_032_341_273_229_5).abs(), 1e-14)),
        Err(e) => out.push(failed("linear survival (1 - gamma tau)^n", e)),
    }

    match SpectralModel::flat(0.01, 1.0, -5.0, 5.0, 0.0)
        .and_then(|m| decay::decay_probability_integral(&m, 0.1))
    {
        Ok(q) => out.push(check(
            "decay integral, flat band, t = 0.1",
            (q.value - 9.930_901_672_952_485e-4).abs() / 9.93e-4,
            1e-8,
        )),
        Err(e) => out.push(failed("decay integral, flat band, t = 0.1", e)),
    }

    out
}
