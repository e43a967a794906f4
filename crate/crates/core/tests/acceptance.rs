//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use qzeno::config::parse_spec;
use qzeno::decay::{self, SpectralModel};
use qzeno::rotor::{self, KernelKind, MeasurementSchedule, RotorConfig};
use qzeno::two_level::{self, TwoLevelConfig, TwoLevelMode};
use qzeno::{analysis, LabelSet, RngStream, StateVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn zeno_config(n: u64, mode: TwoLevelMode, realizations: usize) -> TwoLevelConfig {
    // T = pi / Omega with Omega = 1, split into n intervals: phi = pi / (2n).
    TwoLevelConfig {
        rabi_frequency: 1.0,
        measurement_interval: PI / n as f64,
        n_steps: n,
        initial_state: 0,
        mode,
        n_realizations: realizations,
        detuning: 0.0,
    }
}

fn final_p2(cfg: &TwoLevelConfig, seed: u64) -> (f64, f64) {
    let r = two_level::run_two_level(cfg, &RngStream::new(seed, 1)).expect("two-level run");
    let s = &r.populations[1];
    (s.last_mean(), *s.err.last().unwrap())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 1..=64u64 {
        let cfg = zeno_config(n, TwoLevelMode::Analytic, 1);
        let (p2, _) = final_p2(&cfg, 0);
        let step = two_level::measured_step_matrix(cfg.phi());
        let mut v = [1.0, 0.0];
        for _ in 0..n {
            v = [step[0][0] * v[0] + step[0][1] * v[1], step[1][0] * v[0] + step[1][1] * v[1]];
        }
        let closed = (1.0 - (PI / n as f64).cos().powi(n as i32)) / 2.0;
        worst = worst.max((p2 - v[1]).abs()).max((p2 - closed).abs());
    }
    let (p100, _) = final_p2(&zeno_config(100, TwoLevelMode::Analytic, 1), 0);
    let (p1000, _) = final_p2(&zeno_config(1000, TwoLevelMode::Analytic, 1), 0);
    // High-precision evaluations of (1 - cos^n(pi/n)) / 2.
    let oracle_dev = (p100 - 0.024_078_960_601_111_223)
        .abs()
        .max((p1000 - 0.002_461_327_072_953_9).abs());
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-10 && p100 < 0.025 && p1000 < 0.0026 && oracle_dev < 1e-12 && secs < 1.0,
        format!(
            "max |closed - product| = {worst:.2e}; p2(100) = {p100:.6}, p2(1000) = {p1000:.7}; \
             oracle deviation {oracle_dev:.1e}; {secs:.3} s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let cfg = zeno_config(4, TwoLevelMode::DephasingMc, 10_000);
    let (p2, err) = final_p2(&cfg, 2024);
    let z = (p2 - 0.375).abs() / err;
    ensure(z < 4.0, format!("p2 = {p2:.5} +- {err:.5}, {z:.2} standard errors from 0.375"))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1u64, 2, 7, 50, 1000] {
        let phi = PI / (2.0 * n as f64);
        let a = two_level::coherent_power(phi, n);
        let psi = two_level::apply_complex(&a, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        worst = worst.max((psi[1].norm_sqr() - 1.0).abs());
    }
    ensure(worst < 1e-12, format!("max |p2 - 1| = {worst:.2e} for n in {{1, 2, 7, 50, 1000}}"))
}

fn criterion_4() -> Outcome {
    let n = 1_000_000u64;
    let s = decay::survival_linear(1.0, 1.0 / n as f64, n).map_err(|e| e.to_string())?;
    let dev = (s.value - (-1.0f64).exp()).abs();
    ensure(dev < 1e-5, format!("|P(1) - 1/e| = {dev:.3e} at n = 10^6"))
}

fn criterion_5() -> Outcome {
    let mut prev = 0.0;
    let mut detail = Vec::new();
    for e in 2..=7 {
        let n = 10u64.pow(e);
        let s = decay::survival_quadratic(1.0, 1.0 / n as f64, n).map_err(|e| e.to_string())?;
        if s.value < 1.0 - 1.01 / n as f64 || s.value <= prev || s.value > 1.0 {
            return Err(format!("n = {n}: survival {:.12} violates bound or monotonicity", s.value));
        }
        prev = s.value;
        detail.push(format!("1-P({n}) = {:.3e}", 1.0 - s.value));
    }
    Ok(detail.join(", "))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let model = SpectralModel::flat(0.01, 1.0, -5.0, 5.0, 0.0).map_err(|e| e.to_string())?;
    let g = decay::zeno_time_coefficient(&model);
    let mut ratios = Vec::new();
    let mut oracle_dev: f64 = 0.0;
    for i in 0..=20 {
        let t = 0.001 * 10f64.powf(i as f64 / 20.0);
        let p = decay::decay_probability_integral(&model, t).map_err(|e| e.to_string())?.value;
        let oracle = decay::decay_probability_integral_with(&model, t, 1e-12)
            .map_err(|e| e.to_string())?
            .value;
        oracle_dev = oracle_dev.max((p - oracle).abs() / oracle);
        ratios.push(p / (t * t));
    }
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / lo;
    let vs_g = ratios.iter().map(|r| (r - g).abs() / g).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        spread < 0.02 && vs_g < 0.01 && (g - 0.1).abs() < 1e-15 && oracle_dev < 1e-8 && secs < 1.0,
        format!(
            "P_d/t^2 spread {spread:.2e}, max deviation from g = {g} is {vs_g:.2e}, \
             vs 1e-12 quadrature {oracle_dev:.1e}; {secs:.3} s"
        ),
    )
}

fn rotor_config(n_kicks: u64, measured: bool) -> RotorConfig {
    let mut c = RotorConfig::new(5.0, 1.0, n_kicks);
    c.basis_size = Some(4097);
    c.n_realizations = 100;
    if measured {
        c.schedule = MeasurementSchedule::every(1, LabelSet::All);
    }
    c
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let r = rotor::run_rotor(&rotor_config(200, true), &RngStream::new(7, 2)).map_err(|e| e.to_string())?;
    let fit = analysis::diffusion_fit(&r, 1.0).map_err(|e| e.to_string())?;
    let rel = (fit.estimate - 6.25).abs() / 6.25;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        rel < 0.10,
        format!(
            "B = {:.4} +- {:.4} (relative deviation {rel:.3} from 6.25); {secs:.1} s",
            fit.estimate, fit.std_error
        ),
    )
}

fn criterion_8() -> Outcome {
    let rng = RngStream::new(8, 2);
    let on = rotor::run_rotor(&rotor_config(400, true), &rng).map_err(|e| e.to_string())?;
    let off = rotor::run_rotor(&rotor_config(400, false), &rng).map_err(|e| e.to_string())?;
    let e_on = on.energy.as_ref().unwrap().last_mean();
    let e_off = off.energy.as_ref().unwrap().last_mean();
    let ratio = e_on / e_off;
    ensure(
        ratio > 3.0,
        format!("final energy measured {e_on:.1} vs unmeasured {e_off:.1}, ratio {ratio:.2}"),
    )
}

fn criterion_9() -> Outcome {
    let r = rotor::run_rotor(&rotor_config(400, false), &RngStream::new(9, 2)).map_err(|e| e.to_string())?;
    let profile = r.final_profile.as_ref().unwrap();
    let loc = analysis::localization_fit(profile, r.reference_label).map_err(|e| e.to_string())?;
    let brk = analysis::break_time_estimate(&r, 6.25).map_err(|e| e.to_string())?;
    let ok = (6.25..=25.0).contains(&loc.estimate)
        && loc.goodness >= 0.8
        && (12.5 / 3.0..=37.5).contains(&brk.estimate);
    ensure(
        ok,
        format!(
            "lambda = {:.2} (R^2 = {:.3}), t* = {:.2}",
            loc.estimate, loc.goodness, brk.estimate
        ),
    )
}

fn random_state(len: usize, offset: i64, gen: &mut impl Rng) -> StateVector {
    let amps: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(gen.gen::<f64>() - 0.5, gen.gen::<f64>() - 0.5))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::new(amps.into_iter().map(|a| a / norm).collect(), offset).unwrap()
}

fn criterion_10() -> Outcome {
    let mut gen = RngStream::new(10, 0).generator();
    let mut worst: f64 = 0.0;
    for k in [2.0, 5.0, 10.0] {
        for _ in 0..20 {
            let psi = random_state(257, -128, &mut gen);
            let a = rotor::kick(&psi, k, KernelKind::BesselDirect).map_err(|e| e.to_string())?;
            let b = rotor::kick(&psi, k, KernelKind::Spectral).map_err(|e| e.to_string())?;
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                worst = worst.max((x - y).norm());
            }
        }
    }
    let cfg = RotorConfig::new(5.0, 1.0, 1000);
    let prop = rotor::Propagator::new(&cfg).map_err(|e| e.to_string())?;
    let mut psi = prop.initial_state();
    let mut ws = prop.workspace();
    let mut rng = RngStream::new(10, 1).generator();
    let mut drift: f64 = 0.0;
    let mut before = psi.norm_sqr();
    for j in 0..1000 {
        prop.step(&mut psi, j, &mut rng, &mut ws).map_err(|e| e.to_string())?;
        let after = psi.norm_sqr();
        drift = drift.max((after - before).abs());
        before = after;
    }
    ensure(
        worst < 1e-10 && drift < 1e-10,
        format!("max entrywise kernel difference {worst:.2e}; max per-step norm drift {drift:.2e} over 1000 kicks"),
    )
}

const REPRO_SPECS: [(&str, &str); 3] = [
    (
        "rotor",
        r#"master_seed = 11
emit_reference_curves = true
[rotor]
kick_strength = 5.0
n_kicks = 40
n_realizations = 37
schedule = { every_n_kicks = 2, measured_labels = "all" }
"#,
    ),
    (
        "zeno",
        r#"master_seed = 12
[two_level]
rabi_frequency = 1.0
measurement_interval = 0.3
n_steps = 12
mode = "collapse_mc"
n_realizations = 501
"#,
    ),
    (
        "decay",
        r#"master_seed = 13
[decay]
model = { preset = "flat", coupling = 0.01, density = 1.0, e_lower = -5.0, e_upper = 5.0 }
times = { start = 0.001, stop = 3.0, points = 9, spacing = "log" }
repeated = { gamma = 1.0, g = 1.0, tau = 0.01, n = 100 }
"#,
    ),
];

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (cmd, text) in REPRO_SPECS {
        parse_spec(text).map_err(|e| e.to_string())?;
        let spec_path = tmp.path().join(format!("{cmd}.toml"));
        std::fs::write(&spec_path, text).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for threads in [1, 4] {
            let out = tmp.path().join(format!("{cmd}-t{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_qzeno"))
                .arg(cmd)
                .arg("--spec")
                .arg(&spec_path)
                .arg("--out")
                .arg(&out)
                .arg("--threads")
                .arg(threads.to_string())
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(read_dir_sorted(&out));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{cmd}: artifacts differ between 1 and 4 threads"));
        }
        compared += outputs[0].len();
    }
    Ok(format!("{compared} artifacts byte-identical between --threads 1 and --threads 4"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Zeno closed form", criterion_1),
        ("Monte-Carlo vs analytic", criterion_2),
        ("certain transition", criterion_3),
        ("exponential limit", criterion_4),
        ("Zeno decay limit", criterion_5),
        ("quadratic short-time law", criterion_6),
        ("measured-rotor diffusion", criterion_7),
        ("anti-Zeno contrast", criterion_8),
        ("localization scaling", criterion_9),
        ("kernel equivalence and norm", criterion_10),
        ("reproducibility across threads", criterion_11),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (mark, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {mark}  {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
