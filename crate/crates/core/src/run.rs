//! Runs a parsed spec and renders its artifacts.
//!
//! Every CSV starts with `#` comment lines: a title, the column units and the
//! resolved spec between `# spec:` and `# end spec`. Floats are written with
//! 17 significant digits. `summary.json` holds the fitted quantities and the
//! same spec as a TOML string.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, FitResult, DIFFUSION_CONVENTION};
use crate::config::{AnalysisSpec, DecaySpec, EngineSpec, ExperimentSpec};
use crate::decay::{self, DecayConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::rotor::{self, RotorConfig};
use crate::two_level::{self, TwoLevelConfig};

const TWO_LEVEL_STREAM: u64 = 1;
const ROTOR_STREAM: u64 = 2;

/// One rendered output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(title: &str, columns: &[(&str, &str)], spec: &ExperimentSpec) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# {title}");
    let _ = writeln!(h, "# generator: qzeno {}", env!("CARGO_PKG_VERSION"));
    let cols: Vec<String> = columns.iter().map(|(c, u)| format!("{c} [{u}]")).collect();
    let _ = writeln!(h, "# columns: {}", cols.join(", "));
    h.push_str("# spec:\n");
    for line in spec.to_toml().lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            let _ = writeln!(h, "# {line}");
        }
    }
    h.push_str("# end spec\n");
    let names: Vec<&str> = columns.iter().map(|(c, _)| *c).collect();
    h.push_str(&names.join(","));
    h.push('\n');
    h
}

fn summary_artifact(mut body: Value, spec: &ExperimentSpec) -> Artifact {
    body["spec"] = Value::String(spec.to_toml());
    let mut text = serde_json::to_string_pretty(&body).expect("summary serializes");
    text.push('\n');
    Artifact {
        name: "summary.json".into(),
        contents: text,
    }
}

fn fit_json(fit: Result<FitResult>) -> Value {
    match fit {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Computes all artifacts of a run in memory, on the current rayon pool.
pub fn render(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    match &spec.engine {
        EngineSpec::TwoLevel(c) => render_two_level(spec, c),
        EngineSpec::Rotor { config, analysis } => render_rotor(spec, config, analysis),
        EngineSpec::Decay(d) => render_decay(spec, d),
    }
}

/// Renders on a pool of `threads` workers (all cores when `None`) and writes
/// the artifacts into `out_dir`.
pub fn execute(spec: &ExperimentSpec, out_dir: &Path, threads: Option<usize>) -> Result<RunReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::config("--threads must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start thread pool: {e}")))?;
    let artifacts = pool.install(|| render(spec))?;

    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    for a in &artifacts {
        let path = out_dir.join(&a.name);
        fs::write(&path, &a.contents).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if a.name == "summary.json" {
            if let Ok(v) = serde_json::from_str::<Value>(&a.contents) {
                if let Some(ws) = v["warnings"].as_array() {
                    warnings.extend(ws.iter().filter_map(|w| w.as_str().map(String::from)));
                }
            }
        }
        files.push(path);
    }
    Ok(RunReport { files, warnings })
}

fn render_two_level(spec: &ExperimentSpec, c: &TwoLevelConfig) -> Result<Vec<Artifact>> {
    let result = two_level::run_two_level(c, &RngStream::new(spec.master_seed, TWO_LEVEL_STREAM))?;
    let phi = c.phi();
    let p0 = if c.initial_state == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
    let reference = |k: u64| two_level::apply_real(&two_level::measured_power(phi, k), p0);

    let mut cols = vec![
        ("k", "-"),
        ("t", "time"),
        ("p1_mean", "-"),
        ("p1_err", "-"),
        ("p2_mean", "-"),
        ("p2_err", "-"),
    ];
    if spec.emit_reference_curves {
        cols.push(("p1_ref", "-"));
        cols.push(("p2_ref", "-"));
    }
    let mut csv = header("two-level populations under repeated observation", &cols, spec);
    let (p1, p2) = (&result.populations[0], &result.populations[1]);
    for i in 0..result.times.len() {
        let mut row = vec![
            result.steps[i].to_string(),
            num(result.times[i]),
            num(p1.mean[i]),
            num(p1.err[i]),
            num(p2.mean[i]),
            num(p2.err[i]),
        ];
        if spec.emit_reference_curves {
            let r = reference(result.steps[i]);
            row.push(num(r[0]));
            row.push(num(r[1]));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let final_ref = reference(c.n_steps);
    let body = json!({
        "engine": "two_level",
        "convention": "phi = rabi_frequency * measurement_interval / 2; labels 0 and 1 are the two levels",
        "phi": phi,
        "n_steps": c.n_steps,
        "n_realizations": result.n_realizations,
        "final": {
            "p1_mean": p1.last_mean(),
            "p1_err": p1.err.last().copied().unwrap_or(0.0),
            "p2_mean": p2.last_mean(),
            "p2_err": p2.err.last().copied().unwrap_or(0.0),
        },
        "closed_form_final": { "p1": final_ref[0], "p2": final_ref[1] },
        "warnings": result.warnings,
    });
    Ok(vec![
        Artifact {
            name: "two_level.csv".into(),
            contents: csv,
        },
        summary_artifact(body, spec),
    ])
}

#[derive(Serialize)]
struct RotorSummary<'a> {
    engine: &'static str,
    convention: &'static str,
    kick_strength: f64,
    period: f64,
    basis_size: usize,
    n_kicks: u64,
    n_realizations: usize,
    measured: bool,
    classical_diffusion: f64,
    reference_localization_length: f64,
    reference_break_time: f64,
    diffusion: Value,
    localization_length: Value,
    break_time: Value,
    final_energy: f64,
    final_energy_err: f64,
    leakage_max: f64,
    warnings: &'a [String],
}

fn render_rotor(spec: &ExperimentSpec, c: &RotorConfig, a: &AnalysisSpec) -> Result<Vec<Artifact>> {
    let result = rotor::run_rotor(c, &RngStream::new(spec.master_seed, ROTOR_STREAM))?;
    let k = c.kick_strength;
    let tau = c.period;
    let b_classical = k * k / (4.0 * tau);

    let energy = result.energy.as_ref().expect("rotor result has energy");
    let participation = result.participation.as_ref().expect("rotor result has participation");
    let leakage = result.leakage.as_ref().expect("rotor result has leakage");

    let mut cols = vec![
        ("kick", "-"),
        ("t", "time"),
        ("energy_mean", "hbar^2 units, <(m-m0)^2>"),
        ("energy_err", "hbar^2 units"),
        ("participation", "-"),
        ("leakage", "-"),
    ];
    if spec.emit_reference_curves {
        cols.push(("energy_classical", "hbar^2 units, 2 B t"));
    }
    let mut csv = header("kicked rotor second moment", &cols, spec);
    for i in 0..result.times.len() {
        let mut row = vec![
            result.steps[i].to_string(),
            num(result.times[i]),
            num(energy.mean[i]),
            num(energy.err[i]),
            num(participation.mean[i]),
            num(leakage.mean[i]),
        ];
        if spec.emit_reference_curves {
            row.push(num(2.0 * b_classical * result.times[i]));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let profile = result.final_profile.as_ref().expect("rotor result has a profile");
    let mut prof_csv = header(
        "kicked rotor momentum profile, averaged over the last quarter of kicks",
        &[("m", "-"), ("p_m", "-")],
        spec,
    );
    for (m, p) in profile.labels().zip(profile.probabilities()) {
        let _ = writeln!(prof_csv, "{m},{}", num(*p));
    }

    let measured = c.schedule.is_active();
    let summary = RotorSummary {
        engine: "rotor",
        convention: DIFFUSION_CONVENTION,
        kick_strength: k,
        period: tau,
        basis_size: c.resolved_basis_size(),
        n_kicks: c.n_kicks,
        n_realizations: result.n_realizations,
        measured,
        classical_diffusion: b_classical,
        reference_localization_length: k * k / 2.0,
        reference_break_time: tau * k * k / 2.0,
        diffusion: fit_json(analysis::diffusion_fit(&result, tau)),
        localization_length: fit_json(analysis::localization_fit_with(
            profile,
            result.reference_label,
            &a.localization(),
        )),
        break_time: fit_json(analysis::break_time_estimate_with(&result, b_classical, &a.break_time())),
        final_energy: energy.last_mean(),
        final_energy_err: energy.err.last().copied().unwrap_or(0.0),
        leakage_max: result.leakage_max,
        warnings: &result.warnings,
    };
    let body = serde_json::to_value(&summary).expect("summary serializes");
    Ok(vec![
        Artifact {
            name: "rotor.csv".into(),
            contents: csv,
        },
        Artifact {
            name: "profile.csv".into(),
            contents: prof_csv,
        },
        summary_artifact(body, spec),
    ])
}

fn render_decay(spec: &ExperimentSpec, d: &DecaySpec) -> Result<Vec<Artifact>> {
    let model = d.model.build()?;
    let g = decay::zeno_time_coefficient(&model);
    let width = model.width();
    let times = d.times.values();

    let cols = [
        ("t", "time"),
        ("p_decay", "-"),
        ("p_survival", "-"),
        ("g_t2", "-"),
        ("quad_error", "-"),
        ("quadratic_regime", "0/1"),
    ];
    let mut csv = header("short-time decay probability", &cols, spec);
    let mut max_err: f64 = 0.0;
    let mut warnings = Vec::new();
    for &t in &times {
        let q = decay::decay_probability_integral_with(&model, t, d.rel_tol)?;
        max_err = max_err.max(q.error);
        let regime = model.quadratic_regime(t, d.validity_threshold);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            num(t),
            num(q.value),
            num(1.0 - q.value),
            num(g * t * t),
            num(q.error),
            u8::from(regime)
        );
    }
    if times.iter().any(|&t| !model.quadratic_regime(t, d.validity_threshold)) {
        warnings.push(format!(
            "times beyond {:.6e} lie outside the quadratic regime t (E_u - E_l) < {}",
            d.validity_threshold / width,
            d.validity_threshold
        ));
    }

    let mut artifacts = vec![Artifact {
        name: "decay.csv".into(),
        contents: csv,
    }];
    let repeated = match &d.repeated {
        Some(r) => {
            let (art, json, warn) = render_survival(spec, r)?;
            artifacts.push(art);
            warnings.extend(warn);
            json
        }
        None => Value::Null,
    };

    let body = json!({
        "engine": "decay",
        "convention": "hbar = 1; P_d(t) = integral of |V|^2 rho t^2 sinc^2((E - E0) t / 2) dE",
        "g": g,
        "band_width": width,
        "validity_threshold": d.validity_threshold,
        "quadratic_regime_until": d.validity_threshold / width,
        "max_quadrature_error": max_err,
        "repeated": repeated,
        "warnings": warnings,
    });
    artifacts.push(summary_artifact(body, spec));
    Ok(artifacts)
}

/// Survival after `n` observations for both short-time laws.
fn render_survival(spec: &ExperimentSpec, r: &DecayConfig) -> Result<(Artifact, Value, Vec<String>)> {
    let cols = [
        ("law", "-"),
        ("rate", "1/time or 1/time^2"),
        ("tau", "time"),
        ("n", "-"),
        ("survival", "-"),
        ("limit", "-"),
    ];
    let mut csv = header("survival under repeated observation", &cols, spec);
    let mut out = serde_json::Map::new();
    let mut warnings = Vec::new();
    if r.gamma > 0.0 {
        let s = decay::survival_linear(r.gamma, r.tau, r.n)?;
        let _ = writeln!(csv, "linear,{},{},{},{},{}", num(r.gamma), num(r.tau), r.n, num(s.value), num(s.limit));
        out.insert("linear".into(), json!({ "survival": s.value, "limit": s.limit }));
        if s.warning {
            warnings.push(format!("gamma tau = {:.3e} is not small", r.gamma * r.tau));
        }
    }
    if r.g > 0.0 {
        let s = decay::survival_quadratic(r.g, r.tau, r.n)?;
        let _ = writeln!(csv, "quadratic,{},{},{},{},{}", num(r.g), num(r.tau), r.n, num(s.value), num(s.limit));
        out.insert("quadratic".into(), json!({ "survival": s.value, "limit": s.limit }));
        if s.warning {
            warnings.push(format!("g tau^2 = {:.3e} is not small", r.g * r.tau * r.tau));
        }
    }
    Ok((
        Artifact {
            name: "survival.csv".into(),
            contents: csv,
        },
        Value::Object(out),
        warnings,
    ))
}

/// Machine-readable failure report.
pub fn error_json(err: &Error) -> String {
    json!({ "error": { "kind": err.kind(), "message": err.to_string() } }).to_string()
}
