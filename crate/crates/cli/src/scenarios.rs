//! Scenario drivers. Each writes its artifacts into the run directory and
//! returns the scalar summary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use stefan_core::control::{control_cost_report, minimize_j};
use stefan_core::domain::{inner_product, l2_norm, BoundaryPath, InitialData, SpaceTimeField};
use stefan_core::io::{write_json, write_text};
use stefan_core::observability::{dense_oracle, estimate_observability};
use stefan_core::pde::{solve_adjoint, solve_forward_linear, solve_semilinear, LinearSystem, SchemeConfig};
use stefan_core::stefan::{
    boundary_velocity, coupled_solve, fixed_point_iterate, history_csv, holder_seminorm, CoupledOptions,
};
use stefan_core::weights::{
    alpha_min, calibrate_carleman, random_terminal_battery, verify_weight_lemma, CarlemanParams,
};

use crate::config::{ExperimentConfig, PotentialSpec, Scenario};
use crate::CliError;

pub type Summary = Map<String, Value>;

/// Output of one scenario: the scalar summary, the files written, and an
/// optional failure that should turn into a non-zero exit after the artifacts
/// are on disk.
pub struct ScenarioOutput {
    pub summary: Summary,
    pub artifacts: Vec<String>,
    pub failure: Option<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Writer<'_> {
    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        write_text(&self.dir.join(name), text)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        write_json(&self.dir.join(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

fn boundary_csv(path: &BoundaryPath) -> String {
    let mut out = String::from("t,radius,rate\n");
    for j in 0..=path.steps() {
        out.push_str(&format!("{},{},{}\n", path.time(j), path.radius(j), path.rate(j)));
    }
    out
}

fn insert(summary: &mut Summary, key: &str, value: impl Into<Value>) {
    summary.insert(key.to_string(), value.into());
}

/// L2 distance at `T` to the exact eigenmode decay, when the setup is an
/// eigenmode benchmark (constant radius, constant potential, sine datum).
fn eigenmode_error(cfg: &ExperimentConfig, z_t: &[f64], z0: &[f64]) -> Option<f64> {
    let InitialData::Sine { mode, .. } = cfg.physical.initial else {
        return None;
    };
    if cfg.path != crate::config::PathSpec::Constant {
        return None;
    }
    let r0 = cfg.physical.r0;
    let rate = (mode as f64 * PI / r0).powi(2) + cfg.potential.constant_value();
    let decay = (-rate * cfg.physical.t_final).exp();
    let diff: Vec<f64> = z_t.iter().zip(z0).map(|(v, e)| v - decay * e).collect();
    Some(l2_norm(&diff, r0))
}

fn field_stats(summary: &mut Summary, field: &SpaceTimeField, path: &BoundaryPath, z0: &[f64]) {
    let m = path.steps();
    insert(summary, "initial_norm", l2_norm(z0, path.radius(0)));
    insert(summary, "final_norm", l2_norm(field.level(m), path.radius(m)));
    insert(summary, "state_sup", field.sup_norm());
}

pub fn run_scenario(cfg: &ExperimentConfig, dir: &Path) -> Result<ScenarioOutput, CliError> {
    let mut w = Writer {
        dir,
        artifacts: Vec::new(),
    };
    let mut summary = Summary::new();
    insert(&mut summary, "scenario", cfg.scenario.name());
    insert(&mut summary, "n", cfg.scheme.n);
    insert(&mut summary, "m", cfg.scheme.m);
    insert(&mut summary, "theta", cfg.scheme.theta);
    insert(&mut summary, "seed", cfg.seed);
    let mut failure = None;

    let scheme = &cfg.scheme;
    let setup = &cfg.physical;
    let grid = scheme.grid();
    let z0 = setup.initial_samples(&grid);
    let path = cfg.path.build(setup, scheme.m)?;
    let potential = cfg.potential.build(&grid, &path);

    match cfg.scenario {
        Scenario::Forward => {
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let z = solve_forward_linear(&sys, &z0, None)?;
            field_stats(&mut summary, &z, &path, &z0);
            if let Some(err) = eigenmode_error(cfg, z.level(scheme.m), &z0) {
                insert(&mut summary, "l2_error_T", err);
            }
            w.text("state.csv", &z.to_csv())?;
        }
        Scenario::Semilinear => {
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let z = solve_semilinear(&sys, &setup.nonlinearity, &z0, None)?;
            field_stats(&mut summary, &z, &path, &z0);
            insert(&mut summary, "lipschitz_bound", setup.nonlinearity.lipschitz_bound());
            w.text("state.csv", &z.to_csv())?;
        }
        Scenario::Adjoint => {
            // the configured datum serves as terminal data phi_T
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let phi = solve_adjoint(&sys, &z0, None)?;
            let z = solve_forward_linear(&sys, &z0, None)?;
            let m = scheme.m;
            let (r0, rt) = (path.radius(0), path.radius(m));
            let lhs = inner_product(z.level(m), &z0, rt);
            let rhs = inner_product(&z0, phi.level(0), r0);
            let scale = l2_norm(&z0, r0) * l2_norm(&z0, rt);
            insert(&mut summary, "terminal_norm", l2_norm(&z0, rt));
            insert(&mut summary, "adjoint_initial_norm", l2_norm(phi.level(0), r0));
            insert(
                &mut summary,
                "duality_defect",
                if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 },
            );
            w.text("adjoint.csv", &phi.to_csv())?;
        }
        Scenario::Hum => {
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let out = minimize_j(&sys, &z0, &cfg.hum)?;
            let hs = out.summary();
            let cost = control_cost_report(&out, setup, &path, potential.as_ref());
            insert(&mut summary, "epsilon", hs.epsilon);
            insert(&mut summary, "final_norm", hs.final_norm);
            insert(&mut summary, "free_final_norm", hs.free_final_norm);
            insert(&mut summary, "cost", hs.cost);
            insert(&mut summary, "cost_ratio", hs.cost_ratio);
            insert(&mut summary, "j_value", hs.j_value);
            insert(&mut summary, "cg_iters", hs.cg_iters);
            insert(&mut summary, "optimality_residual", out.optimality_residual);
            w.json("hum-summary.json", &json!({ "hum": hs, "cost": cost }))?;
            w.text("control.csv", &out.control.to_csv())?;
            w.text("state.csv", &out.state.to_csv())?;
        }
        Scenario::Stefan => {
            let opts = CoupledOptions {
                corrector: true,
                sign: cfg.fixedpoint.sign,
            };
            let sol = coupled_solve(&z0, setup, None, scheme, &opts)?;
            field_stats(&mut summary, &sol.state, &sol.path, &z0);
            insert(&mut summary, "r_final", sol.path.radius(scheme.m));
            insert(&mut summary, "r_min", sol.path.min_radius());
            insert(&mut summary, "r_max", sol.path.max_radius());
            insert(&mut summary, "max_rate", sol.path.max_abs_rate());
            let times: Vec<f64> = (0..=scheme.m).map(|j| sol.path.time(j)).collect();
            let vr = boundary_velocity(&sol.state, &sol.path, scheme.flux_order)?;
            insert(&mut summary, "vr_holder_quarter", holder_seminorm(&vr, &times, 0.25)?);
            w.text("state.csv", &sol.state.to_csv())?;
            w.text("boundary.csv", &boundary_csv(&sol.path))?;
        }
        Scenario::Fixedpoint => {
            let out = fixed_point_iterate(&z0, setup, &cfg.fixedpoint, &cfg.hum, scheme)?;
            insert(&mut summary, "converged", out.converged);
            insert(&mut summary, "iterations", out.iterations());
            insert(
                &mut summary,
                "last_difference",
                out.history.last().map_or(0.0, |r| r.difference()),
            );
            insert(&mut summary, "final_norm", out.hum.final_norm);
            insert(&mut summary, "cost_ratio", out.hum.cost_ratio);
            insert(&mut summary, "epsilon", out.hum.epsilon);
            insert(&mut summary, "r_min", out.path.min_radius());
            insert(&mut summary, "r_max", out.path.max_radius());
            insert(&mut summary, "breaches", out.breaches.len());
            w.text("fixedpoint-history.csv", &history_csv(&out.history))?;
            w.text("boundary.csv", &boundary_csv(&out.path))?;
            w.text("state.csv", &out.state.to_csv())?;
            w.text("control.csv", &out.control.to_csv())?;
            if !out.epsilon_study.is_empty() {
                let mut csv = String::from("epsilon,final_norm,cost_ratio,iterations,converged\n");
                for r in &out.epsilon_study {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        r.epsilon, r.final_norm, r.cost_ratio, r.iterations, r.converged
                    ));
                }
                w.text("epsilon-study.csv", &csv)?;
            }
            if !out.converged {
                failure = Some(format!(
                    "fixed point did not converge in {} outer iterations (last difference {:e})",
                    out.iterations(),
                    out.history.last().map_or(f64::NAN, |r| r.difference())
                ));
            } else if !out.breaches.is_empty() {
                failure = Some(format!("constraint breaches: {}", out.breaches.join("; ")));
            }
        }
        Scenario::Carleman => {
            let c = &cfg.carleman;
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let battery = random_terminal_battery(&grid, c.battery, c.modes, cfg.seed)
                .iter()
                .map(|phi_t| solve_adjoint(&sys, phi_t, None))
                .collect::<stefan_core::Result<Vec<_>>>()?;
            let probe = CarlemanParams::new(c.lambda, 1.0, c.k, setup, &path)?;
            let amin = alpha_min(&probe, setup.t_final);
            let s_values: Vec<f64> = (c.s_exponents[0]..=c.s_exponents[1])
                .map(|e| 2f64.powi(e) / amin)
                .collect();
            let cal = calibrate_carleman(&battery, c.lambda, c.k, &s_values, setup, &path, scheme)?;
            let lemma = verify_weight_lemma(setup, &path, 2000, 0.01);
            insert(&mut summary, "battery", battery.len());
            insert(&mut summary, "alpha_min", amin);
            insert(&mut summary, "sup_alpha1", probe.sup_alpha1);
            insert(&mut summary, "violations", cal.violations.len());
            if let Some(s) = cal.s_threshold {
                insert(&mut summary, "s_threshold", s);
            }
            if let Some(cemp) = cal.c_emp {
                insert(&mut summary, "c_emp", cemp);
            }
            insert(&mut summary, "weight_lemma_failures", lemma.failures.len());
            w.json("carleman-report.json", &json!({ "calibration": cal, "weight_lemma": lemma }))?;
        }
        Scenario::Observability => {
            let sys = LinearSystem::new(scheme, &path, potential.as_ref(), setup.b)?;
            let est = estimate_observability(&sys, &cfg.observability)?;
            let dense = if scheme.n <= 32 && scheme.m <= 64 {
                Some(dense_oracle(&sys, &cfg.observability)?.constant)
            } else {
                None
            };
            insert(&mut summary, "constant", est.constant);
            insert(&mut summary, "iterations", est.iterations);
            insert(&mut summary, "residual", est.residual);
            insert(&mut summary, "modes", est.modes);
            if let Some(d) = dense {
                insert(&mut summary, "dense_constant", d);
            }
            w.json(
                "observability.json",
                &json!({
                    "constant": est.constant,
                    "grid": { "n": est.n, "m": est.m },
                    "geometry": { "b": setup.b, "r0": setup.r0, "t_final": setup.t_final, "path": cfg.path },
                    "potential": cfg.potential,
                    "modes": est.modes,
                    "iterations": est.iterations,
                    "residual": est.residual,
                    "method": est.method,
                    "log": est.log,
                    "dense_constant": dense,
                }),
            )?;
        }
        Scenario::Convergence => {
            let mut csv = String::from("n,m,l2_error_T,ratio\n");
            let mut errors: Vec<f64> = Vec::new();
            for level in 0..3u32 {
                let refined = SchemeConfig {
                    n: scheme.n << level,
                    m: scheme.m << level,
                    ..scheme.clone()
                };
                let g = refined.grid();
                let p = cfg.path.build(setup, refined.m)?;
                let pot = cfg.potential.build(&g, &p);
                let sys = LinearSystem::new(&refined, &p, pot.as_ref(), setup.b)?;
                let data = setup.initial_samples(&g);
                let z = solve_forward_linear(&sys, &data, None)?;
                let err = eigenmode_error(cfg, z.level(refined.m), &data).unwrap_or(f64::NAN);
                let ratio = errors.last().map_or(f64::NAN, |prev| prev / err);
                csv.push_str(&format!("{},{},{},{}\n", refined.n, refined.m, err, ratio));
                errors.push(err);
            }
            insert(&mut summary, "l2_error_T", errors[0]);
            insert(&mut summary, "ratio_1", errors[0] / errors[1]);
            insert(&mut summary, "ratio_2", errors[1] / errors[2]);
            insert(&mut summary, "observed_order", (errors[1] / errors[2]).log2());
            w.text("convergence.csv", &csv)?;
        }
    }
    if matches!(cfg.potential, PotentialSpec::Constant { .. }) {
        insert(&mut summary, "potential", cfg.potential.constant_value());
    }
    insert(&mut summary, "status", if failure.is_some() { "failed" } else { "ok" });
    Ok(ScenarioOutput {
        summary,
        artifacts: w.artifacts,
        failure,
    })
}

/// Runs one validated config end to end: scenario, `summary.json` and
/// `manifest.json`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Summary, CliError> {
    cfg.validate()?;
    let dir: PathBuf = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Config {
        field: "out_dir".into(),
        message: format!("{} is not writable: {e}", dir.display()),
    })?;
    let out = run_scenario(cfg, &dir)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    let mut artifacts = out.artifacts;
    artifacts.push("summary.json".into());
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": stefan_core::VERSION,
            "config": cfg,
            "artifacts": artifacts,
        }),
    )?;
    match out.failure {
        Some(message) => Err(CliError::Scenario(message)),
        None => Ok(out.summary),
    }
}
