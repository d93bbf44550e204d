//! Free-boundary coupling: the Stefan law, the linearize-control-update map
//! `Lambda_eps` and its Picard iteration.
//!
//! In reduced variables the Stefan law reads `R'(t) = -z~_r(R(t), t) / R(t)`.
//! [`StefanSign::Flipped`] inverts it for comparison runs.

use serde::{Deserialize, Serialize};

use crate::control::{minimize_j, HumConfig, HumOutcome, HumSummary};
use crate::domain::{l2_norm, project_from_tilde, BoundaryPath, FieldRole, PhysicalSetup, SpaceTimeField};
use crate::error::{Error, Result};
use crate::pde::{control_mask, level_flux, nonlinear_term, theta_step, Level, LinearSystem, SchemeConfig};

/// Globally Lipschitz nonlinearity with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Zero,
    /// `f(s) = slope * s`.
    Linear { slope: f64 },
    /// `f(s) = amplitude * sin(s)`, so that `g(s) = amplitude * sin(s) / s`.
    Sine { amplitude: f64 },
    /// Piecewise-linear interpolant through `(s, f(s))` knots, extended linearly
    /// beyond the outer knots.
    Table { points: Vec<[f64; 2]> },
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::Zero => Ok(()),
            Nonlinearity::Linear { slope } => finite("nonlinearity.slope", *slope),
            Nonlinearity::Sine { amplitude } => finite("nonlinearity.amplitude", *amplitude),
            Nonlinearity::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidSetup("nonlinearity table needs at least two knots".into()));
                }
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(Error::InvalidSetup(
                        "nonlinearity table knots must be strictly increasing".into(),
                    ));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSetup("nonlinearity table must be finite".into()));
                }
                if self.eval(0.0).abs() > 1e-14 {
                    return Err(Error::InvalidSetup(format!(
                        "nonlinearity must satisfy f(0) = 0, table gives {}",
                        self.eval(0.0)
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear { slope } => slope * s,
            Nonlinearity::Sine { amplitude } => amplitude * s.sin(),
            Nonlinearity::Table { points } => {
                let n = points.len();
                let k = match points.iter().position(|p| p[0] > s) {
                    Some(0) => 0,
                    Some(k) => k - 1,
                    None => n - 2,
                }
                .min(n - 2);
                let ([x0, y0], [x1, y1]) = (points[k], points[k + 1]);
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }

    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear { slope } => slope.abs(),
            Nonlinearity::Sine { amplitude } => amplitude.abs(),
            Nonlinearity::Table { points } => points
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// `f'(0)` when known in closed form.
    pub fn derivative_at_zero(&self) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::Linear { slope } => Some(*slope),
            Nonlinearity::Sine { amplitude } => Some(*amplitude),
            Nonlinearity::Table { .. } => None,
        }
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: "must be finite".into(),
        })
    }
}

/// `g(s) = f(s)/s`, closed at the origin by `f'(0)`.
pub fn g_of(nl: &Nonlinearity, s: f64) -> f64 {
    if s.abs() < 1e-8 {
        nl.derivative_at_zero().unwrap_or_else(|| {
            let h = 1e-6;
            (nl.eval(h) - nl.eval(-h)) / (2.0 * h)
        })
    } else {
        nl.eval(s) / s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StefanSign {
    /// `R' = -z~_r(R)/R`: positive interior temperature melts outward.
    #[default]
    Melting,
    /// `R' = +z~_r(R)/R`.
    Flipped,
}

impl StefanSign {
    fn factor(self) -> f64 {
        match self {
            StefanSign::Melting => -1.0,
            StefanSign::Flipped => 1.0,
        }
    }
}

fn level_rate(u: &[f64], radius: f64, order: u8, sign: StefanSign) -> f64 {
    sign.factor() * level_flux(u, radius, order) / radius
}

/// Boundary velocity `R'(t_j)` given by the Stefan law.
pub fn stefan_rate(
    field: &SpaceTimeField,
    path: &BoundaryPath,
    j: usize,
    order: u8,
    sign: StefanSign,
) -> Result<f64> {
    let flux = crate::pde::boundary_flux(field, path, j, order)?;
    Ok(sign.factor() * flux / path.radius(j))
}

/// `V_R(t_j) = z~_r(R(t_j), t_j)` along the whole path.
pub fn boundary_velocity(field: &SpaceTimeField, path: &BoundaryPath, order: u8) -> Result<Vec<f64>> {
    (0..=path.steps())
        .map(|j| crate::pde::boundary_flux(field, path, j, order))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryUpdate {
    pub path: BoundaryPath,
    /// Time indices where the new radius leaves `[R_star, E]`.
    pub breaches: Vec<usize>,
}

/// `R(t) = R0 + int_0^t rate(s) ds` by the cumulative trapezoid rule, with the
/// rate evaluated on the given path `R_bar`.
pub fn integrate_boundary(
    field: &SpaceTimeField,
    path_bar: &BoundaryPath,
    setup: &PhysicalSetup,
    order: u8,
    sign: StefanSign,
) -> Result<BoundaryUpdate> {
    let rates = (0..=path_bar.steps())
        .map(|j| stefan_rate(field, path_bar, j, order, sign))
        .collect::<Result<Vec<f64>>>()?;
    let dt = path_bar.dt();
    let mut radius = Vec::with_capacity(rates.len());
    radius.push(setup.r0);
    for j in 0..path_bar.steps() {
        let next = radius[j] + 0.5 * dt * (rates[j] + rates[j + 1]);
        radius.push(next);
    }
    let path = BoundaryPath::from_samples(path_bar.horizon(), radius, rates)?;
    let breaches = path.breaches(setup.r_star, setup.e);
    Ok(BoundaryUpdate { path, breaches })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOptions {
    pub corrector: bool,
    pub sign: StefanSign,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        Self {
            corrector: true,
            sign: StefanSign::Melting,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub state: SpaceTimeField,
    pub path: BoundaryPath,
}

/// Time-steps the semilinear equation and the Stefan law together: explicit
/// Euler predictor for the radius, optionally followed by a trapezoid corrector
/// and a re-solve of the PDE step.
pub fn coupled_solve(
    z0: &[f64],
    setup: &PhysicalSetup,
    control: Option<&SpaceTimeField>,
    cfg: &SchemeConfig,
    opts: &CoupledOptions,
) -> Result<CoupledSolution> {
    setup.validate()?;
    cfg.validate()?;
    let grid = cfg.grid();
    if z0.len() != grid.len() {
        return Err(Error::Dimension {
            what: "initial datum",
            expected: grid.len(),
            found: z0.len(),
        });
    }
    if let Some(c) = control {
        c.check_grid(&grid, cfg.m)?;
    }
    let dt = setup.t_final / cfg.m as f64;
    let order = cfg.flux_order;
    let nl = &setup.nonlinearity;
    let zeros = vec![0.0; grid.len()];
    let forcing = |j: usize, radius: f64, lagged: &[f64]| -> Vec<f64> {
        let c = control.map(|c| c.level(j)).unwrap_or(&zeros);
        let mask = control_mask(&grid, radius, setup.b);
        c.iter()
            .zip(mask)
            .zip(lagged)
            .map(|((v, inside), n)| if inside { v - n } else { -n })
            .collect()
    };
    let instability = |step| Error::Instability {
        step,
        suggested_n: 2 * cfg.n,
        suggested_m: 2 * cfg.m,
    };

    let mut state = SpaceTimeField::zeros(&grid, cfg.m, FieldRole::State);
    let mut u = z0.to_vec();
    u[0] = 0.0;
    *u.last_mut().unwrap() = 0.0;
    state.level_mut(0).copy_from_slice(&u);
    let mut radius = vec![setup.r0];
    let mut rates = vec![level_rate(&u, setup.r0, order, opts.sign)];
    for j in 0..cfg.m {
        let (r_old, q_old) = (radius[j], rates[j]);
        let lagged = nonlinear_term(nl, &u, &grid, r_old);
        let f_old = forcing(j, r_old, &lagged);
        let old = Level {
            radius: r_old,
            rate: q_old,
            potential: None,
        };
        let r_pred = r_old + dt * q_old;
        let new = Level {
            radius: r_pred,
            rate: q_old,
            potential: None,
        };
        let f_new = forcing(j + 1, r_pred, &lagged);
        let mut next = theta_step(&grid, cfg.theta, dt, &u, old, new, Some(&f_old), Some(&f_new))
            .ok_or_else(|| instability(j + 1))?;
        let mut r_new = r_pred;
        if opts.corrector {
            let q_pred = level_rate(&next, r_pred, order, opts.sign);
            r_new = r_old + 0.5 * dt * (q_old + q_pred);
            let new = Level {
                radius: r_new,
                rate: q_pred,
                potential: None,
            };
            let f_new = forcing(j + 1, r_new, &lagged);
            next = theta_step(&grid, cfg.theta, dt, &u, old, new, Some(&f_old), Some(&f_new))
                .ok_or_else(|| instability(j + 1))?;
        }
        if r_new < setup.r_star || r_new > setup.e {
            return Err(Error::ConstraintBreach(format!(
                "radius {r_new} left [{}, {}] at step {}",
                setup.r_star,
                setup.e,
                j + 1
            )));
        }
        u = next;
        state.level_mut(j + 1).copy_from_slice(&u);
        radius.push(r_new);
        rates.push(level_rate(&u, r_new, order, opts.sign));
    }
    let path = BoundaryPath::from_samples(setup.t_final, radius, rates)?;
    Ok(CoupledSolution { state, path })
}

/// Bounds of the sets on which the fixed-point map acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointConfig {
    /// Sup-norm bound `K` of the state set.
    pub k_bound: f64,
    /// Derivative bound `K1` of the radius set.
    pub k1_bound: f64,
    pub max_outer: usize,
    pub fp_tol: f64,
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    /// Final-state tolerance as a multiple of `||z~0||_{L^2}`.
    #[serde(default = "default_final_factor")]
    pub final_tolerance_factor: f64,
    #[serde(default)]
    pub sign: StefanSign,
}

fn default_final_factor() -> f64 {
    0.01
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            k_bound: 1.0,
            k1_bound: 1.0,
            max_outer: 50,
            fp_tol: 1e-6,
            epsilon_schedule: Vec::new(),
            final_tolerance_factor: default_final_factor(),
            sign: StefanSign::Melting,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_bound > 0.0 && self.k1_bound > 0.0) {
            return Err(Error::InvalidParameter {
                name: "K/K1",
                reason: "bounds must be positive".into(),
            });
        }
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fp_tol",
                reason: "must be positive".into(),
            });
        }
        if self.epsilon_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "epsilon_schedule",
                reason: "entries must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEpsDiagnostics {
    pub input_state_sup: f64,
    pub input_max_rate: f64,
    pub input_in_bounds: bool,
    pub state_sup: f64,
    pub max_rate: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub final_norm: f64,
    pub final_tolerance: f64,
    pub breaches: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LambdaEpsOutcome {
    pub state: SpaceTimeField,
    pub path: BoundaryPath,
    pub potential: SpaceTimeField,
    pub hum: HumOutcome,
    pub diagnostics: LambdaEpsDiagnostics,
}

/// Potential `a = g(z_bar / r)` of the linearization around `z_bar` (a reduced
/// field on the path `R_bar`).
pub fn linearization_potential(
    zbar: &SpaceTimeField,
    rbar: &BoundaryPath,
    nl: &Nonlinearity,
    cfg: &SchemeConfig,
) -> Result<SpaceTimeField> {
    let grid = cfg.grid();
    zbar.check_grid(&grid, rbar.steps())?;
    let mut a = SpaceTimeField::zeros(&grid, rbar.steps(), FieldRole::Potential);
    for j in 0..=rbar.steps() {
        let z = project_from_tilde(zbar.level(j), &grid, rbar.radius(j))?;
        for (dst, v) in a.level_mut(j).iter_mut().zip(z) {
            *dst = g_of(nl, v);
        }
    }
    Ok(a)
}

/// One application of `Lambda_eps`: linearize around `(z_bar, R_bar)`, compute
/// the penalized HUM control on `R_bar`, then update the boundary by the
/// integrated Stefan law.
#[allow(clippy::too_many_arguments)]
pub fn lambda_eps(
    zbar: &SpaceTimeField,
    rbar: &BoundaryPath,
    z0: &[f64],
    setup: &PhysicalSetup,
    hum: &HumConfig,
    cfg: &SchemeConfig,
    fpc: &FixedPointConfig,
) -> Result<LambdaEpsOutcome> {
    let mut breaches = Vec::new();
    let input_state_sup = zbar.sup_norm();
    let input_max_rate = rbar.max_abs_rate();
    if input_state_sup > fpc.k_bound {
        breaches.push(format!("input state sup {input_state_sup} exceeds K = {}", fpc.k_bound));
    }
    if input_max_rate > fpc.k1_bound {
        breaches.push(format!("input |R'| {input_max_rate} exceeds K1 = {}", fpc.k1_bound));
    }
    if !rbar.breaches(setup.r_star, setup.e).is_empty() {
        breaches.push(format!(
            "input path leaves [{}, {}] (min {}, max {})",
            setup.r_star,
            setup.e,
            rbar.min_radius(),
            rbar.max_radius()
        ));
    }
    let input_in_bounds = breaches.is_empty();

    let potential = linearization_potential(zbar, rbar, &setup.nonlinearity, cfg)?;
    let sys = LinearSystem::new(cfg, rbar, Some(&potential), setup.b)?;
    let outcome = minimize_j(&sys, z0, hum)?;
    let state = outcome.state.clone();
    let update = integrate_boundary(&state, rbar, setup, cfg.flux_order, fpc.sign)?;

    let state_sup = state.sup_norm();
    let max_rate = update.path.max_abs_rate();
    if state_sup > fpc.k_bound {
        breaches.push(format!("state sup {state_sup} exceeds K = {}", fpc.k_bound));
    }
    if max_rate > fpc.k1_bound {
        breaches.push(format!("|R'| {max_rate} exceeds K1 = {}", fpc.k1_bound));
    }
    if !update.breaches.is_empty() {
        breaches.push(format!(
            "updated path leaves [{}, {}] at {} nodes",
            setup.r_star,
            setup.e,
            update.breaches.len()
        ));
    }
    let final_tolerance = fpc.final_tolerance_factor * l2_norm(z0, rbar.radius(0));
    if outcome.final_norm > final_tolerance {
        breaches.push(format!(
            "final norm {} exceeds tolerance {final_tolerance}",
            outcome.final_norm
        ));
    }
    let diagnostics = LambdaEpsDiagnostics {
        input_state_sup,
        input_max_rate,
        input_in_bounds,
        state_sup,
        max_rate,
        r_min: update.path.min_radius(),
        r_max: update.path.max_radius(),
        final_norm: outcome.final_norm,
        final_tolerance,
        breaches,
    };
    Ok(LambdaEpsOutcome {
        state,
        path: update.path,
        potential,
        hum: outcome,
        diagnostics,
    })
}

/// One row of `fixedpoint-history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub iteration: usize,
    pub dz_sup: f64,
    pub dr_sup: f64,
    pub drate_sup: f64,
    pub final_norm: f64,
    pub cost_ratio: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub state_sup: f64,
}

impl FixedPointRecord {
    pub const CSV_HEADER: &'static str = "iteration,dz_sup,dr_sup,drate_sup,final_norm,cost_ratio,r_min,r_max";

    pub fn difference(&self) -> f64 {
        self.dz_sup.max(self.dr_sup).max(self.drate_sup)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.dz_sup,
            self.dr_sup,
            self.drate_sup,
            self.final_norm,
            self.cost_ratio,
            self.r_min,
            self.r_max
        )
    }
}

pub fn history_csv(history: &[FixedPointRecord]) -> String {
    let mut out = String::from(FixedPointRecord::CSV_HEADER);
    out.push('\n');
    for rec in history {
        out.push_str(&rec.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub final_norm: f64,
    pub cost_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub state: SpaceTimeField,
    pub control: SpaceTimeField,
    pub path: BoundaryPath,
    pub hum: HumSummary,
    pub history: Vec<FixedPointRecord>,
    pub converged: bool,
    pub breaches: Vec<String>,
    pub epsilon_study: Vec<EpsilonRecord>,
}

impl FixedPointOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Turns a non-converged run into an error carrying the last difference.
    pub fn require_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::FixedPointNotConverged {
                iterations: self.history.len(),
                last_difference: self.history.last().map_or(f64::NAN, FixedPointRecord::difference),
            })
        }
    }
}

struct PicardRun {
    last: LambdaEpsOutcome,
    history: Vec<FixedPointRecord>,
    converged: bool,
    breaches: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn picard(
    mut zbar: SpaceTimeField,
    mut rbar: BoundaryPath,
    z0: &[f64],
    setup: &PhysicalSetup,
    fpc: &FixedPointConfig,
    hum: &HumConfig,
    cfg: &SchemeConfig,
) -> Result<PicardRun> {
    let mut history = Vec::new();
    let mut breaches = Vec::new();
    let mut inside = zbar.sup_norm() <= fpc.k_bound;
    let mut last = None;
    let mut converged = false;
    for iteration in 1..=fpc.max_outer.max(1) {
        let out = lambda_eps(&zbar, &rbar, z0, setup, hum, cfg, fpc)?;
        let dz_sup = out.state.max_abs_diff(&zbar)?;
        let dr_sup = out
            .path
            .radii()
            .iter()
            .zip(rbar.radii())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let drate_sup = out
            .path
            .rates()
            .iter()
            .zip(rbar.rates())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let rec = FixedPointRecord {
            iteration,
            dz_sup,
            dr_sup,
            drate_sup,
            final_norm: out.hum.final_norm,
            cost_ratio: out.hum.cost_ratio,
            r_min: out.path.min_radius(),
            r_max: out.path.max_radius(),
            state_sup: out.diagnostics.state_sup,
        };
        if inside && rec.state_sup > fpc.k_bound {
            breaches.push(format!(
                "iteration {iteration}: state sup {} left the K-ball after entering it",
                rec.state_sup
            ));
        }
        inside |= rec.state_sup <= fpc.k_bound;
        if !out.path.breaches(setup.r_star, setup.e).is_empty() {
            breaches.push(format!(
                "iteration {iteration}: radius left [{}, {}] (min {}, max {})",
                setup.r_star, setup.e, rec.r_min, rec.r_max
            ));
        }
        let diff = rec.difference();
        history.push(rec);
        zbar = out.state.clone();
        rbar = out.path.clone();
        last = Some(out);
        if diff < fpc.fp_tol {
            converged = true;
            break;
        }
    }
    Ok(PicardRun {
        last: last.expect("at least one outer iteration"),
        history,
        converged,
        breaches,
    })
}

/// Picard iteration of `Lambda_eps` from `(z~0 extended in time, R = R0)`,
/// followed by the optional epsilon study (warm-started from the converged pair).
pub fn fixed_point_iterate(
    z0: &[f64],
    setup: &PhysicalSetup,
    fpc: &FixedPointConfig,
    hum: &HumConfig,
    cfg: &SchemeConfig,
) -> Result<FixedPointOutcome> {
    setup.validate()?;
    cfg.validate()?;
    fpc.validate()?;
    hum.validate()?;
    let grid = cfg.grid();
    let rbar = BoundaryPath::constant(setup.r0, setup.t_final, cfg.m)?;
    let mut zbar = SpaceTimeField::zeros(&grid, cfg.m, FieldRole::State);
    for j in 0..=cfg.m {
        zbar.level_mut(j).copy_from_slice(z0);
    }
    let run = picard(zbar, rbar, z0, setup, fpc, hum, cfg)?;

    let mut epsilon_study = Vec::new();
    for &eps in &fpc.epsilon_schedule {
        let hum_eps = hum.clone().with_epsilon(eps);
        let sub = picard(
            run.last.state.clone(),
            run.last.path.clone(),
            z0,
            setup,
            fpc,
            &hum_eps,
            cfg,
        )?;
        epsilon_study.push(EpsilonRecord {
            epsilon: eps,
            final_norm: sub.last.hum.final_norm,
            cost_ratio: sub.last.hum.cost_ratio,
            iterations: sub.history.len(),
            converged: sub.converged,
        });
    }

    Ok(FixedPointOutcome {
        state: run.last.state,
        control: run.last.hum.control.clone(),
        path: run.last.path,
        hum: run.last.hum.summary(),
        history: run.history,
        converged: run.converged,
        breaches: run.breaches,
        epsilon_study,
    })
}

/// Discrete Hölder seminorm `sup |V(t) - V(t')| / |t - t'|^kappa`.
pub fn holder_seminorm(values: &[f64], times: &[f64], kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 0.5) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!("must lie in (0, 1/2], got {kappa}"),
        });
    }
    if values.len() != times.len() {
        return Err(Error::Dimension {
            what: "Hölder samples",
            expected: times.len(),
            found: values.len(),
        });
    }
    let mut sup = 0.0_f64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let dt = (times[j] - times[i]).abs();
            if dt > 0.0 {
                sup = sup.max((values[j] - values[i]).abs() / dt.powf(kappa));
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InitialData, ReferenceGrid};
    use std::f64::consts::PI;

    #[test]
    fn g_values() {
        let lin = Nonlinearity::Linear { slope: 1.0 };
        for s in [-3.0, 0.0, 1e-10, 2.5] {
            assert!((g_of(&lin, s) - 1.0).abs() < 1e-15);
            assert_eq!(g_of(&Nonlinearity::Zero, s), 0.0);
        }
        let sine = Nonlinearity::Sine { amplitude: 1.0 };
        assert_eq!(g_of(&sine, 0.0), 1.0);
        assert!(g_of(&sine, PI).abs() < 1e-15);
        let table = Nonlinearity::Table {
            points: vec![[-1.0, -2.0], [0.0, 0.0], [1.0, 0.5]],
        };
        table.validate().unwrap();
        assert!((g_of(&table, 0.0) - 1.25).abs() < 1e-9);
        assert_eq!(table.lipschitz_bound(), 2.0);
        assert!((table.eval(3.0) - 1.5).abs() < 1e-15);
        let bad = Nonlinearity::Table {
            points: vec![[-1.0, 1.0], [1.0, 2.0]],
        };
        assert!(bad.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn lipschitz_bound_holds(a in -20.0f64..20.0, b in -20.0f64..20.0, amp in -3.0f64..3.0) {
            for nl in [Nonlinearity::Sine { amplitude: amp }, Nonlinearity::Linear { slope: amp }] {
                let lhs = (nl.eval(a) - nl.eval(b)).abs();
                proptest::prop_assert!(lhs <= nl.lipschitz_bound() * (a - b).abs() + 1e-12);
                proptest::prop_assert_eq!(nl.eval(0.0), 0.0);
            }
        }
    }

    fn frozen_sine(grid: &ReferenceGrid, path: &BoundaryPath, scale: f64) -> SpaceTimeField {
        SpaceTimeField::from_fn(grid, path, FieldRole::State, |r, _| {
            if r == 1.0 { 0.0 } else { scale * (PI * r).sin() }
        })
    }

    #[test]
    fn rate_sign_and_homogeneity() {
        let grid = ReferenceGrid::new(200).unwrap();
        let path = BoundaryPath::constant(1.0, 1.0, 10).unwrap();
        let zero = SpaceTimeField::zeros(&grid, 10, FieldRole::State);
        assert_eq!(stefan_rate(&zero, &path, 3, 2, StefanSign::Melting).unwrap(), 0.0);
        let f = frozen_sine(&grid, &path, 1.0);
        let rate = stefan_rate(&f, &path, 3, 2, StefanSign::Melting).unwrap();
        assert!((rate - PI).abs() < 1e-3);
        let f2 = frozen_sine(&grid, &path, 2.0);
        let rate2 = stefan_rate(&f2, &path, 3, 2, StefanSign::Melting).unwrap();
        assert!((rate2 - 2.0 * rate).abs() < 1e-12);
        assert_eq!(stefan_rate(&f, &path, 3, 2, StefanSign::Flipped).unwrap(), -rate);
    }

    #[test]
    fn integrate_frozen_profile() {
        let setup = PhysicalSetup::default();
        let grid = ReferenceGrid::new(400).unwrap();
        let path = BoundaryPath::constant(1.0, 0.1, 20).unwrap();
        let f = frozen_sine(&grid, &path, 1.0);
        let up = integrate_boundary(&f, &path, &setup, 2, StefanSign::Melting).unwrap();
        for j in 0..=20 {
            assert!((up.path.radius(j) - (1.0 + PI * path.time(j))).abs() < 1e-5);
        }
        assert!(up.breaches.is_empty());

        let zero = SpaceTimeField::zeros(&grid, 20, FieldRole::State);
        let still = integrate_boundary(&zero, &path, &setup, 2, StefanSign::Melting).unwrap();
        assert!(still.path.radii().iter().all(|r| *r == 1.0));
    }

    #[test]
    fn antisymmetric_flux_cancels() {
        let setup = PhysicalSetup::default();
        let grid = ReferenceGrid::new(50).unwrap();
        let path = BoundaryPath::constant(1.0, 0.4, 40).unwrap();
        let f = SpaceTimeField::from_fn(&grid, &path, FieldRole::State, |r, t| {
            if r == 1.0 { 0.0 } else { (PI * r).sin() * (0.2 - t) }
        });
        let up = integrate_boundary(&f, &path, &setup, 2, StefanSign::Melting).unwrap();
        assert!((up.path.radius(40) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn holder_cases() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        assert_eq!(holder_seminorm(&[3.0; 51], &times, 0.3).unwrap(), 0.0);
        let v: Vec<f64> = times.clone();
        assert!((holder_seminorm(&v, &times, 0.5).unwrap() - 1.0).abs() < 1e-14);
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let a = holder_seminorm(&v, &times, 0.25).unwrap();
        assert!((holder_seminorm(&v2, &times, 0.25).unwrap() - 2.0 * a).abs() < 1e-14);
        assert!(holder_seminorm(&v, &times, 0.7).is_err());
    }

    #[test]
    fn coupled_zero_is_stationary() {
        let setup = PhysicalSetup::default();
        let cfg = SchemeConfig::new(20, 20);
        let sol = coupled_solve(&[0.0; 21], &setup, None, &cfg, &CoupledOptions::default()).unwrap();
        assert_eq!(sol.state.sup_norm(), 0.0);
        assert!(sol.path.radii().iter().all(|r| *r == setup.r0));
    }

    #[test]
    fn lambda_eps_zero_data_is_fixed() {
        let setup = PhysicalSetup {
            nonlinearity: Nonlinearity::Sine { amplitude: 1.0 },
            ..PhysicalSetup::default()
        };
        let cfg = SchemeConfig::new(16, 32);
        let out = fixed_point_iterate(&[0.0; 17], &setup, &FixedPointConfig::default(), &HumConfig::default(), &cfg)
            .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 1);
        assert_eq!(out.state.sup_norm(), 0.0);
        assert!(out.path.radii().iter().all(|r| *r == 1.0));
    }

    #[test]
    fn initial_data_kinds_validate() {
        let bad = PhysicalSetup {
            initial: InitialData::Bump {
                amplitude: 1.0,
                center: 0.9,
                width: 0.3,
            },
            ..PhysicalSetup::default()
        };
        assert!(bad.validate().is_err());
    }
}
