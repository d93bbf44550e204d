//! Penalized HUM for the linearized moving-domain system.
//!
//! The control-to-state map `C: v~ -> z~(T)` (zero initial datum) and its exact
//! discrete adjoint `C*` give the Gramian `Lambda = C 1_omega C*`, which is
//! symmetric positive semidefinite under the trapezoid inner product at `t = T`.
//! With `y_free` the uncontrolled final state, the quadratic variant solves
//! `(Lambda + eps I) phi_T = -y_free` and sets `v~ = 1_omega C* phi_T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{h1_seminorm, l2_norm, BoundaryPath, FieldRole, PhysicalSetup, SpaceTimeField};
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, dot};
use crate::pde::{adjoint_trace, solve_forward_linear, LinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HumVariant {
    /// `(eps/2) ||phi_T||^2`: a symmetric positive definite linear system.
    QuadraticPenalty,
    /// `eps ||phi_T||`, minimized by accelerated proximal gradient.
    ExactNonsmooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumConfig {
    pub epsilon: f64,
    #[serde(default = "default_variant")]
    pub variant: HumVariant,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iters")]
    pub cg_max_iters: usize,
    #[serde(default = "default_prox_steps")]
    pub prox_steps: usize,
}

fn default_variant() -> HumVariant {
    HumVariant::QuadraticPenalty
}
fn default_cg_tol() -> f64 {
    1e-10
}
fn default_cg_max_iters() -> usize {
    2000
}
fn default_prox_steps() -> usize {
    5000
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            variant: default_variant(),
            cg_tol: default_cg_tol(),
            cg_max_iters: default_cg_max_iters(),
            prox_steps: default_prox_steps(),
        }
    }
}

impl HumConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be positive, got {}", self.epsilon),
            });
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "cg_tol",
                reason: format!("must lie in (0, 1), got {}", self.cg_tol),
            });
        }
        if self.cg_max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "cg_max_iters",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HumOutcome {
    pub phi_t_star: Vec<f64>,
    /// Control `v~`, zero outside `rho R(t) < b`.
    pub control: SpaceTimeField,
    /// Controlled state from the verification solve.
    pub state: SpaceTimeField,
    pub free_final: Vec<f64>,
    pub final_norm: f64,
    pub free_final_norm: f64,
    pub cost: f64,
    pub cost_ratio: f64,
    pub initial_h1_norm: f64,
    pub cg_iters: usize,
    pub residual_history: Vec<f64>,
    /// True residual `||(Lambda + eps) phi + y_free|| / ||y_free||` (quadratic variant).
    pub optimality_residual: f64,
    pub j_value: f64,
    pub epsilon: f64,
    pub variant: HumVariant,
}

/// Scalar summary written as `hum-summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumSummary {
    pub epsilon: f64,
    pub variant: HumVariant,
    pub cg_iters: usize,
    pub j_value: f64,
    pub final_norm: f64,
    pub free_final_norm: f64,
    pub cost: f64,
    pub cost_ratio: f64,
}

impl HumOutcome {
    pub fn summary(&self) -> HumSummary {
        HumSummary {
            epsilon: self.epsilon,
            variant: self.variant,
            cg_iters: self.cg_iters,
            j_value: self.j_value,
            final_norm: self.final_norm,
            free_final_norm: self.free_final_norm,
            cost: self.cost,
            cost_ratio: self.cost_ratio,
        }
    }
}

/// Masked adjoint trace `1_omega C* phi_T`, tagged as a control.
pub fn control_from_terminal(sys: &LinearSystem<'_>, phi_t: &[f64]) -> Result<SpaceTimeField> {
    let mut trace = adjoint_trace(sys, phi_t)?.with_role(FieldRole::Control);
    for j in 0..=sys.steps() {
        let mask = sys.mask(j);
        for (v, inside) in trace.level_mut(j).iter_mut().zip(mask) {
            if !inside {
                *v = 0.0;
            }
        }
    }
    Ok(trace)
}

/// `Lambda phi_T`: adjoint trace, mask, forward from zero, sample at `T`.
pub fn gramian_apply(sys: &LinearSystem<'_>, phi_t: &[f64]) -> Result<Vec<f64>> {
    let control = control_from_terminal(sys, phi_t)?;
    let zeros = vec![0.0; phi_t.len()];
    let state = solve_forward_linear(sys, &zeros, Some(&control))?;
    Ok(state.level(sys.steps()).to_vec())
}

/// Dense Gramian on interior nodes, assembled column by column.
pub fn assemble_gramian(sys: &LinearSystem<'_>) -> Result<DMatrix<f64>> {
    assemble_interior(sys, |e| gramian_apply(sys, e))
}

pub(crate) fn assemble_interior<F>(sys: &LinearSystem<'_>, mut apply: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let nodes = sys.grid().len();
    let n = nodes - 2;
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; nodes];
    for k in 0..n {
        e[k + 1] = 1.0;
        let col = apply(&e)?;
        for i in 0..n {
            mat[(i, k)] = col[i + 1];
        }
        e[k + 1] = 0.0;
    }
    Ok(mat)
}

/// Solves `(Lambda + eps I) phi = -y_free` densely (test oracle for small grids).
pub fn dense_hum_terminal(sys: &LinearSystem<'_>, z0: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let lambda = assemble_gramian(sys)?;
    let n = lambda.nrows();
    let free = solve_forward_linear(sys, z0, None)?;
    let y = free.level(sys.steps());
    let rhs = DVector::from_iterator(n, y[1..=n].iter().map(|v| -v));
    let system = lambda + DMatrix::identity(n, n) * epsilon;
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("dense HUM system".into()))?;
    let mut out = vec![0.0; n + 2];
    out[1..=n].copy_from_slice(sol.as_slice());
    Ok(out)
}

/// Minimizes the penalized dual functional and extracts the control.
pub fn minimize_j(sys: &LinearSystem<'_>, z0: &[f64], cfg: &HumConfig) -> Result<HumOutcome> {
    cfg.validate()?;
    let m = sys.steps();
    let r_final = sys.path.radius(m);
    let free = solve_forward_linear(sys, z0, None)?;
    let y = free.level(m).to_vec();
    let y_norm = l2_norm(&y, r_final);

    let (phi, cg_iters, residual_history) = match cfg.variant {
        HumVariant::QuadraticPenalty => {
            let rhs: Vec<f64> = y.iter().map(|v| -v).collect();
            let eps = cfg.epsilon;
            let rep = conjugate_gradient(
                |p| {
                    let mut out = gramian_apply(sys, p)?;
                    out.iter_mut().zip(p).for_each(|(o, v)| *o += eps * v);
                    Ok(out)
                },
                &rhs,
                cfg.cg_tol,
                cfg.cg_max_iters,
            )?;
            (rep.solution, rep.iterations, rep.residual_history)
        }
        HumVariant::ExactNonsmooth => {
            let (phi, steps, hist) = proximal_minimize(sys, &y, cfg)?;
            (phi, steps, hist)
        }
    };

    let lambda_phi = gramian_apply(sys, &phi)?;
    let optimality_residual = if y_norm > 0.0 {
        let res: Vec<f64> = lambda_phi
            .iter()
            .zip(&phi)
            .zip(&y)
            .map(|((l, p), yv)| l + cfg.epsilon * p + yv)
            .collect();
        l2_norm(&res, r_final) / y_norm
    } else {
        0.0
    };

    let control = control_from_terminal(sys, &phi)?;
    let state = solve_forward_linear(sys, z0, Some(&control))?;
    let final_norm = l2_norm(state.level(m), r_final);
    let cost = sys.space_time_inner(&control, &control).max(0.0).sqrt();
    let initial_h1_norm = h1_seminorm(z0, &sys.grid(), sys.path.radius(0));
    let cost_ratio = if initial_h1_norm > 0.0 { cost / initial_h1_norm } else { 0.0 };
    let phi_norm = l2_norm(&phi, r_final);
    let penalty = match cfg.variant {
        HumVariant::QuadraticPenalty => 0.5 * cfg.epsilon * phi_norm * phi_norm,
        HumVariant::ExactNonsmooth => cfg.epsilon * phi_norm,
    };
    let j_value = 0.5 * cost * cost + penalty + sys.inner(m, &phi, &y);

    Ok(HumOutcome {
        phi_t_star: phi,
        control,
        state,
        free_final: y,
        final_norm,
        free_final_norm: y_norm,
        cost,
        cost_ratio,
        initial_h1_norm,
        cg_iters,
        residual_history,
        optimality_residual,
        j_value,
        epsilon: cfg.epsilon,
        variant: cfg.variant,
    })
}

/// FISTA on `1/2 <Lambda phi, phi> + eps ||phi|| + <y, phi>`.
fn proximal_minimize(sys: &LinearSystem<'_>, y: &[f64], cfg: &HumConfig) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let m = sys.steps();
    let r_final = sys.path.radius(m);
    let nodes = y.len();
    let y_norm = l2_norm(y, r_final);
    if y_norm <= cfg.epsilon {
        // 0 is optimal: the subdifferential of eps ||.|| at 0 contains -y
        return Ok((vec![0.0; nodes], 0, vec![0.0]));
    }
    let lipschitz = 1.05 * gramian_norm_estimate(sys, 40)?;
    let step = 1.0 / lipschitz;
    let prox = |v: Vec<f64>| -> Vec<f64> {
        let nv = l2_norm(&v, r_final);
        let shrink = if nv > 0.0 { (1.0 - step * cfg.epsilon / nv).max(0.0) } else { 0.0 };
        v.into_iter().map(|x| shrink * x).collect()
    };
    let mut x = vec![0.0; nodes];
    let mut z = x.clone();
    let mut tk = 1.0_f64;
    let mut history = Vec::new();
    let mut steps = 0;
    for _ in 0..cfg.prox_steps {
        let grad: Vec<f64> = gramian_apply(sys, &z)?.iter().zip(y).map(|(g, yv)| g + yv).collect();
        let x_new = prox(z.iter().zip(&grad).map(|(zv, g)| zv - step * g).collect());
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let momentum = (tk - 1.0) / t_new;
        z = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| a + momentum * (a - b))
            .collect();
        let delta: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let change = l2_norm(&delta, r_final) / l2_norm(&x_new, r_final).max(f64::MIN_POSITIVE);
        history.push(change);
        x = x_new;
        tk = t_new;
        steps += 1;
        if change < cfg.cg_tol {
            break;
        }
    }
    Ok((x, steps, history))
}

/// Power-iteration estimate of the largest eigenvalue of the Gramian.
pub fn gramian_norm_estimate(sys: &LinearSystem<'_>, iters: usize) -> Result<f64> {
    let grid = sys.grid();
    let n = grid.intervals();
    let mut v: Vec<f64> = (0..=n)
        .map(|i| if i == 0 || i == n { 0.0 } else { 1.0 + 0.1 * (i as f64).sin() })
        .collect();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let w = gramian_apply(sys, &v)?;
        estimate = dot(&v, &w);
        v = w;
    }
    Ok(estimate)
}

/// Constant of the control-cost bound together with the quantities it may depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub cost: f64,
    pub initial_h1_norm: f64,
    pub cost_ratio: f64,
    /// Set when the initial datum vanishes and the ratio is meaningless.
    pub degenerate: bool,
    pub r_star: f64,
    pub e: f64,
    pub b: f64,
    pub max_abs_rate: f64,
    pub max_abs_potential: f64,
    pub t_final: f64,
}

pub fn control_cost_report(
    outcome: &HumOutcome,
    setup: &PhysicalSetup,
    path: &BoundaryPath,
    potential: Option<&SpaceTimeField>,
) -> CostReport {
    let degenerate = outcome.initial_h1_norm == 0.0;
    CostReport {
        cost: outcome.cost,
        initial_h1_norm: outcome.initial_h1_norm,
        cost_ratio: if degenerate { 0.0 } else { outcome.cost_ratio },
        degenerate,
        r_star: setup.r_star,
        e: setup.e,
        b: setup.b,
        max_abs_rate: path.max_abs_rate(),
        max_abs_potential: potential.map_or(0.0, SpaceTimeField::sup_norm),
        t_final: path.horizon(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ReferenceGrid;
    use crate::pde::SchemeConfig;
    use std::f64::consts::PI;

    fn sine(grid: &ReferenceGrid) -> Vec<f64> {
        let n = grid.intervals();
        (0..=n).map(|i| if i == n { 0.0 } else { (PI * grid.node(i)).sin() }).collect()
    }

    #[test]
    fn zero_terminal_gives_zero() {
        let cfg = SchemeConfig::new(12, 16);
        let path = BoundaryPath::constant(1.0, 0.5, 16).unwrap();
        let sys = LinearSystem::new(&cfg, &path, None, 0.3).unwrap();
        assert!(gramian_apply(&sys, &[0.0; 13]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_initial_datum() {
        let cfg = SchemeConfig::new(12, 16);
        let path = BoundaryPath::constant(1.0, 0.5, 16).unwrap();
        let sys = LinearSystem::new(&cfg, &path, None, 0.3).unwrap();
        let out = minimize_j(&sys, &[0.0; 13], &HumConfig::default()).unwrap();
        assert!(out.phi_t_star.iter().all(|v| *v == 0.0));
        assert_eq!(out.control.sup_norm(), 0.0);
        assert_eq!(out.final_norm, 0.0);
        let setup = PhysicalSetup::default();
        let rep = control_cost_report(&out, &setup, &path, None);
        assert!(rep.degenerate);
        assert_eq!(rep.cost_ratio, 0.0);
    }

    #[test]
    fn control_vanishes_outside_region() {
        let cfg = SchemeConfig::new(20, 20);
        let path = BoundaryPath::from_fn(0.5, 20, |t| 1.0 + 0.2 * t, |_| 0.2).unwrap();
        let sys = LinearSystem::new(&cfg, &path, None, 0.3).unwrap();
        let grid = cfg.grid();
        let out = minimize_j(&sys, &sine(&grid), &HumConfig::default()).unwrap();
        for j in 0..=20 {
            for i in 0..=20 {
                if grid.node(i) * path.radius(j) >= 0.3 {
                    assert_eq!(out.control.get(i, j), 0.0);
                }
            }
        }
        assert!(out.control.sup_norm() > 0.0);
    }

    #[test]
    fn superposition_of_final_state() {
        let cfg = SchemeConfig::new(20, 30);
        let path = BoundaryPath::constant(1.0, 0.5, 30).unwrap();
        let sys = LinearSystem::new(&cfg, &path, None, 0.3).unwrap();
        let grid = cfg.grid();
        let out = minimize_j(&sys, &sine(&grid), &HumConfig::default()).unwrap();
        let lambda_phi = gramian_apply(&sys, &out.phi_t_star).unwrap();
        for i in 0..=20 {
            let expected = out.free_final[i] + lambda_phi[i];
            assert!((out.state.get(i, 30) - expected).abs() < 1e-15);
        }
        assert!(out.optimality_residual <= 1e-10);
    }

    #[test]
    fn nonsmooth_variant_reaches_epsilon_ball() {
        let cfg = SchemeConfig::new(16, 32);
        let path = BoundaryPath::constant(1.0, 0.1, 32).unwrap();
        let sys = LinearSystem::new(&cfg, &path, None, 0.3).unwrap();
        let grid = cfg.grid();
        let z0 = sine(&grid);
        let hum = HumConfig {
            epsilon: 0.05,
            variant: HumVariant::ExactNonsmooth,
            cg_tol: 1e-9,
            prox_steps: 20000,
            ..HumConfig::default()
        };
        let out = minimize_j(&sys, &z0, &hum).unwrap();
        assert!(out.free_final_norm > 0.05);
        // optimality: the final state has norm eps when phi != 0
        assert!((out.final_norm - 0.05).abs() < 1e-3, "{}", out.final_norm);

        // a ball larger than the free final state needs no control
        let lazy = minimize_j(&sys, &z0, &HumConfig { epsilon: 10.0, ..hum }).unwrap();
        assert_eq!(lazy.control.sup_norm(), 0.0);
    }
}
