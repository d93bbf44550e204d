//! Parabolic solvers on the moving interval `[0, R(t)]`.
//!
//! The moving interval is mapped to `[0, 1]` by `r = rho R(t)`, which turns
//! `z~_t - z~_rr + a z~ = F` into
//!
//! ```text
//! z~_t - (1/R^2) z~_rr - (rho R'/R) z~_rho + a z~ = F
//! ```
//!
//! discretized with central differences in `rho` and a theta-scheme in time.
//! Writing `L_j` for the spatial operator at `t_j`, one forward step is
//!
//! ```text
//! (I + theta dt L_{j+1}) u^{j+1} = (I - (1 - theta) dt L_j) u^j + dt (theta F^{j+1} + (1 - theta) F^j)
//! ```
//!
//! The backward solver is the exact transpose of this recursion with respect to
//! the trapezoid inner product `<u, v>_j = R_j drho sum u_i v_i`, so the discrete
//! duality identity between the two holds up to round-off.

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryPath, FieldRole, ReferenceGrid, SpaceTimeField};
use crate::error::{Error, Result};
use crate::linalg::Tridiag;
use crate::stefan::Nonlinearity;

/// Discretization parameters shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    /// Number of spatial intervals.
    pub n: usize,
    /// Number of time steps.
    pub m: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// One-sided stencil order (1 or 2) for boundary derivatives.
    #[serde(default = "default_flux_order")]
    pub flux_order: u8,
}

fn default_theta() -> f64 {
    0.5
}

fn default_flux_order() -> u8 {
    2
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            n: 50,
            m: 100,
            theta: 0.5,
            flux_order: 2,
        }
    }
}

impl SchemeConfig {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            ..Self::default()
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: format!("must lie in [1/2, 1], got {}", self.theta),
            });
        }
        if self.n < 8 || self.m < 8 {
            return Err(Error::InvalidParameter {
                name: "N/M",
                reason: format!("need N >= 8 and M >= 8, got N = {}, M = {}", self.n, self.m),
            });
        }
        if !matches!(self.flux_order, 1 | 2) {
            return Err(Error::InvalidParameter {
                name: "flux_order",
                reason: format!("must be 1 or 2, got {}", self.flux_order),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> ReferenceGrid {
        ReferenceGrid::new(self.n).expect("validated scheme has N >= 8")
    }

    fn instability(&self, step: usize) -> Error {
        Error::Instability {
            step,
            suggested_n: 2 * self.n,
            suggested_m: 2 * self.m,
        }
    }
}

/// Coefficients of the linear problem on a given path: the path itself, an
/// optional potential `a`, and the control radius `b` (control is applied on
/// nodes with `rho_i R(t_j) < b`).
#[derive(Debug, Clone, Copy)]
pub struct LinearSystem<'a> {
    pub scheme: &'a SchemeConfig,
    pub path: &'a BoundaryPath,
    pub potential: Option<&'a SpaceTimeField>,
    pub control_radius: f64,
}

impl<'a> LinearSystem<'a> {
    pub fn new(
        scheme: &'a SchemeConfig,
        path: &'a BoundaryPath,
        potential: Option<&'a SpaceTimeField>,
        control_radius: f64,
    ) -> Result<Self> {
        scheme.validate()?;
        if path.steps() != scheme.m {
            return Err(Error::Dimension {
                what: "path time steps",
                expected: scheme.m,
                found: path.steps(),
            });
        }
        if let Some(a) = potential {
            a.check_grid(&scheme.grid(), scheme.m)?;
            if a.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Inconsistent("potential must be bounded".into()));
            }
        }
        Ok(Self {
            scheme,
            path,
            potential,
            control_radius,
        })
    }

    pub fn grid(&self) -> ReferenceGrid {
        self.scheme.grid()
    }

    pub fn dt(&self) -> f64 {
        self.path.dt()
    }

    pub fn steps(&self) -> usize {
        self.scheme.m
    }

    /// Nodal indicator of the control region at time level `j`.
    pub fn mask(&self, j: usize) -> Vec<bool> {
        control_mask(&self.grid(), self.path.radius(j), self.control_radius)
    }

    /// Zeroes `values` outside the control region at level `j`.
    pub fn apply_mask(&self, values: &mut [f64], j: usize) {
        for (v, inside) in values.iter_mut().zip(self.mask(j)) {
            if !inside {
                *v = 0.0;
            }
        }
    }

    fn level(&self, j: usize) -> Level<'_> {
        Level {
            radius: self.path.radius(j),
            rate: self.path.rate(j),
            potential: self.potential.map(|a| a.level(j)),
        }
    }

    /// Trapezoid inner product at time level `j`.
    pub fn inner(&self, j: usize, u: &[f64], v: &[f64]) -> f64 {
        crate::domain::inner_product(u, v, self.path.radius(j))
    }

    /// Space-time trapezoid inner product over `[0, R(t)] x [0, T]`.
    pub fn space_time_inner(&self, u: &SpaceTimeField, v: &SpaceTimeField) -> f64 {
        let m = self.steps();
        (0..=m)
            .map(|j| {
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                w * self.dt() * self.inner(j, u.level(j), v.level(j))
            })
            .sum()
    }
}

pub(crate) fn control_mask(grid: &ReferenceGrid, radius: f64, b: f64) -> Vec<bool> {
    (0..grid.len()).map(|i| grid.node(i) * radius < b).collect()
}

/// Coefficients at one time level.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Level<'a> {
    pub radius: f64,
    pub rate: f64,
    pub potential: Option<&'a [f64]>,
}

/// Spatial operator `L` restricted to interior nodes `1..N`.
fn spatial_operator(grid: &ReferenceGrid, lvl: Level<'_>) -> Tridiag {
    let n = grid.intervals();
    let h = grid.step();
    let diffusion = 1.0 / (lvl.radius * lvl.radius * h * h);
    let drift = lvl.rate / lvl.radius;
    let size = n - 1;
    let mut lower = vec![0.0; size];
    let mut diag = vec![0.0; size];
    let mut upper = vec![0.0; size];
    for k in 0..size {
        let i = k + 1;
        let c = grid.node(i) * drift / (2.0 * h);
        lower[k] = -diffusion + c;
        upper[k] = -diffusion - c;
        diag[k] = 2.0 * diffusion + lvl.potential.map_or(0.0, |a| a[i]);
    }
    lower[0] = 0.0;
    upper[size - 1] = 0.0;
    Tridiag { lower, diag, upper }
}

/// `I + factor * L`.
fn shifted(mut op: Tridiag, factor: f64) -> Tridiag {
    op.lower.iter_mut().for_each(|v| *v *= factor);
    op.upper.iter_mut().for_each(|v| *v *= factor);
    op.diag.iter_mut().for_each(|v| *v = 1.0 + factor * *v);
    op
}

fn interior(u: &[f64]) -> &[f64] {
    &u[1..u.len() - 1]
}

fn embed(inner: Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.push(0.0);
    out.extend(inner);
    out.push(0.0);
    out
}

/// One forward theta-step from level `old` to level `new`. Forcing vectors are
/// full-length; their endpoint values are ignored.
#[allow(clippy::too_many_arguments)]
pub(crate) fn theta_step(
    grid: &ReferenceGrid,
    theta: f64,
    dt: f64,
    u: &[f64],
    old: Level<'_>,
    new: Level<'_>,
    forcing_old: Option<&[f64]>,
    forcing_new: Option<&[f64]>,
) -> Option<Vec<f64>> {
    let explicit = shifted(spatial_operator(grid, old), -(1.0 - theta) * dt);
    let implicit = shifted(spatial_operator(grid, new), theta * dt);
    let mut rhs = explicit.matvec(interior(u));
    if let Some(f) = forcing_new {
        rhs.iter_mut()
            .zip(interior(f))
            .for_each(|(r, v)| *r += dt * theta * v);
    }
    if let Some(f) = forcing_old {
        rhs.iter_mut()
            .zip(interior(f))
            .for_each(|(r, v)| *r += dt * (1.0 - theta) * v);
    }
    let next = implicit.solve(&rhs)?;
    if next.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(embed(next))
}

/// Transpose of [`theta_step`] under the trapezoid inner product.
///
/// Returns `(phi^j, eta^{j+1})` where `eta^{j+1} = A_{j+1}^{-T} (phi^{j+1} + theta dt F^{j+1})`
/// and `phi^j = (R_{j+1}/R_j) B_j^T eta^{j+1} + (1 - theta) dt F^j`.
#[allow(clippy::too_many_arguments)]
fn adjoint_step(
    grid: &ReferenceGrid,
    theta: f64,
    dt: f64,
    phi_next: &[f64],
    old: Level<'_>,
    new: Level<'_>,
    source_old: Option<&[f64]>,
    source_new: Option<&[f64]>,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let explicit_t = shifted(spatial_operator(grid, old), -(1.0 - theta) * dt).transpose();
    let implicit_t = shifted(spatial_operator(grid, new), theta * dt).transpose();
    let mut rhs = interior(phi_next).to_vec();
    if let Some(f) = source_new {
        rhs.iter_mut()
            .zip(interior(f))
            .for_each(|(r, v)| *r += dt * theta * v);
    }
    let eta = implicit_t.solve(&rhs)?;
    let ratio = new.radius / old.radius;
    let mut phi: Vec<f64> = explicit_t.matvec(&eta).into_iter().map(|v| ratio * v).collect();
    if let Some(f) = source_old {
        phi.iter_mut()
            .zip(interior(f))
            .for_each(|(p, v)| *p += dt * (1.0 - theta) * v);
    }
    if phi.iter().chain(&eta).any(|v| !v.is_finite()) {
        return None;
    }
    Some((embed(phi), embed(eta)))
}

fn check_endpoints(what: &'static str, u: &[f64], grid: &ReferenceGrid) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::Dimension {
            what,
            expected: grid.len(),
            found: u.len(),
        });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inconsistent(format!("{what} must be finite")));
    }
    let scale = u.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let (left, right) = (u[0], u[u.len() - 1]);
    if left.abs() > crate::domain::DIRICHLET_TOL * scale || right.abs() > crate::domain::DIRICHLET_TOL * scale {
        return Err(Error::Dirichlet { level: 0, left, right });
    }
    Ok(())
}

/// Forcing at level `j`: the source, masked to the control region when it
/// carries the control role.
fn forcing_level(sys: &LinearSystem<'_>, source: Option<&SpaceTimeField>, j: usize) -> Option<Vec<f64>> {
    source.map(|s| {
        let mut v = s.level(j).to_vec();
        if s.role() == FieldRole::Control {
            sys.apply_mask(&mut v, j);
        }
        v
    })
}

/// Solves `z~_t - z~_rr + a z~ = source` forward in time from `z0`.
pub fn solve_forward_linear(
    sys: &LinearSystem<'_>,
    z0: &[f64],
    source: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    let grid = sys.grid();
    check_endpoints("initial datum", z0, &grid)?;
    if let Some(s) = source {
        s.check_grid(&grid, sys.steps())?;
    }
    let mut out = SpaceTimeField::zeros(&grid, sys.steps(), FieldRole::State);
    let mut u = z0.to_vec();
    u[0] = 0.0;
    *u.last_mut().unwrap() = 0.0;
    out.level_mut(0).copy_from_slice(&u);
    let mut f_old = forcing_level(sys, source, 0);
    for j in 0..sys.steps() {
        let f_new = forcing_level(sys, source, j + 1);
        u = theta_step(
            &grid,
            sys.scheme.theta,
            sys.dt(),
            &u,
            sys.level(j),
            sys.level(j + 1),
            f_old.as_deref(),
            f_new.as_deref(),
        )
        .ok_or_else(|| sys.scheme.instability(j + 1))?;
        out.level_mut(j + 1).copy_from_slice(&u);
        f_old = f_new;
    }
    Ok(out)
}

/// `r f(z~ / r)` at every node of one level; zero at the origin.
pub(crate) fn nonlinear_term(nl: &Nonlinearity, u: &[f64], grid: &ReferenceGrid, radius: f64) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = grid.node(i) * radius;
            if r == 0.0 {
                0.0
            } else {
                r * nl.eval(v / r)
            }
        })
        .collect()
}

/// Solves the reduced semilinear problem `z~_t - z~_rr + r f(z~/r) = 1_omega v~`,
/// with the nonlinear term lagged to the previous time level.
pub fn solve_semilinear(
    sys: &LinearSystem<'_>,
    nl: &Nonlinearity,
    z0: &[f64],
    control: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    let grid = sys.grid();
    check_endpoints("initial datum", z0, &grid)?;
    if let Some(c) = control {
        c.check_grid(&grid, sys.steps())?;
    }
    let mut out = SpaceTimeField::zeros(&grid, sys.steps(), FieldRole::State);
    let mut u = z0.to_vec();
    u[0] = 0.0;
    *u.last_mut().unwrap() = 0.0;
    out.level_mut(0).copy_from_slice(&u);
    let zeros = vec![0.0; grid.len()];
    for j in 0..sys.steps() {
        let lagged = nonlinear_term(nl, &u, &grid, sys.path.radius(j));
        let c_old = forcing_level(sys, control, j).unwrap_or_else(|| zeros.clone());
        let c_new = forcing_level(sys, control, j + 1).unwrap_or_else(|| zeros.clone());
        let f_old: Vec<f64> = c_old.iter().zip(&lagged).map(|(c, n)| c - n).collect();
        let f_new: Vec<f64> = c_new.iter().zip(&lagged).map(|(c, n)| c - n).collect();
        u = theta_step(
            &grid,
            sys.scheme.theta,
            sys.dt(),
            &u,
            sys.level(j),
            sys.level(j + 1),
            Some(&f_old),
            Some(&f_new),
        )
        .ok_or_else(|| sys.scheme.instability(j + 1))?;
        out.level_mut(j + 1).copy_from_slice(&u);
    }
    Ok(out)
}

struct AdjointSweep {
    states: SpaceTimeField,
    /// `eta^{j}` for `j = 1..=M`; entry 0 is unused.
    etas: Vec<Vec<f64>>,
}

fn adjoint_sweep(sys: &LinearSystem<'_>, phi_t: &[f64], source: Option<&SpaceTimeField>) -> Result<AdjointSweep> {
    let grid = sys.grid();
    check_endpoints("terminal datum", phi_t, &grid)?;
    if let Some(f) = source {
        f.check_grid(&grid, sys.steps())?;
    }
    let m = sys.steps();
    let mut states = SpaceTimeField::zeros(&grid, m, FieldRole::Adjoint);
    let mut etas = vec![Vec::new(); m + 1];
    let mut phi = phi_t.to_vec();
    phi[0] = 0.0;
    *phi.last_mut().unwrap() = 0.0;
    states.level_mut(m).copy_from_slice(&phi);
    for j in (0..m).rev() {
        let (prev, eta) = adjoint_step(
            &grid,
            sys.scheme.theta,
            sys.dt(),
            &phi,
            sys.level(j),
            sys.level(j + 1),
            source.map(|f| f.level(j)),
            source.map(|f| f.level(j + 1)),
        )
        .ok_or_else(|| sys.scheme.instability(j))?;
        states.level_mut(j).copy_from_slice(&prev);
        etas[j + 1] = eta;
        phi = prev;
    }
    Ok(AdjointSweep { states, etas })
}

/// Solves `-phi_t - phi_rr + a phi = F` backward from `phi(T) = phi_T`.
pub fn solve_adjoint(
    sys: &LinearSystem<'_>,
    phi_t: &[f64],
    source: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    Ok(adjoint_sweep(sys, phi_t, source)?.states)
}

/// The adjoint of the control-to-state map `v~ -> z~(T)` (zero initial datum)
/// applied to `phi_T`, with controls measured in the space-time trapezoid inner
/// product. It is a second-order approximation of the adjoint solution and is
/// what penalized HUM uses as the control before masking.
pub fn adjoint_trace(sys: &LinearSystem<'_>, phi_t: &[f64]) -> Result<SpaceTimeField> {
    let sweep = adjoint_sweep(sys, phi_t, None)?;
    let grid = sys.grid();
    let m = sys.steps();
    let theta = sys.scheme.theta;
    let mut trace = SpaceTimeField::zeros(&grid, m, FieldRole::Adjoint);
    for j in 0..=m {
        let rj = sys.path.radius(j);
        let level = trace.level_mut(j);
        if j >= 1 {
            let eta = &sweep.etas[j];
            let w = if j == m { 2.0 * theta } else { theta };
            level.iter_mut().zip(eta).for_each(|(t, e)| *t += w * e);
        }
        if j < m {
            let eta = &sweep.etas[j + 1];
            let ratio = sys.path.radius(j + 1) / rj;
            let w = if j == 0 { 2.0 * (1.0 - theta) } else { 1.0 - theta } * ratio;
            level.iter_mut().zip(eta).for_each(|(t, e)| *t += w * e);
        }
    }
    Ok(trace)
}

/// One-sided boundary derivative `z~_r(R(t_j), t_j)`.
pub fn boundary_flux(field: &SpaceTimeField, path: &BoundaryPath, j: usize, order: u8) -> Result<f64> {
    match field.role() {
        FieldRole::State | FieldRole::Adjoint => {}
        other => {
            return Err(Error::Role {
                expected: "state or adjoint",
                found: other.name(),
            })
        }
    }
    field.check_dirichlet_level(j)?;
    Ok(level_flux(field.level(j), path.radius(j), order))
}

pub(crate) fn level_flux(u: &[f64], radius: f64, order: u8) -> f64 {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let d_rho = if order == 1 {
        (u[n] - u[n - 1]) / h
    } else {
        (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h)
    };
    d_rho / radius
}
