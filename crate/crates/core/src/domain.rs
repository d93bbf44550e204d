//! Geometry, grids and the radial reduction.
//!
//! All discretizations live on the reference interval `rho in [0, 1]`, mapped to
//! the physical interval `[0, R(t)]` through `r = rho * R(t)`. The substituted
//! unknown `z~ = r z` removes the `2/r` drift of the radial Laplacian and turns
//! the symmetry condition at the origin into a Dirichlet condition.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stefan::Nonlinearity;

/// Tolerance used when checking that a sampled field vanishes at an endpoint.
pub(crate) const DIRICHLET_TOL: f64 = 1e-12;

/// Uniform grid `rho_i = i / N` on the reference interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    n: usize,
}

impl ReferenceGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: format!("need at least 2 intervals, got {n}"),
            });
        }
        Ok(Self { n })
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.n
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            1.0
        } else {
            i as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    /// Physical radii `rho_i * radius`.
    pub fn radii(&self, radius: f64) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i) * radius).collect()
    }

    fn check_len(&self, what: &'static str, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::Dimension {
                what,
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }
}

/// Initial datum `z~0` on `[0, R0]`, described in the reduced variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// `amplitude * sin(mode * pi * r / R0)`.
    Sine { amplitude: f64, mode: u32 },
    /// `amplitude * cos^2(pi (x - center) / (2 width))` on `|x - center| < width`,
    /// with `x = r / R0`; zero elsewhere.
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl InitialData {
    pub fn eval(&self, r: f64, r0: f64) -> f64 {
        let x = r / r0;
        match *self {
            InitialData::Zero => 0.0,
            InitialData::Sine { amplitude, mode } => {
                if x >= 1.0 {
                    0.0
                } else {
                    amplitude * (mode as f64 * PI * x).sin()
                }
            }
            InitialData::Bump {
                amplitude,
                center,
                width,
            } => {
                let d = (x - center) / width;
                if d.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (0.5 * PI * d).cos().powi(2)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialData::Zero => Ok(()),
            InitialData::Sine { amplitude, mode } => {
                if !amplitude.is_finite() || mode == 0 {
                    return Err(Error::InvalidSetup(
                        "initial.sine: need finite amplitude and mode >= 1".into(),
                    ));
                }
                Ok(())
            }
            InitialData::Bump {
                amplitude,
                center,
                width,
            } => {
                if !amplitude.is_finite() || width <= 0.0 || center - width < 0.0 || center + width > 1.0 {
                    return Err(Error::InvalidSetup(
                        "initial.bump: support [center - width, center + width] must lie in [0, 1]"
                            .into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Geometry constants, nonlinearity and initial datum of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalSetup {
    pub r0: f64,
    pub r_star: f64,
    pub e: f64,
    pub t_final: f64,
    pub b: f64,
    pub b0: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    /// When set, the sampled initial datum is rescaled to this H^1_0 norm.
    #[serde(default)]
    pub initial_h1_norm: Option<f64>,
}

fn default_initial() -> InitialData {
    InitialData::Zero
}

impl Default for PhysicalSetup {
    fn default() -> Self {
        Self {
            r0: 1.0,
            r_star: 0.5,
            e: 1.5,
            t_final: 0.5,
            b: 0.3,
            b0: 0.25,
            nonlinearity: Nonlinearity::default(),
            initial: InitialData::Zero,
            initial_h1_norm: None,
        }
    }
}

impl PhysicalSetup {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.b0, self.b, self.r_star, self.r0, self.e, self.t_final];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSetup("geometry constants must be finite".into()));
        }
        if !(0.0 < self.b0 && self.b0 < self.b && self.b < self.r_star && self.r_star < self.r0 && self.r0 < self.e)
        {
            return Err(Error::InvalidSetup(format!(
                "ordering 0 < b0 < b < R_star < R0 < E violated (b0 = {}, b = {}, R_star = {}, R0 = {}, E = {})",
                self.b0, self.b, self.r_star, self.r0, self.e
            )));
        }
        if self.t_final <= 0.0 {
            return Err(Error::InvalidSetup(format!(
                "horizon T must be positive, got {}",
                self.t_final
            )));
        }
        self.initial.validate()?;
        if let Some(h1) = self.initial_h1_norm {
            if !(h1 >= 0.0 && h1.is_finite()) {
                return Err(Error::InvalidSetup("initial_h1_norm must be >= 0".into()));
            }
        }
        self.nonlinearity.validate()?;
        Ok(())
    }

    /// Samples `z~0` on the reference grid at radius `R0`, applying the optional
    /// H^1_0 normalization.
    pub fn initial_samples(&self, grid: &ReferenceGrid) -> Vec<f64> {
        let mut z: Vec<f64> = grid
            .radii(self.r0)
            .iter()
            .map(|&r| self.initial.eval(r, self.r0))
            .collect();
        z[0] = 0.0;
        z[grid.intervals()] = 0.0;
        if let Some(target) = self.initial_h1_norm {
            let current = h1_seminorm(&z, grid, self.r0);
            if current > 0.0 {
                let scale = target / current;
                z.iter_mut().for_each(|v| *v *= scale);
            }
        }
        z
    }
}

/// Sampled radius trajectory `R(t_j)` together with its derivative samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPath {
    dt: f64,
    radius: Vec<f64>,
    rate: Vec<f64>,
}

impl BoundaryPath {
    pub fn constant(r0: f64, t_final: f64, steps: usize) -> Result<Self> {
        Self::from_samples(t_final, vec![r0; steps + 1], vec![0.0; steps + 1])
    }

    pub fn from_fn(
        t_final: f64,
        steps: usize,
        radius: impl Fn(f64) -> f64,
        rate: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let dt = t_final / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
        Self::from_samples(
            t_final,
            times.iter().map(|&t| radius(t)).collect(),
            times.iter().map(|&t| rate(t)).collect(),
        )
    }

    pub fn from_samples(t_final: f64, radius: Vec<f64>, rate: Vec<f64>) -> Result<Self> {
        if radius.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "path",
                reason: "need at least two time nodes".into(),
            });
        }
        if rate.len() != radius.len() {
            return Err(Error::Dimension {
                what: "path derivative samples",
                expected: radius.len(),
                found: rate.len(),
            });
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: format!("horizon must be positive, got {t_final}"),
            });
        }
        if let Some(index) = radius.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::PathOutOfBounds {
                index,
                value: radius[index],
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        if let Some(index) = rate.iter().position(|r| !r.is_finite()) {
            return Err(Error::Inconsistent(format!(
                "non-finite path derivative at node {index}"
            )));
        }
        let dt = t_final / (radius.len() - 1) as f64;
        Ok(Self { dt, radius, rate })
    }

    pub fn steps(&self) -> usize {
        self.radius.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps() {
            self.horizon()
        } else {
            j as f64 * self.dt
        }
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.radius[j]
    }

    pub fn rate(&self, j: usize) -> f64 {
        self.rate[j]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    pub fn max_abs_rate(&self) -> f64 {
        self.rate.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn min_radius(&self) -> f64 {
        self.radius.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.radius.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cubic Hermite interpolation of `R` between time nodes.
    pub fn radius_at(&self, t: f64) -> f64 {
        let m = self.steps();
        let s = (t / self.dt).clamp(0.0, m as f64);
        let j = (s.floor() as usize).min(m - 1);
        let u = s - j as f64;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u).powi(2),
            u * (1.0 - u).powi(2),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        h00 * self.radius[j]
            + h10 * self.dt * self.rate[j]
            + h01 * self.radius[j + 1]
            + h11 * self.dt * self.rate[j + 1]
    }

    /// Indices of nodes outside `[lower, upper]`.
    pub fn breaches(&self, lower: f64, upper: f64) -> Vec<usize> {
        self.radius
            .iter()
            .enumerate()
            .filter(|(_, &r)| r < lower || r > upper)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn validate_bounds(&self, lower: f64, upper: f64) -> Result<()> {
        match self.breaches(lower, upper).first() {
            Some(&index) => Err(Error::PathOutOfBounds {
                index,
                value: self.radius[index],
                lower,
                upper,
            }),
            None => Ok(()),
        }
    }

    /// Largest mismatch between the centred difference of the radius samples and
    /// the stored derivative samples, over interior nodes.
    pub fn c1_defect(&self) -> f64 {
        (1..self.steps())
            .map(|j| {
                ((self.radius[j + 1] - self.radius[j - 1]) / (2.0 * self.dt) - self.rate[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// What a space-time field represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    State,
    Adjoint,
    Potential,
    Control,
    Source,
}

impl FieldRole {
    pub fn name(&self) -> &'static str {
        match self {
            FieldRole::State => "state",
            FieldRole::Adjoint => "adjoint",
            FieldRole::Potential => "potential",
            FieldRole::Control => "control",
            FieldRole::Source => "source",
        }
    }
}

/// Samples of a scalar field at `(rho_i, t_j)`, stored one time level at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nodes: usize,
    levels: usize,
    values: Vec<f64>,
    role: FieldRole,
}

impl SpaceTimeField {
    pub fn zeros(grid: &ReferenceGrid, steps: usize, role: FieldRole) -> Self {
        Self {
            nodes: grid.len(),
            levels: steps + 1,
            values: vec![0.0; grid.len() * (steps + 1)],
            role,
        }
    }

    pub fn from_fn(
        grid: &ReferenceGrid,
        path: &BoundaryPath,
        role: FieldRole,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut field = Self::zeros(grid, path.steps(), role);
        for j in 0..=path.steps() {
            let t = path.time(j);
            for (i, v) in field.level_mut(j).iter_mut().enumerate() {
                *v = f(grid.node(i), t);
            }
        }
        field
    }

    pub fn from_levels(levels: Vec<Vec<f64>>, role: FieldRole) -> Result<Self> {
        let nodes = levels.first().map(Vec::len).unwrap_or(0);
        if levels.len() < 2 || nodes < 3 {
            return Err(Error::InvalidParameter {
                name: "field",
                reason: "need at least two time levels of three nodes".into(),
            });
        }
        let count = levels.len();
        let mut values = Vec::with_capacity(nodes * count);
        for level in levels {
            if level.len() != nodes {
                return Err(Error::Dimension {
                    what: "field level",
                    expected: nodes,
                    found: level.len(),
                });
            }
            values.extend(level);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inconsistent("field has non-finite entries".into()));
        }
        Ok(Self {
            nodes,
            levels: count,
            values,
            role,
        })
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    /// Number of spatial nodes `N + 1`.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Number of time levels `M + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn steps(&self) -> usize {
        self.levels - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nodes + i]
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.values[j * self.nodes..(j + 1) * self.nodes]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.nodes..(j + 1) * self.nodes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SpaceTimeField) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn check_shape(&self, other: &SpaceTimeField) -> Result<()> {
        if self.nodes != other.nodes {
            return Err(Error::Dimension {
                what: "field nodes",
                expected: self.nodes,
                found: other.nodes,
            });
        }
        if self.levels != other.levels {
            return Err(Error::Dimension {
                what: "field levels",
                expected: self.levels,
                found: other.levels,
            });
        }
        Ok(())
    }

    pub(crate) fn check_grid(&self, grid: &ReferenceGrid, steps: usize) -> Result<()> {
        grid.check_len("field nodes", self.nodes)?;
        if self.levels != steps + 1 {
            return Err(Error::Dimension {
                what: "field levels",
                expected: steps + 1,
                found: self.levels,
            });
        }
        Ok(())
    }

    pub fn check_dirichlet_level(&self, j: usize) -> Result<()> {
        let level = self.level(j);
        let scale = level.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let (left, right) = (level[0], level[self.nodes - 1]);
        if left.abs() > DIRICHLET_TOL * scale || right.abs() > DIRICHLET_TOL * scale {
            return Err(Error::Dirichlet { level: j, left, right });
        }
        Ok(())
    }

    pub fn check_dirichlet(&self) -> Result<()> {
        (0..self.levels).try_for_each(|j| self.check_dirichlet_level(j))
    }

    /// Writes the field as CSV: the first row holds the reference nodes, each
    /// following row one time level.
    pub fn to_csv(&self) -> String {
        let n = self.nodes - 1;
        let mut out = String::new();
        let header: Vec<String> = (0..=n)
            .map(|i| format!("{}", if i == n { 1.0 } else { i as f64 / n as f64 }))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for j in 0..self.levels {
            let row: Vec<String> = self.level(j).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, role: FieldRole) -> Result<Self> {
        let mut rows = text.lines().filter(|l| !l.trim().is_empty());
        let header = rows
            .next()
            .ok_or_else(|| Error::Parse("empty field CSV".into()))?;
        let nodes = header.split(',').count();
        let mut levels = Vec::new();
        for (line_no, line) in rows.enumerate() {
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", line_no + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != nodes {
                return Err(Error::Dimension {
                    what: "CSV row",
                    expected: nodes,
                    found: row.len(),
                });
            }
            levels.push(row);
        }
        Self::from_levels(levels, role)
    }
}

/// Composite trapezoid rule for equally spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoid inner product `int_0^R u v dr` for samples on the reference grid.
pub fn inner_product(u: &[f64], v: &[f64], radius: f64) -> f64 {
    let n = u.len();
    let h = radius / (n - 1) as f64;
    let s: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    h * (s - 0.5 * (u[0] * v[0] + u[n - 1] * v[n - 1]))
}

pub fn l2_norm(u: &[f64], radius: f64) -> f64 {
    inner_product(u, u, radius).max(0.0).sqrt()
}

/// Second-order nodal derivative in `r`: centred inside, one-sided at the ends.
pub fn radial_derivative(u: &[f64], radius: f64) -> Vec<f64> {
    let n = u.len() - 1;
    let h = radius / n as f64;
    let mut d = vec![0.0; n + 1];
    if n == 1 {
        d.fill((u[1] - u[0]) / h);
        return d;
    }
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    d[n] = (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h);
    for i in 1..n {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    d
}

/// `(int_0^R |u_r|^2 dr)^{1/2}` by trapezoid quadrature of the nodal derivative.
pub fn h1_seminorm(u: &[f64], grid: &ReferenceGrid, radius: f64) -> f64 {
    let d = radial_derivative(u, radius);
    let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
    trapezoid(&sq, grid.step() * radius).sqrt()
}

/// `z~(r) = r z(r)`.
pub fn lift_to_tilde(z: &[f64], grid: &ReferenceGrid, radius: f64) -> Result<Vec<f64>> {
    grid.check_len("radial samples", z.len())?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inconsistent("radial samples must be finite".into()));
    }
    Ok(grid
        .radii(radius)
        .iter()
        .zip(z)
        .map(|(r, v)| if *r == 0.0 { 0.0 } else { r * v })
        .collect())
}

/// Inverse of [`lift_to_tilde`]: `z = z~ / r` for `r > 0`, and at the origin the
/// one-sided second-order derivative `z~_r(0+)`.
pub fn project_from_tilde(zt: &[f64], grid: &ReferenceGrid, radius: f64) -> Result<Vec<f64>> {
    grid.check_len("reduced samples", zt.len())?;
    let scale = zt.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if zt[0].abs() > DIRICHLET_TOL * scale {
        return Err(Error::Inconsistent(format!(
            "reduced field must vanish at r = 0, found {}",
            zt[0]
        )));
    }
    let h = grid.step() * radius;
    let radii = grid.radii(radius);
    let mut z: Vec<f64> = radii
        .iter()
        .zip(zt)
        .map(|(r, v)| if *r > 0.0 { v / r } else { 0.0 })
        .collect();
    z[0] = (-3.0 * zt[0] + 4.0 * zt[1] - zt[2]) / (2.0 * h);
    Ok(z)
}

/// Returns `(int |z|^2 r^2 dr, int |z~|^2 dr)`, both by trapezoid quadrature.
pub fn norm_weighted_equiv(
    z: &[f64],
    zt: &[f64],
    grid: &ReferenceGrid,
    radius: f64,
) -> Result<(f64, f64)> {
    grid.check_len("radial samples", z.len())?;
    grid.check_len("reduced samples", zt.len())?;
    let h = grid.step() * radius;
    let radii = grid.radii(radius);
    let weighted: Vec<f64> = z
        .iter()
        .zip(&radii)
        .map(|(v, r)| v * v * r * r)
        .collect();
    let flat: Vec<f64> = zt.iter().map(|v| v * v).collect();
    Ok((trapezoid(&weighted, h), trapezoid(&flat, h)))
}

/// Evaluates `y(x) = z(|x|)` at 3D points by linear interpolation on the radial grid.
pub fn reconstruct_3d(
    z: &[f64],
    grid: &ReferenceGrid,
    radius: f64,
    points: &[[f64; 3]],
) -> Result<Vec<f64>> {
    grid.check_len("radial samples", z.len())?;
    let n = grid.intervals();
    points
        .iter()
        .map(|p| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if r > radius * (1.0 + 1e-12) {
                return Err(Error::OutOfDomain { radius: r, limit: radius });
            }
            let s = (r / radius * n as f64).min(n as f64);
            let i = (s.floor() as usize).min(n - 1);
            let u = s - i as f64;
            Ok((1.0 - u) * z[i] + u * z[i + 1])
        })
        .collect()
}

/// Applies [`lift_to_tilde`] level by level along a path.
pub fn lift_field(z: &SpaceTimeField, grid: &ReferenceGrid, path: &BoundaryPath) -> Result<SpaceTimeField> {
    z.check_grid(grid, path.steps())?;
    let mut out = SpaceTimeField::zeros(grid, path.steps(), z.role());
    for j in 0..=path.steps() {
        let lifted = lift_to_tilde(z.level(j), grid, path.radius(j))?;
        out.level_mut(j).copy_from_slice(&lifted);
    }
    Ok(out)
}

/// Applies [`project_from_tilde`] level by level along a path.
pub fn project_field(
    zt: &SpaceTimeField,
    grid: &ReferenceGrid,
    path: &BoundaryPath,
) -> Result<SpaceTimeField> {
    zt.check_grid(grid, path.steps())?;
    let mut out = SpaceTimeField::zeros(grid, path.steps(), zt.role());
    for j in 0..=path.steps() {
        let z = project_from_tilde(zt.level(j), grid, path.radius(j))?;
        out.level_mut(j).copy_from_slice(&z);
    }
    Ok(out)
}
