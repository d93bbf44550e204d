//! Carleman weights on the symmetric interval `(-R(t), R(t))` and the weighted
//! functional `I(phi)`.
//!
//! The spatial profile `alpha0` is even, equals `1 + p((b - r)/b, b/(R - b))`
//! on `[0, b)` and the linear ramp `(R - r)/(R - b)` on `[b, R]`, with
//!
//! ```text
//! p(w, z) = z w + (10 - 6z) w^3 + (8z - 15) w^4 + (6 - 3z) w^5
//! ```
//!
//! From it: `alpha1 = alpha0 + 1`, `sigma = exp(2 lambda |alpha1|_inf) - exp(lambda alpha1)`,
//! `alpha = sigma / (t (T - t))^k` and `xi = exp(lambda alpha1) / (t (T - t))^k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domain::{BoundaryPath, FieldRole, PhysicalSetup, ReferenceGrid, SpaceTimeField};
use crate::error::{Error, Result};
use crate::pde::{level_flux, SchemeConfig};

pub fn eval_p(w: f64, z: f64) -> f64 {
    w * (z + w * w * ((10.0 - 6.0 * z) + w * ((8.0 * z - 15.0) + w * (6.0 - 3.0 * z))))
}

/// `dp/dw`.
pub fn eval_p_w(w: f64, z: f64) -> f64 {
    z + w * w * (3.0 * (10.0 - 6.0 * z) + w * (4.0 * (8.0 * z - 15.0) + w * 5.0 * (6.0 - 3.0 * z)))
}

/// `alpha0(r)` for a frozen radius.
pub fn alpha0_profile(r: f64, radius: f64, b: f64) -> f64 {
    let r = r.abs();
    if r < b {
        1.0 + eval_p((b - r) / b, b / (radius - b))
    } else {
        (radius - r) / (radius - b)
    }
}

/// `d alpha0 / dr` for a frozen radius (odd in `r`).
pub fn alpha0_r_profile(r: f64, radius: f64, b: f64) -> f64 {
    let a = r.abs();
    let d = if a < b {
        -eval_p_w((b - a) / b, b / (radius - b)) / b
    } else {
        -1.0 / (radius - b)
    };
    if r < 0.0 {
        -d
    } else {
        d
    }
}

pub fn eval_alpha0(r: f64, t: f64, setup: &PhysicalSetup, path: &BoundaryPath) -> Result<f64> {
    let radius = path.radius_at(t);
    if r.abs() > radius * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain {
            radius: r.abs(),
            limit: radius,
        });
    }
    Ok(alpha0_profile(r, radius, setup.b))
}

/// Carleman parameters `(lambda, s, k)` together with the sampled `|alpha1|_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub lambda: f64,
    pub s: f64,
    pub k: u32,
    pub sup_alpha1: f64,
}

impl CarlemanParams {
    /// Computes `|alpha1|_inf` on a fine sample of `[0, R(t_j)]` at every path node.
    pub fn new(lambda: f64, s: f64, k: u32, setup: &PhysicalSetup, path: &BoundaryPath) -> Result<Self> {
        if !(lambda > 0.0 && s > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda/s",
                reason: format!("must be positive, got lambda = {lambda}, s = {s}"),
            });
        }
        if k < 2 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("need k >= 2, got {k}"),
            });
        }
        const SAMPLES: usize = 2000;
        let mut sup = f64::NEG_INFINITY;
        for &radius in path.radii() {
            for i in 0..=SAMPLES {
                let r = radius * i as f64 / SAMPLES as f64;
                sup = sup.max(alpha0_profile(r, radius, setup.b) + 1.0);
            }
        }
        Ok(Self {
            lambda,
            s,
            k,
            sup_alpha1: sup,
        })
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha1: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub xi: f64,
}

fn weights_from_alpha0(alpha0: f64, t: f64, horizon: f64, params: &CarlemanParams) -> Weights {
    let alpha1 = alpha0 + 1.0;
    let lam = params.lambda;
    let sigma = (2.0 * lam * params.sup_alpha1).exp() - (lam * alpha1).exp();
    let denom = (t * (horizon - t)).powi(params.k as i32);
    Weights {
        alpha1,
        sigma,
        alpha: sigma / denom,
        xi: (lam * alpha1).exp() / denom,
    }
}

pub fn eval_weights(
    r: f64,
    t: f64,
    params: &CarlemanParams,
    setup: &PhysicalSetup,
    path: &BoundaryPath,
) -> Result<Weights> {
    let horizon = path.horizon();
    if !(t > 0.0 && t < horizon) {
        return Err(Error::Degenerate { t, horizon });
    }
    let alpha0 = eval_alpha0(r, t, setup, path)?;
    Ok(weights_from_alpha0(alpha0, t, horizon, params))
}

/// Terms of `I(phi)` and of the right-hand side of the Carleman inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanTerms {
    /// `int int e^{-2 s alpha} (s xi)^{-1} |phi_t|^2`
    pub phi_t: f64,
    /// `int int e^{-2 s alpha} (s xi)^{-1} |phi_rr|^2`
    pub phi_rr: f64,
    /// `int int e^{-2 s alpha} lambda^2 s xi |phi_r|^2`
    pub phi_r: f64,
    /// `int int e^{-2 s alpha} lambda^4 s^3 xi^3 |phi|^2`
    pub phi: f64,
    /// `int e^{-2 s alpha(R)} lambda s xi(R) |phi_r(R)|^2 dt`
    pub boundary: f64,
    pub i_total: f64,
    /// `int int_{[0,b) x (0,T)} lambda^4 s^3 xi^3 |phi|^2`
    pub observation: f64,
    /// `int int e^{-2 s alpha} |F|^2`
    pub source: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub lambda: f64,
    pub s: f64,
    pub k: u32,
}

fn second_derivative(u: &[f64], i: usize, h: f64) -> f64 {
    let n = u.len() - 1;
    if i == 0 {
        (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h)
    } else if i == n {
        (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) / (h * h)
    } else {
        (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h)
    }
}

fn first_derivative(u: &[f64], i: usize, h: f64) -> f64 {
    let n = u.len() - 1;
    if i == 0 {
        (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    } else if i == n {
        (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h)
    } else {
        (u[i + 1] - u[i - 1]) / (2.0 * h)
    }
}

/// Evaluates `I(phi)` and the right-hand side of the Carleman inequality.
///
/// Time quadrature runs over nodes with `t_j` in `[margin T, (1 - margin) T]`
/// (default margin `1/M`); derivatives come from second-order differences of
/// the stored field.
pub fn compute_i(
    phi: &SpaceTimeField,
    source: Option<&SpaceTimeField>,
    params: &CarlemanParams,
    setup: &PhysicalSetup,
    path: &BoundaryPath,
    cfg: &SchemeConfig,
    margin: Option<f64>,
) -> Result<CarlemanTerms> {
    if phi.role() != FieldRole::Adjoint {
        return Err(Error::Role {
            expected: "adjoint",
            found: phi.role().name(),
        });
    }
    let grid = cfg.grid();
    phi.check_grid(&grid, path.steps())?;
    if let Some(f) = source {
        f.check_grid(&grid, path.steps())?;
    }
    let m = path.steps();
    let horizon = path.horizon();
    let dt = path.dt();
    let delta = margin.unwrap_or(1.0 / m as f64);
    let first = ((delta * m as f64 - 1e-9).ceil() as usize).max(1);
    let last = (m - first).min(m - 1);
    if first > last {
        return Err(Error::InvalidParameter {
            name: "margin",
            reason: format!("no time nodes left in [{delta} T, (1 - {delta}) T]"),
        });
    }
    let (lam, s) = (params.lambda, params.s);
    let n = grid.intervals();
    let drho = grid.step();

    let mut terms = [0.0_f64; 7];
    for j in first..=last {
        let wt = if (j == first || j == last) && first != last { 0.5 * dt } else { dt };
        let t = path.time(j);
        let radius = path.radius(j);
        let drift = path.rate(j) / radius;
        let hr = drho * radius;
        let u = phi.level(j);
        let (up, um) = (phi.level(j + 1), phi.level(j - 1));
        let f = source.map(|f| f.level(j));
        let mut level = [0.0_f64; 6];
        for i in 0..=n {
            let rho = grid.node(i);
            let w = weights_from_alpha0(alpha0_profile(rho * radius, radius, setup.b), t, horizon, params);
            let ln_xi = w.xi.ln();
            let damp = -2.0 * s * w.alpha;
            let d_rho = first_derivative(u, i, drho);
            let phi_r = d_rho / radius;
            let phi_rr = second_derivative(u, i, drho) / (radius * radius);
            let phi_t = (up[i] - um[i]) / (2.0 * dt) - rho * drift * d_rho;
            let wx = if i == 0 || i == n { 0.5 * hr } else { hr };
            level[0] += wx * (damp - ln_xi).exp() / s * phi_t * phi_t;
            level[1] += wx * (damp - ln_xi).exp() / s * phi_rr * phi_rr;
            level[2] += wx * (damp + ln_xi).exp() * lam * lam * s * phi_r * phi_r;
            level[3] += wx * (damp + 3.0 * ln_xi).exp() * lam.powi(4) * s.powi(3) * u[i] * u[i];
            if rho * radius < setup.b {
                level[4] += wx * (3.0 * ln_xi).exp() * lam.powi(4) * s.powi(3) * u[i] * u[i];
            }
            if let Some(f) = f {
                level[5] += wx * damp.exp() * f[i] * f[i];
            }
        }
        let wb = weights_from_alpha0(0.0, t, horizon, params);
        let trace = level_flux(u, radius, cfg.flux_order);
        let boundary = (-2.0 * s * wb.alpha + wb.xi.ln()).exp() * lam * s * trace * trace;
        for (acc, v) in terms.iter_mut().zip(level.iter()) {
            *acc += wt * v;
        }
        terms[6] += wt * boundary;
    }
    let i_total = terms[0] + terms[1] + terms[2] + terms[3] + terms[6];
    let rhs = terms[4] + terms[5];
    let ratio = if i_total == 0.0 { 0.0 } else { i_total / rhs };
    Ok(CarlemanTerms {
        phi_t: terms[0],
        phi_rr: terms[1],
        phi_r: terms[2],
        phi: terms[3],
        boundary: terms[6],
        i_total,
        observation: terms[4],
        source: terms[5],
        rhs,
        ratio,
        lambda: lam,
        s,
        k: params.k,
    })
}

/// Smallest value of `alpha` over the sampled domain; `1/alpha_min` sets the
/// natural scale of `s`.
pub fn alpha_min(params: &CarlemanParams, horizon: f64) -> f64 {
    let lam = params.lambda;
    let sigma_min = (2.0 * lam * params.sup_alpha1).exp() - (lam * params.sup_alpha1).exp();
    sigma_min / (0.25 * horizon * horizon).powi(params.k as i32)
}

/// Random terminal data: combinations of the first `modes` sine modes with
/// coefficients uniform in `[-1, 1]` and scaled by `1/mode`.
pub fn random_terminal_battery(grid: &ReferenceGrid, count: usize, modes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.intervals();
    (0..count)
        .map(|_| {
            let coeffs: Vec<f64> = (1..=modes).map(|k| rng.gen_range(-1.0..1.0) / k as f64).collect();
            (0..=n)
                .map(|i| {
                    if i == 0 || i == n {
                        return 0.0;
                    }
                    let x = grid.node(i);
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin())
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Outcome of scanning `s` over a battery of adjoint solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanCalibration {
    pub lambda: f64,
    pub k: u32,
    pub s_values: Vec<f64>,
    /// `ratios[i][m]`: ratio of battery member `m` at `s_values[i]`.
    pub ratios: Vec<Vec<f64>>,
    /// Smallest scanned `s` from which ratios are positive and non-increasing.
    pub s_threshold: Option<f64>,
    /// Largest ratio at or above the threshold.
    pub c_emp: Option<f64>,
    /// `(scan index, member)` pairs where doubling `s` increased the ratio.
    pub violations: Vec<(usize, usize)>,
}

/// Evaluates the Carleman ratio of every battery member at every `s` in the scan
/// (the scan should be geometric with factor 2) and derives the empirical
/// threshold and constant.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_carleman(
    battery: &[SpaceTimeField],
    lambda: f64,
    k: u32,
    s_values: &[f64],
    setup: &PhysicalSetup,
    path: &BoundaryPath,
    cfg: &SchemeConfig,
) -> Result<CarlemanCalibration> {
    let base = CarlemanParams::new(lambda, s_values[0], k, setup, path)?;
    let ratios = s_values
        .iter()
        .map(|&s| {
            let params = base.with_s(s);
            battery
                .iter()
                .map(|phi| compute_i(phi, None, &params, setup, path, cfg, None).map(|t| t.ratio))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut violations = Vec::new();
    for i in 0..ratios.len().saturating_sub(1) {
        for (mbr, (a, b)) in ratios[i].iter().zip(&ratios[i + 1]).enumerate() {
            if b > a {
                violations.push((i, mbr));
            }
        }
    }
    let threshold = (0..ratios.len()).find(|&i| {
        ratios[i].iter().all(|r| *r > 0.0) && violations.iter().all(|(vi, _)| *vi < i)
    });
    let c_emp = threshold.map(|i| {
        ratios[i..]
            .iter()
            .flatten()
            .copied()
            .fold(0.0_f64, f64::max)
    });
    Ok(CarlemanCalibration {
        lambda,
        k,
        s_values: s_values.to_vec(),
        ratios,
        s_threshold: threshold.map(|i| s_values[i]),
        c_emp,
        violations,
    })
}

/// Sampled checks of the weight lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLemmaReport {
    /// `max |alpha0(+-R(t), t)|`
    pub boundary_max: f64,
    /// `min |alpha0_r|` over `(b0 + delta, R - delta)`
    pub min_abs_derivative: f64,
    /// `max |alpha0(-r) - alpha0(r)|`
    pub evenness_max: f64,
    /// `max |alpha0 - (1 - (r - b)/(R - b))|` for `r > b`
    pub linear_branch_max: f64,
    /// `max |alpha0_r(0, t)|`
    pub origin_derivative_max: f64,
    /// `max |alpha0_r(b-) - alpha0_r(b+)|`
    pub c1_mismatch_max: f64,
    pub failures: Vec<String>,
}

pub fn verify_weight_lemma(
    setup: &PhysicalSetup,
    path: &BoundaryPath,
    samples: usize,
    delta: f64,
) -> WeightLemmaReport {
    let b = setup.b;
    let mut rep = WeightLemmaReport {
        boundary_max: 0.0,
        min_abs_derivative: f64::INFINITY,
        evenness_max: 0.0,
        linear_branch_max: 0.0,
        origin_derivative_max: 0.0,
        c1_mismatch_max: 0.0,
        failures: Vec::new(),
    };
    for &radius in path.radii() {
        rep.boundary_max = rep
            .boundary_max
            .max(alpha0_profile(radius, radius, b).abs())
            .max(alpha0_profile(-radius, radius, b).abs());
        rep.origin_derivative_max = rep.origin_derivative_max.max(alpha0_r_profile(0.0, radius, b).abs());
        let left = -eval_p_w(0.0, b / (radius - b)) / b;
        let right = -1.0 / (radius - b);
        rep.c1_mismatch_max = rep.c1_mismatch_max.max((left - right).abs());
        for i in 0..=samples {
            let r = radius * i as f64 / samples as f64;
            rep.evenness_max = rep
                .evenness_max
                .max((alpha0_profile(-r, radius, b) - alpha0_profile(r, radius, b)).abs());
            if r > b {
                let ramp = 1.0 - (r - b) / (radius - b);
                rep.linear_branch_max = rep.linear_branch_max.max((alpha0_profile(r, radius, b) - ramp).abs());
            }
            if r > setup.b0 + delta && r < radius - delta {
                rep.min_abs_derivative = rep.min_abs_derivative.min(alpha0_r_profile(r, radius, b).abs());
            }
        }
    }
    if rep.boundary_max != 0.0 {
        rep.failures.push(format!("alpha0 does not vanish on the boundary: {}", rep.boundary_max));
    }
    if !(rep.min_abs_derivative > 0.0) {
        rep.failures
            .push(format!("alpha0_r vanishes on (b0, R): min {}", rep.min_abs_derivative));
    }
    if rep.evenness_max != 0.0 {
        rep.failures.push(format!("alpha0 not even: {}", rep.evenness_max));
    }
    if rep.linear_branch_max > 1e-14 {
        rep.failures.push(format!("linear branch mismatch: {}", rep.linear_branch_max));
    }
    if rep.origin_derivative_max > 1e-10 {
        rep.failures.push(format!("alpha0_r(0) = {}", rep.origin_derivative_max));
    }
    if rep.c1_mismatch_max > 1e-10 {
        rep.failures.push(format!("C1 mismatch at b: {}", rep.c1_mismatch_max));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> BoundaryPath {
        BoundaryPath::from_fn(0.5, 50, |t| 1.0 + 0.2 * (6.0 * t).sin(), |t| 1.2 * (6.0 * t).cos()).unwrap()
    }

    #[test]
    fn polynomial_values() {
        for z in [0.0, 0.3, 0.7, 2.5] {
            assert_eq!(eval_p(0.0, z), 0.0);
            assert!(eval_p_w(1.0, z).abs() < 1e-13);
        }
        assert!((eval_p(1.0, 0.7) - 1.0).abs() < 1e-14);
        // finite-difference check of dp/dw
        let (w, z, h) = (0.37, 0.8, 1e-6);
        let fd = (eval_p(w + h, z) - eval_p(w - h, z)) / (2.0 * h);
        assert!((fd - eval_p_w(w, z)).abs() < 1e-8);
    }

    #[test]
    fn alpha0_key_values() {
        let setup = PhysicalSetup::default();
        let p = path();
        for t in [0.0, 0.13, 0.5] {
            let radius = p.radius_at(t);
            assert_eq!(eval_alpha0(radius, t, &setup, &p).unwrap(), 0.0);
            assert_eq!(eval_alpha0(-radius, t, &setup, &p).unwrap(), 0.0);
            assert_eq!(eval_alpha0(setup.b, t, &setup, &p).unwrap(), 1.0);
            assert!((eval_alpha0(0.0, t, &setup, &p).unwrap() - 2.0).abs() < 1e-14);
        }
        assert!(matches!(
            eval_alpha0(2.0, 0.1, &setup, &p),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn weights_sign_and_scaling() {
        let setup = PhysicalSetup::default();
        let p = path();
        let params = CarlemanParams::new(1.5, 2.0, 2, &setup, &p).unwrap();
        assert!(params.sup_alpha1 >= 3.0 - 1e-12);
        for i in 1..40 {
            let t = 0.5 * i as f64 / 40.0;
            let radius = p.radius_at(t);
            for q in 0..=20 {
                let r = -radius + 2.0 * radius * q as f64 / 20.0;
                let w = eval_weights(r, t, &params, &setup, &p).unwrap();
                assert!(w.sigma > 0.0 && w.alpha > 0.0 && w.xi > 0.0);
            }
        }
        let (r, t) = (0.4, 0.2);
        let w2 = eval_weights(r, t, &params, &setup, &p).unwrap();
        let w3 = eval_weights(r, t, &CarlemanParams { k: 3, ..params }, &setup, &p).unwrap();
        let factor = 1.0 / (t * (0.5 - t));
        assert!((w3.alpha / w2.alpha - factor).abs() < 1e-12 * factor);
        assert!((w3.xi / w2.xi - factor).abs() < 1e-12 * factor);

        let growth: Vec<f64> = (1..8)
            .map(|m| eval_weights(r, 10f64.powi(-m), &params, &setup, &p).unwrap().alpha)
            .collect();
        assert!(growth.windows(2).all(|w| w[1] > w[0]));
        assert!(matches!(
            eval_weights(r, 0.0, &params, &setup, &p),
            Err(Error::Degenerate { .. })
        ));
        assert!(CarlemanParams::new(1.0, 1.0, 1, &setup, &p).is_err());
    }

    #[test]
    fn lemma_report_default_geometry() {
        let setup = PhysicalSetup::default();
        let path = BoundaryPath::from_fn(0.5, 40, |t| 1.0 + 0.2 * (4.0 * t).sin(), |t| 0.8 * (4.0 * t).cos()).unwrap();
        let rep = verify_weight_lemma(&setup, &path, 4000, 0.01);
        assert!(rep.failures.is_empty(), "{:?}", rep.failures);
        assert!(rep.origin_derivative_max <= 1e-12);
        assert!(rep.min_abs_derivative > 0.0);
        // the linear branch is the same formula on both sides
        assert!(rep.linear_branch_max <= 1e-15);
    }

    #[test]
    fn damping_factor_decreases_in_s() {
        let setup = PhysicalSetup::default();
        let p = path();
        let params = CarlemanParams::new(1.0, 1e-6, 2, &setup, &p).unwrap();
        let w = eval_weights(0.7, 0.25, &params, &setup, &p).unwrap();
        let mut prev = f64::INFINITY;
        for m in 0..10 {
            let s = 1e-6 * 2f64.powi(m);
            let v = (-2.0 * s * w.alpha).exp();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn compute_i_structural_cases() {
        let setup = PhysicalSetup::default();
        let cfg = SchemeConfig::new(16, 32);
        let p = BoundaryPath::constant(1.0, 0.5, 32).unwrap();
        let grid = cfg.grid();
        let params = CarlemanParams::new(1.0, 1e-5, 2, &setup, &p).unwrap();
        let zero = SpaceTimeField::zeros(&grid, 32, FieldRole::Adjoint);
        let f = SpaceTimeField::from_fn(&grid, &p, FieldRole::Source, |r, _| r);
        let t = compute_i(&zero, Some(&f), &params, &setup, &p, &cfg, None).unwrap();
        assert_eq!(t.i_total, 0.0);
        assert!(t.source > 0.0 && t.rhs == t.source);

        let phi = SpaceTimeField::from_fn(&grid, &p, FieldRole::Adjoint, |r, t| {
            if r == 1.0 { 0.0 } else { (std::f64::consts::PI * r).sin() * (1.0 + t) }
        });
        let t = compute_i(&phi, None, &params, &setup, &p, &cfg, None).unwrap();
        assert_eq!(t.source, 0.0);
        assert_eq!(t.rhs, t.observation);
        assert!(t.i_total > 0.0 && t.ratio > 0.0);

        let state = phi.clone().with_role(FieldRole::State);
        assert!(matches!(
            compute_i(&state, None, &params, &setup, &p, &cfg, None),
            Err(Error::Role { .. })
        ));
    }
}
