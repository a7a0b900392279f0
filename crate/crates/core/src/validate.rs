//! Cross-check suite: analytic zonal formulas, grid oracles and the contour
//! evaluator against one another.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::flow::{FlowConfig, Integrator, Scheme};
use crate::geom::{chart_forward, SphPoint};
use crate::interface::CapState;
use crate::mesh::{rasterize, stream_oracle, sup_velocity_bound, velocity_oracle, Grid, VorticityMesh};
use crate::velocity::ContourField;
use crate::zonal::{alpha, alpha_expansion, dtheta_g_star, g_x3, make_gauss_cap, phi_dot_star, Side, ZonalCap};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check_name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    /// Passes when `max_error <= tolerance` (NaN fails).
    pub fn new(name: &str, max_error: f64, tolerance: f64) -> Self {
        Self {
            check_name: name.to_string(),
            max_error,
            tolerance,
            pass: max_error <= tolerance,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-consistent cap with 1–4 interfaces at least 0.2 apart.
pub fn random_cap(rng: &mut impl Rng) -> ZonalCap {
    let m = rng.gen_range(1..=4);
    let gaps: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let free: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let gamma = rng.gen_range(-1.0..1.0);
    let total: f64 = gaps.iter().sum();
    let scale = (PI - 0.2 * gaps.len() as f64) / total;
    let mut acc = 0.0;
    let thetas = gaps[..m]
        .iter()
        .map(|d| {
            acc += d * scale + 0.2;
            acc
        })
        .collect();
    make_gauss_cap(thetas, free, gamma).expect("valid random cap")
}

/// Monotone (strictly decreasing) Gauss cap with γ = 0 and bands wider than
/// 0.15, plus a random interior interface index.
pub fn random_monotone_cap(rng: &mut impl Rng) -> (ZonalCap, usize) {
    loop {
        let m = rng.gen_range(1..=4);
        let gaps: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.3..1.0)).collect();
        let total: f64 = gaps.iter().sum();
        let scale = (PI - 0.15 * gaps.len() as f64) / total;
        let mut acc = 0.0;
        let thetas: Vec<f64> = gaps[..m]
            .iter()
            .map(|d| {
                acc += d * scale + 0.15;
                acc
            })
            .collect();
        let mut free = vec![rng.gen_range(0.5..3.0)];
        for _ in 1..m {
            let last = *free.last().unwrap();
            free.push(last - rng.gen_range(0.2..2.0));
        }
        let cap = match make_gauss_cap(thetas, free, 0.0) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if crate::zonal::is_monotone(&cap) {
            let k0 = rng.gen_range(1..=m);
            return (cap, k0);
        }
    }
}

/// ∂θG for ω = (1, −1) across the equator against tan/cot of θ/2.
pub fn check_zonal_profile(samples: usize) -> Result<CheckResult> {
    let cap = make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0)?;
    let mut err: f64 = 0.0;
    for i in 0..samples {
        let t = PI * (i as f64 + 0.5) / samples as f64;
        let want = if t < FRAC_PI_2 {
            (t / 2.0).tan()
        } else {
            1.0 / (t / 2.0).tan()
        };
        err = err.max((dtheta_g_star(&cap, t)? - want).abs());
    }
    err = err.max((dtheta_g_star(&cap, FRAC_PI_2)? - 1.0).abs());
    Ok(CheckResult::new("zonal_profile", err, 1e-12))
}

fn random_point(rng: &mut impl Rng) -> SphPoint {
    let x3: f64 = rng.gen_range(-0.99..0.99);
    SphPoint {
        theta: x3.acos(),
        phi: rng.gen_range(0.0..TAU),
    }
}

/// Grid quadrature of G[x₃] against −x₃/2.
pub fn check_g_x3(grid: Grid, points: usize, seed: u64) -> Result<CheckResult> {
    let mesh = VorticityMesh::from_fn(grid, |t, _| t.cos());
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    for _ in 0..points {
        let p = random_point(&mut r);
        let g = stream_oracle(&mesh, &chart_forward(p))?;
        err = err.max((g - g_x3(p.theta)).abs());
    }
    Ok(CheckResult::new("g_x3_identity", err, 1e-3))
}

fn snap(theta: f64, grid: Grid) -> f64 {
    (theta / grid.d_theta()).round() * grid.d_theta()
}

/// Contour evaluator, grid oracle and analytic profile on a zonal cap whose
/// interfaces lie on grid row boundaries.
pub fn check_velocity_cross(grid: Grid, n_nodes: usize, points: usize, seed: u64) -> Result<CheckResult> {
    let thetas = vec![snap(0.9, grid), snap(2.0, grid)];
    let cap = make_gauss_cap(thetas.clone(), vec![1.5, 0.2], 0.3)?;
    let state = CapState::zonal(&cap, n_nodes)?;
    let mesh = rasterize(&state, grid)?;
    let field = ContourField::new(&state);
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    let mut done = 0;
    while done < points {
        let p = SphPoint {
            theta: r.gen_range(0.1..PI - 0.1),
            phi: r.gen_range(0.0..TAU),
        };
        if thetas.iter().any(|t| (p.theta - t).abs() < 0.05) {
            continue;
        }
        done += 1;
        let x = chart_forward(p);
        let c = field.velocity(&x)?;
        let o = velocity_oracle(&mesh, &x)?;
        let a = (0.0, dtheta_g_star(&cap, p.theta)? + cap.gamma() * p.theta.sin());
        for (u, v) in [
            ((c.u_theta, c.u_phi), a),
            ((o.u_theta, o.u_phi), a),
            ((c.u_theta, c.u_phi), (o.u_theta, o.u_phi)),
        ] {
            err = err.max((u.0 - v.0).abs()).max((u.1 - v.1).abs());
        }
    }
    Ok(CheckResult::new("velocity_cross_validation", err, 1e-3))
}

/// Ratio of sampled sup|u| to (3/(2√π))√(‖ω‖∞‖ω‖₁); passes below 1.01.
pub fn check_linf_bound(caps: usize, grid: Grid, samples: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..caps {
        let cap = random_cap(&mut r);
        let state = CapState::zonal(&cap, 256)?;
        let bound = sup_velocity_bound(&rasterize(&state, grid)?);
        let field = ContourField::new(&state);
        let mut sup: f64 = field
            .node_velocities()
            .iter()
            .flatten()
            .map(|u| u.norm())
            .fold(0.0, f64::max);
        for _ in 0..samples {
            let x = chart_forward(random_point(&mut r));
            if let Ok(u) = field.velocity(&x) {
                sup = sup.max(u.norm());
            }
        }
        worst = worst.max(sup / bound);
    }
    Ok(CheckResult::new("linf_velocity_bound", worst, 1.01))
}

/// |α(μ) − a₁μ − a₂μ²|/μ² over μ = 0.1, 0.05, 0.025; the reported error is
/// the largest ratio of consecutive values (decrease means below 1).
pub fn check_taylor_order(caps: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..caps {
        let (cap, k0) = random_monotone_cap(&mut r);
        let e = alpha_expansion(&cap, k0, Side::Plus)?;
        let rem = |mu: f64| -> Result<f64> { Ok((alpha(&cap, k0, mu)? - e.eval(mu)).abs() / (mu * mu)) };
        let v = [rem(0.1)?, rem(0.05)?, rem(0.025)?];
        worst = worst.max(v[1] / v[0]).max(v[2] / v[1]);
    }
    Ok(CheckResult::new("taylor_order", worst, 1.0 - f64::EPSILON))
}

/// Unperturbed equator cap evolved to `t_end`: node co-latitude deviation and
/// longitude drift error against Φ̇⋆(θ₁)·t.
pub fn check_stationarity(n_nodes: usize, dt: f64, t_end: f64) -> Result<[CheckResult; 2]> {
    let cap = make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0)?;
    let mut state = CapState::zonal(&cap, n_nodes)?;
    let start = state.curves[0].nodes.clone();
    let mut integ = Integrator::new(FlowConfig {
        dt,
        t_end,
        scheme: Scheme::Rk4,
        ..Default::default()
    })?;
    let mut theta_err: f64 = 0.0;
    for _ in 0..integ.cfg.n_steps() {
        integ.step(&mut state, &mut [])?;
        for p in &state.curves[0].nodes {
            theta_err = theta_err.max((p.theta - FRAC_PI_2).abs());
        }
    }
    let rate = phi_dot_star(&cap, FRAC_PI_2)?;
    let drift_err = state.curves[0]
        .nodes
        .iter()
        .zip(&start)
        .map(|(p, q)| (p.phi - q.phi - rate * state.t).abs())
        .fold(0.0, f64::max);
    Ok([
        CheckResult::new("stationarity_theta", theta_err, 1e-5),
        CheckResult::new("stationarity_drift", drift_err, 1e-6),
    ])
}

/// The fast suite run by `capsim validate`.
pub fn run_validation(seed: u64) -> Result<Vec<CheckResult>> {
    let oracle = Grid::new(512, 1024);
    let mut out = vec![
        check_zonal_profile(1000)?,
        check_g_x3(oracle, 20, seed)?,
        check_velocity_cross(oracle, 1024, 20, seed.wrapping_add(1))?,
        check_linf_bound(5, Grid::new(256, 512), 400, seed.wrapping_add(2))?,
        check_taylor_order(5, seed.wrapping_add(3))?,
    ];
    out.extend(check_stationarity(128, 0.01, 1.0)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zonal_profile_passes() {
        assert!(check_zonal_profile(200).unwrap().pass);
    }

    #[test]
    fn random_caps_are_valid_and_seeded() {
        let mut a = rng(5);
        let mut b = rng(5);
        for _ in 0..20 {
            assert_eq!(random_cap(&mut a), random_cap(&mut b));
            let (cap, k0) = random_monotone_cap(&mut a);
            random_monotone_cap(&mut b);
            assert!(crate::zonal::is_monotone(&cap));
            assert!(cap.theta(k0) - cap.theta(k0 - 1) > 0.15);
            assert!(cap.theta(k0 + 1) - cap.theta(k0) > 0.15);
        }
    }

    #[test]
    fn short_stationarity_passes() {
        let [a, b] = check_stationarity(64, 0.05, 0.5).unwrap();
        assert!(a.pass && b.pass, "{a:?} {b:?}");
    }

    #[test]
    fn failing_check_reports_nan_as_fail() {
        assert!(!CheckResult::new("x", f64::NAN, 1.0).pass);
        assert!(CheckResult::new("x", 1.0, 1.0).pass);
    }
}
