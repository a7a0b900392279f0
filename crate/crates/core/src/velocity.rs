//! Contour-dynamics velocity of a [`CapState`].
//!
//! For piecewise-constant ζ the Biot–Savart integral reduces to
//!
//! u(x) = Σ_k (Δζ_k / 4π) ∮_{Γ_k} ln|x − y|² dl(y) + γ sin θ e_φ,
//!
//! with every curve oriented by increasing longitude. Each curve is treated
//! as a periodic function of its node index: the trapezoid rule handles far
//! targets, the log singularity at a node of the same curve is integrated with
//! Kress' product weights, and close approaches of other curve pieces are
//! replaced by exact integrals over short chord panels laid on a cubic
//! interpolant of the nodes.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{CapError, Result};
use crate::geom::{chart_forward, tangent_frame, SphPoint, UnitVector3};
use crate::interface::CapState;
use crate::kernel::{ln_fast, log_kernel_sum, TINY};

/// Default exclusion radius around interface nodes for off-node evaluation.
pub const EPS_CORE: f64 = 1e-6;

/// Near-field radius in units of local node spacing.
const NEAR_FACTOR: f64 = 3.0;
/// Extra nodes added on each side of a near-field window.
const NEAR_PAD: usize = 8;
/// Sub-panels per segment inside a near-field window.
const PANEL_SPLIT: usize = 8;

/// Tangential velocity in the (e_θ, e_φ) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VelocitySample {
    pub u_theta: f64,
    pub u_phi: f64,
}

impl VelocitySample {
    pub fn norm(&self) -> f64 {
        self.u_theta.hypot(self.u_phi)
    }
}

struct CurveData {
    scale: f64,
    ys: [Vec<f64>; 3],
    /// dy/dj by sixth-order central differences.
    ws: [Vec<f64>; 3],
    reach2: Vec<f64>,
    /// Kress correction at each node of this curve, unscaled.
    self_corr: Vec<[f64; 3]>,
}

/// Velocity evaluator frozen at one configuration of the interfaces.
pub struct ContourField {
    curves: Vec<CurveData>,
    gamma: f64,
    eps_core: f64,
    points: Vec<Vec<SphPoint>>,
}

impl ContourField {
    pub fn new(state: &CapState) -> Self {
        let mut planner = FftPlanner::new();
        let curves = state
            .curves
            .iter()
            .map(|c| {
                let xs: Vec<[f64; 3]> = c.nodes.iter().map(|p| *chart_forward(*p).as_array()).collect();
                CurveData::new(&xs, c.jump / (4.0 * PI), &mut planner)
            })
            .collect();
        Self {
            curves,
            gamma: state.gamma,
            eps_core: EPS_CORE,
            points: state.curves.iter().map(|c| c.nodes.clone()).collect(),
        }
    }

    pub fn with_eps_core(mut self, eps: f64) -> Self {
        self.eps_core = eps;
        self
    }

    /// Velocity at an arbitrary point at least `eps_core` from every node.
    pub fn velocity(&self, x: &UnitVector3) -> Result<VelocitySample> {
        let theta = x.x3().clamp(-1.0, 1.0).acos();
        if !(theta > 0.0 && theta < PI) || (x.x1() == 0.0 && x.x2() == 0.0) {
            return Err(CapError::Pole { x3: x.x3() });
        }
        let p = SphPoint {
            theta,
            phi: x.x2().atan2(x.x1()),
        };
        let xa = x.as_array();
        let mut u = [0.0; 3];
        for c in &self.curves {
            let dmin2 = c.min_dist2(xa);
            if dmin2 < self.eps_core * self.eps_core {
                return Err(CapError::Core {
                    distance: dmin2.sqrt(),
                    eps_core: self.eps_core,
                });
            }
            let mut v = log_kernel_sum(xa, &c.ys, &c.ws);
            c.near_correction(xa, None, &mut v);
            add_scaled(&mut u, &v, c.scale);
        }
        Ok(self.finish(p, &u))
    }

    /// Velocity at node `i` of curve `c`.
    pub fn velocity_at_node(&self, c: usize, i: usize) -> VelocitySample {
        let own = &self.curves[c];
        let xa = [own.ys[0][i], own.ys[1][i], own.ys[2][i]];
        let mut u = [0.0; 3];
        for (k, d) in self.curves.iter().enumerate() {
            let mut v = log_kernel_sum(&xa, &d.ys, &d.ws);
            if k == c {
                let g = TINY.ln();
                let sc = own.self_corr[i];
                for a in 0..3 {
                    v[a] += sc[a] - g * own.ws[a][i];
                }
                d.near_correction(&xa, Some(i), &mut v);
            } else {
                d.near_correction(&xa, None, &mut v);
            }
            add_scaled(&mut u, &v, d.scale);
        }
        self.finish(self.points[c][i], &u)
    }

    /// Velocities at every node, curve by curve.
    pub fn node_velocities(&self) -> Vec<Vec<VelocitySample>> {
        self.points
            .iter()
            .enumerate()
            .map(|(c, pts)| {
                (0..pts.len())
                    .into_par_iter()
                    .map(|i| self.velocity_at_node(c, i))
                    .collect()
            })
            .collect()
    }

    fn finish(&self, p: SphPoint, u: &[f64; 3]) -> VelocitySample {
        let (u_theta, u_phi) = tangent_frame(p).project(u);
        VelocitySample {
            u_theta,
            u_phi: u_phi + self.gamma * p.theta.sin(),
        }
    }
}

fn add_scaled(u: &mut [f64; 3], v: &[f64; 3], s: f64) {
    for a in 0..3 {
        u[a] += s * v[a];
    }
}

impl CurveData {
    fn new(xs: &[[f64; 3]], scale: f64, planner: &mut FftPlanner<f64>) -> Self {
        let n = xs.len();
        let ys: [Vec<f64>; 3] = std::array::from_fn(|a| xs.iter().map(|x| x[a]).collect());
        let at = |j: isize, a: usize| ys[a][j.rem_euclid(n as isize) as usize];
        let ws: [Vec<f64>; 3] = std::array::from_fn(|a| {
            (0..n as isize)
                .map(|j| {
                    (45.0 * (at(j + 1, a) - at(j - 1, a)) - 9.0 * (at(j + 2, a) - at(j - 2, a))
                        + (at(j + 3, a) - at(j - 3, a)))
                        / 60.0
                })
                .collect()
        });
        let reach2 = (0..n)
            .map(|j| {
                let l = chord(xs[j], xs[(j + n - 1) % n]).max(chord(xs[j], xs[(j + 1) % n]));
                (NEAR_FACTOR * l).powi(2)
            })
            .collect();
        let self_corr = kress_correction(&ws, planner);
        Self {
            scale,
            ys,
            ws,
            reach2,
            self_corr,
        }
    }

    fn len(&self) -> usize {
        self.ys[0].len()
    }

    fn y(&self, j: usize) -> [f64; 3] {
        [self.ys[0][j], self.ys[1][j], self.ys[2][j]]
    }

    fn w(&self, j: usize) -> [f64; 3] {
        [self.ws[0][j], self.ws[1][j], self.ws[2][j]]
    }

    /// Cubic Lagrange interpolation in the node index between `j` and `j + 1`.
    fn interpolate(&self, j: usize, t: f64) -> [f64; 3] {
        let n = self.len();
        let idx = [(j + n - 1) % n, j, (j + 1) % n, (j + 2) % n];
        let l = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        std::array::from_fn(|a| (0..4).map(|m| l[m] * self.ys[a][idx[m]]).sum())
    }

    fn dist2(&self, x: &[f64; 3], j: usize) -> f64 {
        let d = [x[0] - self.ys[0][j], x[1] - self.ys[1][j], x[2] - self.ys[2][j]];
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }

    fn min_dist2(&self, x: &[f64; 3]) -> f64 {
        (0..self.len()).map(|j| self.dist2(x, j)).fold(f64::INFINITY, f64::min)
    }

    /// Replaces the trapezoid sum by chord-panel integrals on every window of
    /// nodes lying within the near-field radius of `x`. The window around
    /// `skip` (the target's own node) is left to the Kress correction.
    fn near_correction(&self, x: &[f64; 3], skip: Option<usize>, v: &mut [f64; 3]) {
        let n = self.len();
        let near: Vec<usize> = (0..n).filter(|&j| self.dist2(x, j) < self.reach2[j]).collect();
        if near.is_empty() {
            return;
        }
        // cyclic runs of consecutive indices
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &j in &near {
            match runs.last_mut() {
                Some((start, len)) if *start + *len == j => *len += 1,
                _ => runs.push((j, 1)),
            }
        }
        if runs.len() > 1 && runs[0].0 == 0 {
            let (sl, ll) = *runs.last().unwrap();
            if sl + ll == n {
                runs.pop();
                runs[0] = (sl, ll + runs[0].1);
            }
        }
        for (start, len) in runs {
            if let Some(i) = skip {
                if (i + n - start) % n < len {
                    continue;
                }
            }
            let len = (len + 2 * NEAR_PAD).min(n);
            let start = (start + n - NEAR_PAD.min(n)) % n;
            if len < 2 {
                continue;
            }
            let mut corr = [0.0; 3];
            for s in 0..len - 1 {
                let j = (start + s) % n;
                let mut prev = self.y(j);
                for q in 1..=PANEL_SPLIT {
                    let next = if q == PANEL_SPLIT {
                        self.y((j + 1) % n)
                    } else {
                        self.interpolate(j, q as f64 / PANEL_SPLIT as f64)
                    };
                    let e = panel_integral(x, &prev, &next);
                    for k in 0..3 {
                        corr[k] += e[k];
                    }
                    prev = next;
                }
            }
            let g = |s: isize| -> [f64; 3] {
                let j = (start as isize + s).rem_euclid(n as isize) as usize;
                let f = ln_fast(self.dist2(x, j).max(TINY));
                self.w(j).map(|c| f * c)
            };
            for s in 0..len {
                let wt = if s == 0 || s == len - 1 { 0.5 } else { 1.0 };
                let gs = g(s as isize);
                for k in 0..3 {
                    corr[k] -= wt * gs[k];
                }
            }
            // Euler–Maclaurin end term of the trapezoid on the remaining arc
            let d = |s: isize| -> [f64; 3] {
                let (p1, m1, p2, m2) = (g(s + 1), g(s - 1), g(s + 2), g(s - 2));
                std::array::from_fn(|k| (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / 12.0)
            };
            let (da, db) = (d(0), d(len as isize - 1));
            for k in 0..3 {
                corr[k] -= (da[k] - db[k]) / 12.0;
            }
            for k in 0..3 {
                v[k] += corr[k];
            }
        }
    }
}

fn chord(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// ∫ ln|x − y|² dl(y) over the straight segment from `a` to `b`.
pub fn panel_integral(x: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let l = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if l == 0.0 {
        return [0.0; 3];
    }
    let e = [d[0] / l, d[1] / l, d[2] / l];
    let r = [x[0] - a[0], x[1] - a[1], x[2] - a[2]];
    let u0 = r[0] * e[0] + r[1] * e[1] + r[2] * e[2];
    let h2 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2] - u0 * u0).max(0.0);
    let h = h2.sqrt();
    let f = |v: f64| -> f64 {
        let q = v * v + h2;
        let lg = if q > 0.0 { v * q.ln() } else { 0.0 };
        let at = if h > 0.0 { 2.0 * h * (v / h).atan() } else { 0.0 };
        lg - 2.0 * v + at
    };
    let s = f(l - u0) - f(-u0);
    [s * e[0], s * e[1], s * e[2]]
}

/// c_i = Σ_m Q_m w_{i+m} + ln(|w_i|² n²/4π²) w_i with
/// Q_m = (n/2π) R_m − ln(4 sin²(πm/n)) (m ≠ 0), R the Kress weights.
fn kress_correction(ws: &[Vec<f64>; 3], planner: &mut FftPlanner<f64>) -> Vec<[f64; 3]> {
    let n = ws[0].len();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let q_hat = kress_symbol(n, &fwd);
    let mut out = vec![[0.0; 3]; n];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for a in 0..3 {
        buf.iter_mut().zip(&ws[a]).for_each(|(b, &w)| *b = Complex::new(w, 0.0));
        fwd.process(&mut buf);
        buf.iter_mut().zip(&q_hat).for_each(|(b, q)| *b *= q);
        inv.process(&mut buf);
        for i in 0..n {
            out[i][a] = buf[i].re / n as f64;
        }
    }
    let c = (n as f64 / TAU).powi(2);
    for i in 0..n {
        let w2 = ws[0][i].powi(2) + ws[1][i].powi(2) + ws[2][i].powi(2);
        let l = (w2 * c).ln();
        for a in 0..3 {
            out[i][a] += l * ws[a][i];
        }
    }
    out
}

fn kress_symbol(n: usize, fwd: &Arc<dyn rustfft::Fft<f64>>) -> Vec<f64> {
    let mut lg: Vec<Complex<f64>> = (0..n)
        .map(|m| {
            if m == 0 {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new((4.0 * (PI * m as f64 / n as f64).sin().powi(2)).ln(), 0.0)
            }
        })
        .collect();
    fwd.process(&mut lg);
    (0..n)
        .map(|k| {
            let kk = k.min(n - k);
            let p = if kk == 0 { 0.0 } else { -(n as f64) / kk as f64 };
            p - lg[k].re
        })
        .collect()
}

/// Velocity of `state` at `x`, failing within [`EPS_CORE`] of a node.
pub fn velocity_contour(state: &CapState, x: &UnitVector3) -> Result<VelocitySample> {
    ContourField::new(state).velocity(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zonal::{dtheta_g_star, make_gauss_cap, ZonalCap};
    use std::f64::consts::FRAC_PI_2;

    fn equator() -> ZonalCap {
        make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn panel_matches_fine_midpoint_rule() {
        let x = [0.3, 0.1, 0.9];
        let a = [0.2, 0.0, 0.95];
        let b = [0.35, 0.12, 0.88];
        let got = panel_integral(&x, &a, &b);
        let m = 200_000;
        let mut want = [0.0; 3];
        for k in 0..m {
            let s = (k as f64 + 0.5) / m as f64;
            let y: Vec<f64> = (0..3).map(|i| a[i] + s * (b[i] - a[i])).collect();
            let r2: f64 = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum();
            for i in 0..3 {
                want[i] += r2.ln() * (b[i] - a[i]) / m as f64;
            }
        }
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-8, "{got:?} {want:?}");
        }
    }

    #[test]
    fn panel_endpoint_is_finite() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.99, 0.1, 0.0];
        let v = panel_integral(&a, &a, &b);
        assert!(v.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn pure_rotation_term() {
        let cap = make_gauss_cap(vec![1.0], vec![0.0], 0.3).unwrap();
        let s = CapState::zonal(&cap, 64).unwrap();
        let x = chart_forward(SphPoint::new(FRAC_PI_2, 0.4).unwrap());
        let u = velocity_contour(&s, &x).unwrap();
        assert!(u.u_theta.abs() < 1e-15);
        assert!((u.u_phi - 0.3).abs() < 1e-15);
    }

    #[test]
    fn nodes_of_equator_move_at_unit_speed() {
        let s = CapState::zonal(&equator(), 256).unwrap();
        let f = ContourField::new(&s);
        for i in [0, 17, 128] {
            let u = f.velocity_at_node(0, i);
            assert!((u.u_phi - 1.0).abs() < 1e-10, "{}", u.u_phi - 1.0);
            assert!(u.u_theta.abs() < 1e-12);
        }
    }

    #[test]
    fn nodes_of_off_equator_parallel() {
        let cap = make_gauss_cap(vec![1.0], vec![1.5], 0.0).unwrap();
        let s = CapState::zonal(&cap, 512).unwrap();
        let f = ContourField::new(&s);
        let want = dtheta_g_star(&cap, 1.0).unwrap();
        let u = f.velocity_at_node(0, 3);
        assert!((u.u_phi - want).abs() < 1e-9, "{}", u.u_phi - want);
    }

    #[test]
    fn off_node_far_points() {
        let s = CapState::zonal(&equator(), 1024).unwrap();
        for &th in &[0.3, FRAC_PI_2 / 2.0, 1.4, 2.0, 2.9] {
            let x = chart_forward(SphPoint::new(th, 0.77).unwrap());
            let u = velocity_contour(&s, &x).unwrap();
            let want = dtheta_g_star(&equator(), th).unwrap();
            assert!((u.u_phi - want).abs() < 1e-6, "{th}: {} vs {want}", u.u_phi);
            assert!(u.u_theta.abs() < 1e-6);
        }
    }

    #[test]
    fn near_points_use_panels() {
        let n = 512;
        let s = CapState::zonal(&equator(), n).unwrap();
        let h = TAU / n as f64;
        for &(dth, frac) in &[(0.0, 0.5), (0.3 * h, 0.25), (-1.5 * h, 0.5), (2.5 * h, 0.1)] {
            let th = FRAC_PI_2 + dth;
            let x = chart_forward(SphPoint::new(th, (7.0 + frac) * h).unwrap());
            let u = velocity_contour(&s, &x).unwrap();
            let want = dtheta_g_star(&equator(), th).unwrap();
            assert!((u.u_phi - want).abs() < 1e-6, "{dth} {frac}: {}", u.u_phi - want);
            assert!(u.u_theta.abs() < 1e-4);
        }
    }

    #[test]
    fn core_error_near_node() {
        let s = CapState::zonal(&equator(), 64).unwrap();
        let p = s.curves[0].nodes[5];
        let x = chart_forward(SphPoint::new(p.theta + 1e-8, p.phi).unwrap());
        assert!(matches!(velocity_contour(&s, &x), Err(CapError::Core { .. })));
    }
}
