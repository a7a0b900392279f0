//! Closed-form quantities for zonal caps.
//!
//! A zonal cap has interfaces at co-latitudes θ₁ < … < θ_{N−1} and absolute
//! vorticity ω_k on the band [θ_{k−1}, θ_k), with θ₀ = 0 and θ_N = π. Band and
//! interface indices are 1-based throughout this module.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{CapError, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// cos a − cos b without cancellation.
#[inline]
pub(crate) fn cos_diff(a: f64, b: f64) -> f64 {
    2.0 * (0.5 * (a + b)).sin() * (0.5 * (b - a)).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonalCap {
    thetas: Vec<f64>,
    omegas: Vec<f64>,
    gamma: f64,
    /// C(k) for k = 0..=N, C(0) = 0.
    #[serde(skip)]
    partial: Vec<f64>,
}

fn check_thetas(thetas: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (i, &t) in thetas.iter().enumerate() {
        if !(t > prev && t < PI) {
            return Err(CapError::Ordering(format!(
                "theta[{}] = {} does not lie in ({}, pi)",
                i + 1,
                t,
                prev
            )));
        }
        prev = t;
    }
    Ok(())
}

impl ZonalCap {
    /// Builds a cap from all N levels, rejecting any that break the Gauss constraint.
    pub fn new(thetas: Vec<f64>, omegas: Vec<f64>, gamma: f64) -> Result<Self> {
        check_thetas(&thetas)?;
        if omegas.len() != thetas.len() + 1 {
            return Err(CapError::Range(format!(
                "{} interfaces need {} levels, got {}",
                thetas.len(),
                thetas.len() + 1,
                omegas.len()
            )));
        }
        if omegas.iter().any(|w| !w.is_finite()) || !gamma.is_finite() {
            return Err(CapError::Range("levels and gamma must be finite".into()));
        }
        let cap = Self::assemble(thetas, omegas, gamma);
        let scale = cap.omegas.iter().fold(1.0f64, |m, w| m.max(w.abs()));
        let residual = cap.partial[cap.n()];
        if residual.abs() > 1e-12 * scale {
            return Err(CapError::Range(format!(
                "Gauss constraint violated: residual {residual:e}"
            )));
        }
        Ok(cap)
    }

    fn assemble(thetas: Vec<f64>, omegas: Vec<f64>, gamma: f64) -> Self {
        let n = omegas.len();
        let mut partial = Vec::with_capacity(n + 1);
        partial.push(0.0);
        let mut acc = KahanSum::default();
        for k in 1..=n {
            let (a, b) = (band_edge(&thetas, k - 1), band_edge(&thetas, k));
            acc.add(omegas[k - 1] * cos_diff(a, b));
            partial.push(acc.value());
        }
        Self {
            thetas,
            omegas,
            gamma,
            partial,
        }
    }

    /// Number of levels N.
    pub fn n(&self) -> usize {
        self.omegas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// θ_k for k = 0..=N.
    pub fn theta(&self, k: usize) -> f64 {
        band_edge(&self.thetas, k)
    }

    /// ω_k for k = 1..=N.
    pub fn omega(&self, k: usize) -> f64 {
        self.omegas[k - 1]
    }

    /// C(k) = Σ_{k'≤k} ω_{k'}(cos θ_{k'−1} − cos θ_{k'}).
    pub fn c(&self, k: usize) -> f64 {
        self.partial[k]
    }

    /// Band index k with θ ∈ [θ_{k−1}, θ_k).
    pub fn band_of(&self, theta: f64) -> usize {
        self.thetas.partition_point(|&t| t <= theta) + 1
    }

    /// Same cap with every level multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::assemble(
            self.thetas.clone(),
            self.omegas.iter().map(|w| w * s).collect(),
            self.gamma,
        )
    }

    /// Same cap with a different rotation speed.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    fn check_interface(&self, k0: usize) -> Result<()> {
        if k0 == 0 || k0 > self.thetas.len() {
            return Err(CapError::Index {
                index: k0,
                max: self.thetas.len(),
            });
        }
        Ok(())
    }
}

fn band_edge(thetas: &[f64], k: usize) -> f64 {
    if k == 0 {
        0.0
    } else if k > thetas.len() {
        PI
    } else {
        thetas[k - 1]
    }
}

/// Solves the Gauss constraint for the last level ω_N.
pub fn make_gauss_cap(thetas: Vec<f64>, omegas_free: Vec<f64>, gamma: f64) -> Result<ZonalCap> {
    check_thetas(&thetas)?;
    if omegas_free.len() != thetas.len() {
        return Err(CapError::Range(format!(
            "{} interfaces need {} free levels, got {}",
            thetas.len(),
            thetas.len(),
            omegas_free.len()
        )));
    }
    let n = thetas.len() + 1;
    let mut s = KahanSum::default();
    for k in 1..n {
        s.add(omegas_free[k - 1] * cos_diff(band_edge(&thetas, k - 1), band_edge(&thetas, k)));
    }
    let last = band_edge(&thetas, n - 1);
    // ω_N (cos θ_{N−1} − cos π) = −Σ_{k<N} ω_k (cos θ_{k−1} − cos θ_k)
    let omega_n = -s.value() / cos_diff(last, PI);
    let mut omegas = omegas_free;
    omegas.push(omega_n);
    Ok(ZonalCap::assemble(thetas, omegas, gamma))
}

/// Strict ordering of levels matched to the sign of γ.
pub fn is_monotone(cap: &ZonalCap) -> bool {
    let w = cap.omegas();
    let dec = w.windows(2).all(|p| p[0] > p[1]);
    let inc = w.windows(2).all(|p| p[0] < p[1]);
    if cap.gamma() > 0.0 {
        dec
    } else if cap.gamma() < 0.0 {
        inc
    } else {
        dec || inc
    }
}

/// ∂θG[ζ⋆](θ), the zonal velocity u_φ without the rotation term.
pub fn dtheta_g_star(cap: &ZonalCap, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < PI) {
        return Err(CapError::Domain { theta });
    }
    let k = cap.band_of(theta);
    let lo = cap.theta(k - 1);
    Ok((cap.c(k - 1) + cap.omega(k) * cos_diff(lo, theta)) / theta.sin())
}

/// Φ̇⋆(θ) = ∂θG[ζ⋆](θ)/sin θ + γ.
pub fn phi_dot_star(cap: &ZonalCap, theta: f64) -> Result<f64> {
    Ok(dtheta_g_star(cap, theta)? / theta.sin() + cap.gamma())
}

/// α(μ) = Φ̇⋆(θ_{k₀} + μ) − Φ̇⋆(θ_{k₀}).
pub fn alpha(cap: &ZonalCap, k0: usize, mu: f64) -> Result<f64> {
    cap.check_interface(k0)?;
    let t0 = cap.theta(k0);
    let t1 = t0 + mu;
    if !(t1 > cap.theta(k0 - 1) && t1 < cap.theta(k0 + 1)) {
        return Err(CapError::Range(format!(
            "theta_{k0} + mu = {t1} leaves ({}, {})",
            cap.theta(k0 - 1),
            cap.theta(k0 + 1)
        )));
    }
    Ok(phi_dot_star(cap, t1)? - phi_dot_star(cap, t0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftExpansion {
    pub a1: f64,
    pub a2: f64,
    pub k0: usize,
    pub side: Side,
}

impl DriftExpansion {
    pub fn eval(&self, mu: f64) -> f64 {
        self.a1 * mu + self.a2 * mu * mu
    }
}

/// Second-order Taylor coefficients of α at interface `k0` on one side.
pub fn alpha_expansion(cap: &ZonalCap, k0: usize, side: Side) -> Result<DriftExpansion> {
    cap.check_interface(k0)?;
    let (c, w) = match side {
        Side::Plus => (cap.c(k0), cap.omega(k0 + 1)),
        // ∂θG is continuous, so the value at θ_{k₀} is C(k₀) on both sides
        Side::Minus => (cap.c(k0), cap.omega(k0)),
    };
    let (s, co) = cap.theta(k0).sin_cos();
    let s2 = s * s;
    let a1 = (w * s2 - 2.0 * c * co) / (s2 * s);
    let a2 = (2.0 * c * (s2 + 3.0 * co * co) - 3.0 * w * s2 * co) / (2.0 * s2 * s2);
    Ok(DriftExpansion { a1, a2, k0, side })
}

/// Largest |μ| on one side such that α has no zero in (0, |μ|].
///
/// Scans toward the adjacent interface and bisects the first sign change; if
/// α keeps its sign all the way, the distance to that interface is returned.
pub fn find_mu_hat(cap: &ZonalCap, k0: usize, side: Side) -> Result<f64> {
    cap.check_interface(k0)?;
    let t0 = cap.theta(k0);
    let (limit, sign) = match side {
        Side::Plus => (cap.theta(k0 + 1) - t0, 1.0),
        Side::Minus => (t0 - cap.theta(k0 - 1), -1.0),
    };
    let f = |m: f64| alpha(cap, k0, sign * m);
    const SCAN: usize = 2000;
    let edge = limit * (1.0 - 1e-9);
    let mut lo = edge / SCAN as f64;
    let s0 = f(lo)?.signum();
    for i in 2..=SCAN {
        let hi = edge * i as f64 / SCAN as f64;
        if f(hi)?.signum() != s0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if f(m)?.signum() == s0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(a);
        }
        lo = hi;
    }
    Ok(limit)
}

/// G[x₃](θ) = −cos θ / 2.
pub fn g_x3(theta: f64) -> f64 {
    -0.5 * theta.cos()
}

/// β(μ) = ½ min(sin(θ₁ − |μ|), sin(θ_{N−1} + |μ|)).
pub fn beta(cap: &ZonalCap, mu: f64) -> f64 {
    let lo = cap.theta(1) - mu.abs();
    let hi = cap.theta(cap.n() - 1) + mu.abs();
    0.5 * lo.sin().min(hi.sin())
}
