//! Spherical geometry on the unit sphere.
//!
//! Points are carried either as Cartesian unit vectors ([`UnitVector3`]) or in
//! the co-latitude/longitude chart ([`SphPoint`]). The chart longitude is
//! *lifted*: it lives in all of R and is only reduced mod 2π when a point is
//! mapped back to Cartesian coordinates, so that winding of material curves
//! stays measurable.

use std::f64::consts::{PI, TAU};

use crate::error::{CapError, Result};

/// Tolerance on |x| = 1 kept by every constructor.
pub const UNIT_TOL: f64 = 1e-12;

/// |x3| threshold above which [`chart_inverse`] refuses to invert.
pub const POLE_TOL: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// A point of the unit sphere as a Cartesian 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3([f64; 3]);

impl UnitVector3 {
    /// Normalizes `v`; fails only for the zero vector (reported as a pole-less
    /// degenerate input through [`CapError::Range`]).
    pub fn new(x1: f64, x2: f64, x3: f64) -> Result<Self> {
        let n = (x1 * x1 + x2 * x2 + x3 * x3).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(CapError::Range(format!(
                "cannot normalize ({x1}, {x2}, {x3})"
            )));
        }
        Ok(Self([x1 / n, x2 / n, x3 / n]))
    }

    pub fn north_pole() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }

    pub fn x2(&self) -> f64 {
        self.0[1]
    }

    pub fn x3(&self) -> f64 {
        self.0[2]
    }

    pub fn as_array(&self) -> &[f64; 3] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    /// Re-projects onto the sphere; used after accumulated arithmetic.
    pub fn renormalized(&self) -> Self {
        let n = norm(&self.0);
        Self([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }
}

/// Chart coordinates: co-latitude in (0, π) and lifted longitude in R.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphPoint {
    pub theta: f64,
    pub phi: f64,
}

impl SphPoint {
    /// Rejects co-latitudes on or outside the poles.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < PI) || !phi.is_finite() {
            return Err(CapError::Domain { theta });
        }
        Ok(Self { theta, phi })
    }
}

/// Orthonormal tangent basis (e_θ, e_φ) at a point of the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub e_theta: [f64; 3],
    pub e_phi: [f64; 3],
}

impl TangentFrame {
    /// Components of a tangent (or ambient) vector in this frame.
    pub fn project(&self, v: &[f64; 3]) -> (f64, f64) {
        (dot(v, &self.e_theta), dot(v, &self.e_phi))
    }
}

/// ψ₁(θ, φ) with φ reduced mod 2π first.
pub fn chart_forward(p: SphPoint) -> UnitVector3 {
    let phi = p.phi.rem_euclid(TAU);
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    UnitVector3([st * cp, st * sp, ct])
}

/// Inverse chart; the longitude branch is the 2π-translate of atan2(x2, x1)
/// closest to `phi_hint`.
pub fn chart_inverse(x: &UnitVector3, phi_hint: f64) -> Result<SphPoint> {
    if x.x3().abs() >= 1.0 - POLE_TOL {
        return Err(CapError::Pole { x3: x.x3() });
    }
    let theta = x.x3().clamp(-1.0, 1.0).acos();
    let base = x.x2().atan2(x.x1());
    let phi = base + TAU * ((phi_hint - base) / TAU).round();
    Ok(SphPoint { theta, phi })
}

/// Euclidean distance |x − y| in R³.
pub fn chord_distance(x: &UnitVector3, y: &UnitVector3) -> f64 {
    norm(&sub(&x.0, &y.0))
}

/// Great-circle distance, equal to 2·arcsin(|x − y|/2).
///
/// Evaluated as atan2(|x × y|, x·y), which stays accurate near 0 and π where
/// the arcsine form loses half its digits.
pub fn geodesic_distance(x: &UnitVector3, y: &UnitVector3) -> f64 {
    norm(&cross(&x.0, &y.0)).atan2(dot(&x.0, &y.0))
}

pub fn tangent_frame(p: SphPoint) -> TangentFrame {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.rem_euclid(TAU).sin_cos();
    TangentFrame {
        e_theta: [ct * cp, ct * sp, -st],
        e_phi: [-sp, cp, 0.0],
    }
}

/// Sum of great-circle lengths between consecutive nodes (plus the closing
/// segment when `closed`).
pub fn polyline_length(points: &[SphPoint], closed: bool) -> Result<f64> {
    if points.len() < 2 {
        return Err(CapError::DegenerateCurve(points.len()));
    }
    let xs: Vec<UnitVector3> = points.iter().map(|p| chart_forward(*p)).collect();
    let mut total: f64 = xs
        .windows(2)
        .map(|w| geodesic_distance(&w[0], &w[1]))
        .sum();
    if closed {
        total += geodesic_distance(&xs[xs.len() - 1], &xs[0]);
    }
    Ok(total)
}

/// Rigid rotation of R³ restricted to the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    /// Rodrigues rotation by `angle` about the (normalized) `axis`.
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let n = norm(&axis);
        let [kx, ky, kz] = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = angle.sin_cos();
        let v = 1.0 - c;
        Self {
            m: [
                [c + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s],
                [ky * kx * v + kz * s, c + ky * ky * v, ky * kz * v - kx * s],
                [kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v],
            ],
        }
    }

    pub fn apply_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn apply(&self, x: &UnitVector3) -> UnitVector3 {
        UnitVector3(self.apply_vec(&x.0)).renormalized()
    }
}
