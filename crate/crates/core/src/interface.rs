//! Material interfaces: bump initial data, node refinement, perimeter, areas
//! and the L¹ distance to a zonal reference.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::Serialize;

use crate::error::{CapError, Result};
use crate::geom::{chart_forward, dot, polyline_length, SphPoint};
use crate::mesh::{rasterize_zeta, zonal_zeta_grid, Grid};
use crate::zonal::ZonalCap;

/// Hard limit on nodes per curve unless a caller overrides it.
pub const DEFAULT_NODE_CAP: usize = 200_000;

/// Closed curve with nodes ordered by increasing lifted longitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceCurve {
    pub label: usize,
    /// Level south minus level north.
    pub jump: f64,
    pub nodes: Vec<SphPoint>,
    /// Initial co-latitude of each node; NaN for nodes inserted by refinement.
    pub origin_theta: Vec<f64>,
}

impl InterfaceCurve {
    pub fn new(label: usize, jump: f64, nodes: Vec<SphPoint>) -> Result<Self> {
        if nodes.len() < 8 {
            return Err(CapError::DegenerateCurve(nodes.len()));
        }
        let origin_theta = nodes.iter().map(|p| p.theta).collect();
        Ok(Self {
            label,
            jump,
            nodes,
            origin_theta,
        })
    }

    /// Parallel at `theta` with `n` nodes starting at longitude `phi0`.
    pub fn parallel(label: usize, jump: f64, theta: f64, n: usize, phi0: f64) -> Result<Self> {
        let nodes = (0..n)
            .map(|j| SphPoint::new(theta, phi0 + TAU * j as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, jump, nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node `j` shifted by whole turns so that indices past the end continue
    /// the lift.
    pub fn node_wrapped(&self, j: usize) -> SphPoint {
        let n = self.nodes.len();
        let p = self.nodes[j % n];
        SphPoint {
            theta: p.theta,
            phi: p.phi + TAU * (j / n) as f64,
        }
    }

    /// Great-circle length of segment `j` → `j + 1` (cyclic).
    pub fn segment_length(&self, j: usize) -> f64 {
        let a = chart_forward(self.nodes[j]);
        let b = chart_forward(self.nodes[(j + 1) % self.nodes.len()]);
        crate::geom::geodesic_distance(&a, &b)
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.len()).map(|j| self.segment_length(j)).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.len())
            .map(|j| self.segment_length(j))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Reference to a node that is followed as a named material point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Marker {
    pub name: String,
    pub curve: usize,
    pub node: usize,
}

/// Piecewise-constant absolute vorticity bounded by material curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapState {
    /// Ordered north to south.
    pub curves: Vec<InterfaceCurve>,
    /// Region levels ω₁…ω_N.
    pub levels: Vec<f64>,
    pub gamma: f64,
    pub t: f64,
    pub markers: Vec<Marker>,
}

impl CapState {
    pub fn new(curves: Vec<InterfaceCurve>, levels: Vec<f64>, gamma: f64) -> Result<Self> {
        if levels.len() != curves.len() + 1 {
            return Err(CapError::Range(format!(
                "{} curves need {} levels, got {}",
                curves.len(),
                curves.len() + 1,
                levels.len()
            )));
        }
        for (k, c) in curves.iter().enumerate() {
            let want = levels[k + 1] - levels[k];
            if (c.jump - want).abs() > 1e-12 * (1.0 + want.abs()) {
                return Err(CapError::Range(format!(
                    "curve {} jump {} differs from level difference {}",
                    c.label, c.jump, want
                )));
            }
        }
        Ok(Self {
            curves,
            levels,
            gamma,
            t: 0.0,
            markers: Vec::new(),
        })
    }

    /// Every curve an exact sampled parallel of `cap`.
    pub fn zonal(cap: &ZonalCap, n_nodes: usize) -> Result<Self> {
        let curves = (1..cap.n())
            .map(|k| {
                InterfaceCurve::parallel(k, cap.omega(k + 1) - cap.omega(k), cap.theta(k), n_nodes, 0.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(curves, cap.omegas().to_vec(), cap.gamma())
    }

    pub fn marker(&self, name: &str) -> Option<SphPoint> {
        self.markers
            .iter()
            .find(|m| m.name == name)
            .map(|m| self.curves[m.curve].nodes[m.node])
    }

    pub fn total_nodes(&self) -> usize {
        self.curves.iter().map(|c| c.len()).sum()
    }

    /// Σ_k ω_k A_k with polygon areas.
    pub fn gauss_residual(&self) -> Result<f64> {
        let areas = region_areas(self)?;
        Ok(self.levels.iter().zip(&areas).map(|(w, a)| w * a).sum())
    }

    /// Same state with every level multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.levels {
            *w *= s;
        }
        for c in &mut out.curves {
            c.jump *= s;
        }
        out
    }
}

/// cos² bump of half-width 1, zero outside.
pub fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (FRAC_PI_2 * s).cos().powi(2)
    }
}

/// Wraps an angle into (−π, π].
fn wrap_pi(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Zonal cap whose interface `k0` carries the bump θ_{k₀} + μ·B((φ − φ_c)/w).
///
/// Levels are shifted by a common constant so the Gauss constraint holds for
/// the perturbed regions; jumps, and therefore velocities, are unaffected.
/// Markers `x1` (bump tip, φ_c) and `x0` (φ_c + π) are exact nodes.
pub fn make_bump_cap(
    cap: &ZonalCap,
    k0: usize,
    mu: f64,
    phi_c: f64,
    w: f64,
    n_nodes: usize,
) -> Result<CapState> {
    if k0 == 0 || k0 >= cap.n() {
        return Err(CapError::Index {
            index: k0,
            max: cap.n() - 1,
        });
    }
    if !(w > 0.0 && w <= PI) {
        return Err(CapError::Range(format!("bump half-width {w} outside (0, pi]")));
    }
    if n_nodes < 8 || !n_nodes.is_multiple_of(2) {
        return Err(CapError::Range(format!(
            "n_nodes must be even and at least 8, got {n_nodes}"
        )));
    }
    let t0 = cap.theta(k0);
    if !(t0 + mu > cap.theta(k0 - 1) && t0 + mu < cap.theta(k0 + 1)) || !mu.is_finite() {
        return Err(CapError::Range(format!(
            "theta_{k0} + mu = {} leaves ({}, {})",
            t0 + mu,
            cap.theta(k0 - 1),
            cap.theta(k0 + 1)
        )));
    }
    let mut state = CapState::zonal(cap, n_nodes)?;
    let curve = &mut state.curves[k0 - 1];
    curve.nodes = (0..n_nodes)
        .map(|j| {
            let phi = phi_c + TAU * j as f64 / n_nodes as f64;
            let s = wrap_pi(phi - phi_c) / w;
            SphPoint::new(t0 + mu * bump_profile(s), phi)
        })
        .collect::<Result<Vec<_>>>()?;
    curve.origin_theta = curve.nodes.iter().map(|p| p.theta).collect();
    for (k, c) in state.curves.iter_mut().enumerate() {
        if k + 1 != k0 {
            c.nodes.iter_mut().for_each(|p| p.phi += phi_c);
        }
    }
    if mu != 0.0 {
        let shift = -state.gauss_residual()? / (4.0 * PI);
        state.levels.iter_mut().for_each(|l| *l += shift);
    }
    state.markers = vec![
        Marker {
            name: "x0".into(),
            curve: k0 - 1,
            node: n_nodes / 2,
        },
        Marker {
            name: "x1".into(),
            curve: k0 - 1,
            node: 0,
        },
    ];
    Ok(state)
}

/// Inserts chart midpoints until every segment is at most `h_max` long.
///
/// Nodes are never removed, so `h_min` only bounds the spacing produced by
/// insertion. Returns how many nodes were added.
pub fn refine(curve: &mut InterfaceCurve, h_min: f64, h_max: f64, node_cap: usize) -> Result<usize> {
    let ordered = h_max > 0.0 && h_min >= 0.0 && h_min < h_max;
    if !ordered {
        return Err(CapError::Range(format!(
            "need 0 <= h_min < h_max, got {h_min}, {h_max}"
        )));
    }
    let (nodes, origin, _) = refined_nodes(curve, h_max, node_cap)?;
    let added = nodes.len() - curve.nodes.len();
    curve.nodes = nodes;
    curve.origin_theta = origin;
    Ok(added)
}

/// Refined node list, origins, and for each old node its new index.
fn refined_nodes(
    curve: &InterfaceCurve,
    h_max: f64,
    node_cap: usize,
) -> Result<(Vec<SphPoint>, Vec<f64>, Vec<usize>)> {
    let n = curve.nodes.len();
    let mut nodes = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    for j in 0..n {
        let a = curve.nodes[j];
        let b = curve.node_wrapped(j + 1);
        index.push(nodes.len());
        nodes.push(a);
        origin.push(curve.origin_theta[j]);
        subdivide(a, b, h_max, &mut nodes, &mut origin);
        if nodes.len() > node_cap {
            return Err(CapError::ResolutionExhausted {
                label: curve.label,
                needed: nodes.len() + (n - j - 1),
                cap: node_cap,
            });
        }
    }
    Ok((nodes, origin, index))
}

fn subdivide(a: SphPoint, b: SphPoint, h_max: f64, out: &mut Vec<SphPoint>, origin: &mut Vec<f64>) {
    let d = crate::geom::geodesic_distance(&chart_forward(a), &chart_forward(b));
    if d <= h_max {
        return;
    }
    let m = SphPoint {
        theta: 0.5 * (a.theta + b.theta),
        phi: 0.5 * (a.phi + b.phi),
    };
    subdivide(a, m, h_max, out, origin);
    out.push(m);
    origin.push(f64::NAN);
    subdivide(m, b, h_max, out, origin);
}

/// Refines every curve of `state` and keeps markers on their nodes.
pub fn refine_state(state: &mut CapState, h_max: f64, node_cap: usize) -> Result<usize> {
    let mut added = 0;
    for (k, curve) in state.curves.iter_mut().enumerate() {
        let (nodes, origin, index) = refined_nodes(curve, h_max, node_cap)?;
        added += nodes.len() - curve.nodes.len();
        curve.nodes = nodes;
        curve.origin_theta = origin;
        for m in state.markers.iter_mut().filter(|m| m.curve == k) {
            m.node = index[m.node];
        }
    }
    Ok(added)
}

pub fn perimeter(curve: &InterfaceCurve) -> f64 {
    polyline_length(&curve.nodes, true).unwrap_or(0.0)
}

/// Signed area to the left of the closed geodesic polygon, measured as the
/// fan of triangles from the north pole.
pub fn area_north(curve: &InterfaceCurve) -> f64 {
    let n = curve.nodes.len();
    let xs: Vec<[f64; 3]> = curve.nodes.iter().map(|p| *chart_forward(*p).as_array()).collect();
    let mut acc = crate::zonal::KahanSum::default();
    for j in 0..n {
        let a = &xs[j];
        let b = &xs[(j + 1) % n];
        let num = a[0] * b[1] - a[1] * b[0];
        let den = 1.0 + a[2] + b[2] + dot(a, b);
        acc.add(2.0 * num.atan2(den));
    }
    acc.value()
}

/// Band areas A₁…A_N from the polygon areas north of each curve.
pub fn region_areas(state: &CapState) -> Result<Vec<f64>> {
    let north: Vec<f64> = state.curves.iter().map(area_north).collect();
    let mut out = Vec::with_capacity(north.len() + 1);
    let mut prev = 0.0;
    for (k, &a) in north.iter().enumerate() {
        let band = a - prev;
        if band < -1e-12 || !(0.0..=4.0 * PI + 1e-12).contains(&a) {
            return Err(CapError::Topology(format!(
                "curve {} encloses area {a} north, previous {prev}",
                state.curves[k].label
            )));
        }
        out.push(band);
        prev = a;
    }
    out.push(4.0 * PI - prev);
    Ok(out)
}

/// ∫|ζ_state − ζ⋆| dσ on a shared raster grid.
pub fn l1_distance(state: &CapState, cap: &ZonalCap, grid: Grid) -> Result<f64> {
    if state.levels.len() != cap.n() {
        return Err(CapError::Range(format!(
            "state has {} levels, cap has {}",
            state.levels.len(),
            cap.n()
        )));
    }
    let a = rasterize_zeta(state, grid)?;
    let b = zonal_zeta_grid(cap, grid);
    Ok(grid.integrate(a.iter().zip(&b).map(|(x, y)| (x - y).abs())))
}
