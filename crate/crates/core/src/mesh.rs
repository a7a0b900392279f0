//! Uniform latitude-longitude grids: rasterized vorticity and the slow
//! area-quadrature oracles for velocity and stream function.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::geom::{tangent_frame, SphPoint, UnitVector3};
use crate::interface::CapState;
use crate::velocity::VelocitySample;
use crate::zonal::{cos_diff, ZonalCap};

/// Cell-centred grid with `n_theta` rows and `n_phi` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Grid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        Self { n_theta, n_phi }
    }

    pub fn d_theta(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn d_phi(&self) -> f64 {
        TAU / self.n_phi as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.d_theta()
    }

    pub fn phi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.d_phi()
    }

    /// Exact area of a cell in row `i`.
    pub fn row_area(&self, i: usize) -> f64 {
        let dt = self.d_theta();
        cos_diff(i as f64 * dt, (i + 1) as f64 * dt) * self.d_phi()
    }

    /// Largest cell diagonal, in radians.
    pub fn cell_diameter(&self) -> f64 {
        self.d_theta().hypot(self.d_phi())
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row and column of the cell containing (θ, φ).
    pub fn locate(&self, theta: f64, phi: f64) -> (usize, usize) {
        let i = ((theta / self.d_theta()) as usize).min(self.n_theta - 1);
        let j = ((phi.rem_euclid(TAU) / self.d_phi()) as usize).min(self.n_phi - 1);
        (i, j)
    }

    /// Σ value·area over row-major cell values.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut acc = 0.0;
        let mut row = 0.0;
        for (k, v) in values.into_iter().enumerate() {
            row += v;
            if (k + 1) % self.n_phi == 0 {
                acc += row * self.row_area(k / self.n_phi);
                row = 0.0;
            }
        }
        acc
    }
}

/// Relative vorticity sampled at cell centres, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticityMesh {
    pub grid: Grid,
    pub omega: Vec<f64>,
}

impl VorticityMesh {
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let omega = (0..grid.len())
            .into_par_iter()
            .map(|k| f(grid.theta(k / grid.n_phi), grid.phi(k % grid.n_phi)))
            .collect();
        Self { grid, omega }
    }

    /// ∫ω dσ.
    pub fn total(&self) -> f64 {
        self.grid.integrate(self.omega.iter().copied())
    }

    pub fn norm_inf(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn norm_l1(&self) -> f64 {
        self.grid.integrate(self.omega.iter().map(|w| w.abs()))
    }

    fn value_at(&self, theta: f64, phi: f64) -> f64 {
        let (i, j) = self.grid.locate(theta, phi);
        self.omega[i * self.grid.n_phi + j]
    }
}

/// One crossing of a curve with a column's meridian.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    col: usize,
    curve: usize,
    theta: f64,
}

fn crossings(state: &CapState, grid: Grid) -> Vec<Crossing> {
    let dphi = grid.d_phi();
    let mut out = Vec::new();
    for (c, curve) in state.curves.iter().enumerate() {
        let n = curve.len();
        for s in 0..n {
            let a = curve.nodes[s];
            let b = curve.node_wrapped(s + 1);
            if a.phi == b.phi {
                continue;
            }
            let (lo, hi) = if a.phi < b.phi { (a.phi, b.phi) } else { (b.phi, a.phi) };
            // column centres ψ = (k + ½)Δφ with lo ≤ ψ < hi
            let k_lo = (lo / dphi - 0.5).ceil() as i64;
            let k_hi = (hi / dphi - 0.5).ceil() as i64;
            for k in k_lo..k_hi {
                let psi = (k as f64 + 0.5) * dphi;
                let f = (psi - a.phi) / (b.phi - a.phi);
                out.push(Crossing {
                    col: k.rem_euclid(grid.n_phi as i64) as usize,
                    curve: c,
                    theta: a.theta + f * (b.theta - a.theta),
                });
            }
        }
    }
    out.sort_by(|x, y| x.col.cmp(&y.col).then(x.theta.total_cmp(&y.theta)));
    out
}

/// Region level index (0-based) of every cell, row-major.
fn region_indices(state: &CapState, grid: Grid) -> Result<Vec<usize>> {
    let all = crossings(state, grid);
    let nc = state.curves.len();
    let columns: Vec<Result<Vec<usize>>> = (0..grid.n_phi)
        .into_par_iter()
        .map(|j| {
            let start = all.partition_point(|c| c.col < j);
            let end = all.partition_point(|c| c.col <= j);
            let col = &all[start..end];
            let mut counts = vec![0usize; nc];
            col.iter().for_each(|c| counts[c.curve] += 1);
            if let Some(k) = counts.iter().position(|n| n % 2 == 0) {
                return Err(CapError::Topology(format!(
                    "curve {} crosses meridian {} an even number of times",
                    state.curves[k].label,
                    grid.phi(j)
                )));
            }
            let mut parity = vec![false; nc];
            let mut p = 0;
            let mut out = Vec::with_capacity(grid.n_theta);
            for i in 0..grid.n_theta {
                let th = grid.theta(i);
                while p < col.len() && col[p].theta < th {
                    parity[col[p].curve] ^= true;
                    p += 1;
                }
                let south = parity.iter().filter(|&&b| b).count();
                if parity.iter().enumerate().any(|(k, &b)| b != (k < south)) {
                    return Err(CapError::Topology(format!(
                        "cell (theta {th}, phi {}) lies between interfaces out of order",
                        grid.phi(j)
                    )));
                }
                out.push(south);
            }
            Ok(out)
        })
        .collect();
    let mut idx = vec![0usize; grid.len()];
    for (j, col) in columns.into_iter().enumerate() {
        for (i, r) in col?.into_iter().enumerate() {
            idx[i * grid.n_phi + j] = r;
        }
    }
    Ok(idx)
}

/// Absolute vorticity ζ of the region containing each cell centre.
pub fn rasterize_zeta(state: &CapState, grid: Grid) -> Result<Vec<f64>> {
    Ok(region_indices(state, grid)?
        .into_iter()
        .map(|r| state.levels[r])
        .collect())
}

/// Relative vorticity ω = ζ + 2γ cos θ per cell.
pub fn rasterize(state: &CapState, grid: Grid) -> Result<VorticityMesh> {
    let zeta = rasterize_zeta(state, grid)?;
    let omega = zeta
        .into_iter()
        .enumerate()
        .map(|(k, z)| z + 2.0 * state.gamma * grid.theta(k / grid.n_phi).cos())
        .collect();
    Ok(VorticityMesh { grid, omega })
}

/// ζ⋆ of a zonal cap sampled at cell centres.
pub fn zonal_zeta_grid(cap: &ZonalCap, grid: Grid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_theta {
        let w = cap.omega(cap.band_of(grid.theta(i)));
        out.extend(std::iter::repeat_n(w, grid.n_phi));
    }
    out
}

fn point_coords(x: &UnitVector3) -> Result<(f64, f64)> {
    let theta = x.x3().clamp(-1.0, 1.0).acos();
    if !(theta > 0.0 && theta < PI) || x.x1() == 0.0 && x.x2() == 0.0 {
        return Err(CapError::Pole { x3: x.x3() });
    }
    Ok((theta, x.x2().atan2(x.x1())))
}

struct Trig {
    st: Vec<f64>,
    ct: Vec<f64>,
    sp: Vec<f64>,
    cp: Vec<f64>,
    area: Vec<f64>,
}

impl Trig {
    fn new(g: Grid) -> Self {
        let (st, ct) = (0..g.n_theta).map(|i| g.theta(i).sin_cos()).unzip();
        let (sp, cp) = (0..g.n_phi).map(|j| g.phi(j).sin_cos()).unzip();
        let area = (0..g.n_theta).map(|i| g.row_area(i)).collect();
        Self { st, ct, sp, cp, area }
    }
}

/// Midpoint-rule Biot–Savart sum u(x) = (1/2π) Σ (y × x)/|x − y|² (ω(y) − ω_x) dσ,
/// where ω_x is the value of the cell containing x.
pub fn velocity_oracle(mesh: &VorticityMesh, x: &UnitVector3) -> Result<VelocitySample> {
    let g = mesh.grid;
    let (theta, phi) = point_coords(x)?;
    let wx = mesh.value_at(theta, phi);
    let t = Trig::new(g);
    let xa = x.as_array();
    let mut acc = [0.0f64; 3];
    for i in 0..g.n_theta {
        let mut row = [0.0f64; 3];
        let (st, ct) = (t.st[i], t.ct[i]);
        let vals = &mesh.omega[i * g.n_phi..(i + 1) * g.n_phi];
        for ((cp, sp), v) in t.cp.iter().zip(&t.sp).zip(vals) {
            let y = [st * cp, st * sp, ct];
            let d = [xa[0] - y[0], xa[1] - y[1], xa[2] - y[2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 < 1e-28 {
                return Err(CapError::Singularity);
            }
            let f = (v - wx) / r2;
            row[0] += f * (y[1] * xa[2] - y[2] * xa[1]);
            row[1] += f * (y[2] * xa[0] - y[0] * xa[2]);
            row[2] += f * (y[0] * xa[1] - y[1] * xa[0]);
        }
        for k in 0..3 {
            acc[k] += row[k] * t.area[i];
        }
    }
    let u = acc.map(|a| a / TAU);
    let (u_theta, u_phi) = tangent_frame(SphPoint { theta, phi }).project(&u);
    Ok(VelocitySample { u_theta, u_phi })
}

/// ∫ G(x, y) ω(y) dσ(y) with G = (1/4π) ln|x − y|².
///
/// The cell value at x is subtracted inside the sum and added back through
/// ∫ G(x, y) dσ(y) = ln 4 − 1.
pub fn stream_oracle(mesh: &VorticityMesh, x: &UnitVector3) -> Result<f64> {
    let g = mesh.grid;
    let (theta, phi) = point_coords(x)?;
    let wx = mesh.value_at(theta, phi);
    let t = Trig::new(g);
    let xa = x.as_array();
    let mut acc = 0.0;
    for i in 0..g.n_theta {
        let mut row = 0.0;
        let (st, ct) = (t.st[i], t.ct[i]);
        let vals = &mesh.omega[i * g.n_phi..(i + 1) * g.n_phi];
        for ((cp, sp), v) in t.cp.iter().zip(&t.sp).zip(vals) {
            let d = [xa[0] - st * cp, xa[1] - st * sp, xa[2] - ct];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 < 1e-28 {
                return Err(CapError::Singularity);
            }
            row += r2.ln() * (v - wx);
        }
        acc += row * t.area[i];
    }
    Ok(acc / (4.0 * PI) + wx * (4f64.ln() - 1.0))
}

/// (3/(2√π))·√(‖ω‖_∞ ‖ω‖₁).
pub fn sup_velocity_bound(mesh: &VorticityMesh) -> f64 {
    1.5 / PI.sqrt() * (mesh.norm_inf() * mesh.norm_l1()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::chart_forward;
    use crate::interface::make_bump_cap;
    use crate::zonal::make_gauss_cap;
    use std::f64::consts::FRAC_PI_2;

    fn equator() -> ZonalCap {
        make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn grid_areas_sum_to_sphere() {
        let g = Grid::new(37, 64);
        assert!((g.integrate(std::iter::repeat_n(1.0, g.len())) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rasterize_equator_cap() {
        let g = Grid::new(32, 64);
        let s = CapState::zonal(&equator(), 128).unwrap();
        let m = rasterize(&s, g).unwrap();
        for i in 0..g.n_theta {
            let want = if g.theta(i) < FRAC_PI_2 { 1.0 } else { -1.0 };
            assert!(m.omega[i * g.n_phi..(i + 1) * g.n_phi].iter().all(|&w| (w - want).abs() < 1e-15));
        }
        assert!(m.total().abs() < 1e-12);
    }

    #[test]
    fn rasterize_pure_rotation() {
        let g = Grid::new(16, 32);
        let cap = make_gauss_cap(vec![1.0], vec![0.0], 1.0).unwrap();
        let m = rasterize(&CapState::zonal(&cap, 64).unwrap(), g).unwrap();
        for (k, w) in m.omega.iter().enumerate() {
            assert!((w - 2.0 * g.theta(k / g.n_phi).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn rasterize_bump_gauss_within_boundary_bound() {
        let g = Grid::new(256, 512);
        let s = make_bump_cap(&equator(), 1, 0.1, 0.0, 0.5, 1024).unwrap();
        let m = rasterize(&s, g).unwrap();
        let len = crate::interface::perimeter(&s.curves[0]);
        let wmax = s.levels.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(m.total().abs() <= 2.0 * g.cell_diameter() * len * wmax);
    }

    #[test]
    fn rasterize_rejects_crossing_curves() {
        let cap = make_gauss_cap(vec![1.4, 1.7], vec![1.0, 0.0], 0.0).unwrap();
        let mut s = CapState::zonal(&cap, 64).unwrap();
        // push half of the northern curve south of the southern one
        for p in s.curves[0].nodes.iter_mut().take(32) {
            p.theta = 1.9;
        }
        assert!(matches!(rasterize(&s, Grid::new(64, 128)), Err(CapError::Topology(_))));
    }

    #[test]
    fn oracle_zero_field() {
        let m = VorticityMesh::from_fn(Grid::new(16, 32), |_, _| 0.0);
        let x = chart_forward(SphPoint::new(0.7, 0.3).unwrap());
        let u = velocity_oracle(&m, &x).unwrap();
        assert_eq!((u.u_theta, u.u_phi), (0.0, 0.0));
    }

    #[test]
    fn oracle_x3_profile() {
        let m = VorticityMesh::from_fn(Grid::new(128, 256), |t, _| t.cos());
        for &th in &[0.4, 1.1, 2.3] {
            let x = chart_forward(SphPoint::new(th, 0.123).unwrap());
            let u = velocity_oracle(&m, &x).unwrap();
            assert!((u.u_phi - 0.5 * th.sin()).abs() < 2e-3, "{} vs {}", u.u_phi, 0.5 * th.sin());
            assert!(u.u_theta.abs() < 1e-3);
        }
    }

    #[test]
    fn oracle_singular_point() {
        let g = Grid::new(8, 16);
        let m = VorticityMesh::from_fn(g, |t, _| t.cos());
        let x = chart_forward(SphPoint::new(g.theta(3), g.phi(5)).unwrap());
        assert_eq!(velocity_oracle(&m, &x), Err(CapError::Singularity));
    }

    #[test]
    fn bound_examples() {
        let zero = VorticityMesh::from_fn(Grid::new(8, 16), |_, _| 0.0);
        assert_eq!(sup_velocity_bound(&zero), 0.0);
        let one = VorticityMesh::from_fn(Grid::new(8, 16), |_, _| 1.0);
        assert!((sup_velocity_bound(&one) - 3.0).abs() < 1e-12);
        let half = VorticityMesh::from_fn(Grid::new(8, 16), |_, _| 0.5);
        assert!((sup_velocity_bound(&half) - 1.5).abs() < 1e-12);
    }
}
