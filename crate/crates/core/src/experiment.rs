//! Filamentation experiment: bump initial data, coupled flow with
//! refinement, diagnostics series and the growth-law fit.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CapError, Result};
use crate::flow::Integrator;
use crate::interface::{l1_distance, make_bump_cap, perimeter, refine_state, region_areas, CapState};
use crate::mesh::rasterize;
use crate::zonal::{alpha, alpha_expansion, beta, find_mu_hat, phi_dot_star, Side, ZonalCap};

/// Closed-form quantities of the lower-bound law for one (cap, k₀, μ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theory {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub a1: f64,
    pub a2: f64,
    pub mu_hat: f64,
    pub t0: f64,
    pub xi: f64,
}

fn side(mu: f64) -> Side {
    if mu < 0.0 {
        Side::Minus
    } else {
        Side::Plus
    }
}

/// (α(μ), β(μ), κ = β|α|), rejecting μ beyond the drift-gap limit.
pub fn theory_kappa(cap: &ZonalCap, k0: usize, mu: f64) -> Result<(f64, f64, f64)> {
    if mu != 0.0 {
        let hat = find_mu_hat(cap, k0, side(mu))?;
        if mu.abs() >= hat {
            return Err(CapError::Range(format!(
                "|mu| = {} is not below the drift-gap limit {hat}",
                mu.abs()
            )));
        }
    }
    let a = alpha(cap, k0, mu)?;
    let b = beta(cap, mu);
    Ok((a, b, b * a.abs()))
}

/// ξ(μ) = (|μ|/2)·min(sin²(θ₁ − |μ|), sin²(θ_{N−1} + |μ|)).
pub fn default_xi(cap: &ZonalCap, mu: f64) -> f64 {
    let m = mu.abs();
    let lo = (cap.theta(1) - m).sin().powi(2);
    let hi = (cap.theta(cap.n() - 1) + m).sin().powi(2);
    0.5 * m * lo.min(hi)
}

/// Full theory record; `dphi` is φ_{x₀} − φ_{x₁}.
pub fn theory(cap: &ZonalCap, k0: usize, mu: f64, dphi: f64) -> Result<Theory> {
    let (a, b, kappa) = theory_kappa(cap, k0, mu)?;
    let exp = alpha_expansion(cap, k0, side(mu))?;
    let mu_hat = find_mu_hat(cap, k0, side(mu))?;
    let t0 = if a == 0.0 {
        f64::INFINITY
    } else {
        let tm = dphi / a - mu.abs() / a;
        let tp = dphi / a + mu.abs() / a;
        1f64.max(tm).max(tp)
    };
    Ok(Theory {
        alpha: a,
        beta: b,
        kappa,
        a1: exp.a1,
        a2: exp.a2,
        mu_hat,
        t0,
        xi: default_xi(cap, mu),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Series {
    pub t: Vec<f64>,
    /// Length of interface k₀.
    pub perimeter: Vec<f64>,
    /// Φ(t, x₁) − Φ(t, x₀), unwrapped.
    pub stretch: Vec<f64>,
    /// Running max of |Θ(t,x) − θ_x| over the original nodes.
    pub confinement: Vec<f64>,
    pub l1: Vec<f64>,
    /// Largest relative region-area change.
    pub area_drift: Vec<f64>,
    /// Rasterized ∫ω dσ and its first-order boundary bound.
    pub gauss: Vec<f64>,
    pub gauss_bound: Vec<f64>,
    /// Largest segment of interface k₀ after refinement.
    pub eps_disc: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub kappa_hat: f64,
    /// None when κ̂ = 0.
    pub t0_hat: Option<f64>,
    pub stretch_slope: f64,
}

/// Pass flags; `None` marks a check that does not apply to this run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flags {
    pub completed: bool,
    pub stretch_slope: Option<bool>,
    pub lower_bound: Option<bool>,
    pub kappa: Option<bool>,
    pub area: Option<bool>,
    pub gauss: Option<bool>,
    pub confinement: Option<bool>,
}

impl Flags {
    pub fn all_pass(&self) -> bool {
        self.completed
            && [
                self.stretch_slope,
                self.lower_bound,
                self.kappa,
                self.area,
                self.gauss,
                self.confinement,
            ]
            .iter()
            .all(|f| f.unwrap_or(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Status {
    Completed,
    Aborted { t: f64, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mu: f64,
    pub k0: usize,
    pub theory: Option<Theory>,
    pub xi: f64,
    pub l1_initial: f64,
    pub series: Series,
    pub fit: Fit,
    pub max_dphi: f64,
    pub status: Status,
    pub flags: Flags,
}

/// Least-squares line through (x, y): (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fits L(t) ≈ κ(t − T₀) + L(0) on the tail and the stretch slope on t ≥ 1.
pub fn fit_series(s: &Series, fit_fraction: f64) -> Fit {
    let n = s.len();
    let tail = ((fit_fraction * n as f64).ceil() as usize).clamp(2.min(n), n);
    let start = n - tail;
    let (kappa_hat, t0_hat) = match linear_fit(&s.t[start..], &s.perimeter[start..]) {
        Some((a, b)) if a > 0.0 => (a, Some((s.perimeter[0] - b) / a)),
        _ => (0.0, None),
    };
    let (ts, ys): (Vec<f64>, Vec<f64>) = s
        .t
        .iter()
        .zip(&s.stretch)
        .filter(|(t, _)| **t >= 1.0)
        .map(|(t, y)| (*t, *y))
        .unzip();
    let stretch_slope = linear_fit(&ts, &ys).map_or(f64::NAN, |f| f.0);
    Fit {
        kappa_hat,
        t0_hat,
        stretch_slope,
    }
}

struct Recorder<'a> {
    cfg: &'a ExperimentConfig,
    cap: &'a ZonalCap,
    area0: Vec<f64>,
    max_jump: f64,
    series: Series,
    confinement: f64,
}

impl Recorder<'_> {
    fn record(&mut self, state: &CapState) -> Result<()> {
        let k = self.cfg.bump.k0 - 1;
        let curve = &state.curves[k];
        let x0 = state.marker("x0").expect("marker x0");
        let x1 = state.marker("x1").expect("marker x1");
        for c in &state.curves {
            for (p, o) in c.nodes.iter().zip(&c.origin_theta) {
                if o.is_finite() {
                    self.confinement = self.confinement.max((p.theta - o).abs());
                }
            }
        }
        let areas = region_areas(state)?;
        let drift = areas
            .iter()
            .zip(&self.area0)
            .map(|(a, a0)| ((a - a0) / a0).abs())
            .fold(0.0, f64::max);
        let grid = self.cfg.grids.raster;
        let total_len: f64 = state.curves.iter().map(perimeter).sum();
        let s = &mut self.series;
        s.t.push(state.t);
        s.perimeter.push(perimeter(curve));
        s.stretch.push(x1.phi - x0.phi);
        s.confinement.push(self.confinement);
        s.l1.push(l1_distance(state, self.cap, grid)?);
        s.area_drift.push(drift);
        s.gauss.push(rasterize(state, grid)?.total());
        s.gauss_bound
            .push(2.0 * grid.cell_diameter() * total_len * self.max_jump);
        s.eps_disc.push(curve.max_spacing());
        s.nodes.push(state.total_nodes());
        Ok(())
    }
}

/// Runs one experiment; `sink` sees the state at every output frame.
///
/// Errors during the flow end the run early with `Status::Aborted` and the
/// series recorded so far.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(usize, &CapState) -> Result<()>,
) -> Result<RunSummary> {
    cfg.validate()
        .map_err(|e| CapError::Validation(vec![e.to_string()]))?;
    let cap = cfg.zonal_cap()?;
    let b = &cfg.bump;
    let mut state = make_bump_cap(&cap, b.k0, b.mu, b.phi_c, b.w, b.n_nodes)?;
    let theory = if b.mu != 0.0 {
        Some(theory(&cap, b.k0, b.mu, PI)?)
    } else {
        None
    };
    let xi = cfg
        .tolerances
        .xi
        .unwrap_or_else(|| default_xi(&cap, b.mu));
    let h_max = cfg.tolerances.h_max_factor
        * state
            .curves
            .iter()
            .map(|c| c.max_spacing())
            .fold(0.0, f64::max);
    let max_jump = state.levels.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let mut rec = Recorder {
        cfg,
        cap: &cap,
        area0: region_areas(&state)?,
        max_jump,
        series: Series::default(),
        confinement: 0.0,
    };
    let flow = cfg.flow.flow_config();
    let mut integ = Integrator::new(flow)?;
    let n_steps = flow.n_steps();
    let stride = cfg.flow.stride;
    let mut max_dphi: f64 = 0.0;
    let mut frame = 0;

    let mut run = || -> Result<()> {
        rec.record(&state)?;
        sink(frame, &state)?;
        for s in 1..=n_steps {
            let info = integ.step(&mut state, &mut [])?;
            max_dphi = max_dphi.max(info.max_dphi);
            if s % stride == 0 || s == n_steps {
                refine_state(&mut state, h_max, cfg.tolerances.node_cap)?;
                frame += 1;
                rec.record(&state)?;
                sink(frame, &state)?;
            }
        }
        Ok(())
    };
    let status = match run() {
        Ok(()) => Status::Completed,
        Err(e) => Status::Aborted {
            t: state.t,
            error: e.to_string(),
        },
    };
    let series = rec.series;
    let fit = fit_series(&series, cfg.tolerances.fit_fraction);
    let tol = &cfg.tolerances;
    let nonempty = !series.is_empty();
    let flags = Flags {
        completed: status == Status::Completed,
        stretch_slope: theory
            .map(|th| ((fit.stretch_slope - th.alpha) / th.alpha).abs() <= tol.slope_rel),
        lower_bound: theory.map(|th| {
            nonempty
                && (0..series.len()).all(|i| {
                    series.perimeter[i] >= th.beta * series.stretch[i].abs() - series.eps_disc[i]
                })
        }),
        kappa: Some(match theory {
            Some(th) => {
                fit.kappa_hat >= tol.kappa_low * th.kappa && fit.kappa_hat <= tol.kappa_high * th.kappa
            }
            None => fit.kappa_hat <= tol.kappa_zero,
        }),
        area: Some(series.area_drift.iter().all(|d| *d <= tol.area_rel)),
        gauss: Some(
            series
                .gauss
                .iter()
                .zip(&series.gauss_bound)
                .all(|(g, bd)| g.abs() <= *bd),
        ),
        confinement: (xi > 0.0).then(|| series.confinement.last().is_some_and(|c| *c <= xi)),
    };
    Ok(RunSummary {
        mu: b.mu,
        k0: b.k0,
        theory,
        xi,
        l1_initial: series.l1.first().copied().unwrap_or(f64::NAN),
        series,
        fit,
        max_dphi,
        status,
        flags,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment_with(cfg, &mut |_, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub mu: f64,
    /// a₁μ + a₂μ² for the side of μ.
    pub predicted_slope: f64,
    pub summary: std::result::Result<RunSummary, String>,
    pub slope_rel_err: Option<f64>,
    pub pass: bool,
}

/// Independent runs for each μ, in input order.
pub fn sweep(template: &ExperimentConfig, mus: &[f64]) -> Vec<SweepEntry> {
    mus.par_iter()
        .map(|&mu| {
            let mut cfg = template.clone();
            cfg.bump.mu = mu;
            let predicted_slope = cfg
                .zonal_cap()
                .and_then(|cap| alpha_expansion(&cap, cfg.bump.k0, side(mu)))
                .map_or(f64::NAN, |e| e.eval(mu));
            let summary = run_experiment(&cfg).map_err(|e| e.to_string());
            let slope_rel_err = summary.as_ref().ok().and_then(|s| {
                (mu != 0.0).then(|| ((s.fit.stretch_slope - predicted_slope) / predicted_slope).abs())
            });
            let pass = match (&summary, slope_rel_err) {
                (Ok(s), Some(e)) => s.flags.completed && e <= template.tolerances.sweep_rel,
                (Ok(s), None) => s.flags.completed,
                _ => false,
            };
            SweepEntry {
                mu,
                predicted_slope,
                summary,
                slope_rel_err,
                pass,
            }
        })
        .collect()
}

/// Φ̇⋆ at the bump tip minus at the base parallel, for reference output.
pub fn zonal_drift_gap(cap: &ZonalCap, k0: usize, mu: f64) -> Result<f64> {
    let t = cap.theta(k0);
    Ok(phi_dot_star(cap, t + mu)? - phi_dot_star(cap, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use crate::zonal::make_gauss_cap;
    use std::f64::consts::FRAC_PI_2;

    fn equator() -> ZonalCap {
        make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0).unwrap()
    }

    fn small_cfg(mu: f64, t_end: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.bump.mu = mu;
        cfg.bump.n_nodes = 128;
        cfg.flow.dt = 0.05;
        cfg.flow.t_end = t_end;
        cfg.flow.stride = 10;
        cfg.grids.raster = Grid::new(128, 256);
        cfg
    }

    #[test]
    fn theory_for_equator_cap() {
        let (a, b, k) = theory_kappa(&equator(), 1, 0.1).unwrap();
        let exact = 1.0 / (1.0 + 0.1f64.sin()) - 1.0;
        assert!((a - exact).abs() < 1e-12);
        assert!((b - 0.5 * (FRAC_PI_2 - 0.1).sin()).abs() < 1e-15);
        assert!((k - b * exact.abs()).abs() < 1e-15);
        let (_, _, k0) = theory_kappa(&equator(), 1, 0.0).unwrap();
        assert_eq!(k0, 0.0);
        assert!(theory_kappa(&equator(), 1, 2.0).is_err());
        let (am, _, _) = theory_kappa(&equator(), 1, -0.1).unwrap();
        assert!((am - a).abs() < 1e-12);
        let asym = make_gauss_cap(vec![1.2], vec![1.0], 0.0).unwrap();
        let (ap, _, _) = theory_kappa(&asym, 1, 0.1).unwrap();
        let (am, _, _) = theory_kappa(&asym, 1, -0.1).unwrap();
        assert!((ap.abs() - am.abs()).abs() > 1e-3);
    }

    #[test]
    fn theory_t0_and_xi() {
        let th = theory(&equator(), 1, 0.1, PI).unwrap();
        assert_eq!(th.t0, 1.0);
        let xi = 0.05 * (FRAC_PI_2 - 0.1).sin().powi(2);
        assert!((th.xi - xi).abs() < 1e-15);
        assert!((th.a1 + 1.0).abs() < 1e-12 && (th.a2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|t| 3.0 - 0.5 * t).collect();
        let (a, b) = linear_fit(&x, &y).unwrap();
        assert!((a + 0.5).abs() < 1e-14 && (b - 3.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn kappa_hat_is_clamped_and_t0_recovered() {
        let t: Vec<f64> = (0..31).map(|i| i as f64).collect();
        let s = Series {
            perimeter: t.iter().map(|t| 6.0 + 0.1 * (t - 3.0).max(0.0)).collect(),
            stretch: t.iter().map(|t| -PI - 0.09 * t).collect(),
            t: t.clone(),
            ..Default::default()
        };
        let f = fit_series(&s, 2.0 / 3.0);
        assert!((f.kappa_hat - 0.1).abs() < 1e-12);
        assert!((f.t0_hat.unwrap() - 3.0).abs() < 1e-9);
        assert!((f.stretch_slope + 0.09).abs() < 1e-12);
        let flat = Series {
            perimeter: t.iter().map(|t| 6.0 - 0.01 * t).collect(),
            ..s
        };
        let f = fit_series(&flat, 2.0 / 3.0);
        assert_eq!(f.kappa_hat, 0.0);
        assert!(f.t0_hat.is_none());
    }

    #[test]
    fn short_run_series_are_consistent() {
        let s = run_experiment(&small_cfg(0.1, 2.0)).unwrap();
        assert_eq!(s.status, Status::Completed);
        let n = s.series.len();
        assert_eq!(n, 5);
        for v in [
            &s.series.perimeter,
            &s.series.stretch,
            &s.series.l1,
            &s.series.area_drift,
            &s.series.gauss,
        ] {
            assert_eq!(v.len(), n);
        }
        assert!((s.series.stretch[0] + PI).abs() < 1e-15);
        assert!(s.fit.kappa_hat >= 0.0);
        assert!(s.series.area_drift.iter().all(|d| *d < 1e-3));
    }

    #[test]
    fn zero_mu_has_no_growth() {
        let s = run_experiment(&small_cfg(0.0, 2.0)).unwrap();
        assert!(s.theory.is_none());
        assert!(s.fit.kappa_hat <= 1e-3);
        assert_eq!(s.flags.kappa, Some(true));
        assert!(s.flags.all_pass());
    }

    #[test]
    fn abort_keeps_partial_series() {
        let mut cfg = small_cfg(0.1, 2.0);
        cfg.tolerances.node_cap = 128;
        cfg.tolerances.h_max_factor = 1.0001;
        let s = run_experiment(&cfg).unwrap();
        assert!(matches!(s.status, Status::Aborted { .. }), "{:?}", s.status);
        assert!(!s.series.is_empty());
        assert!(!s.flags.all_pass());
    }

    #[test]
    fn sweep_preserves_order_and_is_deterministic() {
        let cfg = small_cfg(0.1, 0.5);
        assert!(sweep(&cfg, &[]).is_empty());
        let out = sweep(&cfg, &[0.05, 0.1, 0.05]);
        let mus: Vec<f64> = out.iter().map(|e| e.mu).collect();
        assert_eq!(mus, vec![0.05, 0.1, 0.05]);
        let json = |e: &SweepEntry| serde_json::to_string(&e.summary).unwrap();
        assert_eq!(json(&out[0]), json(&out[2]));
    }
}
