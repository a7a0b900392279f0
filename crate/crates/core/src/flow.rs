//! Explicit Runge–Kutta integration of the co-latitude/longitude system
//! ∂ₜΘ = u_θ, ∂ₜΦ = u_φ / sin Θ for interface nodes and extra tracked points.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::geom::{chart_forward, chart_inverse, SphPoint};
use crate::interface::CapState;
use crate::velocity::{ContourField, VelocitySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    Rk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub renorm_every: usize,
    /// Safety interval [θ_min, θ_max] for every node and point.
    pub band: [f64; 2],
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 40.0,
            scheme: Scheme::Rk4,
            renorm_every: 16,
            band: [0.05, PI - 0.05],
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("flow.dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            errs.push(format!("flow.t_end must be non-negative, got {}", self.t_end));
        }
        let [lo, hi] = self.band;
        if !(0.0 < lo && lo < hi && hi < PI) {
            errs.push(format!("flow.band must satisfy 0 < min < max < pi, got [{lo}, {hi}]"));
        }
        if self.renorm_every == 0 {
            errs.push("flow.renorm_every must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CapError::Validation(errs))
        }
    }

    /// Number of steps of size `dt` covering [0, t_end].
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Material point advected with the flow but not part of any interface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedPoint {
    pub id: String,
    pub p: SphPoint,
    pub p0: SphPoint,
}

impl TrackedPoint {
    pub fn new(id: impl Into<String>, p: SphPoint) -> Self {
        Self { id: id.into(), p, p0: p }
    }
}

fn rate(p: SphPoint, u: VelocitySample) -> (f64, f64) {
    (u.u_theta, u.u_phi / p.theta.sin())
}

/// (dΘ/dt, dΦ/dt) at a single point.
pub fn rhs(state: &CapState, p: SphPoint, band: [f64; 2]) -> Result<(f64, f64)> {
    if p.theta.sin() < band[0].sin().min(band[1].sin()) {
        return Err(CapError::BandExit {
            id: "rhs".into(),
            t: state.t,
            theta: p.theta,
        });
    }
    let u = ContourField::new(state).velocity(&chart_forward(p))?;
    Ok(rate(p, u))
}

/// Rates for every node (curve-major) followed by every tracked point.
fn rates(state: &CapState, points: &[SphPoint]) -> Result<Vec<(f64, f64)>> {
    let field = ContourField::new(state);
    let mut out = Vec::with_capacity(state.total_nodes() + points.len());
    for (c, vs) in field.node_velocities().into_iter().enumerate() {
        out.extend(
            vs.into_iter()
                .zip(&state.curves[c].nodes)
                .map(|(u, p)| rate(*p, u)),
        );
    }
    let extra: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|p| Ok(rate(*p, field.velocity(&chart_forward(*p))?)))
        .collect();
    for r in extra {
        out.push(r?);
    }
    Ok(out)
}

fn flatten(state: &CapState, points: &[TrackedPoint]) -> Vec<SphPoint> {
    state
        .curves
        .iter()
        .flat_map(|c| c.nodes.iter().copied())
        .chain(points.iter().map(|p| p.p))
        .collect()
}

/// Writes `ys` back into the state and points, failing on co-latitudes that
/// left (0, π).
fn scatter(ys: &[SphPoint], state: &mut CapState, points: &mut [TrackedPoint]) -> Result<()> {
    let mut k = 0;
    for c in &mut state.curves {
        for p in &mut c.nodes {
            *p = ys[k];
            k += 1;
        }
    }
    for p in points.iter_mut() {
        p.p = ys[k];
        k += 1;
    }
    Ok(())
}

fn advance(base: &[SphPoint], k: &[(f64, f64)], h: f64) -> Result<Vec<SphPoint>> {
    base.iter()
        .zip(k)
        .map(|(p, (dt, dp))| {
            let theta = p.theta + h * dt;
            if !(theta > 0.0 && theta < PI) {
                return Err(CapError::Domain { theta });
            }
            Ok(SphPoint {
                theta,
                phi: p.phi + h * dp,
            })
        })
        .collect()
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Largest |ΔΦ| of any node or point over the step.
    pub max_dphi: f64,
}

/// Stepper for the coupled node/point system.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub cfg: FlowConfig,
    steps: usize,
}

impl Integrator {
    pub fn new(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, steps: 0 })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// One step of size `cfg.dt`, with interface geometry moved to every
    /// substage.
    pub fn step(&mut self, state: &mut CapState, points: &mut [TrackedPoint]) -> Result<StepInfo> {
        let dt = self.cfg.dt;
        let y0 = flatten(state, points);
        let xs: Vec<SphPoint> = points.iter().map(|p| p.p).collect();
        let eval = |ys: &[SphPoint]| -> Result<Vec<(f64, f64)>> {
            let mut s = state.clone();
            let mut pts = points.to_vec();
            scatter(ys, &mut s, &mut pts)?;
            let xs: Vec<SphPoint> = pts.iter().map(|p| p.p).collect();
            rates(&s, &xs)
        };
        let stage_err = |e: CapError, t: f64| match e {
            CapError::Domain { theta } => CapError::BandExit {
                id: "stage".into(),
                t,
                theta,
            },
            e => e,
        };
        let t = state.t;
        let k1 = rates(state, &xs)?;
        let y1 = match self.cfg.scheme {
            Scheme::Rk2 => {
                let ym = advance(&y0, &k1, 0.5 * dt).map_err(|e| stage_err(e, t))?;
                let k2 = eval(&ym)?;
                advance(&y0, &k2, dt).map_err(|e| stage_err(e, t))?
            }
            Scheme::Rk4 => {
                let ya = advance(&y0, &k1, 0.5 * dt).map_err(|e| stage_err(e, t))?;
                let k2 = eval(&ya)?;
                let yb = advance(&y0, &k2, 0.5 * dt).map_err(|e| stage_err(e, t))?;
                let k3 = eval(&yb)?;
                let yc = advance(&y0, &k3, dt).map_err(|e| stage_err(e, t))?;
                let k4 = eval(&yc)?;
                let k: Vec<(f64, f64)> = (0..y0.len())
                    .map(|i| {
                        (
                            (k1[i].0 + 2.0 * k2[i].0 + 2.0 * k3[i].0 + k4[i].0) / 6.0,
                            (k1[i].1 + 2.0 * k2[i].1 + 2.0 * k3[i].1 + k4[i].1) / 6.0,
                        )
                    })
                    .collect();
                advance(&y0, &k, dt).map_err(|e| stage_err(e, t))?
            }
        };
        self.steps += 1;
        let renorm = self.steps.is_multiple_of(self.cfg.renorm_every);
        let y1: Vec<SphPoint> = if renorm {
            y1.iter()
                .map(|p| chart_inverse(&chart_forward(*p).renormalized(), p.phi).unwrap_or(*p))
                .collect()
        } else {
            y1
        };
        let max_dphi = y0
            .iter()
            .zip(&y1)
            .map(|(a, b)| (b.phi - a.phi).abs())
            .fold(0.0, f64::max);
        scatter(&y1, state, points)?;
        state.t = t + dt;
        self.check_band(state, points)?;
        if max_dphi >= PI {
            return Err(CapError::Range(format!(
                "lifted longitude moved by {max_dphi} in one step at t = {}",
                state.t
            )));
        }
        Ok(StepInfo { max_dphi })
    }

    fn check_band(&self, state: &CapState, points: &[TrackedPoint]) -> Result<()> {
        let [lo, hi] = self.cfg.band;
        for c in &state.curves {
            for (i, p) in c.nodes.iter().enumerate() {
                if p.theta < lo || p.theta > hi {
                    return Err(CapError::BandExit {
                        id: format!("curve{}:{}", c.label, i),
                        t: state.t,
                        theta: p.theta,
                    });
                }
            }
        }
        for p in points {
            if p.p.theta < lo || p.p.theta > hi {
                return Err(CapError::BandExit {
                    id: p.id.clone(),
                    t: state.t,
                    theta: p.p.theta,
                });
            }
        }
        Ok(())
    }
}

/// Positions of every node and tracked point at one output time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub t: f64,
    pub nodes: Vec<Vec<SphPoint>>,
    pub points: Vec<SphPoint>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrajectoryLog {
    pub point_ids: Vec<String>,
    pub frames: Vec<Frame>,
    pub max_dphi: f64,
}

fn frame(state: &CapState, points: &[TrackedPoint]) -> Frame {
    Frame {
        t: state.t,
        nodes: state.curves.iter().map(|c| c.nodes.clone()).collect(),
        points: points.iter().map(|p| p.p).collect(),
    }
}

/// Integrates to `cfg.t_end`, logging every `stride` steps and the final state.
pub fn run_flow(
    state0: &CapState,
    points0: &[TrackedPoint],
    cfg: FlowConfig,
    stride: usize,
) -> Result<(CapState, Vec<TrackedPoint>, TrajectoryLog)> {
    let mut integ = Integrator::new(cfg)?;
    let mut state = state0.clone();
    let mut points = points0.to_vec();
    let mut log = TrajectoryLog {
        point_ids: points.iter().map(|p| p.id.clone()).collect(),
        frames: vec![frame(&state, &points)],
        max_dphi: 0.0,
    };
    let stride = stride.max(1);
    let n = cfg.n_steps();
    for s in 1..=n {
        let info = integ.step(&mut state, &mut points)?;
        log.max_dphi = log.max_dphi.max(info.max_dphi);
        if s % stride == 0 || s == n {
            log.frames.push(frame(&state, &points));
        }
    }
    Ok((state, points, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zonal::{make_gauss_cap, phi_dot_star, ZonalCap};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn equator() -> ZonalCap {
        make_gauss_cap(vec![FRAC_PI_2], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let s = CapState::zonal(&equator(), 256).unwrap();
        let band = [0.05, PI - 0.05];
        let (dt, dp) = rhs(&s, SphPoint::new(FRAC_PI_4, 0.2).unwrap(), band).unwrap();
        assert!(dt.abs() < 1e-10);
        assert!((dp - (PI / 8.0).tan() / FRAC_PI_4.sin()).abs() < 1e-8);
        let rot = CapState::zonal(&make_gauss_cap(vec![1.0], vec![0.0], 0.3).unwrap(), 64).unwrap();
        let (dt, dp) = rhs(&rot, SphPoint::new(FRAC_PI_2, 1.0).unwrap(), band).unwrap();
        assert!(dt.abs() < 1e-15 && (dp - 0.3).abs() < 1e-15);
        assert!(matches!(
            rhs(&rot, SphPoint::new(0.01, 1.0).unwrap(), band),
            Err(CapError::BandExit { .. })
        ));
    }

    #[test]
    fn zonal_points_drift_linearly() {
        let cap = equator();
        let s = CapState::zonal(&cap, 128).unwrap();
        let pts = vec![
            TrackedPoint::new("a", SphPoint::new(1.0, 0.3).unwrap()),
            TrackedPoint::new("b", SphPoint::new(1.0, 2.3).unwrap()),
        ];
        let cfg = FlowConfig {
            dt: 0.05,
            t_end: 1.0,
            ..Default::default()
        };
        let (_, out, log) = run_flow(&s, &pts, cfg, 5).unwrap();
        let want = phi_dot_star(&cap, 1.0).unwrap();
        for p in &out {
            assert!((p.p.phi - p.p0.phi - want).abs() < 1e-6);
            assert!((p.p.theta - 1.0).abs() < 1e-8);
        }
        assert_eq!(out[0].p.theta, out[1].p.theta);
        assert_eq!(log.frames.len(), 5);
        assert!(log.max_dphi < PI);
    }

    #[test]
    fn zero_velocity_leaves_points() {
        let cap = make_gauss_cap(vec![1.0], vec![0.0], 0.0).unwrap();
        let s = CapState::zonal(&cap, 32).unwrap();
        let pts = vec![TrackedPoint::new("a", SphPoint::new(2.0, -1.0).unwrap())];
        let cfg = FlowConfig {
            dt: 0.1,
            t_end: 1.0,
            ..Default::default()
        };
        let (_, out, _) = run_flow(&s, &pts, cfg, 1).unwrap();
        assert!((out[0].p.theta - 2.0).abs() < 1e-15 && (out[0].p.phi + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_flip_negates_drift() {
        let run = |g: f64| {
            let cap = make_gauss_cap(vec![1.0], vec![0.0], g).unwrap();
            let s = CapState::zonal(&cap, 32).unwrap();
            let pts = vec![TrackedPoint::new("a", SphPoint::new(1.2, 0.0).unwrap())];
            let cfg = FlowConfig {
                dt: 0.1,
                t_end: 2.0,
                ..Default::default()
            };
            run_flow(&s, &pts, cfg, 100).unwrap().1[0].p.phi
        };
        assert!((run(0.4) + run(-0.4)).abs() < 1e-14);
    }

    #[test]
    fn band_exit_is_reported() {
        let cap = make_gauss_cap(vec![1.0], vec![0.0], 0.0).unwrap();
        let s = CapState::zonal(&cap, 32).unwrap();
        let pts = vec![TrackedPoint::new("p", SphPoint::new(0.01, 0.0).unwrap())];
        let mut integ = Integrator::new(FlowConfig::default()).unwrap();
        let (mut s, mut pts) = (s, pts);
        let err = integ.step(&mut s, &mut pts).unwrap_err();
        assert!(matches!(err, CapError::BandExit { ref id, .. } if id == "p"));
    }

    #[test]
    fn config_validation_lists_all_problems() {
        let cfg = FlowConfig {
            dt: -1.0,
            band: [0.5, 0.4],
            renorm_every: 0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(CapError::Validation(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
