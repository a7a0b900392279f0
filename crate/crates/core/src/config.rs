//! TOML experiment configuration with defaults and validation.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowConfig, Scheme};
use crate::interface::DEFAULT_NODE_CAP;
use crate::mesh::Grid;
use crate::zonal::{find_mu_hat, is_monotone, make_gauss_cap, Side, ZonalCap};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Zonal base state; `omegas_free` holds ω₁…ω_{N−1}, ω_N follows from Gauss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapSection {
    /// Interface co-latitudes θ₁ < … < θ_{N−1} (radians).
    pub thetas: Vec<f64>,
    /// Absolute vorticity levels of the first N−1 bands (1/time).
    pub omegas_free: Vec<f64>,
    /// Rotation rate (1/time).
    pub gamma: f64,
    pub require_monotone: bool,
}

impl Default for CapSection {
    fn default() -> Self {
        Self {
            thetas: vec![FRAC_PI_2],
            omegas_free: vec![1.0],
            gamma: 0.0,
            require_monotone: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpSection {
    /// 1-based index of the perturbed interface.
    pub k0: usize,
    /// Bump amplitude (radians of co-latitude).
    pub mu: f64,
    /// Bump centre longitude (radians).
    pub phi_c: f64,
    /// Bump half-width in longitude (radians).
    pub w: f64,
    /// Initial nodes per interface; even.
    pub n_nodes: usize,
}

impl Default for BumpSection {
    fn default() -> Self {
        Self {
            k0: 1,
            mu: 0.1,
            phi_c: 0.0,
            w: 0.5,
            n_nodes: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub renorm_every: usize,
    pub band: [f64; 2],
    /// Steps between output frames.
    pub stride: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self {
            dt: f.dt,
            t_end: f.t_end,
            scheme: f.scheme,
            renorm_every: f.renorm_every,
            band: f.band,
            stride: 25,
        }
    }
}

impl FlowSection {
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            dt: self.dt,
            t_end: self.t_end,
            scheme: self.scheme,
            renorm_every: self.renorm_every,
            band: self.band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Grid for the area-quadrature velocity oracle.
    pub oracle: Grid,
    /// Grid for L¹ distances and Gauss integrals.
    pub raster: Grid,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            oracle: Grid::new(512, 1024),
            raster: Grid::new(1024, 2048),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSection {
    /// Relative tolerance of the stretch slope against α(μ).
    pub slope_rel: f64,
    /// Accepted band for κ̂ / κ_theory.
    pub kappa_low: f64,
    pub kappa_high: f64,
    /// Upper bound for κ̂ when μ = 0.
    pub kappa_zero: f64,
    /// Tail fraction of frames used in the κ̂ fit.
    pub fit_fraction: f64,
    /// Allowed relative drift of each region area.
    pub area_rel: f64,
    /// Confinement strip half-width; derived from the cap when absent.
    pub xi: Option<f64>,
    /// Refinement threshold as a multiple of the initial node spacing.
    pub h_max_factor: f64,
    pub node_cap: usize,
    /// Relative tolerance of sweep slopes against a₁μ + a₂μ².
    pub sweep_rel: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            slope_rel: 0.2,
            kappa_low: 0.5,
            kappa_high: 4.0,
            kappa_zero: 1e-3,
            fit_fraction: 2.0 / 3.0,
            area_rel: 1e-3,
            xi: None,
            h_max_factor: 1.5,
            node_cap: DEFAULT_NODE_CAP,
            sweep_rel: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write interface snapshots every this many frames; 0 disables them.
    pub interface_every: usize,
    pub trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            interface_every: 1,
            trajectory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub cap: CapSection,
    pub bump: BumpSection,
    pub flow: FlowSection,
    pub grids: GridSection,
    pub tolerances: ToleranceSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20240917,
            cap: CapSection::default(),
            bump: BumpSection::default(),
            flow: FlowSection::default(),
            grids: GridSection::default(),
            tolerances: ToleranceSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl ExperimentConfig {
    pub fn zonal_cap(&self) -> crate::Result<ZonalCap> {
        make_gauss_cap(
            self.cap.thetas.clone(),
            self.cap.omegas_free.clone(),
            self.cap.gamma,
        )
    }

    /// Collects every violated constraint, each prefixed by its key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let c = &self.cap;
        if c.thetas.is_empty() {
            errs.push("cap.thetas: at least one interface is required".to_string());
        } else if !c.thetas.windows(2).all(|w| w[0] < w[1])
            || !c.thetas.iter().all(|&t| t > 0.0 && t < PI)
        {
            errs.push(format!(
                "cap.thetas: must be strictly increasing inside (0, pi), got {:?}",
                c.thetas
            ));
        }
        if c.omegas_free.len() != c.thetas.len() {
            errs.push(format!(
                "cap.omegas_free: expected {} values (one per interface), got {}",
                c.thetas.len(),
                c.omegas_free.len()
            ));
        } else if !c.omegas_free.iter().all(|w| w.is_finite()) {
            errs.push("cap.omegas_free: values must be finite".into());
        }
        if !c.gamma.is_finite() {
            errs.push("cap.gamma: must be finite".into());
        }
        let cap = if errs.is_empty() {
            match self.zonal_cap() {
                Ok(cap) => Some(cap),
                Err(e) => {
                    errs.push(format!("cap: {e}"));
                    None
                }
            }
        } else {
            None
        };
        if let Some(cap) = &cap {
            if c.require_monotone && !is_monotone(cap) {
                errs.push(format!(
                    "cap.omegas_free: levels {:?} are not monotone (set cap.require_monotone = false to allow)",
                    cap.omegas()
                ));
            }
        }

        let b = &self.bump;
        let n_if = c.thetas.len();
        if b.k0 == 0 || b.k0 > n_if {
            errs.push(format!("bump.k0: must lie in 1..={n_if}, got {}", b.k0));
        } else if let Some(cap) = &cap {
            if !b.mu.is_finite() {
                errs.push("bump.mu: must be finite".into());
            } else if b.mu != 0.0 {
                let side = if b.mu > 0.0 { Side::Plus } else { Side::Minus };
                match find_mu_hat(cap, b.k0, side) {
                    Ok(hat) if b.mu.abs() < hat => {}
                    Ok(hat) => errs.push(format!(
                        "bump.mu: |mu| = {} must be below the drift-gap limit {hat}",
                        b.mu.abs()
                    )),
                    Err(e) => errs.push(format!("bump.mu: {e}")),
                }
            }
        }
        if !(b.w > 0.0 && b.w <= PI) {
            errs.push(format!("bump.w: must lie in (0, pi], got {}", b.w));
        }
        if !b.phi_c.is_finite() {
            errs.push("bump.phi_c: must be finite".into());
        }
        if b.n_nodes < 8 || !b.n_nodes.is_multiple_of(2) {
            errs.push(format!(
                "bump.n_nodes: must be even and at least 8, got {}",
                b.n_nodes
            ));
        }

        if let Err(crate::CapError::Validation(v)) = self.flow.flow_config().validate() {
            errs.extend(v);
        }
        if self.flow.stride == 0 {
            errs.push("flow.stride: must be at least 1".into());
        }

        for (key, g) in [("grids.oracle", self.grids.oracle), ("grids.raster", self.grids.raster)] {
            if g.n_theta < 4 || g.n_phi < 4 {
                errs.push(format!("{key}: needs at least 4 rows and columns, got {g:?}"));
            }
        }

        let t = &self.tolerances;
        for (key, v) in [
            ("tolerances.slope_rel", t.slope_rel),
            ("tolerances.kappa_low", t.kappa_low),
            ("tolerances.kappa_high", t.kappa_high),
            ("tolerances.kappa_zero", t.kappa_zero),
            ("tolerances.area_rel", t.area_rel),
            ("tolerances.sweep_rel", t.sweep_rel),
        ] {
            if !positive(v) {
                errs.push(format!("{key}: must be positive, got {v}"));
            }
        }
        if t.kappa_low > t.kappa_high {
            errs.push("tolerances.kappa_low: exceeds tolerances.kappa_high".into());
        }
        if !(t.fit_fraction > 0.0 && t.fit_fraction <= 1.0) {
            errs.push(format!(
                "tolerances.fit_fraction: must lie in (0, 1], got {}",
                t.fit_fraction
            ));
        }
        if let Some(xi) = t.xi {
            if !positive(xi) {
                errs.push(format!("tolerances.xi: must be positive, got {xi}"));
            }
        }
        if !(t.h_max_factor > 1.0 && t.h_max_factor.is_finite()) {
            errs.push(format!(
                "tolerances.h_max_factor: must exceed 1, got {}",
                t.h_max_factor
            ));
        }
        if t.node_cap < b.n_nodes {
            errs.push(format!(
                "tolerances.node_cap: {} is below bump.n_nodes = {}",
                t.node_cap, b.n_nodes
            ));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Fully resolved TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates TOML text; `path` is only used in messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(s, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_default_scenario() {
        assert_eq!(parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn minimal_cap_solves_last_level() {
        let cfg = parse("[cap]\nthetas = [1.5708]\nomegas_free = [1.0]\n").unwrap();
        let cap = cfg.zonal_cap().unwrap();
        assert!((cap.omega(2) + 1.0).abs() < 1e-4);
        assert_eq!(cfg.flow, FlowSection::default());
    }

    #[test]
    fn unsorted_thetas_name_the_key() {
        let err = parse("[cap]\nthetas = [2.0, 1.0]\nomegas_free = [1.0, 0.0]\n").unwrap_err();
        match err {
            ConfigError::Invalid(v) => assert!(v.iter().any(|m| m.starts_with("cap.thetas"))),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("[flow]\ndt = 0.01\nsteps = 3\n").unwrap_err();
        match err {
            ConfigError::Parse { message, .. } => assert!(message.contains("steps"), "{message}"),
            e => panic!("{e}"),
        }
        assert!(matches!(parse("colour = 1\n"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn every_violation_is_listed() {
        let err = parse("[bump]\nw = -1.0\nn_nodes = 7\n[flow]\ndt = 0.0\nstride = 0\n").unwrap_err();
        match err {
            ConfigError::Invalid(v) => {
                for key in ["bump.w", "bump.n_nodes", "flow.dt", "flow.stride"] {
                    assert!(v.iter().any(|m| m.contains(key)), "{key} missing from {v:?}");
                }
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn mu_outside_drift_gap_limit_is_rejected() {
        let err = parse("[bump]\nmu = 1.6\n").unwrap_err();
        assert!(err.to_string().contains("bump.mu"), "{err}");
    }

    #[test]
    fn non_monotone_cap_needs_opt_out() {
        let text = "[cap]\nthetas = [1.0, 2.0]\nomegas_free = [1.0, -2.0]\n";
        assert!(parse(text).is_err());
        let ok = format!("{text}require_monotone = false\n");
        assert!(parse(&ok).is_ok());
    }

    #[test]
    fn round_trip_is_field_identical() {
        let text = "seed = 7\n[cap]\nthetas = [0.7, 2.1]\nomegas_free = [2.0, 0.25]\ngamma = 0.3\n\
                    [bump]\nk0 = 2\nmu = -0.05\n[tolerances]\nxi = 0.02\n[flow]\nscheme = \"rk2\"\n";
        let a = parse(text).unwrap();
        let b = parse(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
    }
}
